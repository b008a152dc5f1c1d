"""Numerical kernels for 3D layers.

Everything operates on single-clip activations shaped (C, T, H, W) in float32,
batch dimension fixed at 1 and left implicit. Convolution is cross-correlation
(no kernel flip). Each kernel has a scatter counterpart that redistributes an
output-shaped array back onto the input positions through the same geometry;
the relevance rules are built from those.

The convolution loops over kernel offsets and does one channel-contraction
matmul per offset. That keeps memory at O(activations) instead of the
O(activations * kernel volume) an im2col buffer would need, while still doing
all the heavy lifting in BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

Triple = tuple[int, int, int]


def out_extent(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def conv_output_shape(in_shape, out_channels: int, kernel: Triple, stride: Triple,
                      padding: Triple) -> tuple[int, ...]:
    c, t, h, w = in_shape
    ext = [out_extent(n, k, s, p) for n, k, s, p in zip((t, h, w), kernel, stride, padding)]
    if min(ext) < 1:
        raise ShapeError(
            f"kernel {kernel} stride {stride} padding {padding} does not fit input {tuple(in_shape)}"
        )
    return (out_channels, *ext)


def pool_output_shape(in_shape, kernel: Triple, stride: Triple, padding: Triple) -> tuple[int, ...]:
    return conv_output_shape(in_shape, in_shape[0], kernel, stride, padding)


def _pad(x: np.ndarray, padding: Triple, value: float) -> np.ndarray:
    pt, ph, pw = padding
    if pt == ph == pw == 0:
        return x
    return np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw)), constant_values=value)


def _strided_block(xp: np.ndarray, offset: Triple, out_ext: Triple, stride: Triple) -> np.ndarray:
    """View of the padded input holding, for one kernel offset, the element each
    output position reads."""
    (dt, dh, dw), (to, ho, wo), (st, sh, sw) = offset, out_ext, stride
    return xp[:, dt:dt + (to - 1) * st + 1:st,
              dh:dh + (ho - 1) * sh + 1:sh,
              dw:dw + (wo - 1) * sw + 1:sw]


def conv3d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
                   stride: Triple, padding: Triple) -> np.ndarray:
    """Cross-correlate (C,T,H,W) with weights (O,C,kt,kh,kw), zero padding."""
    o, c, kt, kh, kw = weight.shape
    if x.shape[0] != c:
        raise ShapeError(f"conv3d: input has {x.shape[0]} channels, weights expect {c}")
    out_shape = conv_output_shape(x.shape, o, (kt, kh, kw), stride, padding)
    xp = _pad(x, padding, 0.0)
    out = np.zeros(out_shape, dtype=np.float32)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                block = _strided_block(xp, (dt, dh, dw), out_shape[1:], stride)
                out += np.tensordot(weight[:, :, dt, dh, dw], block, axes=([1], [0]))
    if bias is not None:
        out += bias.reshape(-1, 1, 1, 1)
    return out


def conv3d_scatter(s: np.ndarray, weight: np.ndarray, stride: Triple, padding: Triple,
                   in_shape) -> np.ndarray:
    """Adjoint of conv3d_forward without bias: distribute an output-shaped array
    back through the weights, accumulating over all windows covering each input
    position."""
    o, c, kt, kh, kw = weight.shape
    pt, ph, pw = padding
    _, t, h, w = in_shape
    gp = np.zeros((c, t + 2 * pt, h + 2 * ph, w + 2 * pw), dtype=np.float32)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                block = _strided_block(gp, (dt, dh, dw), s.shape[1:], stride)
                block += np.tensordot(weight[:, :, dt, dh, dw], s, axes=([0], [0]))
    return gp[:, pt:pt + t, ph:ph + h, pw:pw + w]


@dataclass(frozen=True)
class PoolMask:
    """Argmax positions recorded by a max-pool forward pass.

    ``it/ih/iw`` give, per output position, the selected input coordinate in
    the unpadded input. One-hot per window by construction (first occurrence
    wins on ties, i.e. lowest flat index).
    """
    it: np.ndarray
    ih: np.ndarray
    iw: np.ndarray
    input_shape: tuple[int, ...]


def maxpool3d_forward(x: np.ndarray, kernel: Triple, stride: Triple,
                      padding: Triple) -> tuple[np.ndarray, PoolMask]:
    out_shape = pool_output_shape(x.shape, kernel, stride, padding)
    kt, kh, kw = kernel
    # -inf padding so padded positions can never be selected
    xp = _pad(x, padding, -np.inf)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    win = win[:, ::stride[0], ::stride[1], ::stride[2]]
    flat = win.reshape(*out_shape, kt * kh * kw)
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    dt, rem = np.divmod(arg, kh * kw)
    dh, dw = np.divmod(rem, kw)
    grid = np.ogrid[:out_shape[1], :out_shape[2], :out_shape[3]]
    it = (grid[0] * stride[0] + dt - padding[0]).astype(np.int32)
    ih = (grid[1] * stride[1] + dh - padding[1]).astype(np.int32)
    iw = (grid[2] * stride[2] + dw - padding[2]).astype(np.int32)
    return out.astype(np.float32, copy=False), PoolMask(it, ih, iw, x.shape)


def maxpool3d_scatter(mask: PoolMask, r_out: np.ndarray) -> np.ndarray:
    """Route each window's relevance to its recorded argmax position."""
    if mask.it.shape != r_out.shape:
        raise ShapeError(f"pool mask shape {mask.it.shape} does not match relevance {r_out.shape}")
    g = np.zeros(mask.input_shape, dtype=np.float32)
    c = np.broadcast_to(np.arange(mask.input_shape[0]).reshape(-1, 1, 1, 1), r_out.shape)
    np.add.at(g, (c, mask.it, mask.ih, mask.iw), r_out)
    return g


def avgpool3d_forward(x: np.ndarray, kernel: Triple, stride: Triple,
                      padding: Triple) -> np.ndarray:
    out_shape = pool_output_shape(x.shape, kernel, stride, padding)
    kt, kh, kw = kernel
    xp = _pad(x, padding, 0.0)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    win = win[:, ::stride[0], ::stride[1], ::stride[2]]
    out = win.reshape(*out_shape, kt * kh * kw).sum(axis=-1) / np.float32(kt * kh * kw)
    return out.astype(np.float32, copy=False)


def avgpool3d_scatter(r_out: np.ndarray, kernel: Triple, stride: Triple, padding: Triple,
                      in_shape) -> np.ndarray:
    """Give every input position under window j the share r_j / (kernel volume).
    Shares that fall on padding are dropped, mirroring the zeros they fed in."""
    kt, kh, kw = kernel
    pt, ph, pw = padding
    _, t, h, w = in_shape
    gp = np.zeros((in_shape[0], t + 2 * pt, h + 2 * ph, w + 2 * pw), dtype=np.float32)
    share = r_out / np.float32(kt * kh * kw)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                block = _strided_block(gp, (dt, dh, dw), r_out.shape[1:], stride)
                block += share
    return gp[:, pt:pt + t, ph:ph + h, pw:pw + w]


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    """weight (O, I) applied to a flat vector (I,)."""
    if x.ndim != 1 or weight.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ShapeError(f"linear: weight {weight.shape} incompatible with input {x.shape}")
    out = weight @ x
    if bias is not None:
        out = out + bias
    return out.astype(np.float32, copy=False)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)
