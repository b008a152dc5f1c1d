"""Deep Taylor relevance propagation.

The backward pass replaces gradients with relevance: starting from a seed at
the chosen output neuron (its logit value, all other outputs zero), each layer
redistributes the relevance it received onto its inputs:

* relu passes relevance through unchanged,
* max pool routes each window's relevance to the position it selected,
* average pool splits relevance equally over the kernel volume,
* conv / linear layers use the alpha-beta rule on the contributions
  z_ij = x_i * w_ij, weighting positive parts by alpha and negative parts
  by beta (alpha - beta = 1),
* the first layer uses the box rule instead, exploiting known input bounds
  l <= x <= h.

Denominators are stabilized by a sign-preserving epsilon. With beta = 0 and
zero biases the pass conserves relevance, so the sum over the input map
recovers the target logit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ShapeError, VrelError
from .network import ActivationCache, LayerDescriptor, Network, forward
from .tensor import Tensor, as_tensor, stabilized


@dataclass(frozen=True)
class RelevanceConfig:
    """Rule parameters for one explanation.

    ``input_low`` / ``input_high`` bound the (post-normalization) input values
    per channel; scalars broadcast. ``target`` selects the output neuron to
    explain: "argmax" or an explicit class index.
    """
    alpha: float = 1.0
    beta: float = 0.0
    eps: float = 1e-9
    input_low: float | Sequence[float] = 0.0
    input_high: float | Sequence[float] = 255.0
    target: int | str = "argmax"

    def __post_init__(self):
        if abs((self.alpha - self.beta) - 1.0) > 1e-9:
            raise ValueError(f"alpha - beta must equal 1, got {self.alpha} - {self.beta}")
        if self.alpha < 1.0 or self.beta < 0.0:
            raise ValueError("alpha must be >= 1 and beta >= 0")
        if self.eps <= 0.0:
            raise ValueError("eps must be > 0")
        low = np.atleast_1d(np.asarray(self.input_low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(self.input_high, dtype=np.float64))
        if low.size != high.size and 1 not in (low.size, high.size):
            raise ValueError("input_low and input_high must have matching lengths")
        if np.any(low > high):
            raise ValueError("input_low must be <= input_high per channel")
        if not (self.target == "argmax" or isinstance(self.target, int)):
            raise ValueError(f"target must be 'argmax' or an int, got {self.target!r}")

    def with_target(self, index: int) -> "RelevanceConfig":
        return replace(self, target=int(index))

    def bounds_for(self, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        """Per-position low/high arrays broadcast to an input of ``shape``."""
        def expand(v) -> np.ndarray:
            arr = np.atleast_1d(np.asarray(v, dtype=np.float32))
            if arr.size == 1:
                return np.broadcast_to(arr.reshape(1), shape) if len(shape) == 1 else \
                    np.broadcast_to(arr.reshape(1, 1, 1, 1), shape)
            if len(shape) == 4 and arr.size == shape[0]:
                return np.broadcast_to(arr.reshape(-1, 1, 1, 1), shape)
            raise ShapeError(f"bounds of length {arr.size} do not fit input shape {shape}")
        return expand(self.input_low), expand(self.input_high)


@dataclass(frozen=True)
class RelevanceMap:
    """Input-shaped relevance for one explained class.

    ``target_logit`` and ``logits`` are None on composite maps (spatial,
    temporal) that are assembled from several passes.
    """
    tensor: Tensor
    target_class: int
    target_logit: float | None = None
    logits: Tensor | None = None


def relu_relevance(r_out: np.ndarray) -> np.ndarray:
    """ReLU passes relevance on unmodified."""
    return r_out


def maxpool_relevance(mask: kernels.PoolMask, r_out: np.ndarray) -> np.ndarray:
    """Route relevance entirely to each window's recorded argmax position."""
    return kernels.maxpool3d_scatter(mask, r_out)


def avgpool_relevance(r_out: np.ndarray, kernel: kernels.Triple, stride: kernels.Triple,
                      padding: kernels.Triple, in_shape) -> np.ndarray:
    """Every position under a window receives that window's relevance divided by
    the kernel volume."""
    return kernels.avgpool3d_scatter(r_out, kernel, stride, padding, in_shape)


def _bias_parts(bias: np.ndarray | None, n_out: int):
    if bias is None:
        z = np.zeros(n_out, dtype=np.float32)
        return z, z
    return np.maximum(bias, 0.0), np.minimum(bias, 0.0)


def alpha_beta_relevance(layer: LayerDescriptor, params, input_act: np.ndarray,
                         r_out: np.ndarray, cfg: RelevanceConfig) -> np.ndarray:
    """Alpha-beta rule for conv3d and linear layers.

    Positive and negative contributions z_ij = x_i * w_ij are normalized per
    output unit (bias sign-parts included in the denominators, per-unit
    stabilization) and redistributed weighted by alpha resp. -beta.
    """
    w = params[layer.weight_name]
    b = params.get(layer.bias_name)
    bp, bn = _bias_parts(b, w.shape[0])
    if layer.kind == "linear":
        if input_act.shape != (layer.in_features,):
            raise ShapeError(f"cached activation {input_act.shape} does not match linear "
                             f"input ({layer.in_features},)")
        z = w * input_act[None, :]
        zp, zn = np.maximum(z, 0.0), np.minimum(z, 0.0)
        sp = (cfg.alpha * r_out) / stabilized(zp.sum(axis=1) + bp, cfg.eps)
        r_in = zp.T @ sp
        if cfg.beta != 0.0:
            sn = (cfg.beta * r_out) / stabilized(zn.sum(axis=1) + bn, cfg.eps)
            r_in = r_in - zn.T @ sn
        return r_in.astype(np.float32, copy=False)
    if layer.kind == "conv3d":
        if input_act.shape[0] != layer.in_channels:
            raise ShapeError(f"cached activation {input_act.shape} does not match conv "
                             f"input channels {layer.in_channels}")
        xp, xn = np.maximum(input_act, 0.0), np.minimum(input_act, 0.0)
        wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
        geo = (layer.stride, layer.padding)

        def half(x_pos, x_neg, w_a, w_b, scale, bias_part):
            # sum_i z+ (or z-) per output unit: same-sign and cross-sign products
            den = kernels.conv3d_forward(x_pos, w_a, None, *geo) \
                + kernels.conv3d_forward(x_neg, w_b, None, *geo) \
                + bias_part.reshape(-1, 1, 1, 1)
            s = (scale * r_out) / stabilized(den, cfg.eps)
            return x_pos * kernels.conv3d_scatter(s, w_a, *geo, input_act.shape) \
                + x_neg * kernels.conv3d_scatter(s, w_b, *geo, input_act.shape)

        r_in = half(xp, xn, wp, wn, cfg.alpha, bp)
        if cfg.beta != 0.0:
            r_in = r_in - half(xp, xn, wn, wp, cfg.beta, bn)
        return r_in.astype(np.float32, copy=False)
    raise VrelError(f"alpha-beta rule does not apply to {layer.kind!r} layers")


def z_beta_relevance(layer: LayerDescriptor, params, input_act: np.ndarray,
                     r_out: np.ndarray, cfg: RelevanceConfig) -> np.ndarray:
    """Box rule for the first layer, using input bounds l <= x <= h.

    Contributions are z_ij - l_i w+_ij - h_i w-_ij, normalized per output
    unit. Biases do not appear in this rule. Inputs outside the declared
    bounds only trigger a warning.
    """
    w = params[layer.weight_name]
    low, high = cfg.bounds_for(input_act.shape)
    if np.any(input_act < low) or np.any(input_act > high):
        warnings.warn("input values fall outside the configured [low, high] box; "
                      "the box rule assumes l <= x <= h", RuntimeWarning, stacklevel=2)
    wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
    if layer.kind == "linear":
        if input_act.shape != (layer.in_features,):
            raise ShapeError(f"cached activation {input_act.shape} does not match linear "
                             f"input ({layer.in_features},)")
        numer = w * input_act[None, :] - wp * low[None, :] - wn * high[None, :]
        s = r_out / stabilized(numer.sum(axis=1), cfg.eps)
        return (numer.T @ s).astype(np.float32, copy=False)
    if layer.kind == "conv3d":
        geo = (layer.stride, layer.padding)
        den = kernels.conv3d_forward(input_act, w, None, *geo) \
            - kernels.conv3d_forward(np.ascontiguousarray(low), wp, None, *geo) \
            - kernels.conv3d_forward(np.ascontiguousarray(high), wn, None, *geo)
        s = r_out / stabilized(den, cfg.eps)
        r_in = input_act * kernels.conv3d_scatter(s, w, *geo, input_act.shape) \
            - low * kernels.conv3d_scatter(s, wp, *geo, input_act.shape) \
            - high * kernels.conv3d_scatter(s, wn, *geo, input_act.shape)
        return r_in.astype(np.float32, copy=False)
    raise VrelError(f"box rule does not apply to {layer.kind!r} layers")


def propagate(net: Network, cache: ActivationCache, seed: np.ndarray, cfg: RelevanceConfig,
              trace: list[float] | None = None) -> np.ndarray:
    """Run the relevance rules over the layers in reverse, from an output-shaped
    seed down to an input-shaped map.

    If ``trace`` is given, the float64 relevance sum at every layer boundary
    (seed first, input last) is appended to it.
    """
    r = np.asarray(seed, dtype=np.float32)
    if r.shape != (net.num_classes,):
        raise ShapeError(f"seed shape {r.shape} does not match ({net.num_classes},)")
    if trace is not None:
        trace.append(float(np.sum(r, dtype=np.float64)))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        x = cache.inputs[i]
        if layer.kind == "relu":
            r = relu_relevance(r)
        elif layer.kind == "flatten":
            r = r.reshape(x.shape)
        elif layer.kind == "maxpool3d":
            r = maxpool_relevance(cache.pool_masks[i], r)
        elif layer.kind == "avgpool3d":
            r = avgpool_relevance(r, layer.kernel, layer.stride, layer.padding, x.shape)
        elif layer.kind in ("conv3d", "linear"):
            if i == 0:
                r = z_beta_relevance(layer, net.parameters, x, r, cfg)
            else:
                r = alpha_beta_relevance(layer, net.parameters, x, r, cfg)
        else:
            raise VrelError(f"no relevance rule for layer kind {layer.kind!r}")
        if trace is not None:
            trace.append(float(np.sum(r, dtype=np.float64)))
    return r


def resolve_target(logits: np.ndarray, target: int | str) -> int:
    if target == "argmax":
        return int(np.argmax(logits))
    idx = int(target)
    if not 0 <= idx < logits.shape[0]:
        raise IndexError(f"target class {idx} out of range for {logits.shape[0]} outputs")
    return idx


def explain(net: Network, x: np.ndarray, cfg: RelevanceConfig) -> RelevanceMap:
    """Forward the clip, seed the target class with its logit, and propagate the
    relevance back onto the input."""
    logits, cache = forward(net, x)
    target = resolve_target(logits, cfg.target)
    logit = float(logits[target])
    if logit < 0.0:
        warnings.warn(f"target logit {logit:.6g} is negative; deep Taylor assumes positive "
                      "root relevance", RuntimeWarning, stacklevel=2)
    seed = np.zeros(net.num_classes, dtype=np.float32)
    seed[target] = logit
    r = propagate(net, cache, seed, cfg)
    if not np.all(np.isfinite(r)):
        raise VrelError("relevance map contains NaN/Inf")
    return RelevanceMap(tensor=as_tensor(r), target_class=target, target_logit=logit,
                        logits=logits)
