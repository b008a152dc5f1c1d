"""Brute-force reference implementations used by the test suite.

Everything here is written as literal loops over the defining summations,
accumulating in float64, with no vectorization and no code shared with the
engine kernels. Keep the shapes small (tens of units per side); these are
correctness references, not implementations.
"""

from __future__ import annotations

import numpy as np


def naive_conv3d(x, weight, bias, stride, padding):
    """Direct nested-loop cross-correlation of a (C,T,H,W) input."""
    o, c, kt, kh, kw = weight.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    _, t, h, w = x.shape
    to = (t + 2 * pt - kt) // st + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((o, to, ho, wo), dtype=np.float64)
    for oc in range(o):
        for ot in range(to):
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0.0 if bias is None else float(bias[oc])
                    for ic in range(c):
                        for dt in range(kt):
                            it = ot * st + dt - pt
                            if not 0 <= it < t:
                                continue
                            for dh in range(kh):
                                ih = oh * sh + dh - ph
                                if not 0 <= ih < h:
                                    continue
                                for dw in range(kw):
                                    iw = ow * sw + dw - pw
                                    if not 0 <= iw < w:
                                        continue
                                    acc += float(x[ic, it, ih, iw]) * \
                                        float(weight[oc, ic, dt, dh, dw])
                    out[oc, ot, oh, ow] = acc
    return out.astype(np.float32)


def _pool_windows(shape, kernel, stride, padding):
    """Yield (output index, list of in-range input coordinates) per window."""
    _, t, h, w = shape
    kt, kh, kw = kernel
    st, sh, sw = stride
    pt, ph, pw = padding
    to = (t + 2 * pt - kt) // st + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    for ot in range(to):
        for oh in range(ho):
            for ow in range(wo):
                coords = []
                for dt in range(kt):
                    it = ot * st + dt - pt
                    if not 0 <= it < t:
                        continue
                    for dh in range(kh):
                        ih = oh * sh + dh - ph
                        if not 0 <= ih < h:
                            continue
                        for dw in range(kw):
                            iw = ow * sw + dw - pw
                            if 0 <= iw < w:
                                coords.append((it, ih, iw))
                yield (ot, oh, ow), coords


def naive_maxpool3d(x, kernel, stride, padding):
    c = x.shape[0]
    windows = list(_pool_windows(x.shape, kernel, stride, padding))
    to = max(j[0] for j, _ in windows) + 1
    ho = max(j[1] for j, _ in windows) + 1
    wo = max(j[2] for j, _ in windows) + 1
    out = np.zeros((c, to, ho, wo), dtype=np.float32)
    for ic in range(c):
        for j, coords in windows:
            out[(ic, *j)] = max(float(x[(ic, *p)]) for p in coords)
    return out


def naive_avgpool3d(x, kernel, stride, padding):
    c = x.shape[0]
    volume = kernel[0] * kernel[1] * kernel[2]
    windows = list(_pool_windows(x.shape, kernel, stride, padding))
    to = max(j[0] for j, _ in windows) + 1
    ho = max(j[1] for j, _ in windows) + 1
    wo = max(j[2] for j, _ in windows) + 1
    out = np.zeros((c, to, ho, wo), dtype=np.float32)
    for ic in range(c):
        for j, coords in windows:
            out[(ic, *j)] = sum(float(x[(ic, *p)]) for p in coords) / volume
    return out


def naive_linear(x, weight, bias):
    o, i = weight.shape
    out = np.zeros(o, dtype=np.float64)
    for j in range(o):
        acc = 0.0 if bias is None else float(bias[j])
        for k in range(i):
            acc += float(weight[j, k]) * float(x[k])
        out[j] = acc
    return out.astype(np.float32)


def _stab(d, eps):
    return d + (eps if d >= 0.0 else -eps)


def _conv_contributions(x, weight, stride, padding):
    """For every conv output unit j, the list of (input coordinate, z_ij, w_ij)."""
    o, c, kt, kh, kw = weight.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    _, t, h, w = x.shape
    for j, window in _pool_windows(x.shape, (kt, kh, kw), stride, padding):
        for oc in range(o):
            contribs = []
            for (it, ih, iw) in window:
                dt, dh, dw = it - j[0] * st + pt, ih - j[1] * sh + ph, iw - j[2] * sw + pw
                for ic in range(c):
                    wv = float(weight[oc, ic, dt, dh, dw])
                    contribs.append(((ic, it, ih, iw), float(x[ic, it, ih, iw]) * wv, wv))
            yield (oc, *j), contribs


def _linear_contributions(x, weight):
    o, n = weight.shape
    for j in range(o):
        contribs = []
        for i in range(n):
            wv = float(weight[j, i])
            contribs.append((i, float(x[i]) * wv, wv))
        yield j, contribs


def naive_alpha_beta(kind, x, weight, bias, stride, padding, r_out, alpha, beta, eps):
    """Literal alpha-beta rule: per output unit, split z_ij by sign, normalize by
    the signed sums plus the bias sign part, redistribute alpha/-beta weighted."""
    r_in = np.zeros(x.shape, dtype=np.float64)
    units = _linear_contributions(x, weight) if kind == "linear" \
        else _conv_contributions(x, weight, stride, padding)
    for j, contribs in units:
        oc = j if kind == "linear" else j[0]
        b = 0.0 if bias is None else float(bias[oc])
        den_p = _stab(sum(max(z, 0.0) for _, z, _ in contribs) + max(b, 0.0), eps)
        den_n = _stab(sum(min(z, 0.0) for _, z, _ in contribs) + min(b, 0.0), eps)
        rj = float(r_out[j])
        for i, z, _ in contribs:
            r_in[i] += (alpha * max(z, 0.0) / den_p - beta * min(z, 0.0) / den_n) * rj
    return r_in.astype(np.float32)


def naive_z_beta(kind, x, weight, stride, padding, r_out, low, high, eps):
    """Literal box rule: contributions z_ij - l_i w+_ij - h_i w-_ij, normalized
    per output unit; no bias term."""
    low = np.broadcast_to(np.asarray(low, dtype=np.float64).reshape(-1, *([1] * (x.ndim - 1))),
                          x.shape)
    high = np.broadcast_to(np.asarray(high, dtype=np.float64).reshape(-1, *([1] * (x.ndim - 1))),
                           x.shape)
    r_in = np.zeros(x.shape, dtype=np.float64)
    units = _linear_contributions(x, weight) if kind == "linear" \
        else _conv_contributions(x, weight, stride, padding)
    for j, contribs in units:
        terms = [(i, z - float(low[i]) * max(wv, 0.0) - float(high[i]) * min(wv, 0.0))
                 for i, z, wv in contribs]
        den = _stab(sum(v for _, v in terms), eps)
        rj = float(r_out[j])
        for i, v in terms:
            r_in[i] += v / den * rj
    return r_in.astype(np.float32)


def conservation_audit(net, x, cfg):
    """Relevance sums at every layer boundary of an engine explanation pass.

    The first entry is the seed sum (the target logit), the last is the sum
    over the input map. For beta = 0, zero-bias networks with a positive
    target logit, all entries agree.
    """
    from .network import forward
    from .relevance import propagate, resolve_target

    logits, cache = forward(net, x)
    target = resolve_target(logits, cfg.target)
    seed = np.zeros(net.num_classes, dtype=np.float32)
    seed[target] = logits[target]
    sums: list[float] = []
    propagate(net, cache, seed, cfg, trace=sums)
    return sums
