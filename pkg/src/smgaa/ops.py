"""Differentiable operators on B x C x F x T tensors.

Convolutions are stride 1 and take explicit (top, bottom, left, right)
padding, so "same" padding for even kernels is the caller's decision.
"""

from __future__ import annotations

import contextvars
from contextlib import contextmanager

import numpy as np

from .errors import ConfigError, DegenerateBatchError
from .tensor import Tensor, as_tensor, make_node

Padding = tuple[int, int, int, int]

_routing_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("routing_log", default=None)


@contextmanager
def record_routing():
    """Collect the argmax index arrays chosen by every max-pool in the block."""
    log: list[np.ndarray] = []
    token = _routing_log.set(log)
    try:
        yield log
    finally:
        _routing_log.reset(token)


def _note_routing(idx: np.ndarray) -> None:
    log = _routing_log.get()
    if log is not None:
        log.append(idx)


def same_padding(k_f: int, k_t: int) -> Padding:
    """Padding that keeps F and T unchanged; even kernels pad one more on top/left."""
    return ((k_f - 1) - (k_f - 1) // 2, (k_f - 1) // 2, (k_t - 1) - (k_t - 1) // 2, (k_t - 1) // 2)


# -------------------------------------------------------------- convolution
def _im2col(xp: np.ndarray, kf: int, kt: int, fo: int, to: int) -> np.ndarray:
    """Columns laid out as (Cin * kF * kT, B * F' * T') for a single GEMM."""
    b, c = xp.shape[:2]
    cols = np.empty((c, kf, kt, b, fo, to))
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(kf):
        for j in range(kt):
            cols[:, i, j] = xt[:, :, i : i + fo, j : j + to]
    return cols.reshape(c * kf * kt, b * fo * to)


def _channels_first(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.transpose(1, 0, 2, 3)).reshape(a.shape[1], -1)


def _corr_dense(xp: np.ndarray, w: np.ndarray, fo: int, to: int) -> np.ndarray:
    """Valid cross-correlation, groups=1.  xp: B,Cin,Fp,Tp  w: Cout,Cin,kF,kT."""
    b, cin = xp.shape[:2]
    cout, _, kf, kt = w.shape
    if kf == 1 and kt == 1:
        out = np.matmul(w[:, :, 0, 0], xp[:, :, :fo, :to].reshape(b, cin, fo * to))
        return out.reshape(b, cout, fo, to)
    out = w.reshape(cout, -1) @ _im2col(xp, kf, kt, fo, to)
    return np.ascontiguousarray(out.reshape(cout, b, fo, to).transpose(1, 0, 2, 3))


def _dense_grads(xp: np.ndarray, w: np.ndarray, g: np.ndarray, need_x: bool):
    """Kernel gradient and padded-input gradient of the dense correlation."""
    b, cin = xp.shape[:2]
    cout, _, kf, kt = w.shape
    fo, to = g.shape[2], g.shape[3]
    if kf == 1 and kt == 1:
        g3 = g.reshape(b, cout, fo * to)
        x3 = xp.reshape(b, cin, fo * to)
        gw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0)[:, :, None, None]
        gxp = np.matmul(w[:, :, 0, 0].T, g3).reshape(xp.shape) if need_x else None
        return gw, gxp
    gt = _channels_first(g)
    gw = (gt @ _im2col(xp, kf, kt, fo, to).T).reshape(w.shape)
    gxp = None
    if need_x:
        dcols = (w.reshape(cout, -1).T @ gt).reshape(cin, kf, kt, b, fo, to)
        gxt = np.zeros((cin, b) + xp.shape[2:])
        for i in range(kf):
            for j in range(kt):
                gxt[:, :, i : i + fo, j : j + to] += dcols[:, i, j]
        gxp = gxt.transpose(1, 0, 2, 3)
    return gw, gxp


def _corr_depthwise(xp: np.ndarray, w: np.ndarray, fo: int, to: int) -> np.ndarray:
    kf, kt = w.shape[2], w.shape[3]
    out = np.zeros((xp.shape[0], xp.shape[1], fo, to))
    for i in range(kf):
        for j in range(kt):
            out += w[None, :, 0, i, j, None, None] * xp[:, :, i : i + fo, j : j + to]
    return out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    padding: Padding = (0, 0, 0, 0),
    groups: int = 1,
) -> Tensor:
    """Stride-1 grouped 2-D cross-correlation over (F, T)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise ConfigError(f"conv2d input must be B x C x F x T, got rank {x.ndim}")
    if weight.ndim != 4:
        raise ConfigError(f"conv2d kernel must be Cout x Cin/groups x kF x kT, got rank {weight.ndim}")
    b, cin, f, t = x.shape
    cout, cin_g, kf, kt = weight.shape
    if groups < 1 or cin % groups:
        raise ConfigError(f"groups={groups} does not divide input channels {cin}")
    if cout % groups:
        raise ConfigError(f"groups={groups} does not divide output channels {cout}")
    if cin_g != cin // groups:
        raise ConfigError(f"kernel channel dimension {cin_g} != input channels / groups = {cin // groups}")
    top, bottom, left, right = padding
    fp, tp = f + top + bottom, t + left + right
    if kf > fp:
        raise ConfigError(f"kernel frequency extent {kf} exceeds padded F {fp}")
    if kt > tp:
        raise ConfigError(f"kernel time extent {kt} exceeds padded T {tp}")
    if bias is not None and bias.shape != (cout,):
        raise ConfigError(f"bias shape {bias.shape} != ({cout},)")
    fo, to = fp - kf + 1, tp - kt + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right))) if any(padding) else x.data
    w = weight.data
    depthwise = groups == cin and cout == cin and groups > 1
    if groups == 1:
        out = _corr_dense(xp, w, fo, to)
    elif depthwise:
        out = _corr_depthwise(xp, w, fo, to)
    else:
        cg, og = cin // groups, cout // groups
        out = np.concatenate(
            [_corr_dense(xp[:, g * cg : (g + 1) * cg], w[g * og : (g + 1) * og], fo, to) for g in range(groups)],
            axis=1,
        )
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def back(g):
        if groups == 1:
            gw, gxp = _dense_grads(xp, w, g, x.requires_grad)
        elif depthwise:
            gw = np.zeros_like(w)
            gxp = np.zeros_like(xp) if x.requires_grad else None
            for i in range(kf):
                for j in range(kt):
                    window = xp[:, :, i : i + fo, j : j + to]
                    gw[:, 0, i, j] = np.einsum("bcft,bcft->c", g, window)
                    if gxp is not None:
                        gxp[:, :, i : i + fo, j : j + to] += w[None, :, 0, i, j, None, None] * g
        else:
            cg, og = cin // groups, cout // groups
            pieces = [
                _dense_grads(xp[:, k * cg : (k + 1) * cg], w[k * og : (k + 1) * og], g[:, k * og : (k + 1) * og], True)
                for k in range(groups)
            ]
            gw = np.concatenate([p[0] for p in pieces])
            gxp = np.concatenate([p[1] for p in pieces], axis=1)
        gx = None if gxp is None else gxp[:, :, top : top + f, left : left + t]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_node(out, parents, back, "conv2d")


# ------------------------------------------------------------ normalization
def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over (B, F, T).

    In training mode the running statistics are updated in place; the running
    variance uses the unbiased estimator.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    b, c, f, t = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ConfigError(f"affine parameters must have shape ({c},)")
    gm = gamma.data[None, :, None, None]
    if training:
        n = b * f * t
        if n < 2:
            raise DegenerateBatchError(f"batch norm needs B*F*T >= 2 in training mode, got {n}")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * n / (n - 1)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]

        def back(g):
            dxhat = g * gm
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            gx = inv_std[None, :, None, None] / n * (n * dxhat - s1 - xhat * s2)
            return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    else:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean[None, :, None, None]) * inv_std[None, :, None, None]

        def back(g):
            gx = g * gm * inv_std[None, :, None, None]
            return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    out = gm * xhat + beta.data[None, :, None, None]
    return make_node(out, (x, gamma, beta), back, "batch_norm")


# ------------------------------------------------------------------ pooling
def global_avg_pool(x: Tensor) -> Tensor:
    b, c, f, t = x.shape

    def back(g):
        return (np.broadcast_to(g / (f * t), x.shape).copy(),)

    return make_node(x.data.mean(axis=(2, 3), keepdims=True), (x,), back, "global_avg_pool")


def pool_bins(n_in: int, n_out: int) -> list[tuple[int, int]]:
    """Contiguous bins [floor(i*n/m), floor((i+1)*n/m))."""
    return [((i * n_in) // n_out, ((i + 1) * n_in) // n_out) for i in range(n_out)]


def adaptive_pool(x: Tensor, target_f: int, mode: str = "max") -> Tensor:
    """Pool the frequency axis down to ``target_f`` bins; time is untouched."""
    if target_f <= 0:
        raise ConfigError(f"target_f must be positive, got {target_f}")
    b, c, f, t = x.shape
    if target_f > f:
        raise ConfigError(f"target_f={target_f} exceeds frequency extent {f}")
    if mode not in ("max", "avg"):
        raise ConfigError(f"unknown pooling mode {mode!r}")
    bins = pool_bins(f, target_f)
    out = np.empty((b, c, target_f, t))
    argmax = []
    for i, (s, e) in enumerate(bins):
        seg = x.data[:, :, s:e, :]
        if mode == "max":
            idx = seg.argmax(axis=2)
            argmax.append(idx)
            _note_routing(idx)
            out[:, :, i, :] = np.take_along_axis(seg, idx[:, :, None, :], axis=2)[:, :, 0, :]
        else:
            out[:, :, i, :] = seg.mean(axis=2)

    def back(g):
        gx = np.zeros(x.shape)
        for i, (s, e) in enumerate(bins):
            if mode == "max":
                view = gx[:, :, s:e, :]
                np.put_along_axis(view, argmax[i][:, :, None, :], g[:, :, i : i + 1, :], axis=2)
            else:
                gx[:, :, s:e, :] += g[:, :, i : i + 1, :] / (e - s)
        return (gx,)

    return make_node(out, (x,), back, f"adaptive_{mode}_pool")


def max_pool2d(x: Tensor) -> Tensor:
    """2 x 2 max pool, stride 2; F must be even, T rounds up (ceil mode)."""
    b, c, f, t = x.shape
    if f % 2:
        raise ConfigError(f"max_pool2d needs an even frequency extent, got F={f}")
    t2 = (t + 1) // 2
    xp = x.data
    if t % 2:
        xp = np.pad(xp, ((0, 0), (0, 0), (0, 0), (0, 1)), constant_values=-np.inf)
    win = xp.reshape(b, c, f // 2, 2, t2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, f // 2, t2, 4)
    idx = win.argmax(axis=-1)
    _note_routing(idx)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def back(g):
        gwin = np.zeros(win.shape)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(b, c, f // 2, t2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, f, 2 * t2)
        return (gx[:, :, :, :t],)

    return make_node(out, (x,), back, "max_pool2d")


def slice_f(x: Tensor, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` of the frequency axis."""

    def back(g):
        gx = np.zeros(x.shape)
        gx[:, :, start:stop, :] = g
        return (gx,)

    return make_node(x.data[:, :, start:stop, :].copy(), (x,), back, "slice_f")


# ------------------------------------------------------------------- resize
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights, half-pixel centers, edge-clamped."""
    if n_out < 1:
        raise ConfigError(f"target size must be >= 1, got {n_out}")
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(m, (np.arange(n_out), hi), frac)
    return m


def bilinear_resize_f(x: Tensor, target_f: int) -> Tensor:
    """Resize the frequency axis to ``target_f``; T is preserved so only F interpolates."""
    m = resize_matrix(x.shape[2], target_f)

    def back(g):
        return (np.matmul(m.T, g),)

    return make_node(np.matmul(m, x.data), (x,), back, "resize_f")


# ----------------------------------------------------------------- dense
def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ConfigError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ConfigError(f"linear: bias {bias.shape} != ({weight.shape[0]},)")
        out = out + bias.data

    def back(g):
        grads = (g @ weight.data, g.T @ x.data)
        return grads + (g.sum(axis=0),) if bias is not None else grads

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_node(out, parents, back, "linear")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    labels = np.asarray(labels, dtype=int)
    if logits.ndim != 2:
        raise ConfigError(f"logits must be B x K, got {logits.shape}")
    n = logits.shape[0]
    if n == 0:
        raise ValueError("cross_entropy of an empty batch")
    if labels.shape != (n,):
        raise ConfigError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("labels out of range")
    logp = log_softmax(logits.data)
    loss = -logp[np.arange(n), labels].mean()

    def back(g):
        grad = np.exp(logp)
        grad[np.arange(n), labels] -= 1.0
        return (grad * (float(g) / n),)

    return make_node(np.asarray(loss), (logits,), back, "cross_entropy")
