"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ops import record_routing
from .tensor import Tensor, backward, no_grad


def numerical_grad(
    f: Callable[[], float], array: np.ndarray, h: float = 1e-4, indices: np.ndarray | None = None
) -> np.ndarray:
    """d f / d array by central differences, perturbing ``array`` in place.

    With ``indices`` only those flat positions are probed; the rest stay zero.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max abs difference scaled by the larger of the two max magnitudes."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    probed: dict[str, int] = field(default_factory=dict)
    # probes whose +-h evaluations switched a max-pool winner
    kinks: dict[str, int] = field(default_factory=dict)

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]


def _same_routing(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients_report(
    loss_fn: Callable[[], Tensor],
    tensors: dict[str, Tensor],
    h: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autodiff with central differences, per tensor.

    ``loss_fn`` must rebuild the graph from the current tensor values each call.
    ``max_entries`` caps the probed entries per tensor (a seeded random subset).
    A probe whose two evaluations pick a different max-pool winner than the
    unperturbed pass straddles a non-differentiable point; the difference
    quotient is meaningless there, so it is counted in ``kinks`` and left out.
    """
    for t in tensors.values():
        t.grad = None
    with record_routing() as base_routing:
        loss = loss_fn()
    backward(loss)
    report = GradCheckReport()
    rng = np.random.default_rng(seed)

    def value() -> tuple[float, list[np.ndarray]]:
        with no_grad(), record_routing() as routing:
            return loss_fn().item(), routing

    for name, t in tensors.items():
        analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
        idx = np.arange(t.size)
        if max_entries is not None and t.size > max_entries:
            idx = np.sort(rng.choice(t.size, max_entries, replace=False))
        flat = t.data.reshape(-1)
        keep, numeric = [], []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp, rp = value()
            flat[i] = orig - h
            fm, rm = value()
            flat[i] = orig
            if _same_routing(rp, base_routing) and _same_routing(rm, base_routing):
                keep.append(i)
                numeric.append((fp - fm) / (2.0 * h))
        report.probed[name] = len(idx)
        report.kinks[name] = len(idx) - len(keep)
        report.errors[name] = rel_err(analytic[keep], np.asarray(numeric)) if keep else 0.0
    return report


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: dict[str, Tensor],
    h: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """Per-tensor relative errors; see :func:`check_gradients_report`."""
    return check_gradients_report(loss_fn, tensors, h, max_entries, seed).errors
