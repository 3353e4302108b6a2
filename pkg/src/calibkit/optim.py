"""Generic numerical machinery.

Bounded scalar minimization (coarse bracket scan + golden section), projected
gradient descent with backtracking, and the analytic gradients of the
calibration loss under scalar-temperature and vector scaling. Everything here
is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import LogitDataset, softmax
from .errors import ConfigError, OptimizationError

__all__ = [
    "ScalarProblem",
    "GradientProblem",
    "GDResult",
    "minimize_scalar",
    "projected_gd",
    "temperature_nll",
    "vector_nll",
    "nll_grad_temperature",
    "nll_grad_vector",
]

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_MAX_STEP = 1e30


@dataclass
class ScalarProblem:
    """A 1-D objective on [lo, hi], minimized to `tol` on the argument.

    `scan_points` coarse evaluations pick the starting bracket, which lets the
    search tolerate mild non-unimodality.
    """

    objective: Callable[[float], float]
    lo: float
    hi: float
    tol: float = 1e-6
    scan_points: int = 64


def minimize_scalar(problem: ScalarProblem) -> tuple[float, float]:
    """Minimize a bounded scalar objective; returns (argmin, value).

    A coarse scan over `scan_points` equally spaced points brackets the best
    candidate, then golden-section search shrinks the bracket below `tol`.
    """
    lo, hi = float(problem.lo), float(problem.hi)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise ConfigError(f"invalid bounds [{lo}, {hi}]")
    if problem.tol <= 0:
        raise ConfigError("tolerance must be positive")

    def f(x: float) -> float:
        val = float(problem.objective(x))
        if not np.isfinite(val):
            raise OptimizationError(f"objective is not finite at x={x}: {val}")
        return val

    xs = np.linspace(lo, hi, max(problem.scan_points, 3))
    fs = np.array([f(x) for x in xs])
    best = int(np.argmin(fs))
    a = xs[max(best - 1, 0)]
    b = xs[min(best + 1, xs.size - 1)]

    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > problem.tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


@dataclass
class GradientProblem:
    """Objective + gradient over a parameter vector with a projection map.

    The projection must be idempotent and the initial point feasible. A step
    is accepted only if it strictly decreases the loss; on increase the step
    size halves (up to `max_halvings` times) before the solver declares a
    stall. A step accepted without any halving doubles the step size, which
    is what lets the solver traverse exponentially flattening landscapes
    (e.g. separable logistic losses) in a bounded number of iterations.

    Convergence: accepted improvement below
    `improvement_tol + relative_improvement_tol * |loss|`.
    """

    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    project: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    step_size: float = 0.1
    max_iters: int = 2000
    improvement_tol: float = 1e-10
    relative_improvement_tol: float = 0.0
    max_halvings: int = 40


@dataclass
class GDResult:
    x: np.ndarray
    loss: float
    iterations: int


def projected_gd(problem: GradientProblem) -> GDResult:
    """Projected gradient descent with backtracking halving and growth on success.

    Every iterate is feasible (projected), and the loss sequence over accepted
    steps is strictly decreasing. NaN loss raises OptimizationError with the
    iteration count.
    """
    x = problem.project(np.asarray(problem.x0, dtype=np.float64))
    loss = float(problem.objective(x))
    if np.isnan(loss):
        raise OptimizationError("initial loss is NaN", iterations=0)
    eta = float(problem.step_size)

    for iteration in range(1, problem.max_iters + 1):
        grad = np.asarray(problem.gradient(x), dtype=np.float64)
        accepted = False
        trial = eta
        for halving in range(problem.max_halvings + 1):
            cand = problem.project(x - trial * grad)
            cand_loss = float(problem.objective(cand))
            if np.isnan(cand_loss):
                raise OptimizationError("loss became NaN", iterations=iteration)
            if cand_loss < loss:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            return GDResult(x=x, loss=loss, iterations=iteration)
        improvement = loss - cand_loss
        x, loss = cand, cand_loss
        eta = min(trial * 2.0, _MAX_STEP) if halving == 0 else trial
        if improvement < problem.improvement_tol + problem.relative_improvement_tol * abs(loss):
            return GDResult(x=x, loss=loss, iterations=iteration)
    return GDResult(x=x, loss=loss, iterations=problem.max_iters)


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return np.log(np.exp(z - m).sum(axis=-1)) + m[..., 0]


def _select(dataset: LogitDataset, indices: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    if indices is None:
        return dataset.logits, dataset.labels
    idx = np.asarray(indices, dtype=np.int64)
    return dataset.logits[idx], dataset.labels[idx]


def temperature_nll(dataset: LogitDataset, alpha: float, indices: np.ndarray | None = None) -> float:
    """Mean NLL of the true labels under softmax(alpha * logits), optionally on a slice."""
    z, y = _select(dataset, indices)
    zs = alpha * z
    return float(np.mean(_logsumexp(zs) - zs[np.arange(zs.shape[0]), y]))


def nll_grad_temperature(dataset: LogitDataset, alpha: float, indices: np.ndarray | None = None) -> float:
    """d/d(alpha) of `temperature_nll`: mean of sum_k p_k(alpha) z_k - z_Y."""
    z, y = _select(dataset, indices)
    p = softmax(alpha * z)
    return float(np.mean((p * z).sum(axis=1) - z[np.arange(z.shape[0]), y]))


def _check_vector_dims(dataset: LogitDataset, scale: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scale = np.asarray(scale, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if scale.shape != (dataset.num_classes,) or bias.shape != (dataset.num_classes,):
        raise ConfigError(
            f"scale/bias must have length {dataset.num_classes}, "
            f"got {scale.shape} and {bias.shape}"
        )
    return scale, bias


def vector_nll(dataset: LogitDataset, scale: np.ndarray, bias: np.ndarray) -> float:
    """Mean NLL of the true labels under softmax(scale * logits + bias)."""
    scale, bias = _check_vector_dims(dataset, scale, bias)
    zs = scale * dataset.logits + bias
    return float(np.mean(_logsumexp(zs) - zs[np.arange(zs.shape[0]), dataset.labels]))


def nll_grad_vector(
    dataset: LogitDataset, scale: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of `vector_nll` in (scale, bias).

    With residuals r = softmax(scale * z + bias) - onehot(Y):
    grad_scale = mean(r * z), grad_bias = mean(r).
    """
    scale, bias = _check_vector_dims(dataset, scale, bias)
    z = dataset.logits
    r = softmax(scale * z + bias)
    rows = np.arange(z.shape[0])
    r = r.copy()
    r[rows, dataset.labels] -= 1.0
    return (r * z).mean(axis=0), r.mean(axis=0)
