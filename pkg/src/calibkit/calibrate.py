"""Fitting and applying the three calibration methods.

Temperature scaling (TS) tunes one scalar by bounded scalar search on the
validation NLL. Class-wise temperature scaling (CTS) ties one temperature per
predicted class to a shared temperature within radius gamma: gamma = 0
collapses to TS, gamma = inf decouples the classes into independent scalar
searches, and finite gamma runs projected gradient descent on the joint
objective. Vector scaling (VS) fits a per-class scale and bias by gradient
descent and may change predictions; temperature variants never do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CalibrationModel,
    ClassWiseTemperature,
    Identity,
    LogitDataset,
    PredictionSet,
    Temperature,
    Vector,
    check_model_classes,
    predict,
    softmax,
    split_by_predicted,
)
from .errors import ConfigError, EmptyDatasetError, InvalidModelError
from .metrics import nll
from .optim import (
    GradientProblem,
    ScalarProblem,
    minimize_scalar,
    nll_grad_vector,
    projected_gd,
    temperature_nll,
    vector_nll,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "apply",
    "fit_ts",
    "fit_cts",
    "fit_vs",
    "accuracy_delta",
    "model_to_dict",
    "model_from_dict",
]


@dataclass(frozen=True)
class FitConfig:
    """Search bounds, the multi-task radius, and optimizer settings.

    `alpha_lo`/`alpha_hi` bound the shared temperature (and each per-class
    search). The defaults are wide enough that no sane fixture ends up on a
    boundary; boundary hits are reported as warnings, not errors.
    """

    alpha_lo: float = 0.01
    alpha_hi: float = 100.0
    gamma: float = math.inf
    min_class_samples: int = 10
    scalar_tol: float = 1e-6
    max_iters: int = 2000
    step_size: float = 0.1
    improvement_tol: float = 1e-10

    def __post_init__(self):
        if not (0 < self.alpha_lo <= self.alpha_hi):
            raise ConfigError(f"need 0 < alpha_lo <= alpha_hi, got [{self.alpha_lo}, {self.alpha_hi}]")
        if math.isnan(self.gamma) or self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.scalar_tol <= 0:
            raise ConfigError("scalar tolerance must be positive")


@dataclass(frozen=True)
class FitResult:
    """Fitted model plus fit diagnostics on the validation dataset."""

    model: CalibrationModel
    val_nll: float
    iterations: int
    fallback_classes: list[int] = field(default_factory=list)
    accuracy_before: float = 0.0
    accuracy_after: float = 0.0
    warnings: list[str] = field(default_factory=list)


def apply(model: CalibrationModel, logits: np.ndarray, predicted_class: int) -> np.ndarray:
    """Calibrated probability vector for one record.

    `predicted_class` must be the prediction of the *uncalibrated* logits;
    class-wise temperatures route on it.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ConfigError("apply expects a single logit vector")
    check_model_classes(model, z.shape[0])
    return softmax(model.scaled_logits(z, predicted_class))


def _boundary_warnings(name: str, alpha: float, cfg: FitConfig) -> list[str]:
    margin = 10 * cfg.scalar_tol
    if alpha - cfg.alpha_lo <= margin or cfg.alpha_hi - alpha <= margin:
        return [f"{name} temperature {alpha:.6g} is at a search boundary [{cfg.alpha_lo}, {cfg.alpha_hi}]"]
    return []


def _scalar_fit(
    val: LogitDataset, cfg: FitConfig, indices: np.ndarray | None = None
) -> tuple[float, float, int]:
    """Scalar temperature search on (a slice of) the validation NLL."""
    evals = 0

    def objective(alpha: float) -> float:
        nonlocal evals
        evals += 1
        return temperature_nll(val, alpha, indices)

    alpha, fval = minimize_scalar(
        ScalarProblem(objective, cfg.alpha_lo, cfg.alpha_hi, tol=cfg.scalar_tol)
    )
    return alpha, fval, evals


def _finish(model, val, evals, fallbacks, warnings) -> FitResult:
    before = predict(val, Identity())
    after = predict(val, model)
    return FitResult(
        model=model,
        val_nll=nll(val, model),
        iterations=evals,
        fallback_classes=fallbacks,
        accuracy_before=before.accuracy,
        accuracy_after=after.accuracy,
        warnings=warnings,
    )


def fit_ts(val: LogitDataset, cfg: FitConfig = FitConfig()) -> FitResult:
    """Fit temperature scaling by minimizing validation NLL over [alpha_lo, alpha_hi]."""
    if val.num_records == 0:
        raise EmptyDatasetError("cannot fit on an empty validation set")
    alpha, _, evals = _scalar_fit(val, cfg)
    return _finish(Temperature(alpha), val, evals, [], _boundary_warnings("TS", alpha, cfg))


def fit_cts(val: LogitDataset, cfg: FitConfig = FitConfig()) -> FitResult:
    """Fit class-wise temperature scaling under the configured gamma.

    gamma = 0 copies the TS solution into every class. gamma = inf fits each
    predicted-class slice independently, falling back to the shared TS
    temperature (and flagging the class) when a slice has fewer than
    `min_class_samples` records. Finite gamma > 0 runs projected gradient
    descent jointly over (alpha0, alpha_1..alpha_K), initialized at the TS
    solution; the projection clamps alpha0 into its bounds first and then
    clamps each alpha_k into [alpha0 - gamma, alpha0 + gamma] (floored at
    alpha_lo so temperatures stay positive).
    """
    if val.num_records == 0:
        raise EmptyDatasetError("cannot fit on an empty validation set")
    k = val.num_classes
    alpha0, _, evals = _scalar_fit(val, cfg)
    warnings = _boundary_warnings("CTS shared", alpha0, cfg)

    if cfg.gamma == 0:
        model = ClassWiseTemperature(alpha0, np.full(k, alpha0), 0.0)
        return _finish(model, val, evals, [], warnings)

    preds = predict(val, Identity())
    slices = split_by_predicted(preds)

    if math.isinf(cfg.gamma):
        alphas = np.full(k, alpha0)
        fallbacks = []
        for s in slices:
            if s.count < cfg.min_class_samples:
                fallbacks.append(s.class_index)
                continue
            alpha_k, _, used = _scalar_fit(val, cfg, s.indices)
            alphas[s.class_index] = alpha_k
            evals += used
            warnings += _boundary_warnings(f"CTS class {s.class_index}", alpha_k, cfg)
        model = ClassWiseTemperature(alpha0, alphas, math.inf)
        return _finish(model, val, evals, fallbacks, warnings)

    # Finite gamma: joint projected GD over (alpha0, alphas). The objective
    # does not depend on alpha0 directly (it only anchors the constraint), so
    # alpha0 stays at the TS optimum.
    z = val.logits
    y = val.labels
    rows = np.arange(val.num_records)
    pred = np.asarray(preds.predicted)

    def objective(x: np.ndarray) -> float:
        zs = x[1:][pred][:, None] * z
        m = zs.max(axis=1, keepdims=True)
        logp = (zs - m)[rows, y] - np.log(np.exp(zs - m).sum(axis=1))
        return float(-np.mean(logp))

    def gradient(x: np.ndarray) -> np.ndarray:
        zs = x[1:][pred][:, None] * z
        p = softmax(zs)
        per_record = (p * z).sum(axis=1) - z[rows, y]
        g = np.zeros(k + 1)
        g[1:] = np.bincount(pred, weights=per_record, minlength=k) / val.num_records
        return g

    def project(x: np.ndarray) -> np.ndarray:
        out = x.copy()
        out[0] = np.clip(out[0], cfg.alpha_lo, cfg.alpha_hi)
        lo = max(out[0] - cfg.gamma, cfg.alpha_lo)
        out[1:] = np.clip(out[1:], lo, out[0] + cfg.gamma)
        return out

    x0 = np.full(k + 1, alpha0)
    result = projected_gd(
        GradientProblem(
            objective=objective,
            gradient=gradient,
            project=project,
            x0=x0,
            step_size=cfg.step_size,
            max_iters=cfg.max_iters,
            improvement_tol=cfg.improvement_tol,
        )
    )
    model = ClassWiseTemperature(result.x[0], result.x[1:], cfg.gamma)
    return _finish(model, val, evals + result.iterations, [], warnings)


def fit_vs(val: LogitDataset, cfg: FitConfig = FitConfig()) -> FitResult:
    """Fit vector scaling by gradient descent on the validation NLL.

    Two deterministic restarts: the identity (scale 1, bias 0) and a
    TS-warm start (scale alpha* 1, bias 0). The warm start makes the fitted
    NLL never worse than the TS solution's. Vector scaling can change
    predictions, so the result reports accuracy before and after.
    """
    if val.num_records == 0:
        raise EmptyDatasetError("cannot fit on an empty validation set")
    k = val.num_classes
    alpha_ts, _, evals = _scalar_fit(val, cfg)

    def objective(x: np.ndarray) -> float:
        return vector_nll(val, x[:k], x[k:])

    def gradient(x: np.ndarray) -> np.ndarray:
        ga, gb = nll_grad_vector(val, x[:k], x[k:])
        return np.concatenate([ga, gb])

    starts = [
        np.concatenate([np.ones(k), np.zeros(k)]),
        np.concatenate([np.full(k, alpha_ts), np.zeros(k)]),
    ]
    best = None
    total_iters = evals
    for x0 in starts:
        result = projected_gd(
            GradientProblem(
                objective=objective,
                gradient=gradient,
                project=lambda x: x,
                x0=x0,
                step_size=cfg.step_size,
                max_iters=cfg.max_iters,
                improvement_tol=cfg.improvement_tol,
            )
        )
        total_iters += result.iterations
        if best is None or result.loss < best.loss:
            best = result
    model = Vector(best.x[:k], best.x[k:])
    return _finish(model, val, total_iters, [], [])


def accuracy_delta(before: PredictionSet, after: PredictionSet) -> tuple[float, int]:
    """(accuracy(after) - accuracy(before), number of records whose prediction changed)."""
    if before.num_records != after.num_records:
        raise ConfigError("prediction sets cover different numbers of records")
    delta = after.accuracy - before.accuracy
    changed = int(np.sum(before.predicted != after.predicted))
    return delta, changed


_METHOD_NAMES = {Identity: "none", Temperature: "ts", ClassWiseTemperature: "cts", Vector: "vs"}


def model_to_dict(model: CalibrationModel, num_classes: int) -> dict:
    """JSON-ready dict for a fitted model; unused fields are null.

    An infinite gamma is stored as the string "inf" to keep the document
    strict JSON.
    """
    check_model_classes(model, num_classes)
    doc = {
        "method": _METHOD_NAMES[type(model)],
        "alpha": None,
        "alpha0": None,
        "alphas": None,
        "gamma": None,
        "a": None,
        "b": None,
        "num_classes": num_classes,
    }
    if isinstance(model, Temperature):
        doc["alpha"] = model.alpha
    elif isinstance(model, ClassWiseTemperature):
        doc["alpha0"] = model.alpha0
        doc["alphas"] = model.alphas.tolist()
        doc["gamma"] = "inf" if math.isinf(model.gamma) else model.gamma
    elif isinstance(model, Vector):
        doc["a"] = model.scale.tolist()
        doc["b"] = model.bias.tolist()
    return doc


def model_from_dict(doc: dict) -> tuple[CalibrationModel, int]:
    """Parse a model document back into a (model, num_classes) pair.

    Model invariants are re-validated by the constructors.
    """
    try:
        method = doc["method"]
        num_classes = int(doc["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModelError(f"malformed model document: {exc}") from exc
    if method == "none":
        return Identity(), num_classes
    if method == "ts":
        return Temperature(float(doc["alpha"])), num_classes
    if method == "cts":
        gamma = doc["gamma"]
        gamma = math.inf if gamma == "inf" else float(gamma)
        model = ClassWiseTemperature(float(doc["alpha0"]), np.asarray(doc["alphas"], dtype=np.float64), gamma)
        if model.num_classes != num_classes:
            raise InvalidModelError("alphas length disagrees with num_classes")
        return model, num_classes
    if method == "vs":
        model = Vector(np.asarray(doc["a"], dtype=np.float64), np.asarray(doc["b"], dtype=np.float64))
        if model.num_classes != num_classes:
            raise InvalidModelError("scale length disagrees with num_classes")
        return model, num_classes
    raise InvalidModelError(f"unknown method {method!r}")
