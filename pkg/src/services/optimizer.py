"""Seeded Adam and gradient-ascent loops, Newton polishing and warm-started refits."""

import time

import numpy as np
import scipy.linalg

from src.models.dataset import Dataset
from src.models.errors import DimensionMismatch, NonFiniteObjective, NotStationary
from src.models.network import ParamVector
from src.models.objective import LogJointSpec
from src.models.optimizer import (
    REFIT_TOL,
    STATIONARY_TOL,
    AdamMethod,
    AdamState,
    FitResult,
    FullBatchGA,
    OptimConfig,
    PreconditionedAscent,
)
from src.models.precision import PrecisionKind
from src.services.laplace import build_precision
from src.services.linalg import solve_spd
from src.services.objective import hvp, loss_grad
from src.utils.event_store import EventStore
from src.utils.logger import StructuredLogger
from src.utils.rng import make_rng
from src.utils.trace_context import get_current_trace

RNG_STREAM_SAMPLING = 2
RNG_STREAM_POWER = 3
POLISH_MAX_ITERS = 100
MAX_HALVINGS = 40
ASCENT_SLACK = 1e-12

logger = StructuredLogger("Optimizer")


class Adam:
    """Adam in ascent form: the returned update is added to the parameters."""

    def __init__(self, method: AdamMethod, k: int, state: AdamState | None = None):
        self.method = method
        self.state = state.copy() if state is not None else AdamState(np.zeros(k), np.zeros(k))

    def step(self, grad: np.ndarray, factor: float = 1.0) -> np.ndarray:
        s = self.state
        s.t += 1
        s.m = self.method.beta1 * s.m + (1.0 - self.method.beta1) * grad
        s.v = self.method.beta2 * s.v + (1.0 - self.method.beta2) * grad * grad
        m_hat = s.m / (1.0 - self.method.beta1**s.t)
        v_hat = s.v / (1.0 - self.method.beta2**s.t)
        return factor * self.method.lr * m_hat / (np.sqrt(v_hat) + self.method.eps)


class GradientAscent:
    def __init__(self, method: FullBatchGA):
        self.method = method
        self.state = None

    def step(self, grad: np.ndarray, factor: float = 1.0) -> np.ndarray:
        return factor * self.method.lr * grad


class PreconditionedStep:
    def __init__(self, method: PreconditionedAscent):
        self.method = method
        self.state = None

    def step(self, grad: np.ndarray, factor: float = 1.0) -> np.ndarray:
        return factor * scipy.linalg.cho_solve((self.method.cholesky_factor, True), grad)


class BatchSampler:
    """Seeded example indices: uniform with replacement, or reshuffled epochs."""

    def __init__(self, n: int, batch_size: int, mode: str, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.mode = mode
        self.rng = make_rng(seed, RNG_STREAM_SAMPLING)
        self._order = np.empty(0, dtype=int)
        self._cursor = 0

    def next(self) -> np.ndarray:
        if self.mode == "with_replacement":
            return self.rng.integers(0, self.n, size=self.batch_size)
        out = []
        needed = self.batch_size
        while needed > 0:
            if self._cursor >= self._order.shape[0]:
                self._order = self.rng.permutation(self.n)
                self._cursor = 0
            take = self._order[self._cursor : self._cursor + needed]
            self._cursor += take.shape[0]
            needed -= take.shape[0]
            out.append(take)
        return np.concatenate(out)


def _make_optimizer(cfg: OptimConfig, k: int, state: AdamState | None):
    if isinstance(cfg.method, AdamMethod):
        return Adam(cfg.method, k, state)
    if isinstance(cfg.method, PreconditionedAscent):
        if cfg.method.cholesky_factor.shape[0] != k:
            raise DimensionMismatch(
                f"Preconditioner has dim {cfg.method.cholesky_factor.shape[0]}, parameters {k}"
            )
        return PreconditionedStep(cfg.method)
    return GradientAscent(cfg.method)


def _record_fit(event_store: EventStore | None, message: str, context: dict, duration_ms: float) -> None:
    if event_store is None:
        return
    event_store.add_event(
        trace_id=get_current_trace() or "untraced",
        event_type="fit_complete",
        component="Optimizer",
        message=message,
        context=context,
        duration_ms=duration_ms,
    )


def fit(
    theta0: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    cfg: OptimConfig,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> FitResult:
    """Maximize the log joint from theta0.

    Stops once an applied update has ∞-norm below cfg.convergence_tol or after
    cfg.max_steps. The trace holds the full-data objective estimate of every step.
    """
    start = time.monotonic()
    n = len(dataset)
    full_batch = (
        isinstance(cfg.method, (FullBatchGA, PreconditionedAscent))
        or cfg.batch_size is None
        or cfg.batch_size >= n
    )
    sampler = None if full_batch else BatchSampler(n, cfg.batch_size, cfg.sampling, cfg.seed)
    optimizer = _make_optimizer(cfg, theta0.arch.param_count, state)

    values = theta0.values.copy()
    trace: list[float] = []
    converged = False
    steps = 0
    for step in range(cfg.max_steps):
        batch = None if sampler is None else sampler.next()
        value, grad = loss_grad(theta0.replace(values), spec, dataset, batch)
        scale = 1.0 if batch is None else n / batch.shape[0]
        value, grad = scale * value, scale * grad
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise NonFiniteObjective(
                f"Objective diverged at step {step}; lower the learning rate", step=step
            )
        trace.append(float(value))
        update = optimizer.step(grad, cfg.schedule.factor(step))
        values = values + update
        if not np.all(np.isfinite(values)):
            raise NonFiniteObjective(f"Parameters diverged at step {step}", step=step)
        steps = step + 1
        if float(np.max(np.abs(update))) < cfg.convergence_tol:
            converged = True
            break

    duration_ms = (time.monotonic() - start) * 1000
    context = {
        "steps": steps,
        "converged": converged,
        "objective": trace[-1] if trace else None,
        "params": theta0.arch.param_count,
        "n": n,
        "regularizer": type(spec.regularizer).__name__,
    }
    if converged:
        logger.debug("Fit converged", {**context, "duration_ms": duration_ms})
    else:
        logger.warning("Fit reached max_steps without converging", {**context, "duration_ms": duration_ms})
    _record_fit(event_store, "Fit finished", context, duration_ms)
    return FitResult(
        params=theta0.replace(values),
        trace=trace,
        steps=steps,
        converged=converged,
        state=optimizer.state.copy() if isinstance(optimizer, Adam) else None,
    )


def gradient_norm(theta: ParamVector, spec: LogJointSpec, dataset: Dataset) -> float:
    """‖∇ log joint‖∞ over the full data."""
    _, grad = loss_grad(theta, spec, dataset)
    return float(np.max(np.abs(grad)))


def require_stationary(
    theta: ParamVector, spec: LogJointSpec, dataset: Dataset, tol: float | None
) -> float | None:
    """Gradient ∞-norm at theta, raising NotStationary above tol. None skips the check."""
    if tol is None:
        return None
    grad_inf = gradient_norm(theta, spec, dataset)
    if grad_inf > tol:
        raise NotStationary(
            f"Warm start has gradient ∞-norm {grad_inf:.3e} above {tol:.1e}; polish the MAP first",
            grad_inf=grad_inf,
            tol=tol,
        )
    return grad_inf


def _backtrack(
    theta: ParamVector, spec: LogJointSpec, dataset: Dataset, value: float, direction: np.ndarray
) -> tuple[ParamVector, float, np.ndarray] | None:
    """Halve the step along direction until the objective does not drop beyond rounding."""
    slack = ASCENT_SLACK * max(1.0, abs(value))
    t = 1.0
    for _ in range(MAX_HALVINGS):
        candidate = theta.replace(theta.values + t * direction)
        cand_value, cand_grad = loss_grad(candidate, spec, dataset)
        if np.isfinite(cand_value) and np.all(np.isfinite(cand_grad)) and cand_value >= value - slack:
            return candidate, float(cand_value), cand_grad
        t *= 0.5
    return None


def newton_polish(
    theta: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    kind: PrecisionKind = "full_exact",
    tol: float = STATIONARY_TOL,
    max_iters: int = POLISH_MAX_ITERS,
    event_store: EventStore | None = None,
) -> FitResult:
    """Damped Newton ascent from theta to a stationary point of the log joint.

    Each iteration solves P·Δ = ∇ with P the Laplace precision of the given kind
    at the current parameters (full_exact adds doubling jitter while the Hessian
    is indefinite; full_ggn is always positive definite), then halves the step
    until the objective does not drop. Converged means ‖∇‖∞ ≤ tol, and the result
    carries the final gradient ∞-norm.
    """
    if kind not in ("full_exact", "full_ggn"):
        raise ValueError(f"Newton polishing needs a full precision, got {kind}")
    start = time.monotonic()
    current = theta
    value, grad = loss_grad(current, spec, dataset)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise NonFiniteObjective("Objective is not finite at the polish start", step=0)
    trace = [float(value)]
    steps = 0
    stalled = False
    for _ in range(max_iters):
        if float(np.max(np.abs(grad))) <= tol:
            break
        precision = build_precision(current, spec, dataset, kind)
        direction = solve_spd(precision.payload, grad, lower=precision.cholesky_factor)
        accepted = _backtrack(current, spec, dataset, value, direction)
        if accepted is None:
            stalled = True
            break
        current, value, grad = accepted
        trace.append(value)
        steps += 1

    grad_inf = float(np.max(np.abs(grad)))
    converged = grad_inf <= tol
    duration_ms = (time.monotonic() - start) * 1000
    context = {
        "steps": steps,
        "converged": converged,
        "grad_inf": grad_inf,
        "curvature": kind,
        "objective": value,
        "params": theta.arch.param_count,
        "n": len(dataset),
    }
    if converged:
        logger.debug("Newton polish reached stationarity", {**context, "duration_ms": duration_ms})
    else:
        logger.warning(
            "Newton polish stopped short of stationarity",
            {**context, "stalled": stalled, "tol": tol, "duration_ms": duration_ms},
        )
    _record_fit(event_store, "Newton polish finished", context, duration_ms)
    return FitResult(
        params=current, trace=trace, steps=steps, converged=converged, grad_inf=grad_inf
    )


def warm_start_fit(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    cfg: OptimConfig,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> FitResult:
    """Refit a regularized objective starting at the MAP with tolerance tightened to 1e-9.

    Passing the Adam state of the MAP fit continues its moment estimates instead
    of restarting them. A zero λ returns the MAP untouched. With
    cfg.stationarity_tol set, a MAP whose unregularized gradient exceeds it raises
    NotStationary before any refit step.
    """
    if spec.regularizer.lam == 0:
        return FitResult(params=theta_map, trace=[], steps=0, converged=True, state=state)
    require_stationary(theta_map, spec.without_regularizer(), dataset, cfg.stationarity_tol)
    refit_cfg = cfg.replace(convergence_tol=min(cfg.convergence_tol, REFIT_TOL))
    return fit(theta_map, spec, dataset, refit_cfg, state=state, event_store=event_store)


def max_curvature(
    theta: ParamVector, spec: LogJointSpec, dataset: Dataset, iters: int = 50, seed: int = 0
) -> float:
    """Largest |eigenvalue| of the log-joint Hessian by power iteration on Hessian-vector products.

    1/max_curvature is a safe full-batch gradient-ascent step near a maximum.
    """
    rng = make_rng(seed, RNG_STREAM_POWER)
    v = rng.normal(size=theta.arch.param_count)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iters):
        w = hvp(theta, spec, dataset, v)
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            return 0.0
        v = w / estimate
    return estimate
