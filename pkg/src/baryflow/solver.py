"""Penalty-method gradient flow driving mapped points to the barycenter.

One solve owns its state exclusively.  The loop per iteration: grow the
learning rate, evaluate the objective, raise the multiplier to keep the
descent direction of the full objective a descent direction for the
constraint, step (explicit or implicit), and backtrack the learning rate
until the stepped objective does not increase with the kernel centers
evaluated at the stepped positions on both sides.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from .couplings import build_couplings, median_heuristic_bandwidth
from .errors import InvalidInputError, NumericError
from .objective import TestFunctionSpec, constraint_parts, evaluate, objective_value

__all__ = [
    "BarycenterResult",
    "FlowState",
    "HistoryRecord",
    "SolverConfig",
    "descent_check",
    "lambda_update",
    "precondition_mean_shift",
    "solve",
    "step_explicit",
    "step_implicit",
]

_GRAD_SQ_FLOOR = 1e-30
_RCOND_FLOOR = 1e-12  # condition estimate above 1e12 falls back to explicit


def as_points(x):
    """Coerce to a finite float N x d array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInputError("points must form a non-empty N x d array")
    if not np.isfinite(x).all():
        raise InvalidInputError("points must be finite")
    return x


@dataclass(frozen=True)
class SolverConfig:
    """Tunable knobs of the penalty flow; defaults are desk-scale safe.

    ``lambda0="auto"`` estimates 1/spectral-radius of the constraint Hessian
    at the starting positions (power iteration, seeded).  ``bandwidth_a``
    applies to kde mode and resolves "auto" with the median heuristic on the
    starting positions.  ``feature_degree`` applies to features mode.
    """

    problem: str = "kde"
    update: str = "explicit"
    eta0: float = 0.1
    niter: int = 2000
    lambda0: float | str = "auto"
    lambda_max: float = 1e6
    omega_alpha: float = 0.5
    tol_y: float = 1e-6
    tol_lf: float = 1e-6
    precondition: bool = False
    bandwidth_a: float | str = "auto"
    feature_degree: int = 2
    seed: int = 0
    max_halvings: int = 60

    def __post_init__(self):
        if self.problem not in ("kde", "features"):
            raise InvalidInputError("problem must be 'kde' or 'features'")
        if self.update not in ("explicit", "implicit"):
            raise InvalidInputError("update must be 'explicit' or 'implicit'")
        if not (0.0 < self.omega_alpha < 1.0):
            raise InvalidInputError("omega_alpha must lie in (0, 1)")
        if self.eta0 <= 0 or self.niter < 1 or self.max_halvings < 0:
            raise InvalidInputError("eta0 must be positive and niter >= 1")
        if self.tol_y <= 0 or self.tol_lf <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.lambda0 != "auto":
            if not np.isfinite(self.lambda0) or self.lambda0 <= 0:
                raise InvalidInputError("lambda0 must be positive or 'auto'")
            if self.lambda_max < self.lambda0:
                raise InvalidInputError("lambda_max must be >= lambda0")
        if self.lambda_max <= 0:
            raise InvalidInputError("lambda_max must be positive")
        if self.bandwidth_a != "auto" and (
            not np.isfinite(self.bandwidth_a) or self.bandwidth_a <= 0
        ):
            raise InvalidInputError("bandwidth_a must be positive or 'auto'")
        if self.feature_degree < 1:
            raise InvalidInputError("feature_degree must be >= 1")


@dataclass
class HistoryRecord:
    """Per-iteration diagnostics, recorded after the accepted step."""

    n: int
    L: float
    L_C: float
    L_F: float
    lam: float
    eta: float
    eta_halvings: int
    descent_lhs: float
    descent_rhs: float
    lambda_slack: float
    lambda_clamped: bool
    lambda_skipped: bool
    implicit_fallback: bool


@dataclass
class FlowState:
    """Mutable state of one flow: positions, multiplier, rate, history."""

    y: np.ndarray
    lam: float
    eta: float
    n: int
    history: list = field(default_factory=list)


@dataclass
class BarycenterResult:
    """Final positions plus provenance of one solve.

    ``x_original`` is always the unshifted input, so costs of the composed
    map can be recomputed against it; ``precondition_shift`` is the rigid
    per-point translation applied before the flow (None when preconditioning
    was off).
    """

    y_final: np.ndarray
    converged: bool
    iterations: int
    history: list
    precondition_shift: np.ndarray | None
    x_original: np.ndarray
    lambda0: float
    bandwidth_a: float | None

    @property
    def final_L_C(self):
        return self.history[-1].L_C if self.history else None

    @property
    def final_L_F(self):
        return self.history[-1].L_F if self.history else None

    @property
    def final_lambda(self):
        return self.history[-1].lam if self.history else self.lambda0


def precondition_mean_shift(x, covariates, Z):
    """Rigid per-point translation matching all conditional means.

    Categorical covariates use exact class means; continuous ones use the
    coupling-weighted conditional mean xbar(z_k) = sum_i Z[i, k] x_i.
    Returns ``(w, shift)`` with ``w = x + shift``.
    """
    x = as_points(x)
    if covariates.kind == "categorical":
        labels = np.asarray(covariates.labels)
        cond = np.empty_like(x)
        for value in np.unique(labels):
            idx = labels == value
            cond[idx] = x[idx].mean(axis=0)
    else:
        cond = np.asarray(Z, dtype=float).T @ x
    shift = x.mean(axis=0) - cond
    return x + shift, shift


def lambda_update(lam, grad_cost, grad_constraint, omega_alpha, lambda_max):
    """Raise the multiplier so descent on L also descends the constraint.

    The floor is lambda_min = alpha - <gC, gF>/<gF, gF> with alpha =
    omega_alpha * lam, clamped so the multiplier never decreases and never
    exceeds ``lambda_max``.  When the constraint gradient is numerically
    zero the update is skipped (constraint locally satisfied).

    Returns ``(new_lam, clamped_at_max, skipped, slack)`` where ``slack`` is
    the achieved margin <gC + new_lam*gF, gF> - alpha*<gF, gF>.
    """
    gf_sq = float(np.sum(grad_constraint * grad_constraint))
    alpha = omega_alpha * lam
    if gf_sq < _GRAD_SQ_FLOOR:
        return lam, False, True, 0.0
    inner = float(np.sum(grad_cost * grad_constraint))
    lam_min = alpha - inner / gf_sq
    clamped = False
    if lam < lam_min <= lambda_max:
        new_lam = lam_min
    elif lam_min > lambda_max:
        new_lam = lambda_max
        clamped = True
    else:
        new_lam = lam
    slack = inner + new_lam * gf_sq - alpha * gf_sq
    return new_lam, clamped, False, slack


def step_explicit(y, grad, eta):
    """Plain gradient step y - eta * grad."""
    return y - eta * grad


def step_implicit(y, grad, hess_diag, hess_cross, eta):
    """Resolvent step: solve (I + eta*H) delta = eta*grad, H from the blocks.

    Falls back to the explicit step when the system is singular or its
    condition estimate exceeds 1e12.  Returns ``(candidate, used_fallback)``.
    """
    n, d = y.shape
    if hess_cross is not None:
        H = hess_cross.copy()
    else:
        H = np.zeros((n, n, d, d))
    idx = np.arange(n)
    H[idx, idx] += hess_diag
    A = np.eye(n * d) + eta * H.transpose(0, 2, 1, 3).reshape(n * d, n * d)
    anorm = np.linalg.norm(A, 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(A)
        rcond, info = dgecon(lu, anorm, norm="1")
    except np.linalg.LinAlgError:
        return step_explicit(y, grad, eta), True
    if info != 0 or not np.isfinite(rcond) or rcond < _RCOND_FLOOR:
        return step_explicit(y, grad, eta), True
    delta = lu_solve((lu, piv), eta * grad.ravel())
    return y - delta.reshape(n, d), False


def _descent_sides(x, y_old, y_new, lam, cost_model, C, tf_spec, Z=None):
    """Objective on both sides of the step, kernel centers at the new points."""
    lhs = objective_value(x, y_new, lam, cost_model, C, tf_spec, Z, centers=y_new)
    rhs = objective_value(x, y_old, lam, cost_model, C, tf_spec, Z, centers=y_new)
    return lhs, rhs


def descent_check(x, y_old, y_new, lam, cost_model, C, tf_spec, Z=None):
    """True when stepping does not increase L, centers at y_new on both sides."""
    (lhs, _, _), (rhs, _, _) = _descent_sides(x, y_old, y_new, lam, cost_model, C, tf_spec, Z)
    return lhs <= rhs


def _auto_lambda0(y, C, tf_spec, lambda_max, seed, n_steps=50):
    """1 / spectral-radius estimate of the constraint Hessian at the start.

    Power iteration on the full (diagonal + cross) constraint Hessian; when
    the estimate is nonpositive (constraint locally flat) returns 1.
    """
    _, _, hd, hc = constraint_parts(y, C, tf_spec, want_hessian=True)
    n, d = y.shape
    idx = np.arange(n)
    H = hc.copy()
    H[idx, idx] += hd

    def matvec(v):
        return np.einsum("ikab,kb->ia", H, v)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, d))
    norm = np.linalg.norm(v)
    if norm == 0:
        return 1.0
    v /= norm
    estimate = 0.0
    for _ in range(n_steps):
        w = matvec(v)
        estimate = np.linalg.norm(w)
        if estimate < 1e-30:
            return 1.0
        v = w / estimate
    if estimate <= 1e-12:
        return 1.0
    return min(1.0 / estimate, lambda_max)


def _resolve_tf_spec(config, y0):
    if config.problem == "kde":
        a = config.bandwidth_a
        if a == "auto":
            a = median_heuristic_bandwidth(y0)
        return TestFunctionSpec.kde(a), float(a)
    return TestFunctionSpec.polynomial(y0.shape[1], config.feature_degree), None


def solve(x, covariates, cost_model, config=None):
    """Run the penalty flow; returns a :class:`BarycenterResult`.

    Builds the couplings once, optionally preconditions with the rigid
    mean-matching shift (in which case every cost except the canonical
    squared-Euclidean one keeps being evaluated against the original
    points), and iterates until the positions stall with a satisfied
    constraint or ``config.niter`` is reached.
    """
    config = config or SolverConfig()
    x = as_points(x)
    n, d = x.shape
    if covariates.n != n:
        raise InvalidInputError("covariates and points disagree on N")

    couplings = build_couplings(covariates)
    Z, C = couplings.Z, couplings.C
    Z_cost = Z if cost_model.requires_pairing else None

    if config.precondition:
        w, shift = precondition_mean_shift(x, covariates, Z)
        y = w.copy()
        x_cost = w if cost_model.family == "sq_euclidean" else x
    else:
        y = x.copy()
        x_cost = x
        shift = None

    tf_spec, bandwidth_a = _resolve_tf_spec(config, y)
    if config.lambda0 == "auto":
        lam = _auto_lambda0(y, C, tf_spec, config.lambda_max, config.seed)
    else:
        lam = float(config.lambda0)

    lambda0 = lam
    state = FlowState(y=y, lam=lam, eta=config.eta0, n=0)
    want_hessian = config.update == "implicit"
    converged = False

    for it in range(config.niter):
        state.n = it
        state.eta = min(2.01 * state.eta, config.eta0)
        try:
            ev = evaluate(x_cost, state.y, state.lam, cost_model, C, tf_spec,
                          Z=Z_cost, want_hessian=want_hessian)
        except NumericError as err:
            raise NumericError(str(err), iteration=it, state=state) from err

        new_lam, clamped, skipped, slack = lambda_update(
            state.lam, ev.grad_cost, ev.grad_constraint,
            config.omega_alpha, config.lambda_max,
        )
        state.lam = new_lam
        grad = ev.grad_cost + new_lam * ev.grad_constraint

        accepted = False
        halvings = 0
        fallback = False
        candidate = state.y
        lhs = rhs = (np.nan, np.nan, np.nan)
        while halvings <= config.max_halvings:
            if config.update == "implicit":
                hd, hc = ev.combined_hessian(new_lam)
                candidate, fallback = step_implicit(state.y, grad, hd, hc, state.eta)
            else:
                candidate = step_explicit(state.y, grad, state.eta)
            try:
                lhs, rhs = _descent_sides(x_cost, state.y, candidate, new_lam,
                                          cost_model, C, tf_spec, Z_cost)
                ok = np.isfinite(lhs[0]) and lhs[0] <= rhs[0]
            except InvalidInputError:
                ok = False  # candidate left the cost's domain; treat as rejected
            if ok:
                accepted = True
                break
            state.eta *= 0.5
            halvings += 1

        if not accepted:
            break

        rel_change = float(np.abs(candidate - state.y).max()) / max(
            1.0, float(np.abs(state.y).max())
        )
        state.y = candidate
        if not np.isfinite(state.y).all():
            raise NumericError("positions became non-finite", iteration=it, state=state)
        L_new, L_C_new, L_F_new = lhs
        state.history.append(HistoryRecord(
            n=it, L=L_new, L_C=L_C_new, L_F=L_F_new,
            lam=new_lam, eta=state.eta, eta_halvings=halvings,
            descent_lhs=lhs[0], descent_rhs=rhs[0],
            lambda_slack=slack, lambda_clamped=clamped, lambda_skipped=skipped,
            implicit_fallback=fallback,
        ))
        if rel_change < config.tol_y and L_F_new < config.tol_lf:
            converged = True
            break

    return BarycenterResult(
        y_final=state.y,
        converged=converged,
        iterations=len(state.history),
        history=state.history,
        precondition_shift=shift,
        x_original=x,
        lambda0=lambda0,
        bandwidth_a=bandwidth_a,
    )
