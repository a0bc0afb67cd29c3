"""Objective assembly: constraint functionals, gradients, Hessian blocks.

The full objective is L = L_C + lambda * L_F, where L_C is a cost from
:mod:`baryflow.costs` and L_F tests whether the mapped points depend on the
covariate.  Two constraint modes exist:

* ``kde`` scores the discrepancy between conditional kernel density
  estimates of the mapped points: L_F = sum_{i,l} K_a(y_l, y_i) C[i, l].
  Its descent direction differentiates the kernel only through the
  evaluation slot, holding the kernel centers at the current positions;
  ``centers`` can be supplied separately to evaluate off-center values.
* ``features`` penalizes disagreement of conditional feature averages
  through the quadratic forms f_l' C f_l.  Gradients use the symmetric form
  2 * (C f_l)_i * f_l'(y_i), which is the exact derivative for symmetric C
  (the two one-sided terms coincide; couplings built by this package are
  always symmetric).

Hessian blocks are the Jacobian of the returned gradient field, so they
include the cross terms that arise from the kernel centers (or feature
averages) tracking the points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .costs import cost_parts
from .couplings import kernel_cross_matrix
from .errors import InvalidInputError, NumericError

__all__ = [
    "Monomial",
    "ObjectiveEval",
    "TestFunctionSpec",
    "constraint_parts",
    "evaluate",
    "lf_feature_terms",
    "lf_features",
    "lf_kde",
    "monomial_features",
    "objective_value",
]


@dataclass(frozen=True)
class Monomial:
    """Monomial feature prod_j y_j**e_j with analytic gradient and Hessian."""

    exponents: tuple

    def _partial(self, y, skip):
        out = np.ones(y.shape[0])
        for j, e in enumerate(self.exponents):
            if j in skip or e == 0:
                continue
            out = out * y[:, j] ** e
        return out

    def value(self, y):
        return self._partial(y, skip=())

    def grad(self, y):
        n, d = y.shape
        out = np.zeros((n, d))
        for j, e in enumerate(self.exponents):
            if e == 0:
                continue
            rest = self._partial(y, skip=(j,))
            out[:, j] = e * y[:, j] ** (e - 1) * rest
        return out

    def hess(self, y):
        n, d = y.shape
        out = np.zeros((n, d, d))
        for j1, e1 in enumerate(self.exponents):
            if e1 == 0:
                continue
            if e1 >= 2:
                rest = self._partial(y, skip=(j1,))
                out[:, j1, j1] = e1 * (e1 - 1) * y[:, j1] ** (e1 - 2) * rest
            for j2 in range(j1 + 1, d):
                e2 = self.exponents[j2]
                if e2 == 0:
                    continue
                rest = self._partial(y, skip=(j1, j2))
                mixed = e1 * e2 * y[:, j1] ** (e1 - 1) * y[:, j2] ** (e2 - 1) * rest
                out[:, j1, j2] = mixed
                out[:, j2, j1] = mixed
        return out


def monomial_features(dim, degree):
    """All monomials of total degree 1..degree in ``dim`` variables.

    Degree 1 yields the coordinates; degree 2 adds squares and cross terms,
    ordered by total degree then lexicographically (y1, y2, y1^2, y1*y2, ...).
    """
    if dim < 1 or degree < 1:
        raise InvalidInputError("dim and degree must be >= 1")
    feats = []
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            exps = [0] * dim
            for j in combo:
                exps[j] += 1
            feats.append(Monomial(exponents=tuple(exps)))
    return tuple(feats)


@dataclass(frozen=True)
class TestFunctionSpec:
    """Which constraint functional to use and its parameters.

    ``mode`` is "kde" (needs ``bandwidth_a``) or "features" (needs a
    non-empty tuple of feature objects exposing value/grad/hess).  Optional
    ``feature_weights`` reweight the per-feature terms; uniform when None.
    """

    mode: str
    bandwidth_a: float | None = None
    features: tuple = ()
    feature_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.mode == "kde":
            if self.bandwidth_a is None or not np.isfinite(self.bandwidth_a) or self.bandwidth_a <= 0:
                raise InvalidInputError("kde mode needs a positive bandwidth_a")
        elif self.mode == "features":
            if len(self.features) == 0:
                raise InvalidInputError("features mode needs at least one feature")
            if self.feature_weights is not None:
                w = np.asarray(self.feature_weights, dtype=float)
                if w.shape != (len(self.features),) or np.any(w < 0):
                    raise InvalidInputError("feature_weights must be nonnegative, one per feature")
                object.__setattr__(self, "feature_weights", w)
        else:
            raise InvalidInputError(f"unknown test-function mode {self.mode!r}")

    @classmethod
    def kde(cls, bandwidth_a):
        return cls(mode="kde", bandwidth_a=float(bandwidth_a))

    @classmethod
    def polynomial(cls, dim, degree, feature_weights=None):
        return cls(mode="features", features=monomial_features(dim, degree),
                   feature_weights=feature_weights)


def lf_kde(y, C, bandwidth, centers=None):
    """Kernel constraint value sum_{i,l} K_a(y_l, centers_i) * C[i, l].

    ``centers`` defaults to ``y``.  Nonnegative (up to roundoff) whenever C
    comes from a positive semidefinite bi-stochastic coupling.
    """
    y = np.asarray(y, dtype=float)
    centers = y if centers is None else np.asarray(centers, dtype=float)
    K = kernel_cross_matrix(y, centers, bandwidth)  # [l, i] = K(y_l, centers_i)
    return float(np.sum(K * C.T))


def lf_feature_terms(y, C, features):
    """Per-feature quadratic forms f_l' C f_l as a vector."""
    y = np.asarray(y, dtype=float)
    C = np.asarray(C, dtype=float)
    vals = np.stack([f.value(y) for f in features])  # (m, N)
    cv = vals @ C.T  # row l is C @ f_l
    return np.einsum("li,li->l", vals, cv)


def lf_features(y, C, features, weights=None):
    """Feature constraint value sum_l w_l * f_l' C f_l (uniform w by default)."""
    terms = lf_feature_terms(y, C, features)
    if weights is None:
        return float(terms.sum())
    return float(np.asarray(weights, dtype=float) @ terms)


def _kde_parts(y, C, bandwidth, centers, want_hessian):
    a2 = bandwidth**2
    K = kernel_cross_matrix(y, centers, bandwidth)
    M = K * C.T  # M[j, i] = K(y_j, centers_i) * C[i, j]
    value = float(M.sum())
    s = M.sum(axis=1)
    grad = -(s[:, None] * y - M @ centers) / a2
    hess_diag = hess_cross = None
    if want_hessian:
        d = y.shape[1]
        diffs = y[:, None, :] - centers[None, :, :]
        outer = np.einsum("ji,jia,jib->jiab", M, diffs, diffs)
        hess_diag = outer.sum(axis=1) / a2**2 - s[:, None, None] * np.eye(d) / a2
        hess_cross = M[:, :, None, None] * np.eye(d) / a2 - outer / a2**2
    return value, grad, hess_diag, hess_cross


def _features_parts(y, C, features, weights, want_hessian):
    m = len(features)
    w = np.ones(m) if weights is None else weights
    vals = np.stack([f.value(y) for f in features])
    grads = np.stack([f.grad(y) for f in features])
    cv = vals @ C.T
    value = float(w @ np.einsum("li,li->l", vals, cv))
    grad = 2.0 * np.einsum("l,li,lia->ia", w, cv, grads)
    hess_diag = hess_cross = None
    if want_hessian:
        hesses = np.stack([f.hess(y) for f in features])
        hess_diag = 2.0 * np.einsum("l,li,liab->iab", w, cv, hesses)
        hess_cross = 2.0 * np.einsum("l,lia,lkb->ikab", w, grads, grads) * C[:, :, None, None]
    return value, grad, hess_diag, hess_cross


def constraint_parts(y, C, tf_spec, centers=None, want_hessian=False):
    """Constraint value, gradient and optional Hessian blocks.

    For kde mode the gradient differentiates only the evaluation slot of the
    kernel (centers held fixed at ``centers``, default ``y``); the Hessian
    blocks are the Jacobian of that gradient field once the centers track
    the points again, split into diagonal (N, d, d) and cross (N, N, d, d)
    parts.
    """
    y = np.asarray(y, dtype=float)
    C = np.asarray(C, dtype=float)
    if y.ndim != 2 or C.shape != (y.shape[0], y.shape[0]):
        raise InvalidInputError("y must be N x d with a matching N x N centering matrix")
    if tf_spec.mode == "kde":
        centers = y if centers is None else np.asarray(centers, dtype=float)
        return _kde_parts(y, C, tf_spec.bandwidth_a, centers, want_hessian)
    return _features_parts(y, C, tf_spec.features, tf_spec.feature_weights, want_hessian)


@dataclass
class ObjectiveEval:
    """One objective evaluation: totals, split parts, derivative blocks.

    ``grad``/``hess_*`` combine cost and constraint at the ``lam`` supplied
    at evaluation time; the ``*_cost`` / ``*_constraint`` parts allow
    recombination at a different multiplier without re-evaluating.
    """

    L: float
    L_C: float
    L_F: float
    lam: float
    grad: np.ndarray
    grad_cost: np.ndarray
    grad_constraint: np.ndarray
    hess_diag: np.ndarray | None = None
    hess_cross: np.ndarray | None = None
    hess_diag_cost: np.ndarray | None = None
    hess_cross_cost: np.ndarray | None = None
    hess_diag_constraint: np.ndarray | None = None
    hess_cross_constraint: np.ndarray | None = None

    def combined_hessian(self, lam):
        """(diag, cross) blocks of the full Hessian at multiplier ``lam``."""
        if self.hess_diag_cost is None:
            raise InvalidInputError("evaluation was performed without Hessians")
        diag = self.hess_diag_cost + lam * self.hess_diag_constraint
        cross = lam * self.hess_cross_constraint
        if self.hess_cross_cost is not None:
            cross = cross + self.hess_cross_cost
        return diag, cross


def evaluate(x, y, lam, cost_model, C, tf_spec, Z=None, want_hessian=False):
    """Evaluate L = L_C + lam * L_F with gradients (and Hessians on request).

    Kernel centers sit at the current ``y``.  Raises NumericError when a
    non-finite value or gradient shows up.
    """
    if not np.isfinite(lam) or lam < 0:
        raise InvalidInputError("lam must be a nonnegative finite number")
    cv, cg, chd, chc = cost_parts(cost_model, x, y, Z, want_hessian=want_hessian)
    fv, fg, fhd, fhc = constraint_parts(y, C, tf_spec, want_hessian=want_hessian)
    total = cv + lam * fv
    grad = cg + lam * fg
    if not (np.isfinite(total) and np.isfinite(grad).all()):
        raise NumericError("non-finite objective evaluation")
    ev = ObjectiveEval(
        L=total, L_C=cv, L_F=fv, lam=lam,
        grad=grad, grad_cost=cg, grad_constraint=fg,
        hess_diag_cost=chd, hess_cross_cost=chc,
        hess_diag_constraint=fhd, hess_cross_constraint=fhc,
    )
    if want_hessian:
        ev.hess_diag, ev.hess_cross = ev.combined_hessian(lam)
    return ev


def objective_value(x, y, lam, cost_model, C, tf_spec, Z=None, centers=None):
    """Value-only evaluation ``(L, L_C, L_F)``, with optional off-center kernels.

    ``centers`` only affects kde mode; it is what the descent check uses to
    compare the objective before and after a step with the kernel centers
    pinned at the stepped positions.
    """
    cv = cost_parts(cost_model, x, y, Z)[0]
    if tf_spec.mode == "kde":
        fv = lf_kde(y, C, tf_spec.bandwidth_a, centers=centers)
    else:
        fv = lf_features(y, C, tf_spec.features, tf_spec.feature_weights)
    return cv + lam * fv, cv, fv
