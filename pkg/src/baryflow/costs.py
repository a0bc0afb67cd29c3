"""Cost families: value, per-point gradient, per-point Hessian blocks.

Pairwise families (squared Euclidean, smoothed p-norm, great-circle on the
unit sphere) average a per-sample cost c(x_i, y_i) and produce only diagonal
d x d Hessian blocks.  The distortion family couples sample pairs through the
coupling matrix Z, penalizing deviation of pairwise distance ratios from one,
and therefore also produces cross blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError

__all__ = [
    "CostModel",
    "cost_grad",
    "cost_hessian_blocks",
    "cost_parts",
    "cost_value",
    "parse_cost_spec",
]

_FAMILIES = ("sq_euclidean", "p_norm", "geodesic_sphere", "distortion")

# Great-circle handling: the arcsin argument is clipped below one to keep the
# derivative finite, and gradients/Hessians are defined as zero at exact
# antipodes (a measure-zero configuration).
_ANTIPODAL_CLIP = 1.0 - 1e-12
_SERIES_CUTOFF = 1e-6
_LATITUDE_SLACK = 1e-9


@dataclass(frozen=True)
class CostModel:
    """Cost specification; ``requires_pairing`` families need Z at evaluation.

    Families: ``sq_euclidean`` (canonical 0.5||x-y||^2), ``p_norm`` (smoothed
    coordinate-wise |t|^p with |t| ~ sqrt(t^2+eps_abs)-sqrt(eps_abs)),
    ``geodesic_sphere`` (squared great-circle distance of (longitude,
    latitude) pairs; set ``squared_geodesic=False`` for the plain distance),
    and ``distortion`` (pairwise-distance-ratio penalty plus a small
    anchoring term of weight ``omega``).
    """

    family: str
    p: float = 2.0
    eps_abs: float = 0.01
    eps_dist: float = 0.01
    omega: float = 0.01
    squared_geodesic: bool = True

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidInputError(f"unknown cost family {self.family!r}")
        if self.family == "p_norm":
            if not np.isfinite(self.p) or self.p < 1.0:
                raise InvalidInputError("p must be >= 1")
            if not np.isfinite(self.eps_abs) or self.eps_abs <= 0:
                raise InvalidInputError("eps_abs must be positive")
        if self.family == "distortion":
            if not np.isfinite(self.eps_dist) or self.eps_dist <= 0:
                raise InvalidInputError("eps_dist must be positive")
            if not np.isfinite(self.omega) or self.omega <= 0:
                raise InvalidInputError("omega must be positive")

    @property
    def requires_pairing(self) -> bool:
        return self.family == "distortion"


def parse_cost_spec(text):
    """Parse a cost string: ``l2``, ``pnorm:<p>``, ``geodesic-sphere``, ``distortion:<omega>``."""
    text = text.strip()
    if text == "l2":
        return CostModel(family="sq_euclidean")
    if text == "geodesic-sphere":
        return CostModel(family="geodesic_sphere")
    if text.startswith("pnorm:"):
        try:
            p = float(text.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad p-norm exponent in {text!r}") from None
        return CostModel(family="p_norm", p=p)
    if text.startswith("distortion:"):
        try:
            omega = float(text.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad distortion weight in {text!r}") from None
        return CostModel(family="distortion", omega=omega)
    raise InvalidInputError(
        f"unknown cost {text!r}; expected l2, pnorm:<p>, geodesic-sphere or distortion:<omega>"
    )


def _validate(model, x, y, Z):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != x.shape:
        raise InvalidInputError("x and y must be matching N x d arrays")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise InvalidInputError("x and y must be finite")
    if model.requires_pairing:
        if Z is None:
            raise InvalidInputError("the distortion cost requires the coupling matrix Z")
        Z = np.asarray(Z, dtype=float)
        if Z.shape != (x.shape[0], x.shape[0]):
            raise InvalidInputError("Z must be N x N")
    else:
        Z = None
    if model.family == "geodesic_sphere":
        if x.shape[1] != 2:
            raise InvalidInputError("geodesic cost expects 2 columns: (longitude, latitude)")
        half_pi = 0.5 * np.pi + _LATITUDE_SLACK
        if np.abs(x[:, 1]).max() > half_pi or np.abs(y[:, 1]).max() > half_pi:
            raise InvalidInputError("latitude outside [-pi/2, pi/2]")
    return x, y, Z


def _sq_euclidean_parts(x, y, want_hessian):
    n, d = x.shape
    diff = y - x
    value = 0.5 * float(np.sum(diff * diff)) / n
    grad = diff / n
    hess = None
    if want_hessian:
        hess = np.broadcast_to(np.eye(d) / n, (n, d, d)).copy()
    return value, grad, hess, None


def _p_norm_parts(model, x, y, want_hessian):
    n, _ = x.shape
    p, eps = model.p, model.eps_abs
    t = x - y
    si = np.sqrt(t * t + eps)
    s = si - np.sqrt(eps)
    value = float(np.sum(s**p)) / n
    sprime = t / si
    grad = -(p / n) * s ** (p - 1.0) * sprime
    hess = None
    if want_hessian:
        # (p-1) s^(p-2) s'^2 has a removable singularity at t = 0 for p < 2.
        curv1 = np.zeros_like(s)
        mask = s > 0
        curv1[mask] = (p - 1.0) * s[mask] ** (p - 2.0) * sprime[mask] ** 2
        curv2 = s ** (p - 1.0) * eps / si**3
        diag = (p / n) * (curv1 + curv2)
        nd = x.shape[1]
        hess = np.zeros((n, nd, nd))
        hess[:, np.arange(nd), np.arange(nd)] = diag
    return value, grad, hess, None


def _geodesic_q(arg, dist, squared):
    """Derivatives of the angle->cost profile q at the clipped haversine argument."""
    qp = np.empty_like(arg)
    qpp = np.empty_like(arg)
    if squared:
        small = arg < _SERIES_CUTOFF
        big = ~small
        a_s = arg[small]
        qp[small] = 4.0 + (8.0 / 3.0) * a_s + (32.0 / 15.0) * a_s**2
        qpp[small] = 8.0 / 3.0 + (64.0 / 15.0) * a_s
        a_b = arg[big]
        prod = a_b * (1.0 - a_b)
        qp[big] = 2.0 * dist[big] / np.sqrt(prod)
        qpp[big] = 2.0 / prod - dist[big] * (1.0 - 2.0 * a_b) / prod**1.5
    else:
        a = np.maximum(arg, 1e-30)
        prod = a * (1.0 - a)
        qp[:] = 1.0 / np.sqrt(prod)
        qpp[:] = -0.5 * (1.0 - 2.0 * a) / prod**1.5
    return qp, qpp


def _geodesic_parts(model, x, y, want_hessian):
    n, _ = x.shape
    theta_x, phi_x = x[:, 0], x[:, 1]
    theta_y, phi_y = y[:, 0], y[:, 1]
    dtheta = theta_x - theta_y
    dphi = phi_x - phi_y
    cpx, cpy = np.cos(phi_x), np.cos(phi_y)
    st2 = np.sin(0.5 * dtheta) ** 2
    arg = np.sin(0.5 * dphi) ** 2 + cpx * cpy * st2
    arg = np.clip(arg, 0.0, 1.0)
    antipodal = arg >= _ANTIPODAL_CLIP
    arg_c = np.minimum(arg, _ANTIPODAL_CLIP)
    dist = 2.0 * np.arcsin(np.sqrt(arg_c))

    cost = dist**2 if model.squared_geodesic else dist
    value = float(np.sum(cost)) / n

    dA = np.empty((n, 2))
    dA[:, 0] = -0.5 * cpx * cpy * np.sin(dtheta)
    dA[:, 1] = -0.5 * np.sin(dphi) - cpx * np.sin(phi_y) * st2
    qp, qpp = _geodesic_q(arg_c, dist, model.squared_geodesic)

    grad = (qp[:, None] * dA) / n
    grad[antipodal] = 0.0

    hess = None
    if want_hessian:
        hA = np.empty((n, 2, 2))
        hA[:, 0, 0] = 0.5 * cpx * cpy * np.cos(dtheta)
        hA[:, 0, 1] = 0.5 * cpx * np.sin(phi_y) * np.sin(dtheta)
        hA[:, 1, 0] = hA[:, 0, 1]
        hA[:, 1, 1] = 0.5 * np.cos(dphi) - cpx * cpy * st2
        hess = (
            qpp[:, None, None] * dA[:, :, None] * dA[:, None, :]
            + qp[:, None, None] * hA
        ) / n
        hess[antipodal] = 0.0
    return value, grad, hess, None


def _distortion_parts(model, x, y, Z, want_hessian):
    n, d = x.shape
    eps2 = model.eps_dist**2
    omega = model.omega
    denom = cdist(x, x, metric="sqeuclidean") + eps2
    ratio = cdist(y, y, metric="sqeuclidean") / denom
    W = 0.5 * (Z + Z.T)
    np.fill_diagonal(W, 0.0)

    dev = ratio - 1.0
    anchor_diff = y - x
    value = float(np.sum(W * dev * dev)) / n**2 + omega * float(
        np.sum(anchor_diff * anchor_diff)
    ) / n

    coeff = W * dev / denom
    grad = (8.0 / n**2) * (coeff.sum(axis=1)[:, None] * y - coeff @ y) + (
        2.0 * omega / n
    ) * anchor_diff

    hess_diag = hess_cross = None
    if want_hessian:
        diffs = y[:, None, :] - y[None, :, :]
        c_outer = (16.0 / n**2) * W / denom**2
        c_eye = (8.0 / n**2) * coeff
        blocks = c_outer[:, :, None, None] * diffs[:, :, :, None] * diffs[:, :, None, :]
        blocks += c_eye[:, :, None, None] * np.eye(d)
        idx = np.arange(n)
        blocks[idx, idx] = 0.0
        hess_diag = blocks.sum(axis=1) + (2.0 * omega / n) * np.eye(d)
        hess_cross = -blocks
    return value, grad, hess_diag, hess_cross


def cost_parts(model, x, y, Z=None, want_hessian=False):
    """Value, gradient and (optionally) Hessian blocks in one pass.

    Returns ``(value, grad, hess_diag, hess_cross)``; ``hess_cross`` is None
    for pairwise families.
    """
    x, y, Z = _validate(model, x, y, Z)
    if model.family == "sq_euclidean":
        return _sq_euclidean_parts(x, y, want_hessian)
    if model.family == "p_norm":
        return _p_norm_parts(model, x, y, want_hessian)
    if model.family == "geodesic_sphere":
        return _geodesic_parts(model, x, y, want_hessian)
    return _distortion_parts(model, x, y, Z, want_hessian)


def cost_value(model, x, y, Z=None):
    """Total cost of mapping x to y (sample average; pair average for distortion)."""
    return cost_parts(model, x, y, Z)[0]


def cost_grad(model, x, y, Z=None):
    """Gradient of ``cost_value`` with respect to each mapped point; N x d."""
    return cost_parts(model, x, y, Z)[1]


def cost_hessian_blocks(model, x, y, Z=None):
    """Second derivatives of ``cost_value``: ``(diag, cross)`` blocks.

    ``diag`` has shape (N, d, d).  ``cross`` is (N, N, d, d) for the
    distortion family (zero diagonal) and None otherwise.
    """
    _, _, hess_diag, hess_cross = cost_parts(model, x, y, Z, want_hessian=True)
    return hess_diag, hess_cross
