"""Two-sided bounds on the nonlinear residuals and the polytope maps.

Every bound here is a nonnegative pair (lo, hi) meaning the quantity lies in
[-lo, +hi].  The exact path evaluates the univariate residual formulas and
the product composition rule directly; the relaxed path replaces each term
by its secant on a fixed cap interval, which makes the result piecewise
linear and positively homogeneous in the box widths.

Pure functions throughout; concurrent evaluation is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CapExceededError(ValueError):
    """A requested box exceeds the trust-region caps of the bound formulas."""


@dataclass
class BoundPair:
    """Nonnegative two-sided bound: the quantity lies in [-lo, +hi]."""

    lo: np.ndarray
    hi: np.ndarray
    role: str = ""

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape:
            raise ValueError("bound sides must have equal shape")
        if self.lo.min(initial=0.0) < -1e-12 or self.hi.min(initial=0.0) < -1e-12:
            raise ValueError("bound sides must be nonnegative")
        np.maximum(self.lo, 0.0, out=self.lo)
        np.maximum(self.hi, 0.0, out=self.hi)

    @staticmethod
    def zeros(n: int, role: str = "") -> "BoundPair":
        return BoundPair(np.zeros(n), np.zeros(n), role)

    def copy(self) -> "BoundPair":
        return BoundPair(self.lo.copy(), self.hi.copy(), self.role)

    def contains(self, values: np.ndarray, tol: float = 0.0) -> bool:
        v = np.asarray(values)
        lo = self.lo if v.ndim == 1 else self.lo[:, None]
        hi = self.hi if v.ndim == 1 else self.hi[:, None]
        return bool(np.all(v <= hi + tol) and np.all(-v <= lo + tol))

    def sup_distance(self, other: "BoundPair") -> float:
        return max(
            float(np.max(np.abs(self.lo - other.lo), initial=0.0)),
            float(np.max(np.abs(self.hi - other.hi), initial=0.0)),
        )


@dataclass(frozen=True)
class RelaxationCaps:
    """Trust-region caps for the edge angle and log-magnitude differences."""

    theta_cap: float = 0.5
    rho_cap: float = 0.2

    def __post_init__(self):
        if not (0 < self.theta_cap <= np.pi / 2):
            raise ValueError("theta cap must lie in (0, pi/2]")
        if not (0 < self.rho_cap <= 1.0):
            raise ValueError("rho cap must lie in (0, 1]")


@dataclass(frozen=True)
class FactorBounds:
    """First-order span and second-order residual bounds of one scalar factor."""

    span_lo: np.ndarray
    span_hi: np.ndarray
    res_lo: np.ndarray
    res_hi: np.ndarray


@dataclass(frozen=True)
class UnivariateResidualBounds:
    sin: FactorBounds
    cos: FactorBounds
    sinh: FactorBounds
    cosh: FactorBounds


def _check_caps(lth_lo, lth_hi, lrh_lo, lrh_hi, caps: RelaxationCaps):
    tol = 1e-12
    if np.any(lth_lo < -tol) or np.any(lth_hi < -tol) or np.any(lrh_lo < -tol) or np.any(lrh_hi < -tol):
        raise ValueError("box widths must be nonnegative")
    if np.max(lth_lo, initial=0) > caps.theta_cap + tol or np.max(lth_hi, initial=0) > caps.theta_cap + tol:
        raise CapExceededError(
            f"angle width exceeds cap {caps.theta_cap} "
            f"(got {max(np.max(lth_lo, initial=0), np.max(lth_hi, initial=0)):.4f})"
        )
    if np.max(lrh_lo, initial=0) > caps.rho_cap + tol or np.max(lrh_hi, initial=0) > caps.rho_cap + tol:
        raise CapExceededError(
            f"log-magnitude width exceeds cap {caps.rho_cap} "
            f"(got {max(np.max(lrh_lo, initial=0), np.max(lrh_hi, initial=0)):.4f})"
        )


def univariate_bounds(
    ltheta: tuple, lrho: tuple, caps: RelaxationCaps = RelaxationCaps()
) -> UnivariateResidualBounds:
    """Exact residual bounds of the four scalar factors on a deviation box.

    ``ltheta``/``lrho`` are (lo, hi) widths; arrays broadcast elementwise.
    """
    lth_lo, lth_hi = (np.asarray(a, dtype=float) for a in ltheta)
    lrh_lo, lrh_hi = (np.asarray(a, dtype=float) for a in lrho)
    _check_caps(lth_lo, lth_hi, lrh_lo, lrh_hi, caps)

    th_m = np.maximum(lth_lo, lth_hi)
    rh_m = np.maximum(lrh_lo, lrh_hi)

    sin = FactorBounds(
        span_lo=np.sin(lth_lo),
        span_hi=np.sin(lth_hi),
        res_lo=lth_hi - np.sin(lth_hi),
        res_hi=lth_lo - np.sin(lth_lo),
    )
    dcos = 1.0 - np.cos(th_m)
    cos = FactorBounds(
        span_lo=dcos, span_hi=np.zeros_like(dcos), res_lo=dcos, res_hi=np.zeros_like(dcos)
    )
    sinh = FactorBounds(
        span_lo=np.sinh(lrh_lo),
        span_hi=np.sinh(lrh_hi),
        res_lo=np.sinh(lrh_lo) - lrh_lo,
        res_hi=np.sinh(lrh_hi) - lrh_hi,
    )
    dcosh = np.cosh(rh_m) - 1.0
    cosh = FactorBounds(
        span_lo=np.zeros_like(dcosh), span_hi=dcosh, res_lo=np.zeros_like(dcosh), res_hi=dcosh
    )
    return UnivariateResidualBounds(sin=sin, cos=cos, sinh=sinh, cosh=cosh)


def product_bounds(f: FactorBounds, g: FactorBounds, f_star, g_star) -> tuple:
    """Residual bound pair (lo, hi) of the elementwise product f*g.

    Requires nonnegative span/residual inputs and nonnegative base values,
    which holds for the hyperbolic/trigonometric factors used here.
    """
    for fb in (f, g):
        for arr in (fb.span_lo, fb.span_hi, fb.res_lo, fb.res_hi):
            if np.min(arr, initial=0.0) < -1e-12:
                raise ValueError("product bound inputs must be nonnegative")
    if np.min(np.asarray(f_star), initial=0.0) < 0 or np.min(np.asarray(g_star), initial=0.0) < 0:
        raise ValueError("base factor values must be nonnegative")
    hi = np.maximum(f.span_hi * g.span_hi, f.span_lo * g.span_lo) + f_star * g.res_hi + f.res_hi * g_star
    lo = np.maximum(f.span_hi * g.span_lo, f.span_lo * g.span_hi) + f_star * g.res_lo + f.res_lo * g_star
    return lo, hi


def _assemble_blocks(uni: UnivariateResidualBounds, m: int, role: str) -> BoundPair:
    one = np.ones(m)
    zero = np.zeros(m)
    b1 = product_bounds(uni.cosh, uni.cos, one, one)
    b2 = product_bounds(uni.sinh, uni.cos, zero, one)
    b3 = product_bounds(uni.cosh, uni.sin, one, zero)
    b4 = product_bounds(uni.sinh, uni.sin, zero, zero)
    lo = np.concatenate([b1[0], b2[0], b3[0], b4[0]])
    hi = np.concatenate([b1[1], b2[1], b3[1], b4[1]])
    return BoundPair(lo, hi, role)


def edge_widths(lx: BoundPair, n_edges: int) -> tuple:
    """Per-edge angle and log-magnitude widths from the admissibility rows."""
    m = n_edges
    return (lx.lo[:m], lx.hi[:m]), (lx.lo[m : 2 * m], lx.hi[m : 2 * m])


def delta2_bounds(lx: BoundPair, n_edges: int, caps: RelaxationCaps) -> BoundPair:
    """Exact residual bounds of all 4m primitives on the admissibility box."""
    (th_lo, th_hi), (rh_lo, rh_hi) = edge_widths(lx, n_edges)
    uni = univariate_bounds((th_lo, th_hi), (rh_lo, rh_hi), caps)
    return _assemble_blocks(uni, n_edges, role="residual")


def linear_bounds(
    lx: BoundPair, n_edges: int, caps: RelaxationCaps, enforce_caps: bool = True
) -> BoundPair:
    """Relaxed residual bounds, piecewise linear and homogeneous in lx.

    Univariate terms use secants over [0, cap]; bilinear span products use
    the tighter of the two upper-envelope planes on the cap box.  With
    ``enforce_caps=False`` the formulas are evaluated outside their validity
    region (useful for homogeneous profiles that get rescaled later).
    """
    (th_lo, th_hi), (rh_lo, rh_hi) = edge_widths(lx, n_edges)
    if enforce_caps:
        _check_caps(th_lo, th_hi, rh_lo, rh_hi, caps)
    tU, rU = caps.theta_cap, caps.rho_cap
    th_m = np.maximum(th_lo, th_hi)
    rh_m = np.maximum(rh_lo, rh_hi)

    k_cos = (1.0 - np.cos(tU)) / tU
    k_sin2 = (tU - np.sin(tU)) / tU
    k_cosh = (np.cosh(rU) - 1.0) / rU
    k_sinh = np.sinh(rU) / rU
    k_sinh2 = (np.sinh(rU) - rU) / rU

    sin = FactorBounds(
        span_lo=th_lo, span_hi=th_hi, res_lo=k_sin2 * th_hi, res_hi=k_sin2 * th_lo
    )
    cos = FactorBounds(
        span_lo=k_cos * th_m,
        span_hi=np.zeros(n_edges),
        res_lo=k_cos * th_m,
        res_hi=np.zeros(n_edges),
    )
    sinh = FactorBounds(
        span_lo=k_sinh * rh_lo,
        span_hi=k_sinh * rh_hi,
        res_lo=k_sinh2 * rh_lo,
        res_hi=k_sinh2 * rh_hi,
    )
    cosh = FactorBounds(
        span_lo=np.zeros(n_edges),
        span_hi=k_cosh * rh_m,
        res_lo=np.zeros(n_edges),
        res_hi=k_cosh * rh_m,
    )

    # cap-box upper bounds of each relaxed span
    cap_sin = tU
    cap_cos = 1.0 - np.cos(tU)
    cap_sinh = np.sinh(rU)
    cap_cosh = np.cosh(rU) - 1.0

    def envelope(x, x_cap, y, y_cap):
        return np.minimum(x_cap * y, x * y_cap)

    one = np.ones(n_edges)
    zero = np.zeros(n_edges)

    def block(f, f_cap, g, g_cap, f_star, g_star):
        hi = (
            np.maximum(
                envelope(f.span_hi, f_cap, g.span_hi, g_cap),
                envelope(f.span_lo, f_cap, g.span_lo, g_cap),
            )
            + f_star * g.res_hi
            + f.res_hi * g_star
        )
        lo = (
            np.maximum(
                envelope(f.span_hi, f_cap, g.span_lo, g_cap),
                envelope(f.span_lo, f_cap, g.span_hi, g_cap),
            )
            + f_star * g.res_lo
            + f.res_lo * g_star
        )
        return lo, hi

    b1 = block(cosh, cap_cosh, cos, cap_cos, one, one)
    b2 = block(sinh, cap_sinh, cos, cap_cos, zero, one)
    b3 = block(cosh, cap_cosh, sin, cap_sin, one, zero)
    b4 = block(sinh, cap_sinh, sin, cap_sin, zero, zero)
    lo = np.concatenate([b1[0], b2[0], b3[0], b4[0]])
    hi = np.concatenate([b1[1], b2[1], b3[1], b4[1]])
    return BoundPair(lo, hi, role="residual")


# ---------------------------------------------------------------------------
# polytope maps
# ---------------------------------------------------------------------------

def split_apply(mat: np.ndarray, abs_mat: np.ndarray, hi: np.ndarray, lo: np.ndarray):
    """(M+ hi + M- lo, M+ lo + M- hi) without materializing the splits."""
    s = abs_mat @ (hi + lo)
    d = mat @ (hi - lo)
    return 0.5 * (s + d), 0.5 * (s - d)


def tau(lx: BoundPair, model, caps: RelaxationCaps | None = None, linear: bool = False) -> BoundPair:
    """Bound pair containing the nonlinear correction image A phi(x)."""
    caps = caps or RelaxationCaps()
    f = linear_bounds if linear else delta2_bounds
    d2 = f(lx, model.n_edges, caps)
    hi, lo = split_apply(model.Cmat, model.absC, d2.hi, d2.lo)
    return BoundPair(lo, hi, role="map")


def sigma(lu: BoundPair, model) -> BoundPair:
    """Bound pair containing the linear input image A J*^-1 R u."""
    hi, lo = split_apply(model.Bmat, model.absB, lu.hi, lu.lo)
    return BoundPair(lo, hi, role="map")


def operational_lhs(
    lu: BoundPair, d2: BoundPair, model
) -> np.ndarray:
    """Row values of the operational sufficient condition (<= 0 required)."""
    if model.hstar.size == 0:
        return np.zeros(0)
    du = split_apply(model.Dmat, model.absD, lu.hi, lu.lo)[0]
    de = split_apply(model.Emat, model.absE, d2.hi, d2.lo)[0]
    return du + de + model.hstar


# ---------------------------------------------------------------------------
# McCormick envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McCormickEnvelopes:
    """Affine over/under estimators a_x*x + a_y*y + c of a product on a box."""

    over: tuple[tuple[float, float, float], ...]
    under: tuple[tuple[float, float, float], ...]

    def upper(self, x, y) -> float:
        return min(ax * x + ay * y + c for ax, ay, c in self.over)

    def lower(self, x, y) -> float:
        return max(ax * x + ay * y + c for ax, ay, c in self.under)


def mccormick(xL: float, xU: float, yL: float, yU: float) -> McCormickEnvelopes:
    if xL > xU or yL > yU:
        raise ValueError("empty interval")
    over = (
        (yL, xU, -xU * yL),
        (yU, xL, -xL * yU),
    )
    under = (
        (yL, xL, -xL * yL),
        (yU, xU, -xU * yU),
    )
    return McCormickEnvelopes(over=over, under=under)
