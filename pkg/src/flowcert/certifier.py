"""Construction and verification of certified inner approximations.

A certificate is a pair of boxes: admittance-input widths (lu) and
admissibility widths (lx) such that the fixed-point map provably sends the
state box into itself for every input in the input box, while every
operational constraint row stays nonpositive.  The search for the largest
certificate runs as monotone fixed-point iteration inside scalar bisection
or coordinate ascent; every returned certificate is re-verified with the
exact bounds.

Probes at distinct objective levels are independent and may run in
parallel; certificate assembly itself is single-writer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .bounds import (
    BoundPair,
    RelaxationCaps,
    CapExceededError,
    delta2_bounds,
    linear_bounds,
    operational_lhs,
    sigma,
    split_apply,
    tau,
)
from .model import FixedPointModel
from .netio import LOAD


class InfeasibleCertificate(Exception):
    """No certificate exists at the probed input box."""

    def __init__(self, reason: str, row: str | None = None):
        super().__init__(reason if row is None else f"{reason} (row {row})")
        self.reason = reason
        self.row = row


class ZeroCertificate(Exception):
    """The maximized objective collapsed below the zero threshold."""


@dataclass(frozen=True)
class Objective:
    """Certificate quality target.

    loadability: largest step along an injection-space stress direction.
    robustness: largest symmetric admittance cube (componentwise weights).
    chance: error-function mass of an axis-aligned Gaussian over the box.
    """

    kind: str
    direction_p: np.ndarray | None = None
    direction_q: np.ndarray | None = None
    weights: np.ndarray | None = None
    std_devs: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("loadability", "robustness", "chance"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "loadability":
            dp = self.direction_p
            dq = self.direction_q
            if dp is None and dq is None:
                raise ValueError("loadability objective needs a direction")
            total = 0.0
            for d in (dp, dq):
                if d is not None:
                    total += float(np.max(np.abs(d), initial=0.0))
            if total == 0.0:
                raise ValueError("loadability direction must be nonzero")
        if self.kind == "robustness" and self.weights is not None:
            if np.min(self.weights) <= 0:
                raise ValueError("robustness weights must be positive")
        if self.kind == "chance" and self.std_devs is not None:
            if np.min(self.std_devs) <= 0:
                raise ValueError("chance std-devs must be positive")


@dataclass
class InjectionBox:
    """Certified per-bus power ranges; non-input coordinates stay at base."""

    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    p_is_input: np.ndarray
    q_is_input: np.ndarray


@dataclass
class Certificate:
    lu: BoundPair
    lx: BoundPair
    objective_kind: str
    objective_value: float
    injection_box: InjectionBox
    status: str
    v_lo: np.ndarray
    v_hi: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# feasibility predicates
# ---------------------------------------------------------------------------

def self_map_holds(
    model: FixedPointModel,
    lx: BoundPair,
    lu: BoundPair,
    caps: RelaxationCaps = RelaxationCaps(),
    linear: bool = False,
    tol: float = 1e-9,
):
    """Check lx >= sigma(lu) + tau(lx) rowwise; returns (flag, slack)."""
    s = sigma(lu, model)
    t = tau(lx, model, caps, linear=linear)
    slack = np.concatenate([lx.hi - s.hi - t.hi, lx.lo - s.lo - t.lo])
    return bool(slack.min(initial=0.0) >= -tol), slack


def operational_holds(
    model: FixedPointModel,
    lx: BoundPair,
    lu: BoundPair,
    caps: RelaxationCaps = RelaxationCaps(),
    linear: bool = False,
    tol: float = 1e-9,
):
    """Check the sufficient operational condition; returns (flag, slack)."""
    f = linear_bounds if linear else delta2_bounds
    d2 = f(lx, model.n_edges, caps)
    lhs = operational_lhs(lu, d2, model)
    slack = -lhs
    return bool(slack.min(initial=0.0) >= -tol), slack


def _check_lu_cap(model: FixedPointModel, lu: BoundPair, tol: float = 1e-12):
    over_hi = lu.hi - model.lu_max_hi
    over_lo = lu.lo - model.lu_max_lo
    j = int(np.argmax(np.maximum(over_hi, over_lo)))
    worst = max(over_hi[j], over_lo[j])
    if worst > tol:
        bus, comp = model.inputs.coords[j]
        raise InfeasibleCertificate(
            f"input width exceeds generator capability at bus {model.net.buses[bus].id}:{comp}"
        )


def certify_fixed_u(
    model: FixedPointModel,
    lu: BoundPair,
    lx_max: BoundPair | None = None,
    caps: RelaxationCaps = RelaxationCaps(),
    linear: bool = False,
    max_iter: int = 300,
    tol: float = 1e-10,
    enforce_operational: bool = True,
) -> tuple[BoundPair, int]:
    """Least self-mapped admissibility box for a fixed input box.

    Runs the monotone iteration l(0)=sigma(lu), l(k+1)=sigma(lu)+tau(l(k));
    the limit is the tightest certified box.  Raises InfeasibleCertificate
    when an iterate escapes lx_max (or the caps) or the operational
    condition fails at the limit.
    """
    if lu.hi.shape != (model.n_inputs,):
        raise ValueError("input box has wrong dimension")
    _check_lu_cap(model, lu)
    if lx_max is None:
        lx_max = BoundPair(model.lx_max_lo, model.lx_max_hi, role="state")

    s = sigma(lu, model)
    cur = BoundPair.zeros(model.n_rows, role="state")
    bound_f = linear_bounds if linear else delta2_bounds
    iterations = 0
    for iterations in range(1, max_iter + 1):
        try:
            d2 = bound_f(cur, model.n_edges, caps)
        except CapExceededError as exc:
            raise InfeasibleCertificate(f"iterate escaped the trust region: {exc}") from exc
        t_hi, t_lo = split_apply(model.Cmat, model.absC, d2.hi, d2.lo)
        nxt_hi = np.maximum(s.hi + t_hi, cur.hi)
        nxt_lo = np.maximum(s.lo + t_lo, cur.lo)
        over_hi = nxt_hi - lx_max.hi
        over_lo = nxt_lo - lx_max.lo
        worst = max(over_hi.max(initial=-np.inf), over_lo.max(initial=-np.inf))
        if worst > 1e-12:
            side, arr = ("hi", over_hi) if over_hi.max() >= over_lo.max() else ("lo", over_lo)
            row = model.a_labels[int(np.argmax(arr))]
            raise InfeasibleCertificate(
                f"self-mapped box exceeds its cap by {worst:.3e}", row=f"{row}:{side}"
            )
        change = max(
            float(np.max(np.abs(nxt_hi - cur.hi), initial=0.0)),
            float(np.max(np.abs(nxt_lo - cur.lo), initial=0.0)),
        )
        cur = BoundPair(nxt_lo, nxt_hi, role="state")
        if change <= tol:
            break
    else:
        raise InfeasibleCertificate(
            f"fixed-point iteration did not settle in {max_iter} steps"
        )
    if enforce_operational:
        ok, slack = operational_holds(model, cur, lu, caps, linear=linear)
        if not ok:
            row = model.t_labels[int(np.argmin(slack))]
            raise InfeasibleCertificate("operational condition fails", row=row)
    return cur, iterations


# ---------------------------------------------------------------------------
# objective helpers
# ---------------------------------------------------------------------------

def chance_score(lu: BoundPair, std_devs: np.ndarray) -> float:
    """Error-function mass of N(0, diag(std^2)) inside the box [-lo, hi]."""
    s = np.asarray(std_devs, dtype=float)
    return float(0.5 * np.sum(erf(lu.hi / (s * np.sqrt(2))) + erf(lu.lo / (s * np.sqrt(2)))))


def certified_voltage_band(model: FixedPointModel, lx: BoundPair):
    """Per-bus voltage range implied by the certified nodal rho rows."""
    n = model.net.n_bus
    v_lo = model.base.v.copy()
    v_hi = model.base.v.copy()
    m2 = 2 * model.n_edges
    for i, (kind, bus) in enumerate(model.a_labels[m2:]):
        v_lo[bus] = model.base.v[bus] * math.exp(-lx.lo[m2 + i])
        v_hi[bus] = model.base.v[bus] * math.exp(lx.hi[m2 + i])
    return v_lo, v_hi


def injection_box(
    model: FixedPointModel, lu: BoundPair, v_lo: np.ndarray, v_hi: np.ndarray
) -> InjectionBox:
    """Translate a certified admittance box to per-bus power ranges.

    The voltage band must contain the base magnitudes; the case split picks
    the worst-in-band voltage so every power point inside the ranges maps
    back into the admittance box.
    """
    base = model.base
    if np.any(v_lo > base.v + 1e-12) or np.any(v_hi < base.v - 1e-12):
        raise ValueError("voltage band must contain the base magnitudes")
    n = model.net.n_bus
    box = InjectionBox(
        p_min=base.p.copy(),
        p_max=base.p.copy(),
        q_min=base.q.copy(),
        q_max=base.q.copy(),
        p_is_input=np.zeros(n, dtype=bool),
        q_is_input=np.zeros(n, dtype=bool),
    )
    v2s = base.v ** 2
    for j, (bus, comp) in enumerate(model.inputs.coords):
        lo2, hi2 = v_lo[bus] ** 2, v_hi[bus] ** 2
        if comp == "g":
            rate_hi = lu.hi[j] + base.p[bus] / v2s[bus]
            rate_lo = base.p[bus] / v2s[bus] - lu.lo[j]
            box.p_max[bus] = (lo2 if rate_hi >= 0 else hi2) * rate_hi
            box.p_min[bus] = (hi2 if rate_lo >= 0 else lo2) * rate_lo
            box.p_is_input[bus] = True
        else:
            rate_hi = lu.lo[j] + base.q[bus] / v2s[bus]
            rate_lo = base.q[bus] / v2s[bus] - lu.hi[j]
            box.q_max[bus] = (lo2 if rate_hi >= 0 else hi2) * rate_hi
            box.q_min[bus] = (hi2 if rate_lo >= 0 else lo2) * rate_lo
            box.q_is_input[bus] = True
    return box


def loadability_box(
    model: FixedPointModel,
    d_p: np.ndarray,
    d_q: np.ndarray,
    t: float,
    v_lo: np.ndarray,
    v_hi: np.ndarray,
) -> BoundPair:
    """Smallest admittance box covering the injection segment [0, t] d.

    Coordinates with a varying voltage cover the whole band, so a coordinate
    picks up width even when the direction leaves its power at base.
    """
    coords = model.inputs.coords
    in_g = {b for b, c in coords if c == "g"}
    in_b = {b for b, c in coords if c == "b"}
    for bus in range(model.net.n_bus):
        if d_p[bus] != 0 and bus not in in_g:
            raise ValueError(f"direction moves p at bus {model.net.buses[bus].id} which is not an input")
        if d_q[bus] != 0 and bus not in in_b:
            raise ValueError(f"direction moves q at bus {model.net.buses[bus].id} which is not an input")
    base = model.base
    hi = np.zeros(len(coords))
    lo = np.zeros(len(coords))
    for j, (bus, comp) in enumerate(coords):
        fixed_v = model.net.buses[bus].kind != LOAD
        v2_corners = [base.v[bus] ** 2] if fixed_v else [v_lo[bus] ** 2, v_hi[bus] ** 2]
        if comp == "g":
            n0, dn = base.p[bus], d_p[bus]
            ref = base.p[bus] / base.v[bus] ** 2
            sign = 1.0
        else:
            n0, dn = base.q[bus], d_q[bus]
            ref = -base.q[bus] / base.v[bus] ** 2
            sign = -1.0
        vals = [sign * (n0 + s * dn) / v2 - ref for s in (0.0, t) for v2 in v2_corners]
        hi[j] = max(0.0, max(vals))
        lo[j] = max(0.0, -min(vals))
    return BoundPair(lo, hi, role="input")


# ---------------------------------------------------------------------------
# linear-relaxation initialization
# ---------------------------------------------------------------------------

@dataclass
class LPInit:
    value: float
    lu: BoundPair
    lx: BoundPair
    status: str
    iterations: int
    diverged: bool
    growth_rate: float


_LADDER = (0.5, 0.2, 0.1, 0.04, 0.02, 0.008)


def _cap_ladder(caps: RelaxationCaps):
    """Trust-region candidates for the relaxed path, largest first.

    Secant slopes tighten as the caps shrink, so small enough caps always
    make the relaxed self-map contractive; larger caps allow wider boxes.
    The candidates are all contained in the outer trust region.
    """
    out = []
    for f in _LADDER:
        t = min(caps.theta_cap, f)
        r = min(caps.rho_cap, 0.5 * f)
        if not any(abs(t - a.theta_cap) < 1e-12 and abs(r - a.rho_cap) < 1e-12 for a in out):
            out.append(RelaxationCaps(theta_cap=t, rho_cap=r))
    return out


def lp_homogeneous_profile(
    model: FixedPointModel,
    weights: np.ndarray,
    caps: RelaxationCaps,
    max_iter: int = 400,
    tol: float = 1e-12,
):
    """Least fixed point of the relaxed self-map at unit symmetric input.

    The relaxed bounds are positively homogeneous, so the profile at any
    level is this one rescaled; cap validity is restored when the profile is
    scaled back inside the trust region.  Divergence means the relaxation is
    infeasible at every level for these caps.
    """
    lu1 = BoundPair(weights.copy(), weights.copy(), role="input")
    s = sigma(lu1, model)
    cur_hi = np.zeros(model.n_rows)
    cur_lo = np.zeros(model.n_rows)
    blow_up = 1e9 * max(1.0, float(np.max(s.hi + s.lo, initial=0.0)))
    growth = np.inf
    for it in range(1, max_iter + 1):
        d2 = linear_bounds(
            BoundPair(cur_lo, cur_hi), model.n_edges, caps, enforce_caps=False
        )
        t_hi, t_lo = split_apply(model.Cmat, model.absC, d2.hi, d2.lo)
        nxt_hi = np.maximum(s.hi + t_hi, cur_hi)
        nxt_lo = np.maximum(s.lo + t_lo, cur_lo)
        change = max(
            float(np.max(np.abs(nxt_hi - cur_hi), initial=0.0)),
            float(np.max(np.abs(nxt_lo - cur_lo), initial=0.0)),
        )
        denom = max(nxt_hi.max(initial=0.0), nxt_lo.max(initial=0.0), 1e-30)
        growth = change / denom
        cur_hi, cur_lo = nxt_hi, nxt_lo
        if max(cur_hi.max(initial=0.0), cur_lo.max(initial=0.0)) > blow_up:
            return None, it, growth
        if change == 0.0 or change <= tol * denom:
            return BoundPair(cur_lo, cur_hi, role="state"), it, growth
    return None, max_iter, growth


def _lp_symmetric_level(model, weights, profile, lx_max, caps) -> float:
    """Largest level passing every feasibility filter, by ratio minimum."""
    lam = np.inf
    for prof, cap in ((profile.hi, lx_max.hi), (profile.lo, lx_max.lo)):
        mask = prof > 0
        if mask.any():
            lam = min(lam, float(np.min(cap[mask] / prof[mask])))
    m = model.n_edges
    for prof in (profile.hi, profile.lo):
        for rows, cap in ((slice(0, m), caps.theta_cap), (slice(m, 2 * m), caps.rho_cap)):
            seg = prof[rows]
            mask = seg > 0
            if mask.any():
                lam = min(lam, float(np.min(cap / seg[mask])))
    for cap in (model.lu_max_hi, model.lu_max_lo):
        mask = np.isfinite(cap)
        if mask.any():
            lam = min(lam, float(np.min(cap[mask] / weights[mask])))
    if model.hstar.size:
        d2_1 = linear_bounds(profile, model.n_edges, caps, enforce_caps=False)
        lu1 = BoundPair(weights, weights, role="input")
        rate = operational_lhs(lu1, d2_1, model) - model.hstar
        mask = rate > 1e-15
        if mask.any():
            lam = min(lam, float(np.min(-model.hstar[mask] / rate[mask])))
    if not np.isfinite(lam):
        lam = 1.0  # nothing binds; trust-region ratios above always bind in practice
    return lam * (1.0 - 1e-9)


def lp_relaxation_init(
    model: FixedPointModel,
    objective: Objective,
    caps: RelaxationCaps = RelaxationCaps(),
    lx_max: BoundPair | None = None,
) -> LPInit:
    """Certificate from the linear relaxation of the bound system.

    For symmetric objectives the relaxed profile scales linearly with the
    level, so the optimum is a minimum of per-row ratios, evaluated over a
    ladder of trust-region caps; loadability falls back to bisection with
    the relaxed iteration.
    """
    if lx_max is None:
        lx_max = BoundPair(model.lx_max_lo, model.lx_max_hi, role="state")
    k = model.n_inputs

    if objective.kind == "loadability":
        return _lp_loadability(model, objective, caps, lx_max)

    weights = objective.weights if objective.kind == "robustness" else objective.std_devs
    if weights is None:
        weights = np.ones(k)
    weights = np.asarray(weights, dtype=float)

    best: LPInit | None = None
    iters_total = 0
    growth_first = np.inf
    all_diverged = True
    for sub_caps in _cap_ladder(caps):
        profile, iters, growth = lp_homogeneous_profile(model, weights, sub_caps)
        iters_total += iters
        if growth_first is np.inf or not np.isfinite(growth_first):
            growth_first = growth
        if profile is None:
            continue
        all_diverged = False
        lam = _lp_symmetric_level(model, weights, profile, lx_max, sub_caps)
        for _ in range(4):
            if lam < 1e-12:
                break
            lu = BoundPair(lam * weights, lam * weights, role="input")
            try:
                lx, _ = certify_fixed_u(model, lu, lx_max, sub_caps, linear=True)
            except InfeasibleCertificate:
                lam *= 1.0 - 1e-6
                continue
            value = lam if objective.kind == "robustness" else chance_score(lu, weights)
            if best is None or value > best.value:
                best = LPInit(
                    value=value,
                    lu=lu,
                    lx=lx,
                    status="certified-linear-relaxation",
                    iterations=iters_total,
                    diverged=False,
                    growth_rate=growth,
                )
            break
    if best is not None:
        return best
    zero = BoundPair.zeros(k, role="input")
    return LPInit(
        value=0.0,
        lu=zero,
        lx=BoundPair.zeros(model.n_rows, role="state"),
        status="certified-linear-relaxation",
        iterations=iters_total,
        diverged=all_diverged,
        growth_rate=growth_first,
    )


def _lp_loadability(model, objective, caps, lx_max) -> LPInit:
    d_p = objective.direction_p if objective.direction_p is not None else np.zeros(model.net.n_bus)
    d_q = objective.direction_q if objective.direction_q is not None else np.zeros(model.net.n_bus)
    v_lo, v_hi = _operational_band(model)

    ladder = _cap_ladder(caps)

    def feasible(t: float):
        lu = loadability_box(model, d_p, d_q, t, v_lo, v_hi)
        for sub_caps in ladder:
            try:
                lx, _ = certify_fixed_u(model, lu, lx_max, sub_caps, linear=True)
                return lu, lx
            except InfeasibleCertificate:
                continue
        return None

    t_star, lu, lx, iters = _bisect_from(feasible, 0.0, model)
    return LPInit(
        value=t_star,
        lu=lu if lu is not None else BoundPair.zeros(model.n_inputs, role="input"),
        lx=lx if lx is not None else BoundPair.zeros(model.n_rows, role="state"),
        status="certified-linear-relaxation",
        iterations=iters,
        diverged=False,
        growth_rate=float("nan"),
    )


def _operational_band(model: FixedPointModel):
    """Voltage band implied by the admissibility caps (the widest certified)."""
    lx_cap = BoundPair(model.lx_max_lo, model.lx_max_hi, role="state")
    return certified_voltage_band(model, lx_cap)


# ---------------------------------------------------------------------------
# the optimizer
# ---------------------------------------------------------------------------

def maximize(
    model: FixedPointModel,
    objective: Objective,
    lx_max: BoundPair | None = None,
    caps: RelaxationCaps = RelaxationCaps(),
    lp_only: bool = False,
    zero_tol: float = 1e-9,
) -> Certificate:
    """Largest certificate for the chosen quality objective.

    The linear relaxation supplies the initial level; the nonlinear path
    refines it by bisection (loadability, robustness) or coordinate ascent
    (chance).  The result is re-verified with the exact bounds.
    """
    if lx_max is None:
        lx_max = BoundPair(model.lx_max_lo, model.lx_max_hi, role="state")
    diagnostics: dict = {}

    lp = lp_relaxation_init(model, objective, caps, lx_max)
    diagnostics["lp_value"] = lp.value
    diagnostics["lp_iterations"] = lp.iterations
    diagnostics["lp_growth_rate"] = lp.growth_rate
    diagnostics["lp_diverged"] = lp.diverged

    if lp_only:
        if lp.value <= zero_tol:
            raise ZeroCertificate(
                f"linear relaxation produced no certificate (value {lp.value:.3e})"
            )
        return _assemble(model, objective, lp.lu, lp.lx, lp.value,
                         "certified-linear-relaxation", caps, diagnostics)

    if objective.kind == "robustness":
        weights = objective.weights if objective.weights is not None else np.ones(model.n_inputs)
        weights = np.asarray(weights, dtype=float)

        def feasible(lam: float):
            lu = BoundPair(lam * weights, lam * weights, role="input")
            try:
                lx, _ = certify_fixed_u(model, lu, lx_max, caps)
                return lu, lx
            except InfeasibleCertificate:
                return None

        lam, lu, lx, probes = _bisect_from(feasible, lp.value, model)
        diagnostics["probes"] = probes
        if lam <= zero_tol or lu is None:
            raise ZeroCertificate(f"robustness level collapsed to {lam:.3e}")
        return _assemble(model, objective, lu, lx, lam, "certified-nonlinear", caps, diagnostics)

    if objective.kind == "loadability":
        d_p = objective.direction_p if objective.direction_p is not None else np.zeros(model.net.n_bus)
        d_q = objective.direction_q if objective.direction_q is not None else np.zeros(model.net.n_bus)
        v_lo, v_hi = _operational_band(model)

        def feasible(t: float):
            lu = loadability_box(model, d_p, d_q, t, v_lo, v_hi)
            try:
                lx, _ = certify_fixed_u(model, lu, lx_max, caps)
                return lu, lx
            except InfeasibleCertificate:
                return None

        t_star, lu, lx, probes = _bisect_from(feasible, lp.value, model)
        diagnostics["probes"] = probes
        if t_star <= zero_tol or lu is None:
            raise ZeroCertificate(f"loadability level collapsed to {t_star:.3e}")
        return _assemble(model, objective, lu, lx, t_star, "certified-nonlinear", caps, diagnostics)

    # chance: coordinate ascent on the box sides
    std = objective.std_devs if objective.std_devs is not None else np.ones(model.n_inputs)
    std = np.asarray(std, dtype=float)
    lu = lp.lu.copy()
    try:
        lx, _ = certify_fixed_u(model, lu, lx_max, caps)
    except InfeasibleCertificate:
        lu = BoundPair.zeros(model.n_inputs, role="input")
        lx, _ = certify_fixed_u(model, lu, lx_max, caps)
    score = chance_score(lu, std)
    steps = std / 2.0
    probes = 0
    for sweep in range(60):
        improved = 0.0
        for j in range(model.n_inputs):
            for side in ("hi", "lo"):
                step = steps[j]
                while step > 1e-6 * std[j]:
                    cand = lu.copy()
                    arr = cand.hi if side == "hi" else cand.lo
                    cap = model.lu_max_hi[j] if side == "hi" else model.lu_max_lo[j]
                    arr[j] = min(arr[j] + step, cap)
                    if arr[j] <= (lu.hi[j] if side == "hi" else lu.lo[j]):
                        break
                    try:
                        cand_lx, _ = certify_fixed_u(model, cand, lx_max, caps)
                        probes += 1
                    except InfeasibleCertificate:
                        probes += 1
                        step *= 0.5
                        continue
                    new_score = chance_score(cand, std)
                    improved = max(improved, new_score - score)
                    lu, lx, score = cand, cand_lx, new_score
                    break
        if improved <= 1e-4:
            break
    diagnostics["probes"] = probes
    if score <= zero_tol:
        raise ZeroCertificate(f"chance score collapsed to {score:.3e}")
    return _assemble(model, objective, lu, lx, score, "certified-nonlinear", caps, diagnostics)


def _bisect_from(feasible, start_level: float, model, rel_tol: float = 1e-3):
    """Bisection with a feasible starting level from the relaxation."""
    payload = None
    lo = 0.0
    if start_level > 0:
        payload = feasible(start_level)
        if payload is not None:
            lo = start_level
    if payload is None:
        scale = max(float(np.max(np.abs(model.ustar), initial=0.0)), 1.0)
        probe_level = 1e-6 * scale
        payload = feasible(probe_level)
        if payload is not None:
            lo = probe_level
        else:
            probe_level = 1e-12
            payload = feasible(probe_level)
            if payload is None:
                return 0.0, None, None, 2
            lo = probe_level
    probes = 0
    hi = max(2.0 * lo, 1e-9)
    while True:
        res = feasible(hi)
        probes += 1
        if res is None:
            break
        lo, payload = hi, res
        hi *= 2.0
        if probes > 80:
            break
    while (hi - lo) > rel_tol * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        res = feasible(mid)
        probes += 1
        if res is None:
            hi = mid
        else:
            lo, payload = mid, res
    return lo, payload[0], payload[1], probes


def _assemble(model, objective, lu, lx, value, status, caps, diagnostics) -> Certificate:
    ok_s, slack_s = self_map_holds(model, lx, lu, caps)
    ok_o, slack_o = operational_holds(model, lx, lu, caps)
    if not (ok_s and ok_o):
        raise InfeasibleCertificate(
            "certificate failed exact re-verification "
            f"(self-map slack {slack_s.min():.3e}, operational slack "
            f"{slack_o.min(initial=0.0):.3e})"
        )
    binding = []
    r = model.n_rows
    for i in np.nonzero(slack_s[:r] <= 1e-6)[0]:
        binding.append(f"selfmap:{model.a_labels[i]}:hi")
    for i in np.nonzero(slack_s[r:] <= 1e-6)[0]:
        binding.append(f"selfmap:{model.a_labels[i]}:lo")
    if slack_o.size:
        for i in np.nonzero(slack_o <= 1e-6)[0]:
            binding.append(f"operational:{model.t_labels[i]}")
    diagnostics["binding"] = binding[:50]
    diagnostics["n_binding"] = len(binding)
    v_lo, v_hi = certified_voltage_band(model, lx)
    box = injection_box(model, lu, v_lo, v_hi)
    return Certificate(
        lu=lu,
        lx=lx,
        objective_kind=objective.kind,
        objective_value=value,
        injection_box=box,
        status=status,
        v_lo=v_lo,
        v_hi=v_hi,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# direct fixed-point verification
# ---------------------------------------------------------------------------

def verify_brouwer(
    model: FixedPointModel,
    certificate,
    n_samples: int = 100,
    seed: int = 0,
    max_iter: int = 500,
    residual_tol: float = 1e-9,
    excursion_tol: float = 1e-9,
) -> dict:
    """Iterate the fixed-point map from the origin for sampled inputs.

    ``certificate`` is a Certificate or a (lu, lx) pair.  Every iterate must
    remain inside the admissibility box and the iteration must converge;
    failures are recorded rather than raised since they falsify the
    implementation, not the theorem.
    """
    if hasattr(certificate, "lu"):
        lu, lx = certificate.lu, certificate.lx
    else:
        lu, lx = certificate
    rng = np.random.default_rng(seed)
    k = model.n_inputs
    samples: list[np.ndarray] = []
    if k <= 10:
        for bits in range(2 ** k):
            u = np.array([lu.hi[j] if (bits >> j) & 1 else -lu.lo[j] for j in range(k)])
            samples.append(u)
    else:
        for _ in range(n_samples):
            signs = rng.integers(0, 2, size=k)
            samples.append(np.where(signs == 1, lu.hi, -lu.lo))
    for _ in range(n_samples):
        samples.append(rng.uniform(-lu.lo, lu.hi))

    worst_residual = 0.0
    worst_excursion = -np.inf
    failures = []
    for idx, u in enumerate(samples):
        x = np.zeros(model.n_states)
        converged = False
        for _ in range(max_iter):
            x_new = model.picard_step(x, u)
            ax = model.A @ x_new
            exc = max(
                float(np.max(ax - lx.hi, initial=-np.inf)),
                float(np.max(-ax - lx.lo, initial=-np.inf)),
            )
            worst_excursion = max(worst_excursion, exc)
            if exc > excursion_tol:
                failures.append({"sample": idx, "kind": "excursion", "value": exc})
                break
            if float(np.max(np.abs(x_new - x))) <= 1e-13:
                x = x_new
                converged = True
                break
            x = x_new
        else:
            pass
        if failures and failures[-1].get("sample") == idx:
            continue
        resid = float(np.max(np.abs(model.fixed_point_residual(x, u))))
        worst_residual = max(worst_residual, resid)
        if not converged and resid > residual_tol:
            failures.append({"sample": idx, "kind": "no-convergence", "value": resid})
    return {
        "samples": len(samples),
        "failures": failures,
        "worst_residual": worst_residual,
        "worst_excursion": worst_excursion,
    }
