"""AC power flow solution, operational feasibility checks, boundary tracing.

The Newton solver works in polar coordinates with a sparse Jacobian and is
reentrant: every call builds its own state, so rays can be traced in
parallel.  A bus may carry a constant-admittance load component through the
``y_load`` argument; that component is folded into the admittance matrix so
the mismatch equations keep constant specified injections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .netio import PowerNetwork, branch_admittance_terms, bus_admittance_matrix

VOLTAGE = "voltage"
ANGLE_DIFF = "angle-difference"
P_GEN = "p-gen"
Q_GEN = "q-gen"
THERMAL = "thermal"


class NoConvergence(RuntimeError):
    """Newton iteration failed; carries the mismatch trace."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(f"{message} (mismatch trace: {['%.3e' % t for t in trace]})")
        self.trace = trace


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    """A solved (or candidate) operating point in per-unit.

    ``rho`` is the elementwise natural log of ``v``.  ``p``/``q`` are net
    nodal injections including the slack and generator reactive outputs.
    """

    v: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    iterations: int = 0
    max_mismatch: float = 0.0

    @property
    def rho(self) -> np.ndarray:
        return np.log(self.v)

    def complex_voltage(self) -> np.ndarray:
        return self.v * np.exp(1j * self.theta)


@dataclass(frozen=True)
class Violation:
    kind: str
    element: int
    value: float
    limit: float
    margin: float = 0.0  # positive amount by which the limit is exceeded


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[Violation, ...]

    @property
    def feasible(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class LimitSet:
    """Active operational limit set for feasibility checks.

    Voltage limits apply at load buses, injection limits at generator buses.
    ``s_max`` entries of +inf disable the thermal check for that branch.
    """

    v_min: np.ndarray
    v_max: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    s_max: np.ndarray
    ang_min: np.ndarray
    ang_max: np.ndarray
    check_voltage: bool = True
    check_angle: bool = True
    check_pgen: bool = True
    check_qgen: bool = True
    check_thermal: bool = True


def default_limits(
    net: PowerNetwork,
    base: OperatingPoint,
    band: float = 0.01,
    s_max_factor: float = 2.0,
    s_max_floor: float = 0.05,
    thermal: bool = True,
    qgen: bool = True,
) -> LimitSet:
    """Build the experiment limit set around a solved base point.

    The voltage band is ``band`` (fractional) around the base magnitudes.
    Branches without a case rating get ``s_max_factor`` times the base
    apparent flow, floored at ``s_max_floor`` to keep lightly loaded
    branches certifiable.
    """
    n = net.n_bus
    v_min = base.v * (1.0 - band)
    v_max = base.v * (1.0 + band)
    p_min = np.full(n, -np.inf)
    p_max = np.full(n, np.inf)
    q_min = np.full(n, -np.inf)
    q_max = np.full(n, np.inf)
    for i in net.generators:
        b = net.buses[i]
        p_min[i], p_max[i] = b.p_min, b.p_max
        q_min[i], q_max[i] = b.q_min, b.q_max
    sf, st = branch_flows(net, base)
    s_base = np.maximum(np.abs(sf), np.abs(st))
    s_max = np.empty(net.n_branch)
    ang_min = np.full(net.n_branch, -np.inf)
    ang_max = np.full(net.n_branch, np.inf)
    for e, br in enumerate(net.branches):
        s_max[e] = br.s_max if br.s_max is not None else max(s_max_factor * s_base[e], s_max_floor)
        if br.ang_min is not None:
            ang_min[e] = br.ang_min
        if br.ang_max is not None:
            ang_max[e] = br.ang_max
    return LimitSet(
        v_min=v_min,
        v_max=v_max,
        p_min=p_min,
        p_max=p_max,
        q_min=q_min,
        q_max=q_max,
        s_max=s_max,
        ang_min=ang_min,
        ang_max=ang_max,
        check_thermal=thermal,
        check_qgen=qgen,
    )


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------

def _mismatch(Ybus, V, s_spec, pv, pq):
    s = V * np.conj(Ybus @ V)
    dp = s_spec.real - s.real
    dq = s_spec.imag - s.imag
    return np.concatenate([dp[pv], dp[pq], dq[pq]])


def _jacobian(Ybus, V):
    n = len(V)
    ib = np.arange(n)
    Ibus = Ybus @ V
    diagV = sp.csr_matrix((V, (ib, ib)))
    diagI = sp.csr_matrix((Ibus, (ib, ib)))
    diagVn = sp.csr_matrix((V / np.abs(V), (ib, ib)))
    dS_dVm = diagV @ np.conj(Ybus @ diagVn) + np.conj(diagI) @ diagVn
    dS_dVa = 1j * diagV @ np.conj(diagI - Ybus @ diagV)
    return dS_dVa, dS_dVm


def _newton(Ybus, s_spec, v0, theta0, slack, pv, pq, tol, maxiter):
    V = v0 * np.exp(1j * theta0)
    pvpq = np.concatenate([pv, pq])
    trace: list[float] = []
    F = _mismatch(Ybus, V, s_spec, pv, pq)
    norm = float(np.max(np.abs(F))) if F.size else 0.0
    trace.append(norm)
    it = 0
    while norm > tol:
        if it >= maxiter:
            raise NoConvergence(f"no convergence after {maxiter} iterations", trace)
        dS_dVa, dS_dVm = _jacobian(Ybus, V)
        J11 = dS_dVa[np.ix_(pvpq, pvpq)].real
        J12 = dS_dVm[np.ix_(pvpq, pq)].real
        J21 = dS_dVa[np.ix_(pq, pvpq)].imag
        J22 = dS_dVm[np.ix_(pq, pq)].imag
        J = sp.bmat([[J11, J12], [J21, J22]], format="csc")
        try:
            dx = spla.spsolve(J, F)
        except RuntimeError as exc:
            raise NoConvergence(f"singular Jacobian: {exc}", trace) from exc
        if not np.all(np.isfinite(dx)):
            raise NoConvergence("singular Jacobian (non-finite step)", trace)
        n_a = len(pvpq)
        Va = np.angle(V)
        Vm = np.abs(V)
        Va[pvpq] += dx[:n_a]
        Vm[pq] += dx[n_a:]
        if np.any(Vm <= 0):
            raise NoConvergence("voltage magnitude collapsed to zero", trace)
        V = Vm * np.exp(1j * Va)
        F = _mismatch(Ybus, V, s_spec, pv, pq)
        norm = float(np.max(np.abs(F)))
        trace.append(norm)
        it += 1
    return V, it, norm


def _bus_sets(net: PowerNetwork):
    slack = net.slack
    pv = np.array(net.generators, dtype=int)
    pq = np.array(net.loads, dtype=int)
    return slack, pv, pq


def _start_point(net: PowerNetwork, init: OperatingPoint | None):
    if init is not None:
        return init.v.copy(), init.theta.copy()
    v0 = np.array([b.v_set for b in net.buses])
    th0 = np.array([b.theta0 for b in net.buses])
    th0 -= th0[net.slack]
    return v0, th0


def solve_base(
    net: PowerNetwork,
    init: OperatingPoint | None = None,
    tol: float = 1e-8,
    maxiter: int = 40,
) -> OperatingPoint:
    """Solve the power flow at the case's specified injections."""
    p = np.array([b.p_base for b in net.buses])
    q = np.array([b.q_base for b in net.buses])
    return solve_at_injection(net, p, q, init=init, tol=tol, maxiter=maxiter)


def solve_at_injection(
    net: PowerNetwork,
    p_spec: np.ndarray,
    q_spec: np.ndarray,
    init: OperatingPoint | None = None,
    y_load: np.ndarray | None = None,
    tol: float = 1e-8,
    maxiter: int = 40,
    Ybus: sp.spmatrix | None = None,
) -> OperatingPoint:
    """Solve with overridden injections at non-slack buses.

    ``y_load`` adds a constant-admittance component per bus (the nodal
    admittance ``conj(s)/V^2`` form); the specified ``p_spec``/``q_spec`` at
    such a bus cover only the constant-power remainder.  ``Ybus`` may be
    passed to reuse an assembled admittance matrix across calls.
    """
    if Ybus is None:
        Ybus = bus_admittance_matrix(net)
    Ybus = Ybus.tocsr()
    if y_load is not None:
        Ybus = Ybus - sp.diags(y_load)
    slack, pv, pq = _bus_sets(net)
    v0, th0 = _start_point(net, init)
    for i in np.concatenate([[slack], pv]):
        if init is None:
            v0[i] = net.buses[i].v_set
    s_spec = p_spec + 1j * q_spec
    V, it, norm = _newton(Ybus, s_spec, v0, th0, slack, pv, pq, tol, maxiter)
    s_full = V * np.conj(Ybus @ V)
    if y_load is not None:
        s_full = s_full + np.conj(y_load) * np.abs(V) ** 2
    theta = np.angle(V) - np.angle(V[slack])
    return OperatingPoint(
        v=np.abs(V),
        theta=theta,
        p=s_full.real,
        q=s_full.imag,
        iterations=it,
        max_mismatch=norm,
    )


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------

def branch_flows(net: PowerNetwork, point: OperatingPoint):
    """Complex apparent power at the from and to ends of every branch."""
    vc = point.complex_voltage()
    sf = np.zeros(net.n_branch, dtype=complex)
    st = np.zeros(net.n_branch, dtype=complex)
    for e, br in enumerate(net.branches):
        ff, ft, tf, tt = branch_admittance_terms(br)
        vf, vt = vc[br.f], vc[br.t]
        sf[e] = vf * np.conj(ff * vf + ft * vt)
        st[e] = vt * np.conj(tf * vf + tt * vt)
    return sf, st


def check_point_feasible(
    net: PowerNetwork, point: OperatingPoint, limits: LimitSet
) -> FeasibilityReport:
    """Evaluate every constraint in the active limit set at a solved point."""
    out: list[Violation] = []
    if limits.check_voltage:
        for i in net.loads:
            v = point.v[i]
            if v < limits.v_min[i]:
                out.append(Violation(VOLTAGE, i, v, limits.v_min[i]))
            elif v > limits.v_max[i]:
                out.append(Violation(VOLTAGE, i, v, limits.v_max[i]))
    if limits.check_angle:
        for e, br in enumerate(net.branches):
            d = point.theta[br.f] - point.theta[br.t]
            if d < limits.ang_min[e]:
                out.append(Violation(ANGLE_DIFF, e, d, limits.ang_min[e]))
            elif d > limits.ang_max[e]:
                out.append(Violation(ANGLE_DIFF, e, d, limits.ang_max[e]))
    if limits.check_pgen:
        for i in net.generators:
            p = point.p[i]
            if p < limits.p_min[i]:
                out.append(Violation(P_GEN, i, p, limits.p_min[i]))
            elif p > limits.p_max[i]:
                out.append(Violation(P_GEN, i, p, limits.p_max[i]))
    if limits.check_qgen:
        for i in net.generators:
            qv = point.q[i]
            if qv < limits.q_min[i]:
                out.append(Violation(Q_GEN, i, qv, limits.q_min[i]))
            elif qv > limits.q_max[i]:
                out.append(Violation(Q_GEN, i, qv, limits.q_max[i]))
    if limits.check_thermal:
        sf, st = branch_flows(net, point)
        for e in range(net.n_branch):
            lim = limits.s_max[e]
            if not np.isfinite(lim):
                continue
            worst = max(abs(sf[e]), abs(st[e]))
            if worst > lim:
                out.append(Violation(THERMAL, e, worst, lim))
    return FeasibilityReport(violations=tuple(out))


# ---------------------------------------------------------------------------
# Boundary tracing
# ---------------------------------------------------------------------------

@dataclass
class RayTrace:
    t_max: float
    history: list[tuple[float, bool]] = field(default_factory=list)


def ray_boundary(
    net: PowerNetwork,
    base: OperatingPoint,
    d_p: np.ndarray,
    d_q: np.ndarray,
    limits: LimitSet,
    rel_tol: float = 1e-3,
    t_init: float = 1.0,
    t_cap: float = 1e6,
    y_load: np.ndarray | None = None,
    warm_start: bool = True,
) -> RayTrace:
    """Largest feasible step along an injection-space ray, by bisection.

    A probe is feasible when the power flow converges and the point passes
    the active limit set; non-convergence counts as infeasible, which is
    conservative for the true region.  Probes are warm-started from the
    solution at the largest feasible step found so far.
    """
    if np.max(np.abs(d_p)) == 0 and np.max(np.abs(d_q)) == 0:
        raise ValueError("ray direction must be nonzero")
    base_report = check_point_feasible(net, base, limits)
    if not base_report.feasible:
        raise ValueError(f"base point infeasible: {base_report.violations[:3]}")

    # constant-power remainder of the base injections: the y_load component
    # already reproduces its share of the base power at the base voltage
    p_ref, q_ref = base.p, base.q
    if y_load is not None:
        v2 = base.v ** 2
        p_ref = base.p - y_load.real * v2
        q_ref = base.q + y_load.imag * v2

    history: list[tuple[float, bool]] = []
    best: tuple[float, OperatingPoint] = (0.0, base)
    Ybus = bus_admittance_matrix(net)

    def probe(t: float) -> bool:
        nonlocal best
        init = best[1] if warm_start else None
        try:
            pt = solve_at_injection(
                net, p_ref + t * d_p, q_ref + t * d_q, init=init, y_load=y_load,
                Ybus=Ybus,
            )
        except NoConvergence:
            history.append((t, False))
            return False
        ok = check_point_feasible(net, pt, limits).feasible
        history.append((t, ok))
        if ok and t > best[0]:
            best = (t, pt)
        return ok

    lo, hi = 0.0, t_init
    while probe(hi):
        lo, hi = hi, 2.0 * hi
        if hi > t_cap:
            raise RuntimeError(f"ray appears unbounded beyond t={t_cap}")
    while (hi - lo) > rel_tol * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return RayTrace(t_max=lo, history=history)
