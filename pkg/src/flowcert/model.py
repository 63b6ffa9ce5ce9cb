"""Admittance-form fixed-point model of the power flow around a base point.

State deviations are x = (theta at generators, theta at loads, log-V at
loads); the slack angle and generator magnitudes stay at their base values.
Inputs are selected coordinates of the nodal admittance vector
(g = p/V^2 - Re(y_d), b = -q/V^2 - Im(y_d)) whose equation rows form the
square system solved by the fixed-point map.

The model is immutable after construction; all evaluation methods are
reentrant and may be called concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .netio import PowerNetwork, EdgeAdmittanceStructure, build_edge_admittances, LOAD
from .powerflow import OperatingPoint, LimitSet, branch_flows


class SingularJacobianError(RuntimeError):
    """Base Jacobian of the admittance-form equations is singular."""


class ModelError(ValueError):
    pass


def split_pm(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise positive/negative parts: F = F_plus - F_minus, both >= 0."""
    F = np.asarray(F, dtype=float)
    return np.maximum(F, 0.0), np.maximum(-F, 0.0)


@dataclass(frozen=True)
class InputSet:
    """Selected input coordinates as (bus position, "g"|"b") pairs."""

    coords: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if len(set(self.coords)) != len(self.coords):
            raise ModelError("duplicate input coordinates")

    @staticmethod
    def all_loads(net: PowerNetwork) -> "InputSet":
        coords = [(k, "g") for k in net.loads] + [(k, "b") for k in net.loads]
        return InputSet(tuple(coords))

    @staticmethod
    def load_p(net: PowerNetwork, buses) -> "InputSet":
        return InputSet(tuple((k, "g") for k in buses))


@dataclass(eq=False)
class FixedPointModel:
    net: PowerNetwork
    base: OperatingPoint
    ean: EdgeAdmittanceStructure
    inputs: InputSet

    # index maps
    eq_rows: list[tuple[str, int]]          # ("g"|"b", bus) per equation row
    state_labels: list[tuple[str, int]]     # ("theta"|"rho", bus) per state
    a_labels: list[tuple[str, int]]         # ("theta_e"|"rho_e"|"rho_bus", idx)
    input_rows: np.ndarray                  # equation row per input coordinate

    # base edge quantities
    theta_e: np.ndarray
    rho_e: np.ndarray
    yhat_f: np.ndarray                      # per-edge from-side scaled admittance
    yhat_t: np.ndarray                      # per-edge to-side scaled admittance

    # operators
    M: sp.csr_matrix                        # equations x 4m
    L: sp.csr_matrix                        # 4m x states
    A: sp.csr_matrix                        # rows x states
    Dtheta: sp.csr_matrix
    Drho: sp.csr_matrix
    J: sp.csc_matrix
    lu: spla.SuperLU

    # dense certificate matrices and absolute values
    Bmat: np.ndarray
    absB: np.ndarray
    Cmat: np.ndarray
    absC: np.ndarray
    T: sp.csr_matrix
    t_offsets: np.ndarray
    t_labels: list[str]
    Dmat: np.ndarray
    absD: np.ndarray
    Emat: np.ndarray
    absE: np.ndarray
    hstar: np.ndarray

    ustar: np.ndarray
    f0: np.ndarray
    lx_max_lo: np.ndarray
    lx_max_hi: np.ndarray
    lu_max_lo: np.ndarray
    lu_max_hi: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.net.n_branch

    @property
    def n_states(self) -> int:
        return len(self.state_labels)

    @property
    def n_rows(self) -> int:
        return len(self.a_labels)

    @property
    def n_inputs(self) -> int:
        return len(self.inputs.coords)

    @property
    def theta_rows(self) -> slice:
        return slice(0, self.n_edges)

    @property
    def rho_rows(self) -> slice:
        return slice(self.n_edges, 2 * self.n_edges)

    # sign-split views (small cases / tests; hot paths use Cmat with absC)
    @property
    def Bp(self):
        return split_pm(self.Bmat)[0]

    @property
    def Bm(self):
        return split_pm(self.Bmat)[1]

    @property
    def Cp(self):
        return split_pm(self.Cmat)[0]

    @property
    def Cm(self):
        return split_pm(self.Cmat)[1]

    @property
    def Dp(self):
        return split_pm(self.Dmat)[0]

    @property
    def Dm(self):
        return split_pm(self.Dmat)[1]

    @property
    def Ep(self):
        return split_pm(self.Emat)[0]

    @property
    def Em(self):
        return split_pm(self.Emat)[1]

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------
    def edge_differences(self, x: np.ndarray):
        return self.Dtheta @ x, self.Drho @ x

    def primitives(self, x: np.ndarray) -> np.ndarray:
        """Stacked hyperbolic/trigonometric edge products at deviation x.

        Accepts a single state vector or a (n_states, N) batch.
        """
        dth, drh = self.edge_differences(np.asarray(x, dtype=float))
        ch, sh = np.cosh(drh), np.sinh(drh)
        co, si = np.cos(dth), np.sin(dth)
        return np.concatenate([ch * co, sh * co, ch * si, sh * si], axis=0)

    def residual2(self, x: np.ndarray) -> np.ndarray:
        """Second-order remainder of the primitives at deviation x."""
        x = np.asarray(x, dtype=float)
        f = self.primitives(x)
        lin = self.L @ x
        if f.ndim == 1:
            return f - self.f0 - lin
        return f - self.f0[:, None] - lin

    def solve_J(self, rhs: np.ndarray, trans: str = "N") -> np.ndarray:
        return self.lu.solve(np.asarray(rhs, dtype=float), trans=trans)

    def input_image(self, u: np.ndarray) -> np.ndarray:
        """J*^-1 R u: state image of an input deviation vector."""
        rhs = np.zeros(len(self.eq_rows))
        rhs[self.input_rows] = u
        return self.solve_J(rhs)

    def phi(self, x: np.ndarray) -> np.ndarray:
        """Nonlinear correction -J*^-1 M residual2(x)."""
        return -self.solve_J(self.M @ self.residual2(x))

    def fixed_point_residual(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.input_image(u) - self.phi(x)

    def picard_step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.input_image(u) + self.phi(x)

    def point_to_state(self, point: OperatingPoint) -> np.ndarray:
        """Map a solved operating point to the deviation state vector."""
        dtheta = point.theta - self.base.theta
        drho = point.rho - self.base.rho
        x = np.empty(self.n_states)
        for i, (kind, bus) in enumerate(self.state_labels):
            x[i] = dtheta[bus] if kind == "theta" else drho[bus]
        return x

    def a_image(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def in_admissible(self, x: np.ndarray, lo, hi, tol: float = 1e-9) -> bool:
        ax = self.A @ x
        return bool(np.all(ax <= hi + tol) and np.all(-ax <= lo + tol))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def build_model(
    net: PowerNetwork,
    base: OperatingPoint,
    inputs: InputSet,
    limits: LimitSet,
    caps_theta: float = 0.5,
    caps_rho: float = 0.2,
) -> FixedPointModel:
    """Assemble the fixed-point model and certificate matrices at a base point."""
    if base.max_mismatch > 1e-7:
        raise ModelError(f"base point is not solved (mismatch {base.max_mismatch:.2e})")
    ean = build_edge_admittances(net)
    n = net.n_bus
    m = net.n_branch
    gens = net.generators
    loads = net.loads
    slack = net.slack

    eq_rows = [("g", k) for k in gens] + [("g", k) for k in loads] + [("b", k) for k in loads]
    eq_index = {lab: i for i, lab in enumerate(eq_rows)}
    state_labels = (
        [("theta", k) for k in gens]
        + [("theta", k) for k in loads]
        + [("rho", k) for k in loads]
    )
    state_index = {lab: i for i, lab in enumerate(state_labels)}
    n_eq = len(eq_rows)
    n_x = len(state_labels)
    if n_eq != n_x:
        raise ModelError("equation/state count mismatch")

    for bus, comp in inputs.coords:
        if comp == "g" and bus == slack:
            raise ModelError("slack bus g-coordinate cannot be an input")
        if comp == "b" and net.buses[bus].kind != LOAD:
            raise ModelError("b-coordinate inputs exist only at load buses")
    input_rows = np.array([eq_index[(c, b)] for b, c in inputs.coords], dtype=int)

    f_idx = np.array([br.f for br in net.branches], dtype=int)
    t_idx = np.array([br.t for br in net.branches], dtype=int)
    theta_e = base.theta[f_idx] - base.theta[t_idx]
    rho_e = base.rho[f_idx] - base.rho[t_idx]

    scale_t = np.exp(rho_e + 1j * theta_e)
    scale_f = np.exp(-rho_e - 1j * theta_e)
    Yhat_t = ean.Yt @ sp.diags(scale_t)
    Yhat_f = ean.Yf @ sp.diags(scale_f)
    Yp = (Yhat_t + Yhat_f).tocsr()
    Ym = (Yhat_t - Yhat_f).tocsr()

    # per-edge scalar hat admittances (single nonzero per column)
    yhat_f = np.asarray(ean.Yf[f_idx, np.arange(m)]).ravel() * scale_f
    yhat_t = np.asarray(ean.Yt[t_idx, np.arange(m)]).ravel() * scale_t

    g_rows = gens + loads
    Mg = sp.hstack(
        [Yp[g_rows].real, Ym[g_rows].real, -Ym[g_rows].imag, -Yp[g_rows].imag]
    )
    Mb = sp.hstack([Yp[loads].imag, Ym[loads].imag, Ym[loads].real, Yp[loads].real])
    M = sp.vstack([Mg, Mb]).tocsr()

    # edge-difference operators on the state vector
    def _difference_matrix(kind: str) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for e in range(m):
            for bus, sign in ((f_idx[e], 1.0), (t_idx[e], -1.0)):
                lab = (kind, bus)
                if lab in state_index:
                    rows.append(e)
                    cols.append(state_index[lab])
                    vals.append(sign)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, n_x))

    Dtheta = _difference_matrix("theta")
    Drho = _difference_matrix("rho")

    Z = sp.csr_matrix((m, n_x))
    L = sp.vstack([Z, Drho, Dtheta, Z]).tocsr()

    rho_bus_rows = sp.csr_matrix(
        (np.ones(len(loads)), (np.arange(len(loads)), [state_index[("rho", k)] for k in loads])),
        shape=(len(loads), n_x),
    )
    A = sp.vstack([Dtheta, Drho, rho_bus_rows]).tocsr()
    a_labels = (
        [("theta_e", e) for e in range(m)]
        + [("rho_e", e) for e in range(m)]
        + [("rho_bus", k) for k in loads]
    )
    r = len(a_labels)

    J = (M @ L).tocsc()
    try:
        lu = spla.splu(J)
    except RuntimeError as exc:
        raise SingularJacobianError(f"base Jacobian is singular: {exc}") from exc
    diagU = np.abs(lu.U.diagonal())
    if diagU.min() < 1e-12 * max(1.0, diagU.max()):
        raise SingularJacobianError(
            f"base Jacobian is numerically singular (pivot ratio {diagU.min() / diagU.max():.2e})"
        )

    # A J^-1 and the certificate matrices
    XA = lu.solve(A.toarray().T, trans="T").T        # r x n_x
    Bmat = XA[:, input_rows]
    Cmat = -(M.T @ XA.T).T                            # r x 4m
    absB = np.abs(Bmat)
    absC = np.abs(Cmat)

    f0 = np.concatenate([np.ones(m), np.zeros(3 * m)])

    # base admittance inputs u* and self-consistency
    vstar2 = base.v ** 2
    g_star = base.p / vstar2 - ean.y_d.real
    b_star = -base.q / vstar2 - ean.y_d.imag
    ustar = np.array([g_star[k] if c == "g" else b_star[k] for c, k in eq_rows])
    resid = M @ f0 - ustar
    if np.max(np.abs(resid)) > 1e-6:
        raise ModelError(
            f"model self-consistency failed (|M f0 - u*| = {np.max(np.abs(resid)):.2e}); "
            "base point may not be solved on this network"
        )

    # constraint stack
    t_rows_items: list[tuple[np.ndarray, np.ndarray]] = []
    t_offsets: list[float] = []
    t_labels: list[str] = []

    v_worst = np.array(
        [limits.v_max[k] if net.buses[k].kind == LOAD else base.v[k] for k in range(n)]
    )

    if limits.check_thermal:
        sf, st = branch_flows(net, base)
        for e in range(m):
            smax = limits.s_max[e]
            if not np.isfinite(smax):
                continue
            for side, s_base, yhat, yself, kbus in (
                ("f", sf[e], yhat_f[e], ean.y_ff[e], f_idx[e]),
                ("t", st[e], yhat_t[e], ean.y_tt[e], t_idx[e]),
            ):
                lp, lq = _apparent_power_split(s_base, smax)
                v2 = v_worst[kbus] ** 2
                if side == "f":
                    grow = np.array([yhat.real, -yhat.real, yhat.imag, -yhat.imag])
                    brow = np.array([yhat.imag, -yhat.imag, -yhat.real, yhat.real])
                else:
                    grow = np.array([yhat.real, yhat.real, -yhat.imag, -yhat.imag])
                    brow = np.array([yhat.imag, yhat.imag, yhat.real, yhat.real])
                cols = np.array([e, m + e, 2 * m + e, 3 * m + e])
                t_rows_items.append((cols, grow))
                t_offsets.append(yself.real - lp / v2)
                t_labels.append(f"thermal_{side}_p_hi[{e}]")
                t_rows_items.append((cols, -grow))
                t_offsets.append(-yself.real - lp / v2)
                t_labels.append(f"thermal_{side}_p_lo[{e}]")
                t_rows_items.append((cols, -brow))
                t_offsets.append(-yself.imag - lq / v2)
                t_labels.append(f"thermal_{side}_q_hi[{e}]")
                t_rows_items.append((cols, brow))
                t_offsets.append(yself.imag - lq / v2)
                t_labels.append(f"thermal_{side}_q_lo[{e}]")

    if limits.check_qgen:
        for k in gens:
            if not (np.isfinite(limits.q_min[k]) or np.isfinite(limits.q_max[k])):
                continue
            cols_q, vals_q = reactive_row(Yp, Ym, k)
            v2 = base.v[k] ** 2
            if np.isfinite(limits.q_max[k]):
                t_rows_items.append((cols_q, -vals_q))
                t_offsets.append(-ean.y_d.imag[k] - limits.q_max[k] / v2)
                t_labels.append(f"qgen_hi[{k}]")
            if np.isfinite(limits.q_min[k]):
                t_rows_items.append((cols_q, vals_q))
                t_offsets.append(ean.y_d.imag[k] + limits.q_min[k] / v2)
                t_labels.append(f"qgen_lo[{k}]")

    n_con = len(t_offsets)
    if n_con:
        rows_i = np.concatenate(
            [np.full(len(cols), i) for i, (cols, _) in enumerate(t_rows_items)]
        )
        cols_i = np.concatenate([cols for cols, _ in t_rows_items])
        vals_i = np.concatenate([vals for _, vals in t_rows_items])
        T = sp.csr_matrix((vals_i, (rows_i, cols_i)), shape=(n_con, 4 * m))
        TL = (T @ L).toarray()
        W = lu.solve(TL.T, trans="T").T                 # n_con x n_x
        Dmat = W[:, input_rows]
        Emat = T.toarray() - (M.T @ W.T).T
        hstar = T @ f0 + np.array(t_offsets)
    else:
        T = sp.csr_matrix((0, 4 * m))
        Dmat = np.zeros((0, len(input_rows)))
        Emat = np.zeros((0, 4 * m))
        hstar = np.zeros(0)

    off = np.array(t_offsets) if n_con else np.zeros(0)
    if n_con and hstar.max(initial=-np.inf) > 0:
        bad = int(np.argmax(hstar))
        raise ModelError(
            f"base point violates operational constraint {t_labels[bad]} "
            f"(h* = {hstar[bad]:.3e} > 0)"
        )

    # per-row admissibility caps
    lx_hi = np.empty(r)
    lx_lo = np.empty(r)
    lx_hi[:m] = caps_theta
    lx_lo[:m] = caps_theta
    if limits.check_angle:
        for e in range(m):
            if np.isfinite(limits.ang_max[e]):
                lx_hi[e] = min(lx_hi[e], limits.ang_max[e] - theta_e[e])
            if np.isfinite(limits.ang_min[e]):
                lx_lo[e] = min(lx_lo[e], theta_e[e] - limits.ang_min[e])
    lx_hi[m : 2 * m] = caps_rho
    lx_lo[m : 2 * m] = caps_rho
    for i, k in enumerate(loads):
        hi = np.log(limits.v_max[k]) - base.rho[k]
        lo = base.rho[k] - np.log(limits.v_min[k])
        lx_hi[2 * m + i] = min(caps_rho, hi)
        lx_lo[2 * m + i] = min(caps_rho, lo)
    if lx_hi.min() < 0 or lx_lo.min() < 0:
        raise ModelError("base point lies outside an operational band (negative lx_max)")

    # input box caps from generator active power limits
    k_in = len(input_rows)
    lu_hi = np.full(k_in, np.inf)
    lu_lo = np.full(k_in, np.inf)
    if limits.check_pgen:
        for j, (bus, comp) in enumerate(inputs.coords):
            if comp == "g" and net.buses[bus].kind != LOAD:
                v2 = base.v[bus] ** 2
                if np.isfinite(limits.p_max[bus]):
                    lu_hi[j] = max(0.0, (limits.p_max[bus] - base.p[bus]) / v2)
                if np.isfinite(limits.p_min[bus]):
                    lu_lo[j] = max(0.0, (base.p[bus] - limits.p_min[bus]) / v2)

    return FixedPointModel(
        net=net,
        base=base,
        ean=ean,
        inputs=inputs,
        eq_rows=eq_rows,
        state_labels=state_labels,
        a_labels=a_labels,
        input_rows=input_rows,
        theta_e=theta_e,
        rho_e=rho_e,
        yhat_f=yhat_f,
        yhat_t=yhat_t,
        M=M,
        L=L,
        A=A,
        Dtheta=Dtheta,
        Drho=Drho,
        J=J,
        lu=lu,
        Bmat=Bmat,
        absB=absB,
        Cmat=Cmat,
        absC=absC,
        T=T,
        t_offsets=off,
        t_labels=t_labels,
        Dmat=Dmat,
        absD=np.abs(Dmat),
        Emat=Emat,
        absE=np.abs(Emat),
        hstar=hstar,
        ustar=ustar,
        f0=f0,
        lx_max_lo=lx_lo,
        lx_max_hi=lx_hi,
        lu_max_lo=lu_lo,
        lu_max_hi=lu_hi,
    )


def _apparent_power_split(s_base: complex, s_max: float, floor: float = 0.2):
    """Allocate an apparent-power budget to active/reactive transfer limits.

    Weights follow the base flow composition, floored so that zero-flow
    coordinates keep headroom; the allocation satisfies lp^2 + lq^2 = s_max^2.
    """
    mag = abs(s_base)
    if mag > 1e-9:
        wp = max(abs(s_base.real) / mag, floor)
        wq = max(abs(s_base.imag) / mag, floor)
    else:
        wp = wq = 1.0
    scale = s_max / np.hypot(wp, wq)
    return wp * scale, wq * scale


def reactive_row(Yp: sp.csr_matrix, Ym: sp.csr_matrix, k: int):
    """Coefficient row of the nodal susceptance pattern at bus k.

    The returned row r satisfies r . f(x) = -q_k/V_k^2 - Im(y_d_k) on
    solutions; reactive generation constraints use its negation.
    """
    m = Yp.shape[1]
    ip = Yp[k].tocoo()
    im = Ym[k].tocoo()
    cols = np.concatenate([ip.col, m + im.col, 2 * m + im.col, 3 * m + ip.col])
    vals = np.concatenate([ip.data.imag, im.data.imag, im.data.real, ip.data.real])
    return cols, vals
