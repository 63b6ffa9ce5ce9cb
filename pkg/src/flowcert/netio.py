"""Network input: MATPOWER case parsing and branch admittance structure.

Everything is converted to per-unit on the system MVA base at parse time.
All functions here are pure and operate on immutable inputs, so they are
safe to call concurrently.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

SLACK = "slack"
GENERATOR = "generator"
LOAD = "load"

_INF = float("inf")


class CaseError(ValueError):
    """Raised for malformed or inconsistent case input."""


@dataclass(frozen=True)
class Bus:
    """A single bus with per-unit shunt, limits, and base injection.

    ``p_base``/``q_base`` are the net specified injections (generation minus
    load).  Injection limits are aggregated generator limits; load buses
    carry infinities.
    """

    id: int
    kind: str
    g_sh: float = 0.0
    b_sh: float = 0.0
    v_min: float = 0.0
    v_max: float = _INF
    p_min: float = -_INF
    p_max: float = _INF
    q_min: float = -_INF
    q_max: float = _INF
    p_base: float = 0.0
    q_base: float = 0.0
    v_set: float = 1.0
    theta0: float = 0.0


@dataclass(frozen=True)
class Branch:
    """A branch between bus positions ``f`` and ``t`` (0-based indices).

    ``y_re + 1j*y_im`` is the series admittance, ``b_charge`` the total line
    charging susceptance, ``tap`` the off-nominal ratio on the from side and
    ``shift`` the phase shift in radians.  ``s_max`` is None when the case
    provides no thermal rating.  ``ang_min``/``ang_max`` (radians) are None
    when the case marks the angle difference unconstrained.
    """

    f: int
    t: int
    y_re: float
    y_im: float
    b_charge: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    s_max: float | None = None
    ang_min: float | None = None
    ang_max: float | None = None

    @property
    def y_series(self) -> complex:
        return complex(self.y_re, self.y_im)


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 100.0

    def __post_init__(self):
        _validate_network(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def slack(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == SLACK)

    @property
    def generators(self) -> list[int]:
        return [i for i, b in enumerate(self.buses) if b.kind == GENERATOR]

    @property
    def loads(self) -> list[int]:
        return [i for i, b in enumerate(self.buses) if b.kind == LOAD]

    def bus_index(self, bus_id: int) -> int:
        for i, b in enumerate(self.buses):
            if b.id == bus_id:
                return i
        raise CaseError(f"unknown bus id {bus_id}")


def _validate_network(net: PowerNetwork) -> None:
    n = len(net.buses)
    if n == 0:
        raise CaseError("network has no buses")
    slacks = [b.id for b in net.buses if b.kind == SLACK]
    if len(slacks) != 1:
        raise CaseError(f"expected exactly one slack bus, found {len(slacks)}")
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseError(f"duplicate bus id(s): {dup}")
    for k, br in enumerate(net.branches):
        if not (0 <= br.f < n and 0 <= br.t < n):
            raise CaseError(f"branch {k} references a missing bus")
        if br.f == br.t:
            raise CaseError(f"branch {k} is a self-loop at bus {net.buses[br.f].id}")
        if not (math.isfinite(br.y_re) and math.isfinite(br.y_im)):
            raise CaseError(f"branch {k} has non-finite admittance")
        if abs(br.y_series) == 0.0:
            raise CaseError(f"branch {k} has zero series admittance")
        if not br.tap > 0:
            raise CaseError(f"branch {k} has non-positive tap ratio")
    # connectivity over in-service branches
    adj: list[list[int]] = [[] for _ in range(n)]
    for br in net.branches:
        adj[br.f].append(br.t)
        adj[br.t].append(br.f)
    seen = [False] * n
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    if not all(seen):
        missing = [net.buses[i].id for i, s in enumerate(seen) if not s]
        raise CaseError(f"network graph is disconnected; unreachable bus(es) {missing}")


# ---------------------------------------------------------------------------
# MATPOWER parsing
# ---------------------------------------------------------------------------

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.S)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([0-9eE+.\-]+)\s*;")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%")[0] for line in text.splitlines())


def _parse_matrix(name: str, body: str, line0: int) -> list[list[float]]:
    rows: list[list[float]] = []
    for i, raw in enumerate(body.split(";")):
        raw = raw.strip()
        if not raw:
            continue
        vals = []
        for j, tok in enumerate(raw.split()):
            try:
                vals.append(float(tok))
            except ValueError:
                raise CaseError(
                    f"syntax error in mpc.{name} near line {line0 + i + 1}, "
                    f"column {j + 1}: {tok!r} is not a number"
                ) from None
        rows.append(vals)
    return rows


def parse_matpower(text: str) -> PowerNetwork:
    """Parse MATPOWER case text (mpc struct style) into a PowerNetwork.

    Quantities are converted to per-unit on the system base.  Out-of-service
    branches are dropped and generator limits are aggregated onto buses.
    """
    clean = _strip_comments(text)

    tables: dict[str, list[list[float]]] = {}
    for m in _MATRIX_RE.finditer(clean):
        line0 = clean[: m.start(2)].count("\n")
        tables[m.group(1)] = _parse_matrix(m.group(1), m.group(2), line0)

    scalars = {m.group(1): float(m.group(2)) for m in _SCALAR_RE.finditer(clean)}

    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseError(f"missing required table mpc.{required}")
    if "baseMVA" not in scalars:
        raise CaseError("missing required scalar mpc.baseMVA")
    base = scalars["baseMVA"]
    if base <= 0:
        raise CaseError("mpc.baseMVA must be positive")

    bus_rows = tables["bus"]
    gen_rows = tables["gen"]
    branch_rows = tables["branch"]

    ids = [int(r[0]) for r in bus_rows]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseError(f"duplicate bus id(s): {dup}")
    pos = {bid: i for i, bid in enumerate(ids)}

    # aggregate in-service generators per bus
    agg: dict[int, dict[str, float]] = {}
    for r in gen_rows:
        if len(r) < 10:
            raise CaseError("mpc.gen row has fewer than 10 columns")
        if r[7] <= 0:  # status
            continue
        bid = int(r[0])
        if bid not in pos:
            raise CaseError(f"generator references missing bus {bid}")
        a = agg.setdefault(
            bid, {"pg": 0.0, "qg": 0.0, "qmax": 0.0, "qmin": 0.0, "pmax": 0.0, "pmin": 0.0, "vg": r[5]}
        )
        a["pg"] += r[1]
        a["qg"] += r[2]
        a["qmax"] += r[3]
        a["qmin"] += r[4]
        a["pmax"] += r[8]
        a["pmin"] += r[9]

    buses: list[Bus] = []
    for r in bus_rows:
        if len(r) < 13:
            raise CaseError("mpc.bus row has fewer than 13 columns")
        bid, btype = int(r[0]), int(r[1])
        pd, qd, gs, bs = r[2] / base, r[3] / base, r[4] / base, r[5] / base
        vm, va = r[7], math.radians(r[8])
        vmax, vmin = r[11], r[12]
        g = agg.get(bid)
        if btype == 3:
            kind = SLACK
        elif btype == 2:
            kind = GENERATOR if g is not None else LOAD
        elif btype == 1:
            kind = LOAD
        else:
            raise CaseError(f"bus {bid} has unsupported type {btype}")
        pg = g["pg"] / base if g else 0.0
        qg = g["qg"] / base if g else 0.0
        vset = g["vg"] if (g and kind != LOAD) else (vm if vm > 0 else 1.0)
        limits = {}
        if g and kind != LOAD:
            limits = dict(
                p_min=g["pmin"] / base,
                p_max=g["pmax"] / base,
                q_min=g["qmin"] / base,
                q_max=g["qmax"] / base,
            )
        buses.append(
            Bus(
                id=bid,
                kind=kind,
                g_sh=gs,
                b_sh=bs,
                v_min=vmin,
                v_max=vmax,
                p_base=pg - pd,
                q_base=qg - qd,
                v_set=vset,
                theta0=va,
                **limits,
            )
        )

    branches: list[Branch] = []
    for k, r in enumerate(branch_rows):
        if len(r) < 11:
            raise CaseError(f"mpc.branch row {k + 1} has fewer than 11 columns")
        fid, tid = int(r[0]), int(r[1])
        if fid not in pos or tid not in pos:
            missing = fid if fid not in pos else tid
            raise CaseError(f"branch row {k + 1} references missing bus {missing}")
        if r[10] <= 0:  # out of service
            continue
        z = complex(r[2], r[3])
        if z == 0:
            raise CaseError(f"branch row {k + 1} has zero impedance")
        y = 1.0 / z
        rate = r[5] / base if r[5] > 0 else None
        tap = r[8] if r[8] > 0 else 1.0
        shift = math.radians(r[9])
        ang_min = ang_max = None
        if len(r) >= 13:
            amin, amax = r[11], r[12]
            if not (amin == 0 and amax == 0) and abs(amin) < 360 and abs(amax) < 360:
                ang_min, ang_max = math.radians(amin), math.radians(amax)
        branches.append(
            Branch(
                f=pos[fid],
                t=pos[tid],
                y_re=y.real,
                y_im=y.imag,
                b_charge=r[4],
                tap=tap,
                shift=shift,
                s_max=rate,
                ang_min=ang_min,
                ang_max=ang_max,
            )
        )

    return PowerNetwork(buses=tuple(buses), branches=tuple(branches), base_mva=base)


def load_case(path) -> PowerNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_matpower(fh.read())


# ---------------------------------------------------------------------------
# Serialization round trip
# ---------------------------------------------------------------------------

def network_to_json(net: PowerNetwork) -> str:
    payload = {
        "base_mva": net.base_mva,
        "buses": [asdict(b) for b in net.buses],
        "branches": [asdict(b) for b in net.branches],
    }
    return json.dumps(payload, sort_keys=True)


def network_from_json(text: str) -> PowerNetwork:
    payload = json.loads(text)

    def _clean(d):
        return {k: (_INF if v == "Infinity" else v) for k, v in d.items()}

    buses = tuple(Bus(**_clean(b)) for b in payload["buses"])
    branches = tuple(Branch(**b) for b in payload["branches"])
    return PowerNetwork(buses=buses, branches=branches, base_mva=payload["base_mva"])


# ---------------------------------------------------------------------------
# Edge admittance structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeAdmittanceStructure:
    """Bus-diagonal plus incidence-weighted branch admittance layout.

    ``y_d`` carries every self term (series self-admittance, charging halves,
    tap scaling, bus shunts).  ``Yf``/``Yt`` hold only the off-diagonal
    branch terms: column e of ``Yf`` has its single nonzero at the from bus
    (the from-row off-diagonal admittance) and column e of ``Yt`` at the to
    bus.  With that split the nodal current law

        i_k = y_d[k] v_k + sum_e Yf[k,e] v_to(e) + Yt[k,e] v_from(e)

    reproduces the conventional bus admittance relation exactly.
    ``y_ff``/``y_tt`` are the per-edge self terms (kept for line-flow
    constraint assembly).
    """

    y_d: np.ndarray
    Yf: sp.csc_matrix
    Yt: sp.csc_matrix
    y_ff: np.ndarray
    y_tt: np.ndarray

    def bus_matrix(self) -> sp.csr_matrix:
        """Assemble the conventional Ybus from the stored pieces."""
        n = self.y_d.shape[0]
        Yf = self.Yf.tocoo()
        Yt = self.Yt.tocoo()
        m = self.Yf.shape[1]
        fo = np.empty(m, dtype=int)
        fv = np.empty(m, dtype=complex)
        to = np.empty(m, dtype=int)
        tv = np.empty(m, dtype=complex)
        fo[Yf.col] = Yf.row
        fv[Yf.col] = Yf.data
        to[Yt.col] = Yt.row
        tv[Yt.col] = Yt.data
        rows = np.concatenate([np.arange(n), fo, to])
        cols = np.concatenate([np.arange(n), to, fo])
        data = np.concatenate([self.y_d, fv, tv])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def branch_admittance_terms(br: Branch) -> tuple[complex, complex, complex, complex]:
    """Two-port admittance terms (y_ff, y_ft, y_tf, y_tt) of one branch."""
    ys = br.y_series + 0j
    ych = 0.5j * br.b_charge
    tap = br.tap * np.exp(1j * br.shift)
    y_ff = (ys + ych) / (br.tap ** 2)
    y_ft = -ys / np.conj(tap)
    y_tf = -ys / tap
    y_tt = ys + ych
    return y_ff, y_ft, y_tf, y_tt


def build_edge_admittances(net: PowerNetwork) -> EdgeAdmittanceStructure:
    n, m = net.n_bus, net.n_branch
    y_d = np.array([complex(b.g_sh, b.b_sh) for b in net.buses])
    y_ff = np.zeros(m, dtype=complex)
    y_tt = np.zeros(m, dtype=complex)
    rows_f, rows_t, vals_f, vals_t = [], [], [], []
    for e, br in enumerate(net.branches):
        ff, ft, tf, tt = branch_admittance_terms(br)
        y_d[br.f] += ff
        y_d[br.t] += tt
        y_ff[e] = ff
        y_tt[e] = tt
        rows_f.append(br.f)
        vals_f.append(ft)
        rows_t.append(br.t)
        vals_t.append(tf)
    cols = np.arange(m)
    Yf = sp.csc_matrix((vals_f, (rows_f, cols)), shape=(n, m), dtype=complex)
    Yt = sp.csc_matrix((vals_t, (rows_t, cols)), shape=(n, m), dtype=complex)
    return EdgeAdmittanceStructure(y_d=y_d, Yf=Yf, Yt=Yt, y_ff=y_ff, y_tt=y_tt)


def bus_admittance_matrix(net: PowerNetwork) -> sp.csr_matrix:
    """Conventional Ybus, assembled through the edge structure."""
    return build_edge_admittances(net).bus_matrix()
