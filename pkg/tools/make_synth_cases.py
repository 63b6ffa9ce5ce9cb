#!/usr/bin/env python3
"""Generate the committed synthetic MATPOWER stand-in cases.

The authentic IEEE/PEGASE test case files beyond case9 are not
redistributable from this environment, so the repository ships synthetic
meshed transmission networks of matching sizes (synth39, synth57, synth118,
synth300, synth1354).  Each network is a ring with random chords, generators
spread every few buses, moderate loading, a few off-nominal taps, and a
solved base point written back into the bus table.  Generation is
deterministic per size.

Run from the repository root:  python3 tools/make_synth_cases.py
"""

import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from flowcert import load_case, parse_matpower, solve_base  # noqa: E402
from flowcert.powerflow import NoConvergence, branch_flows  # noqa: E402

SIZES = {39: 46, 57: 72, 118: 170, 300: 400, 1354: 1880}  # buses -> ~branches


def build_case_text(n: int, seed: int, load_scale: float) -> str:
    rng = np.random.default_rng(seed)
    gen_step = 5
    gen_buses = sorted({1} | {int(b) for b in range(3, n + 1, gen_step)})
    slack = 1

    edges = []
    for i in range(1, n):
        edges.append((i, i + 1, "ring"))
    edges.append((n, 1, "ring"))
    target_extra = SIZES[n] - len(edges)
    tries = 0
    seen = {(min(a, b), max(a, b)) for a, b, _ in edges}
    while target_extra > 0 and tries < 50 * SIZES[n]:
        tries += 1
        a = int(rng.integers(1, n + 1))
        hop = int(rng.integers(3, max(4, n // 6)))
        b = (a + hop - 1) % n + 1
        key = (min(a, b), max(a, b))
        if a == b or key in seen:
            continue
        seen.add(key)
        edges.append((a, b, "chord"))
        target_extra -= 1

    loads = {}
    for bus in range(1, n + 1):
        if bus in gen_buses:
            continue
        if rng.random() < 0.80:
            p = float(rng.uniform(0.10, 0.85)) * load_scale
            q = p * float(rng.uniform(0.15, 0.40))
            loads[bus] = (p, q)
    total_load = sum(p for p, _ in loads.values())
    pv_buses = [b for b in gen_buses if b != slack]
    shares = rng.uniform(0.7, 1.3, size=len(pv_buses))
    shares = shares / shares.sum()
    dispatch = {b: total_load * 0.95 * s for b, s in zip(pv_buses, shares)}

    vset = {b: float(rng.uniform(1.00, 1.03)) for b in gen_buses}
    vset[slack] = 1.02

    bus_rows = []
    for bus in range(1, n + 1):
        btype = 3 if bus == slack else (2 if bus in gen_buses else 1)
        pd, qd = loads.get(bus, (0.0, 0.0))
        bus_rows.append(
            f"\t{bus}\t{btype}\t{pd * 100:.4f}\t{qd * 100:.4f}\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;"
        )

    gen_rows = []
    for bus in gen_buses:
        pg = 0.0 if bus == slack else dispatch[bus]
        gen_rows.append(
            f"\t{bus}\t{pg * 100:.4f}\t0\t999\t-999\t{vset[bus]:.4f}\t100\t1\t"
            f"{(pg * 1.6 + 1.0) * 100:.4f}\t0;"
        )

    branch_rows = []
    for idx, (a, b, kind) in enumerate(edges):
        if kind == "ring":
            x = float(rng.uniform(0.03, 0.10))
        else:
            x = float(rng.uniform(0.05, 0.20))
        r = x / 5.0
        bch = float(rng.uniform(0.02, 0.10)) * x / 0.1
        tap = 0.0
        shift = 0.0
        if idx % 9 == 4:
            tap = float(rng.uniform(0.97, 1.03))
        if idx == 7:
            shift = float(rng.uniform(-2.0, 2.0))
            tap = tap or 1.0
        branch_rows.append(
            f"\t{a}\t{b}\t{r:.5f}\t{x:.5f}\t{bch:.5f}\t0\t0\t0\t{tap:.4f}\t{shift:.4f}\t1\t-360\t360;"
        )

    return (
        f"function mpc = synth{n}\n"
        f"% Synthetic {n}-bus meshed network (deterministic stand-in, seed {seed}).\n"
        "mpc.version = '2';\n"
        "mpc.baseMVA = 100;\n\n"
        "mpc.bus = [\n" + "\n".join(bus_rows) + "\n];\n\n"
        "mpc.gen = [\n" + "\n".join(gen_rows) + "\n];\n\n"
        "mpc.branch = [\n" + "\n".join(branch_rows) + "\n];\n"
    )


def finalize(text: str, n: int) -> str:
    """Solve, embed the solution in the bus table, and set q limits."""
    net = parse_matpower(text)
    point = solve_base(net)
    v_spread = (point.v.min(), point.v.max())
    theta_e = max(
        abs(point.theta[br.f] - point.theta[br.t]) for br in net.branches
    )
    print(
        f"synth{n}: solved in {point.iterations} it, V in "
        f"[{v_spread[0]:.4f}, {v_spread[1]:.4f}], max |theta_e| {theta_e:.4f}"
    )
    if v_spread[0] < 0.93 or v_spread[1] > 1.08 or theta_e > 0.35:
        raise RuntimeError("profile out of range")

    lines = text.splitlines()
    out = []
    in_bus = in_gen = False
    bus_i = gen_i = 0
    qmargin = {}
    pmax = {}
    for k in net.generators + [net.slack]:
        qstar = point.q[k]
        qmargin[net.buses[k].id] = (qstar - (0.6 + 0.6 * abs(qstar)), qstar + (0.6 + 0.6 * abs(qstar)))
        pmax[net.buses[k].id] = max(point.p[k] * 1.6 + 1.0, 1.0)
    idx = {b.id: i for i, b in enumerate(net.buses)}
    for line in lines:
        s = line.strip()
        if s.startswith("mpc.bus = ["):
            in_bus = True
            out.append(line)
            continue
        if s.startswith("mpc.gen = ["):
            in_gen = True
            out.append(line)
            continue
        if s == "];":
            in_bus = in_gen = False
            out.append(line)
            continue
        if in_bus and s.endswith(";"):
            f = s.rstrip(";").split()
            i = idx[int(f[0])]
            f[7] = f"{point.v[i]:.6f}"
            f[8] = f"{math.degrees(point.theta[i]):.6f}"
            out.append("\t" + "\t".join(f) + ";")
            continue
        if in_gen and s.endswith(";"):
            f = s.rstrip(";").split()
            bid = int(f[0])
            i = idx[bid]
            f[1] = f"{point.p[i] * 100:.4f}"
            f[2] = f"{point.q[i] * 100:.4f}"
            qlo, qhi = qmargin[bid]
            f[3] = f"{qhi * 100:.4f}"
            f[4] = f"{qlo * 100:.4f}"
            f[8] = f"{pmax[bid] * 100:.4f}"
            out.append("\t" + "\t".join(f) + ";")
            continue
        out.append(line)
    return "\n".join(out) + "\n"


def main():
    root = Path(__file__).resolve().parents[1] / "cases"
    root.mkdir(exist_ok=True)
    for n, seed0 in ((39, 390), (57, 570), (118, 1180), (300, 3000), (1354, 13540)):
        for attempt in range(12):
            seed = seed0 + attempt
            scale = 1.0 * 0.88 ** attempt
            text = build_case_text(n, seed, scale)
            try:
                final = finalize(text, n)
            except (NoConvergence, RuntimeError) as exc:
                print(f"synth{n}: retry ({exc})")
                continue
            path = root / f"synth{n}.m"
            path.write_text(final, encoding="utf-8")
            # round-trip sanity: the embedded start must re-solve instantly
            net = load_case(path)
            pt = solve_base(net)
            assert pt.max_mismatch <= 1e-8
            print(f"synth{n}: wrote {path} ({net.n_branch} branches)")
            break
        else:
            raise SystemExit(f"could not generate synth{n}")


if __name__ == "__main__":
    main()
