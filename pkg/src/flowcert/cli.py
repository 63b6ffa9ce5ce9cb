"""Command-line front end: certify, validate, and section commands.

Configuration comes from an INI-style file ([run] section) with CLI flag
overrides.  Identical configuration and seed produce byte-identical output
files; wall-clock timings go to stderr only.

Exit codes: 0 ok, 1 error, 2 zero-certificate, 3 validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netio, powerflow, validator
from .bounds import BoundPair, RelaxationCaps
from .certifier import (
    Certificate,
    InjectionBox,
    Objective,
    ZeroCertificate,
    injection_box,
    maximize,
)
from .model import InputSet, build_model
from .netio import CaseError, load_case
from .powerflow import NoConvergence, default_limits, solve_base

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    case: str = ""
    objective: str = "robustness"
    inputs: str = "top2-loads"
    band: float = 0.01
    rays: int = 32
    samples: int = 500
    seed: int = 12345
    out: str = "out"
    lp_only: bool = False
    theta_cap: float = 0.5
    rho_cap: float = 0.2
    thermal: str = "auto"
    qgen: str = "auto"
    smax_factor: float = 2.0
    smax_floor: float = 0.05
    direction: str = ""
    std_devs: str = "1.0"

    def limit_flags(self, n_bus: int) -> tuple[bool, bool]:
        def flag(v: str) -> bool:
            if v == "auto":
                return n_bus < 300
            return v.lower() in ("1", "true", "yes", "on")

        return flag(self.thermal), flag(self.qgen)


def _apply_preset(cfg: RunConfig, preset: str) -> RunConfig:
    if preset in ("", None):
        return cfg
    if preset != "paper-sv":
        raise ValueError(f"unknown preset {preset!r}")
    cfg.band = 0.01
    cfg.smax_factor = 2.0
    cfg.thermal = "auto"
    cfg.qgen = "auto"
    if cfg.objective == "":
        cfg.objective = "robustness"
    return cfg


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    if "run" not in parser:
        raise ValueError("config file must contain a [run] section")
    return dict(parser["run"])


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    file_vals = _read_config(getattr(args, "config", None))
    for key, val in file_vals.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config key {key!r}")
        cur = getattr(cfg, key)
        if isinstance(cur, bool):
            val = val.lower() in ("1", "true", "yes", "on")
        elif isinstance(cur, int):
            val = int(val)
        elif isinstance(cur, float):
            val = float(val)
        setattr(cfg, key, val)
    preset = file_vals.get("preset", "") or getattr(args, "preset", "") or ""
    for key in (
        "case", "objective", "inputs", "band", "rays", "samples", "seed",
        "out", "lp_only", "direction", "std_devs",
    ):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            setattr(cfg, key, val)
    _apply_preset(cfg, preset)
    if not cfg.case:
        raise ValueError("no case file given (use --case or the config file)")
    return cfg


# ---------------------------------------------------------------------------
# pipeline assembly
# ---------------------------------------------------------------------------

def _top_loads(net: netio.PowerNetwork, count: int = 2) -> list[int]:
    loads = sorted(net.loads, key=lambda k: (-abs(net.buses[k].p_base), net.buses[k].id))
    if len(loads) < count:
        raise ValueError("network has too few load buses for the preset input set")
    return sorted(loads[:count])


def _resolve_inputs(net: netio.PowerNetwork, spec: str) -> InputSet:
    if spec == "top2-loads":
        return InputSet(tuple((k, "g") for k in _top_loads(net)))
    if spec == "all-loads":
        return InputSet.all_loads(net)
    coords = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        bus_id, comp = item.split(":")
        coords.append((net.bus_index(int(bus_id)), comp.strip()))
    if not coords:
        raise ValueError(f"empty input coordinate spec {spec!r}")
    return InputSet(tuple(coords))


def _parse_direction(net: netio.PowerNetwork, spec: str):
    d_p = np.zeros(net.n_bus)
    d_q = np.zeros(net.n_bus)
    if not spec:
        raise ValueError("loadability objective needs --direction")
    for item in spec.split(","):
        head, val = item.split("=")
        bus_id, comp = head.split(":")
        k = net.bus_index(int(bus_id))
        if comp.strip() == "p":
            d_p[k] = float(val)
        else:
            d_q[k] = float(val)
    return d_p, d_q


@dataclass
class Pipeline:
    cfg: RunConfig
    net: netio.PowerNetwork
    base: powerflow.OperatingPoint
    limits: powerflow.LimitSet
    inputs: InputSet
    model: object
    caps: RelaxationCaps


def build_pipeline(cfg: RunConfig) -> Pipeline:
    net = load_case(cfg.case)
    base = solve_base(net)
    thermal, qgen = cfg.limit_flags(net.n_bus)
    limits = default_limits(
        net,
        base,
        band=cfg.band,
        s_max_factor=cfg.smax_factor,
        s_max_floor=cfg.smax_floor,
        thermal=thermal,
        qgen=qgen,
    )
    inputs = _resolve_inputs(net, cfg.inputs)
    caps = RelaxationCaps(theta_cap=cfg.theta_cap, rho_cap=cfg.rho_cap)
    mdl = build_model(net, base, inputs, limits, caps_theta=cfg.theta_cap, caps_rho=cfg.rho_cap)
    return Pipeline(cfg=cfg, net=net, base=base, limits=limits, inputs=inputs, model=mdl, caps=caps)


def _objective_for(pipe: Pipeline) -> Objective:
    cfg = pipe.cfg
    k = pipe.model.n_inputs
    if cfg.objective == "robustness":
        return Objective(kind="robustness", weights=np.ones(k))
    if cfg.objective == "loadability":
        d_p, d_q = _parse_direction(pipe.net, cfg.direction)
        return Objective(kind="loadability", direction_p=d_p, direction_q=d_q)
    if cfg.objective == "chance":
        parts = [float(v) for v in cfg.std_devs.split(",")]
        std = np.full(k, parts[0]) if len(parts) == 1 else np.asarray(parts)
        if std.shape != (k,):
            raise ValueError("std_devs list must match the input coordinate count")
        return Objective(kind="chance", std_devs=std)
    raise ValueError(f"unknown objective {cfg.objective!r}")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def certificate_to_dict(pipe: Pipeline, cert: Certificate) -> dict:
    net = pipe.net
    coords = [[net.buses[b].id, c] for b, c in pipe.model.inputs.coords]
    return {
        "schema_version": SCHEMA_VERSION,
        "case": pipe.cfg.case,
        "config": {
            "band": pipe.cfg.band,
            "inputs": coords,
            "objective": pipe.cfg.objective,
            "direction": pipe.cfg.direction,
            "std_devs": pipe.cfg.std_devs,
            "theta_cap": pipe.cfg.theta_cap,
            "rho_cap": pipe.cfg.rho_cap,
            "thermal": pipe.cfg.thermal,
            "qgen": pipe.cfg.qgen,
            "smax_factor": pipe.cfg.smax_factor,
            "smax_floor": pipe.cfg.smax_floor,
        },
        "status": cert.status,
        "objective_kind": cert.objective_kind,
        "objective_value": cert.objective_value,
        "lu": {"coords": coords, "hi": cert.lu.hi.tolist(), "lo": cert.lu.lo.tolist()},
        "lx": {"hi": cert.lx.hi.tolist(), "lo": cert.lx.lo.tolist()},
        "v_band": {"lo": cert.v_lo.tolist(), "hi": cert.v_hi.tolist()},
        "injection_box": {
            "bus_ids": [b.id for b in net.buses],
            "p_min": cert.injection_box.p_min.tolist(),
            "p_max": cert.injection_box.p_max.tolist(),
            "q_min": cert.injection_box.q_min.tolist(),
            "q_max": cert.injection_box.q_max.tolist(),
            "p_is_input": cert.injection_box.p_is_input.tolist(),
            "q_is_input": cert.injection_box.q_is_input.tolist(),
        },
        "diagnostics": cert.diagnostics,
    }


def certificate_from_dict(pipe: Pipeline, payload: dict) -> Certificate:
    """Rebuild a certificate from its file form against a fresh pipeline.

    The injection box is recomputed from the stored input widths so that
    any tampering with them shows up in validation.
    """
    lu = BoundPair(np.asarray(payload["lu"]["lo"]), np.asarray(payload["lu"]["hi"]), role="input")
    lx = BoundPair(np.asarray(payload["lx"]["lo"]), np.asarray(payload["lx"]["hi"]), role="state")
    v_lo = np.asarray(payload["v_band"]["lo"])
    v_hi = np.asarray(payload["v_band"]["hi"])
    box = injection_box(pipe.model, lu, v_lo, v_hi)
    return Certificate(
        lu=lu,
        lx=lx,
        objective_kind=payload["objective_kind"],
        objective_value=payload["objective_value"],
        injection_box=box,
        status=payload["status"],
        v_lo=v_lo,
        v_hi=v_hi,
        diagnostics=payload.get("diagnostics", {}),
    )


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    cfg = _resolve_config(args)
    t0 = time.perf_counter()
    pipe = build_pipeline(cfg)
    objective = _objective_for(pipe)
    try:
        cert = maximize(pipe.model, objective, caps=pipe.caps, lp_only=cfg.lp_only)
    except ZeroCertificate as exc:
        print(f"zero certificate: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out) / "certificate.json"
    _write(out, json.dumps(certificate_to_dict(pipe, cert), sort_keys=True, indent=2) + "\n")
    print(
        f"certified {cert.objective_kind} value {cert.objective_value:.6g} "
        f"({cert.status}) -> {out}"
    )
    print(f"elapsed {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    cfg = _resolve_config(args)
    with open(args.certificate, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("unsupported certificate schema version")
    # rebuild against the certificate's recorded configuration
    stored = payload["config"]
    cfg.band = stored["band"]
    cfg.theta_cap = stored["theta_cap"]
    cfg.rho_cap = stored["rho_cap"]
    cfg.thermal = stored["thermal"]
    cfg.qgen = stored["qgen"]
    cfg.smax_factor = stored["smax_factor"]
    cfg.smax_floor = stored["smax_floor"]
    cfg.inputs = ",".join(f"{b}:{c}" for b, c in stored["inputs"])
    t0 = time.perf_counter()
    pipe = build_pipeline(cfg)
    cert = certificate_from_dict(pipe, payload)
    block = validator.monte_carlo_soundness(
        pipe.net, pipe.model, cert, n=cfg.samples, seed=cfg.seed, limits=pipe.limits
    )
    report = validator.ValidationReport(soundness=block)
    out = Path(cfg.out) / "validation.json"
    _write(out, report.to_json() + "\n")
    print(
        f"validated {block.samples} samples, {block.n_failures} failures -> {out}"
    )
    print(f"elapsed {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return 0 if block.n_failures == 0 else 3


def cmd_section(args) -> int:
    cfg = _resolve_config(args)
    cert_payload = None
    if getattr(args, "certificate", None):
        with open(args.certificate, "r", encoding="utf-8") as fh:
            cert_payload = json.load(fh)
        stored = cert_payload["config"]
        cfg.band = stored["band"]
        cfg.thermal = stored["thermal"]
        cfg.qgen = stored["qgen"]
        cfg.smax_factor = stored["smax_factor"]
        cfg.smax_floor = stored["smax_floor"]
        cfg.inputs = ",".join(f"{b}:{c}" for b, c in stored["inputs"])
    t0 = time.perf_counter()
    pipe = build_pipeline(cfg)
    if args.buses:
        ids = [int(v) for v in args.buses.split(",")]
        plane = [(pipe.net.bus_index(i), "p") for i in ids]
    else:
        plane = [(k, "p") for k in _top_loads(pipe.net)]
    cert = certificate_from_dict(pipe, cert_payload) if cert_payload else None
    section = validator.trace_cross_section(
        pipe.net,
        pipe.base,
        plane,
        pipe.limits,
        n_rays=cfg.rays,
        certificate=cert,
        model=pipe.model,
    )
    out_csv = Path(cfg.out) / "section.csv"
    out_json = Path(cfg.out) / "section.json"
    _write(out_csv, validator.section_to_csv(section))
    _write(out_json, validator.section_to_json(section) + "\n")
    print(f"traced {cfg.rays} rays -> {out_csv}, {out_json}")
    print(f"elapsed {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file with a [run] section")
    p.add_argument("--case", help="MATPOWER case file path")
    p.add_argument("--objective", choices=["robustness", "loadability", "chance"])
    p.add_argument("--inputs", help="top2-loads | all-loads | '5:g,7:b'")
    p.add_argument("--band", type=float, help="voltage band around base (fraction)")
    p.add_argument("--rays", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--lp-only", dest="lp_only", action="store_const", const=True)
    p.add_argument("--preset", choices=["paper-sv"], default=None)
    p.add_argument("--direction", help="loadability direction, e.g. '9:p=-1,7:p=-0.5'")
    p.add_argument("--std-devs", dest="std_devs", help="chance std devs (scalar or list)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flowcert",
        description="certified inner approximations of power-flow security regions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_cert = sub.add_parser("certify", help="build a certificate")
    _add_common(p_cert)
    p_val = sub.add_parser("validate", help="Monte Carlo validation of a certificate")
    _add_common(p_val)
    p_val.add_argument("certificate", help="certificate JSON path")
    p_sec = sub.add_parser("section", help="trace a 2-D cross section")
    _add_common(p_sec)
    p_sec.add_argument("--buses", help="two bus ids, e.g. '5,7'", default="")
    p_sec.add_argument("--certificate", help="certificate JSON for the footprint", default=None)

    args = parser.parse_args(argv)
    handler = {"certify": cmd_certify, "validate": cmd_validate, "section": cmd_section}[
        args.command
    ]
    try:
        return handler(args)
    except (CaseError, NoConvergence, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
