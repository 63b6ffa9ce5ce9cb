"""Empirical validation of certificates against sampled ground truth.

The ground truth uses the same load model as the certificate: input
coordinates vary as constant power, every other load coordinate keeps its
base nodal admittance.  That keeps the inner-approximation comparison
meaningful in both directions.

Rays and samples are embarrassingly parallel; report assembly is
single-writer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon, box as shapely_box

from .certifier import Certificate
from .model import FixedPointModel
from .netio import PowerNetwork, LOAD
from .powerflow import (
    LimitSet,
    NoConvergence,
    OperatingPoint,
    check_point_feasible,
    ray_boundary,
    solve_at_injection,
)
from . import powerflow


@dataclass
class SoundnessBlock:
    samples: int
    failures: list = field(default_factory=list)
    worst_violation: float = 0.0
    worst_excursion: float = -math.inf

    @property
    def n_failures(self) -> int:
        return len(self.failures)


@dataclass
class CrossSection:
    """A 2-D slice of truth and certificate in an injection plane."""

    plane: tuple[tuple[int, str], tuple[int, str]]
    angles: np.ndarray
    r_true: np.ndarray
    r_cert: np.ndarray
    base: tuple[float, float]
    rect: tuple[float, float, float, float]  # (dx_min, dx_max, dy_min, dy_max)

    def true_polygon(self) -> list[tuple[float, float]]:
        pts = [
            (r * math.cos(a), r * math.sin(a))
            for a, r in zip(self.angles, self.r_true)
        ]
        return pts


@dataclass
class ValidationReport:
    soundness: SoundnessBlock | None = None
    covering_ratio: float | None = None
    tightness: float | None = None
    runtime: dict = field(default_factory=dict)

    def to_json(self) -> str:
        # runtimes are intentionally excluded: report bytes must be
        # reproducible for identical config and seed
        payload = {}
        if self.soundness is not None:
            payload["soundness"] = {
                "samples": self.soundness.samples,
                "failures": self.soundness.failures,
                "worst_violation": self.soundness.worst_violation,
                "worst_excursion": (
                    None
                    if self.soundness.worst_excursion == -math.inf
                    else self.soundness.worst_excursion
                ),
            }
        if self.covering_ratio is not None:
            payload["covering_ratio"] = self.covering_ratio
        if self.tightness is not None:
            payload["tightness"] = self.tightness
        return json.dumps(payload, sort_keys=True, indent=2)


def background_admittance(model: FixedPointModel) -> np.ndarray:
    """Constant-admittance component for load coordinates outside the inputs."""
    net = model.net
    base = model.base
    y = np.zeros(net.n_bus, dtype=complex)
    in_g = {b for b, c in model.inputs.coords if c == "g"}
    in_b = {b for b, c in model.inputs.coords if c == "b"}
    for k in net.loads:
        v2 = base.v[k] ** 2
        if k not in in_g:
            y[k] += base.p[k] / v2
        if k not in in_b:
            y[k] += -1j * base.q[k] / v2
    return y


def monte_carlo_soundness(
    net: PowerNetwork,
    model: FixedPointModel,
    certificate: Certificate,
    n: int,
    seed: int,
    limits: LimitSet,
    state_tol: float = 1e-7,
) -> SoundnessBlock:
    """Sample the certified power box and check the theorem's guarantees.

    Each sample must solve, pass the active limit set, and land inside the
    certified admissibility box.  Deterministic for a fixed seed.
    """
    block = SoundnessBlock(samples=n)
    if n == 0:
        return block
    box = certificate.injection_box
    rng = np.random.default_rng(seed)
    y_load = background_admittance(model)
    Ybus = powerflow.bus_admittance_matrix(net)
    base = model.base
    p_idx = np.nonzero(box.p_is_input)[0]
    q_idx = np.nonzero(box.q_is_input)[0]
    for k in p_idx:
        if box.p_min[k] > box.p_max[k] + 1e-12:
            raise ValueError(
                f"certified power box is empty at bus {net.buses[k].id} (p)"
            )
    for k in q_idx:
        if box.q_min[k] > box.q_max[k] + 1e-12:
            raise ValueError(
                f"certified power box is empty at bus {net.buses[k].id} (q)"
            )

    for i in range(n):
        p = base.p.copy()
        q = base.q.copy()
        # constant-admittance components are carried by y_load, not the spec
        for k in net.loads:
            in_p = box.p_is_input[k]
            in_q = box.q_is_input[k]
            p[k] = rng.uniform(box.p_min[k], box.p_max[k]) if in_p else 0.0
            q[k] = rng.uniform(box.q_min[k], box.q_max[k]) if in_q else 0.0
        for k in net.generators:
            if box.p_is_input[k]:
                p[k] = rng.uniform(box.p_min[k], box.p_max[k])
        try:
            pt = solve_at_injection(net, p, q, init=base, y_load=y_load, Ybus=Ybus)
        except NoConvergence as exc:
            block.failures.append({"sample": i, "kind": "no-convergence", "detail": str(exc)})
            continue
        report = check_point_feasible(net, pt, limits)
        if not report.feasible:
            v = report.violations[0]
            gap = abs(v.value - v.limit)
            block.worst_violation = max(block.worst_violation, gap)
            block.failures.append(
                {
                    "sample": i,
                    "kind": f"limit:{v.kind}",
                    "element": int(v.element),
                    "value": float(v.value),
                    "limit": float(v.limit),
                }
            )
            continue
        x = model.point_to_state(pt)
        ax = model.A @ x
        exc_ = max(
            float(np.max(ax - certificate.lx.hi, initial=-math.inf)),
            float(np.max(-ax - certificate.lx.lo, initial=-math.inf)),
        )
        block.worst_excursion = max(block.worst_excursion, exc_)
        if exc_ > state_tol:
            block.failures.append({"sample": i, "kind": "excursion", "value": exc_})
    return block


# ---------------------------------------------------------------------------
# cross sections
# ---------------------------------------------------------------------------

def _rect_radius(rect, angle: float) -> float:
    """Radial extent of an origin-containing rectangle along a direction."""
    dx_min, dx_max, dy_min, dy_max = rect
    c, s = math.cos(angle), math.sin(angle)
    t = math.inf
    if c > 1e-12:
        t = min(t, dx_max / c)
    elif c < -1e-12:
        t = min(t, dx_min / c)  # dx_min <= 0
    if s > 1e-12:
        t = min(t, dy_max / s)
    elif s < -1e-12:
        t = min(t, dy_min / s)
    return max(t, 0.0)


def certificate_rect(certificate: Certificate, plane, base: OperatingPoint):
    """Certificate footprint in the plane, as deviations from the base point."""
    out = []
    for bus, comp in plane:
        box = certificate.injection_box
        if comp == "p":
            if not box.p_is_input[bus]:
                raise ValueError(f"bus {bus} p is not a certified input")
            out.append((box.p_min[bus] - base.p[bus], box.p_max[bus] - base.p[bus]))
        else:
            if not box.q_is_input[bus]:
                raise ValueError(f"bus {bus} q is not a certified input")
            out.append((box.q_min[bus] - base.q[bus], box.q_max[bus] - base.q[bus]))
    (dx_min, dx_max), (dy_min, dy_max) = out
    if dx_min > 0 or dx_max < 0 or dy_min > 0 or dy_max < 0:
        raise ValueError("certificate rectangle does not contain the base point")
    return (dx_min, dx_max, dy_min, dy_max)


def trace_cross_section(
    net: PowerNetwork,
    base: OperatingPoint,
    plane,
    limits: LimitSet,
    n_rays: int = 32,
    tol: float = 1e-3,
    certificate: Certificate | None = None,
    model: FixedPointModel | None = None,
) -> CrossSection:
    """Trace the true feasibility boundary along rays in a 2-D injection plane.

    When a certificate (with its model) is supplied, non-input load
    coordinates follow the certificate's constant-admittance convention and
    the certified rectangle is evaluated along the same rays.
    """
    report = check_point_feasible(net, base, limits)
    if not report.feasible:
        raise ValueError("base point infeasible; cannot trace a boundary")
    y_load = background_admittance(model) if model is not None else None
    angles = np.array([2 * math.pi * i / n_rays for i in range(n_rays)])
    r_true = np.zeros(n_rays)
    for i, a in enumerate(angles):
        d_p = np.zeros(net.n_bus)
        d_q = np.zeros(net.n_bus)
        for (bus, comp), mag in zip(plane, (math.cos(a), math.sin(a))):
            if comp == "p":
                d_p[bus] += mag
            else:
                d_q[bus] += mag
        trace = ray_boundary(net, base, d_p, d_q, limits, rel_tol=tol, y_load=y_load)
        r_true[i] = trace.t_max

    if certificate is not None:
        rect = certificate_rect(certificate, plane, base)
        r_cert = np.array([_rect_radius(rect, a) for a in angles])
    else:
        rect = (0.0, 0.0, 0.0, 0.0)
        r_cert = np.zeros(n_rays)

    def _coord(entry):
        bus, comp = entry
        return float(base.p[bus] if comp == "p" else base.q[bus])

    return CrossSection(
        plane=tuple(plane),
        angles=angles,
        r_true=r_true,
        r_cert=r_cert,
        base=(_coord(plane[0]), _coord(plane[1])),
        rect=rect,
    )


def covering_ratio(section: CrossSection) -> float:
    """Area fraction of the true cross-section covered by the certificate."""
    pts = section.true_polygon()
    poly = Polygon(pts)
    if not poly.is_valid or poly.area <= 0:
        raise ValueError("degenerate true polygon")
    dx_min, dx_max, dy_min, dy_max = section.rect
    if dx_max - dx_min <= 0 or dy_max - dy_min <= 0:
        return 0.0
    rect = shapely_box(dx_min, dy_min, dx_max, dy_max)
    return float(rect.intersection(poly).area / poly.area)


def tightness(section: CrossSection) -> float:
    """Largest certified-to-true radius ratio over the traced rays."""
    if np.any(section.r_true <= 0):
        raise ValueError("true boundary radius vanished on some ray")
    return float(np.max(section.r_cert / section.r_true))


def section_to_csv(section: CrossSection) -> str:
    lines = ["angle,r_true,r_cert"]
    for a, rt, rc in zip(section.angles, section.r_true, section.r_cert):
        lines.append(f"{a!r},{rt!r},{rc!r}")
    return "\n".join(lines) + "\n"


def section_to_json(section: CrossSection) -> str:
    payload = {
        "plane": [[int(b), c] for b, c in section.plane],
        "base": list(section.base),
        "angles": list(section.angles),
        "r_true": list(section.r_true),
        "r_cert": list(section.r_cert),
        "rect": list(section.rect),
    }
    return json.dumps(payload, sort_keys=True, indent=2)
