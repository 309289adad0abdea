"""Scenario definitions: JSON-serialized formation problems (graph, desired
distances, initial condition, body frames, dither configuration, horizon),
plus runners that integrate a chosen law and grade the outcome.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .dither import DitherShape, SinusoidSchedule, log_sinusoid_shape, \
    verify_properties
from .dynamics import SystemDef, Trajectory, bound_fit, default_dither_dt, \
    formation_observer, gradient_rhs, integrate, integrate_closed_loop, \
    lie_bracket_rhs
from .potential import BodyFrames, FormationSpec, psi_global, \
    verify_gradient_bounds
from .rigidity import Framework, Graph, is_infinitesimally_rigid

__all__ = [
    "SCHEMA_VERSION",
    "SCENARIO_SCHEMA",
    "Scenario",
    "ScenarioError",
    "scenario_from_dict",
    "load_scenario",
    "preset_names",
    "build_frames",
    "run",
    "sweep",
    "check_hypotheses",
    "CONVERGED_EDGE_RTOL",
    "CONVERGED_PSI_TOL",
]

SCHEMA_VERSION = 1

CONVERGED_EDGE_RTOL = 0.01   # every edge within 1% of its desired length
CONVERGED_PSI_TOL = 1e-2     # and the global potential below this

# laws that do not carry a fast time scale use this fixed default step
SLOW_LAW_DT = 0.005

_NONDITHER_LAWS = ("lie-bracket", "gradient")

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "name", "dim", "num_agents", "edges",
                 "desired_distances", "initial_positions", "frames",
                 "shape", "schedule", "t_final"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "dim": {"type": "integer", "minimum": 1},
        "num_agents": {"type": "integer", "minimum": 2},
        "edges": {
            "type": "array", "minItems": 1,
            "items": {"type": "array", "minItems": 2, "maxItems": 2,
                      "items": {"type": "integer", "minimum": 1}},
        },
        "desired_distances": {
            "type": "array", "minItems": 1,
            "items": {"type": "array", "minItems": 3, "maxItems": 3,
                      "items": {"type": "number"}},
        },
        "initial_positions": {
            "type": "array", "minItems": 2,
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "target_realization": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "frames": {
            "type": "object",
            "required": ["rule"],
            "additionalProperties": False,
            "properties": {
                "rule": {"enum": ["identity", "planar-angles",
                                  "spherical-angles", "explicit"]},
                "angles": {"type": "array", "items": {"type": "number"}},
                "phi": {"type": "array", "items": {"type": "number"}},
                "theta": {"type": "array", "items": {"type": "number"}},
                "variant": {"enum": ["uncorrected", "sin-corrected"]},
                "vectors": {"type": "array"},
            },
        },
        "shape": {
            "type": "object",
            "required": ["family", "amplitude"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["log-sinusoid"]},
                "amplitude": {"enum": ["tanh", "ratio"]},
            },
        },
        "schedule": {
            "type": "object",
            "required": ["rule", "omega"],
            "additionalProperties": False,
            "properties": {
                "rule": {"enum": ["multiplier"]},
                "omega": {"type": "number", "exclusiveMinimum": 0},
                "phases": {
                    "anyOf": [{"type": "number"},
                              {"type": "array",
                               "items": {"type": "array",
                                         "items": {"type": "number"}}}],
                },
            },
        },
        "t_final": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
    },
}


class ScenarioError(ValueError):
    """Scenario file failed validation; message carries the field path."""


def _validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        parts = []
        for e in errors[:5]:
            path = "/" + "/".join(str(x) for x in e.absolute_path)
            parts.append(f"{path or '/'}: {e.message}")
        raise ScenarioError("; ".join(parts))


def build_frames(cfg: dict, num_agents: int, dim: int) -> BodyFrames:
    """Construct per-agent frames from a scenario frames block.

    planar-angles: agent i gets the rotation of the standard basis by its
    angle.  spherical-angles: radial/azimuthal/polar-style triads from per-
    agent (phi, theta); the 'uncorrected' variant takes the third vector as
    (-cos t cos f, -cos t, sin t) and relies on orthonormalization, the
    'sin-corrected' variant uses (-cos t cos f, -cos t sin f, sin t).
    """
    rule = cfg["rule"]
    if rule == "identity":
        return BodyFrames.identity(num_agents, dim)
    if rule == "explicit":
        return BodyFrames(np.asarray(cfg["vectors"], dtype=float))
    if rule == "planar-angles":
        if dim != 2:
            raise ScenarioError("/frames/rule: planar-angles requires dim=2")
        angles = np.asarray(cfg["angles"], dtype=float)
        if angles.size != num_agents:
            raise ScenarioError("/frames/angles: one angle per agent required")
        vecs = np.stack([
            [[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]]
            for a in angles])
        return BodyFrames(vecs)
    if rule == "spherical-angles":
        if dim != 3:
            raise ScenarioError("/frames/rule: spherical-angles requires dim=3")
        phi = np.asarray(cfg["phi"], dtype=float)
        theta = np.asarray(cfg["theta"], dtype=float)
        if phi.size != num_agents or theta.size != num_agents:
            raise ScenarioError("/frames/phi: one (phi, theta) pair per agent")
        variant = cfg.get("variant", "uncorrected")
        vecs = []
        for f, t in zip(phi, theta):
            b1 = [math.sin(t) * math.cos(f), math.sin(t) * math.sin(f),
                  math.cos(t)]
            b2 = [-math.sin(f), math.cos(f), 0.0]
            if variant == "sin-corrected":
                b3 = [-math.cos(t) * math.cos(f), -math.cos(t) * math.sin(f),
                      math.sin(t)]
            else:
                b3 = [-math.cos(t) * math.cos(f), -math.cos(t), math.sin(t)]
            vecs.append([b1, b2, b3])
        return BodyFrames(np.asarray(vecs))
    raise ScenarioError(f"/frames/rule: unknown rule {rule!r}")


@dataclass(frozen=True)
class Scenario:
    """Validated scenario; factory methods assemble the runtime objects."""

    name: str
    dim: int
    num_agents: int
    edges: tuple
    desired: tuple                 # ((i, j, d), ...)
    initial_positions: np.ndarray = field(repr=False)
    frames_cfg: dict = field(repr=False, default_factory=dict)
    shape_cfg: dict = field(repr=False, default_factory=dict)
    schedule_cfg: dict = field(repr=False, default_factory=dict)
    t_final: float = 1.0
    dt: Optional[float] = None
    target_realization: Optional[np.ndarray] = field(repr=False, default=None)

    def graph(self) -> Graph:
        return Graph(self.num_agents, list(self.edges))

    def formation_spec(self) -> FormationSpec:
        desired = {(i, j): d for i, j, d in self.desired}
        return FormationSpec.from_distances(self.graph(), self.dim, desired)

    def body_frames(self) -> BodyFrames:
        return build_frames(self.frames_cfg, self.num_agents, self.dim)

    def dither_shape(self) -> DitherShape:
        return log_sinusoid_shape(self.shape_cfg["amplitude"])

    def schedule(self, omega: Optional[float] = None,
                 phases=None) -> SinusoidSchedule:
        w = self.schedule_cfg["omega"] if omega is None else float(omega)
        ph = self.schedule_cfg.get("phases", 0.0) if phases is None else phases
        return SinusoidSchedule.from_rule(self.num_agents, self.dim, w,
                                          phases=np.asarray(ph, dtype=float))

    def system(self, omega: Optional[float] = None, phases=None,
               frames_variant: Optional[str] = None) -> SystemDef:
        cfg = dict(self.frames_cfg)
        if frames_variant is not None:
            cfg["variant"] = frames_variant
        frames = build_frames(cfg, self.num_agents, self.dim)
        return SystemDef(self.formation_spec(), frames, self.dither_shape(),
                         self.schedule(omega=omega, phases=phases))

    def initial_flat(self) -> np.ndarray:
        return self.initial_positions.reshape(-1).copy()

    def to_dict(self) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "dim": self.dim,
            "num_agents": self.num_agents,
            "edges": [list(e) for e in self.edges],
            "desired_distances": [list(d) for d in self.desired],
            "initial_positions": self.initial_positions.tolist(),
            "frames": dict(self.frames_cfg),
            "shape": dict(self.shape_cfg),
            "schedule": dict(self.schedule_cfg),
            "t_final": self.t_final,
            "dt": self.dt,
        }
        if self.target_realization is not None:
            doc["target_realization"] = self.target_realization.tolist()
        return doc


def scenario_from_dict(doc: dict) -> Scenario:
    _validate(doc)
    N, n = doc["num_agents"], doc["dim"]
    init = np.asarray(doc["initial_positions"], dtype=float)
    if init.shape != (N, n):
        raise ScenarioError(
            f"/initial_positions: expected shape ({N}, {n}), got {init.shape}")
    target = None
    if "target_realization" in doc:
        target = np.asarray(doc["target_realization"], dtype=float)
        if target.shape != (N, n):
            raise ScenarioError(
                f"/target_realization: expected shape ({N}, {n}), "
                f"got {target.shape}")
    scn = Scenario(
        name=doc["name"],
        dim=n,
        num_agents=N,
        edges=tuple(tuple(e) for e in doc["edges"]),
        desired=tuple(tuple(d) for d in doc["desired_distances"]),
        initial_positions=init,
        frames_cfg=doc["frames"],
        shape_cfg=doc["shape"],
        schedule_cfg=doc["schedule"],
        t_final=float(doc["t_final"]),
        dt=doc.get("dt"),
        target_realization=target,
    )
    # cross-field checks the JSON schema cannot express
    try:
        scn.graph()
    except ValueError as exc:
        raise ScenarioError(f"/edges: {exc}") from exc
    try:
        spec = scn.formation_spec()
    except ValueError as exc:
        raise ScenarioError(f"/desired_distances: {exc}") from exc
    try:
        scn.body_frames()
    except ValueError as exc:
        raise ScenarioError(f"/frames: {exc}") from exc
    if target is not None:
        val = psi_global(spec, target.reshape(-1))
        if val > 1e-9:
            raise ScenarioError(
                f"/target_realization: does not realize the desired "
                f"distances (psi={val:.3e})")
    return scn


def preset_names() -> list[str]:
    files = resources.files("formseek").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_scenario(source) -> Scenario:
    """Load from a JSON file path, or by preset name (see preset_names())."""
    text = None
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.suffix == ".json" and path.exists():
            text = path.read_text()
        else:
            candidate = resources.files("formseek").joinpath(
                "presets").joinpath(f"{source}.json")
            if candidate.is_file():
                text = candidate.read_text()
            elif path.exists():
                text = path.read_text()
            else:
                raise FileNotFoundError(
                    f"no scenario file or preset named {source!r}; "
                    f"presets: {', '.join(preset_names())}")
    else:
        raise TypeError("source must be a path or preset name")
    return scenario_from_dict(json.loads(text))


def _edge_table(spec: FormationSpec, p: np.ndarray) -> list[dict]:
    pts = p.reshape(spec.num_agents, spec.dim)
    a, b = spec.graph.edge_arrays()
    out = []
    for e, (i, j) in enumerate(spec.graph.edges):
        achieved = float(np.linalg.norm(pts[a[e]] - pts[b[e]]))
        desired = float(math.sqrt(spec.desired_sq[e]))
        out.append({
            "edge": [i, j],
            "desired": desired,
            "achieved": achieved,
            "rel_error": abs(achieved - desired) / desired if desired > 0
            else abs(achieved),
        })
    return out


def run(scenario: Scenario, law: str = "dither",
        omega: Optional[float] = None, t_final: Optional[float] = None,
        dt: Optional[float] = None, phases=None,
        frames_variant: Optional[str] = None) -> tuple[Trajectory, dict]:
    """Integrate one law on a scenario and grade the endpoint.

    law is one of 'dither' (the distance-only closed loop), 'lie-bracket'
    (the averaged system) or 'gradient' (the full-information baseline).
    Returns the trajectory and a report with the final edge-length table,
    the decay-envelope fit, and the convergence verdict.
    """
    if law not in ("dither",) + _NONDITHER_LAWS:
        raise ValueError(f"unknown law {law!r}")
    sys = scenario.system(omega=omega, phases=phases,
                          frames_variant=frames_variant)
    p0 = scenario.initial_flat()
    horizon = scenario.t_final if t_final is None else float(t_final)
    meta = {"scenario": scenario.name, "law": law,
            "omega": sys.schedule.omega_global,
            "t_final": horizon}
    if law == "dither":
        step = dt if dt is not None else (
            scenario.dt if scenario.dt is not None
            else default_dither_dt(sys.schedule))
        traj = integrate_closed_loop(sys, p0, 0.0, horizon, dt=step,
                                     metadata=meta)
    else:
        step = dt if dt is not None else SLOW_LAW_DT
        if law == "lie-bracket":
            rhs = lambda t, p: lie_bracket_rhs(sys, p)
        else:
            rhs = lambda t, p: gradient_rhs(sys, p)
        traj = integrate(rhs, p0, 0.0, horizon, step,
                         observe=formation_observer(sys.spec), metadata=meta)

    table = _edge_table(sys.spec, traj.final_state())
    psi_final = float(traj.psi[-1])
    converged = bool(
        all(row["rel_error"] < CONVERGED_EDGE_RTOL for row in table)
        and psi_final < CONVERGED_PSI_TOL)
    report = {
        "scenario": scenario.name,
        "law": law,
        "omega": sys.schedule.omega_global,
        "dt": float(traj.dt),
        "t_final": float(traj.t_final),
        "psi_initial": float(traj.psi[0]),
        "psi_final": psi_final,
        "max_edge_rel_error": max(row["rel_error"] for row in table),
        "edges": table,
        "converged": converged,
        "bound": bound_fit(traj),
    }
    return traj, report


def _sweep_one(doc: dict, omega: float, law: str,
               t_final: Optional[float], dt: Optional[float]) -> dict:
    scn = scenario_from_dict(doc)
    _, report = run(scn, law=law, omega=omega, t_final=t_final, dt=dt)
    return report


def sweep(scenario: Scenario, omegas: Sequence[float], law: str = "dither",
          t_final: Optional[float] = None, dt: Optional[float] = None,
          workers: int = 1) -> list[dict]:
    """Run the same scenario across dither frequencies; returns one report
    per omega, in the given order."""
    omegas = [float(w) for w in omegas]
    if workers <= 1:
        return [_sweep_one(scenario.to_dict(), w, law, t_final, dt)
                for w in omegas]
    doc = scenario.to_dict()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_one, doc, w, law, t_final, dt)
                   for w in omegas]
        return [f.result() for f in futures]


def check_hypotheses(scenario: Scenario, gradient_samples: int = 2000,
                     seed: int = 0) -> dict:
    """Verify the standing assumptions behind the convergence guarantee:
    the target realization is an infinitesimally rigid zero of the
    potential, the dither pair satisfies its shape properties, and the
    gradient-squared/potential ratio is pinched near the target."""
    spec = scenario.formation_spec()
    report: dict = {"scenario": scenario.name}
    if scenario.target_realization is None:
        report["ok"] = False
        report["reason"] = "scenario provides no target realization"
        return report
    fw = Framework(scenario.graph(), scenario.dim,
                   scenario.target_realization.reshape(-1))
    rigid = is_infinitesimally_rigid(fw)
    report["rigidity"] = rigid.to_dict()
    report["psi_at_target"] = psi_global(spec, fw.positions)
    shape_report = verify_properties(scenario.dither_shape())
    report["dither"] = {k: v for k, v in shape_report.items()}
    grad = verify_gradient_bounds(spec, fw, samples=gradient_samples,
                                  seed=seed)
    report["gradient_bounds"] = grad
    report["ok"] = bool(rigid.is_inf_rigid and report["psi_at_target"] <= 1e-9
                        and shape_report["all_passed"]
                        and grad["lower_bound_ok"])
    return report
