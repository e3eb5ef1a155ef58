"""Scenario documents and run orchestration.

A scenario is a single YAML document describing terrain (explicit or
generated), apex keyframes, automaton options, the recovery-control grids,
the integrator, and an optional disturbance schedule.  Omitted recovery
parameters fall back to the reference defaults baked into DPConfig.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .automaton import (AutomatonConfig, DiscreteMode, Disturbance, HybridTrace,
                        RecoveryHooks, StepPolicy, run_plan)
from .controller import (DPConfig, config_for_step, estimate_recoverability,
                         solve_dp)
from .errors import ScenarioError
from .manifold import sensitivity_norm
from .pendulum import GRAVITY, PathSurface
from .planner import (ApexKeyframe, TerrainSpec, TerrainStep, find_transition,
                      generate_nominal, generate_terrain, keyframes_for_terrain,
                      lateral_foot_search, time_to_apex)

_REQUIRED = object()


@dataclass(frozen=True)
class TerrainGenConfig:
    steps: int = 7
    dh_min: float = 0.1
    dh_max: float = 0.3
    tilt_deg: float = 10.0
    seed: int = 0
    step_length: float = 0.5
    apex_height: float = 1.0
    lateral_offset: float = 0.1


@dataclass(frozen=True)
class KeyframeConfig:
    velocities: tuple[float, ...] | None = None
    base_velocity: float = 0.6
    height_gain: float = 0.2
    min_velocity: float = 0.4
    max_velocity: float = 0.8
    apex_height: float = 1.0


@dataclass(frozen=True)
class AutomatonOptions:
    guard: str = "manifold"
    epsilon: float = 1e-3
    multi_contact: bool = False
    duration_fraction: float = 0.25
    initial_mode: str = "left"
    tune_lateral: bool = True


@dataclass(frozen=True)
class IntegratorOptions:
    dt: float = 1e-3
    scheme: str = "rk4"


@dataclass(frozen=True)
class Scenario:
    terrain_generate: TerrainGenConfig | None = None
    terrain_explicit: TerrainSpec | None = None
    keyframes: KeyframeConfig = field(default_factory=KeyframeConfig)
    automaton: AutomatonOptions = field(default_factory=AutomatonOptions)
    dp: DPConfig = field(default_factory=DPConfig)
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    disturbances: tuple[Disturbance, ...] = ()

    def __post_init__(self):
        if (self.terrain_generate is None) == (self.terrain_explicit is None):
            raise ScenarioError("terrain", "need exactly one of generate / steps")


def _check_mapping(node, path):
    if not isinstance(node, dict):
        raise ScenarioError(path, f"expected a mapping, got {type(node).__name__}")
    return node


def _pop(node: dict, path: str, key: str, typ, default=_REQUIRED):
    if key not in node:
        if default is _REQUIRED:
            raise ScenarioError(f"{path}.{key}", "missing required field")
        return default
    value = node.pop(key)
    if typ is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScenarioError(f"{path}.{key}", f"expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ScenarioError(f"{path}.{key}", f"expected an integer, got {value!r}")
        return value
    if typ is bool:
        if not isinstance(value, bool):
            raise ScenarioError(f"{path}.{key}", f"expected a boolean, got {value!r}")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ScenarioError(f"{path}.{key}", f"expected a string, got {value!r}")
        return value
    return value


def _reject_unknown(node: dict, path: str):
    if node:
        key = sorted(node)[0]
        raise ScenarioError(f"{path}.{key}", "unknown key")


def _parse_dataclass(node, path, cls, casts=None):
    node = dict(_check_mapping(node, path))
    kwargs = {}
    casts = casts or {}
    for f in fields(cls):
        typ = casts.get(f.name, f.type if isinstance(f.type, type) else None)
        if typ is None:
            typ = {"int": int, "float": float, "bool": bool, "str": str}.get(
                str(f.type), float)
        if f.name in node:
            kwargs[f.name] = _pop(node, path, f.name, typ)
    _reject_unknown(node, path)
    return cls(**kwargs)


def _parse_terrain(node, path):
    node = dict(_check_mapping(node, path))
    has_gen = "generate" in node
    has_steps = "steps" in node
    if has_gen == has_steps:
        raise ScenarioError(path, "need exactly one of generate / steps")
    if has_gen:
        gen = _parse_dataclass(node.pop("generate"), f"{path}.generate",
                               TerrainGenConfig,
                               casts={"steps": int, "seed": int})
        _reject_unknown(node, path)
        return gen, None
    raw_steps = node.pop("steps")
    _reject_unknown(node, path)
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ScenarioError(f"{path}.steps", "expected a non-empty list")
    steps = []
    for i, raw in enumerate(raw_steps):
        spath = f"{path}.steps[{i}]"
        raw = dict(_check_mapping(raw, spath))
        foot = _pop(raw, spath, "foot", list)
        if not (isinstance(foot, list) and len(foot) == 3
                and all(isinstance(c, (int, float)) for c in foot)):
            raise ScenarioError(f"{spath}.foot", "expected [x, y, z]")
        tilt_deg = _pop(raw, spath, "tilt_deg", float, 0.0)
        surface = None
        if "surface" in raw:
            s = dict(_check_mapping(raw.pop("surface"), f"{spath}.surface"))
            a = _pop(s, f"{spath}.surface", "a", float)
            b = _pop(s, f"{spath}.surface", "b", float)
            _reject_unknown(s, f"{spath}.surface")
            surface = PathSurface(a, b)
        _reject_unknown(raw, spath)
        steps.append(TerrainStep(tuple(float(c) for c in foot),
                                 math.radians(tilt_deg), surface))
    return None, TerrainSpec(tuple(steps))


def _parse_disturbances(node, path):
    if not isinstance(node, list):
        raise ScenarioError(path, "expected a list")
    out = []
    for i, raw in enumerate(node):
        dpath = f"{path}[{i}]"
        raw = dict(_check_mapping(raw, dpath))
        step = _pop(raw, dpath, "step", int)
        dxdot = _pop(raw, dpath, "dxdot", float, 0.0)
        dydot = _pop(raw, dpath, "dydot", float, 0.0)
        at_x = _pop(raw, dpath, "at_x", float, None)
        at_zeta = _pop(raw, dpath, "at_zeta", float, None)
        _reject_unknown(raw, dpath)
        if (at_x is None) == (at_zeta is None):
            raise ScenarioError(dpath, "specify exactly one of at_x / at_zeta")
        out.append(Disturbance(step, dxdot, dydot, at_x, at_zeta))
    return tuple(out)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a YAML scenario document.

    Unknown keys, missing required fields, and type mismatches raise
    ScenarioError naming the offending field path.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("<document>", f"invalid YAML: {exc}")
    if doc is None:
        doc = {}
    doc = dict(_check_mapping(doc, "<document>"))

    if "terrain" not in doc:
        raise ScenarioError("terrain", "missing required field")
    gen, explicit = _parse_terrain(doc.pop("terrain"), "terrain")

    kf_node = doc.pop("keyframes", {})
    kf_node = dict(_check_mapping(kf_node, "keyframes"))
    velocities = None
    if "velocities" in kf_node:
        raw = kf_node.pop("velocities")
        if not (isinstance(raw, list)
                and all(isinstance(v, (int, float)) for v in raw)):
            raise ScenarioError("keyframes.velocities", "expected a list of numbers")
        velocities = tuple(float(v) for v in raw)
    kf = _parse_dataclass(kf_node, "keyframes", KeyframeConfig)
    kf = replace(kf, velocities=velocities)

    auto = _parse_dataclass(doc.pop("automaton", {}), "automaton",
                            AutomatonOptions,
                            casts={"guard": str, "initial_mode": str,
                                   "multi_contact": bool, "tune_lateral": bool})
    dp = _parse_dataclass(doc.pop("dp", {}), "dp", DPConfig,
                          casts={"omega_levels": int, "tau_levels": int})
    integ = _parse_dataclass(doc.pop("integrator", {}), "integrator",
                             IntegratorOptions, casts={"scheme": str})
    dists = _parse_disturbances(doc.pop("disturbances", []), "disturbances")
    _reject_unknown(doc, "<document>")
    return Scenario(gen, explicit, kf, auto, dp, integ, dists)


def serialize_scenario(s: Scenario) -> str:
    """Canonical YAML rendering; parse(serialize(s)) == s."""
    doc: dict = {}
    if s.terrain_generate is not None:
        doc["terrain"] = {"generate": asdict(s.terrain_generate)}
    else:
        steps = []
        for st in s.terrain_explicit.steps:
            entry = {"foot": list(st.foot), "tilt_deg": math.degrees(st.tilt)}
            if st.surface is not None:
                entry["surface"] = {"a": st.surface.a, "b": st.surface.b}
            steps.append(entry)
        doc["terrain"] = {"steps": steps}
    kf = asdict(s.keyframes)
    if kf["velocities"] is None:
        del kf["velocities"]
    else:
        kf["velocities"] = list(kf["velocities"])
    doc["keyframes"] = kf
    doc["automaton"] = asdict(s.automaton)
    doc["dp"] = asdict(s.dp)
    doc["integrator"] = asdict(s.integrator)
    doc["disturbances"] = [
        {k: v for k, v in asdict(d).items() if v is not None}
        for d in s.disturbances
    ]
    return yaml.safe_dump(doc, sort_keys=True)


def resolve_terrain(s: Scenario) -> tuple[TerrainSpec, list[ApexKeyframe]]:
    """Materialize the terrain and its keyframes from a scenario."""
    if s.terrain_generate is not None:
        g = s.terrain_generate
        terrain = generate_terrain(g.steps, g.dh_min, g.dh_max,
                                   math.radians(g.tilt_deg), g.seed,
                                   step_length=g.step_length,
                                   apex_height=g.apex_height,
                                   lateral_offset=g.lateral_offset)
    else:
        terrain = s.terrain_explicit
    k = s.keyframes
    if k.velocities is not None:
        if len(k.velocities) != len(terrain):
            raise ScenarioError("keyframes.velocities",
                                f"{len(k.velocities)} velocities for "
                                f"{len(terrain)} terrain steps")
        kfs = []
        for vel, st in zip(k.velocities, terrain.steps):
            if st.surface is not None:
                z_apex = st.surface.a * st.foot[0] + st.surface.b - st.foot[2]
            else:
                z_apex = k.apex_height
            kfs.append(ApexKeyframe(vel, z_apex))
    else:
        kfs = keyframes_for_terrain(terrain, k.base_velocity, k.height_gain,
                                    k.min_velocity, k.max_velocity, k.apex_height)
    return terrain, kfs


@dataclass
class TransitionRecord:
    step: int
    t: float
    zeta: float
    x: float
    xdot: float
    replanned: bool


@dataclass
class RecoveryOutcome:
    step: int
    pattern: str
    strategy: str  # bundle | dp | replan | none
    kappa: float | None


@dataclass
class RunReport:
    trace: HybridTrace
    transitions: list[TransitionRecord]
    recoveries: list[RecoveryOutcome]
    timings: dict[str, float]

    @property
    def error(self) -> str | None:
        return self.trace.error

    def to_dict(self) -> dict:
        return {
            "error": self.trace.error,
            "n_samples": len(self.trace.samples),
            "transitions": [vars(t) for t in self.transitions],
            "recoveries": [vars(r) for r in self.recoveries],
            "timings": self.timings,
        }


def _automaton_config(s: Scenario) -> AutomatonConfig:
    mode = {"left": DiscreteMode.LEFT_SUPPORT,
            "right": DiscreteMode.RIGHT_SUPPORT}.get(s.automaton.initial_mode)
    if mode is None:
        raise ScenarioError("automaton.initial_mode",
                            f"unknown mode {s.automaton.initial_mode!r}")
    return AutomatonConfig(dt=s.integrator.dt, guard_kind=s.automaton.guard,
                           epsilon=s.automaton.epsilon,
                           multi_contact=s.automaton.multi_contact,
                           duration_fraction=s.automaton.duration_fraction,
                           initial_mode=mode)


def tune_lateral_feet(manifolds, dt: float = 1e-3):
    """Assign each step's lateral foot so the lateral velocity nulls at its apex.

    Walks the plan once, propagating the lateral state through the planned
    transitions, and replaces each step's foot y with the searched placement.
    """
    from dataclasses import replace as dc_replace

    from .errors import NonConvergenceError, PhaseSpaceError
    from .pendulum import rk4_step

    y, yd = 0.0, 0.0
    transitions = [find_transition(manifolds[q], manifolds[q + 1])
                   for q in range(len(manifolds) - 1)]
    x, v = manifolds[0].descriptor.x_foot, manifolds[0].descriptor.xdot_apex
    for q, m in enumerate(manifolds):
        params = m.params
        if q > 0:
            t_apex = time_to_apex(x, v, params.foot[0], params.omega)
            side = 1.0 if q % 2 == 0 else -1.0
            lo, hi = ((y + 0.02, y + 0.35) if side > 0 else (y - 0.35, y - 0.02))
            guess = dc_replace(params, foot=(params.foot[0],
                                             y + side * 0.1, params.foot[2]))
            try:
                new_y = lateral_foot_search(y, yd, guess, (lo, hi),
                                            t_apex=t_apex, dt=dt)
            except NonConvergenceError as exc:
                new_y = exc.best if exc.best is not None else y + side * 0.1
            except PhaseSpaceError:
                new_y = y + side * 0.1
            params = dc_replace(params, foot=(params.foot[0], new_y,
                                              params.foot[2]))
            m.params = params
        if q < len(transitions):
            tp = transitions[q]
            # ride this step laterally until the sagittal transition
            t_exit = _lateral_ride_time(x, v, tp.x_trans, params)
            n = max(0, int(round(t_exit / dt)))
            for _ in range(n):
                y, yd = rk4_step(y, yd, params.foot[1], params.omega, 0.0, dt)
            x, v = tp.x_trans, tp.xdot_trans
    return manifolds


def _lateral_ride_time(x, v, x_target, params):
    from .errors import GeometryError
    from .planner import time_between
    try:
        return max(time_between(x, v, x_target, params.foot[0], params.omega), 0.0)
    except GeometryError:
        return 0.0


def run_scenario(s: Scenario) -> RunReport:
    """Plan, optionally solve recovery policies, and execute the scenario."""
    t0 = time.perf_counter()
    terrain, kfs = resolve_terrain(s)
    manifolds = generate_nominal(terrain, kfs, dt=s.integrator.dt)
    if s.automaton.tune_lateral and len(manifolds) > 1:
        manifolds = tune_lateral_feet(manifolds, dt=s.integrator.dt)
    t_plan = time.perf_counter() - t0

    t0 = time.perf_counter()
    hooks = RecoveryHooks()
    if s.disturbances:
        transitions = [find_transition(manifolds[q], manifolds[q + 1])
                       for q in range(len(manifolds) - 1)]
        for q in sorted({d.step for d in s.disturbances}):
            m = manifolds[q]
            x_entry = transitions[q - 1].x_trans if q > 0 else m.descriptor.x_foot
            x_exit = transitions[q].x_trans if q < len(transitions) \
                else m.descriptor.x_foot
            if x_exit <= x_entry:
                continue
            cfg = config_for_step(s.dp, x_entry=x_entry, x_trans=x_exit,
                                  x_foot=m.descriptor.x_foot,
                                  xdot_apex=m.descriptor.xdot_apex,
                                  omega_ref=m.params.omega)
            table = solve_dp(cfg)
            mask = estimate_recoverability(cfg, s.automaton.epsilon, table)
            hooks.policies[q] = StepPolicy(table, mask)
    t_dp = time.perf_counter() - t0

    t0 = time.perf_counter()
    trace = run_plan(manifolds, _automaton_config(s), s.disturbances, hooks)
    t_run = time.perf_counter() - t0

    transitions_out = []
    for e in trace.step_boundaries():
        smp = trace.samples[e.index]
        replanned = any(ev.tag == "replan" and ev.step == e.step
                        for ev in trace.events)
        transitions_out.append(TransitionRecord(e.step, smp.t, smp.zeta,
                                                smp.x, smp.xd, replanned))
    recoveries = _recovery_outcomes(trace, s)
    timings = {"plan_s": t_plan, "dp_s": t_dp, "run_s": t_run}
    return RunReport(trace, transitions_out, recoveries, timings)


def _recovery_outcomes(trace: HybridTrace, s: Scenario) -> list[RecoveryOutcome]:
    outcomes = []
    boundary_idx = sorted(e.index for e in trace.step_boundaries())
    replan_steps = {e.step for e in trace.events if e.tag == "replan"}
    for e in trace.events:
        if not e.tag.startswith("disturb:"):
            continue
        pattern = e.tag.split(":", 1)[1]
        end_idx = next((b for b in boundary_idx if b > e.index),
                       len(trace.samples) - 1)
        span = trace.samples[e.index:end_idx + 1]
        kappa = None
        if len(span) >= 2 and span[-1].zeta > span[0].zeta:
            kappa = sensitivity_norm([(p.zeta, p.sigma) for p in span],
                                     span[0].zeta, span[-1].zeta)
        sig0 = abs(trace.samples[e.index].sigma)
        if e.step in replan_steps:
            strategy = "replan"
        elif sig0 <= s.automaton.epsilon:
            strategy = "bundle"
        else:
            strategy = "dp"
        outcomes.append(RecoveryOutcome(e.step, pattern, strategy, kappa))
    return outcomes
