"""Bit-stable file export/import for traces, policy tables, and bundle masks.

Floats render with 17 significant digits, which round-trips IEEE doubles
exactly, so export -> import -> export is byte-identical.
"""

from __future__ import annotations

import numpy as np

from .automaton import HybridTrace
from .controller import DPConfig, PolicyTable, RecoverabilityMask
from .errors import ParameterError

_TRACE_HEADER = "t,zeta,mode,x,xd,y,yd,z,sigma,omega,tau_y,event"

_CFG_KEYS = ("stage_min", "stage_max", "stage_res", "state_min", "state_max",
             "state_res", "omega_min", "omega_max", "omega_levels", "tau_min",
             "tau_max", "tau_levels", "alpha", "beta", "gamma1", "gamma2",
             "discount", "omega_ref", "tau_ref", "x_foot", "xdot_apex",
             "mass", "gravity")
_INT_KEYS = {"omega_levels", "tau_levels"}


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def export_trajectory(trace: HybridTrace, path) -> None:
    """Write a trace as CSV; identical runs produce byte-identical files."""
    if not trace.samples:
        raise ParameterError("cannot export an empty trace")
    lines = [_TRACE_HEADER]
    for s in trace.samples:
        lines.append(",".join((
            _fmt(s.t), _fmt(s.zeta), s.mode.value, _fmt(s.x), _fmt(s.xd),
            _fmt(s.y), _fmt(s.yd), _fmt(s.z), _fmt(s.sigma), _fmt(s.omega),
            _fmt(s.tau_y), s.event)))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _header_lines(cfg: DPConfig, kind: str) -> list[str]:
    lines = ["# psloco grid v1", f"kind={kind}"]
    for key in _CFG_KEYS:
        value = getattr(cfg, key)
        lines.append(f"{key}={value if key in _INT_KEYS else _fmt(value)}")
    return lines


def export_policy(obj, path) -> None:
    """Write a PolicyTable or RecoverabilityMask; re-importable losslessly."""
    if isinstance(obj, PolicyTable):
        lines = _header_lines(obj.cfg, "policy")
        n_points, n_states = obj.cost.shape
        lines.append(f"stage_points={n_points}")
        lines.append(f"state_points={n_states}")
        lines.append("columns=stage,state,omega,tau_y,cost")
        for n in range(n_points):
            has_control = n < n_points - 1
            for i in range(n_states):
                om = _fmt(obj.omega[n, i]) if has_control else ""
                ta = _fmt(obj.tau[n, i]) if has_control else ""
                lines.append(f"{n},{i},{om},{ta},{_fmt(obj.cost[n, i])}")
    elif isinstance(obj, RecoverabilityMask):
        lines = _header_lines(obj.cfg, "mask")
        n_points, n_states = obj.cells.shape
        lines.append(f"epsilon={_fmt(obj.epsilon)}")
        lines.append(f"stage_points={n_points}")
        lines.append(f"state_points={n_states}")
        lines.append("columns=stage,state,recoverable")
        for n in range(n_points):
            for i in range(n_states):
                lines.append(f"{n},{i},{1 if obj.cells[n, i] else 0}")
    else:
        raise ParameterError(f"cannot export {type(obj).__name__}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def import_policy(path):
    """Read back a grid file written by export_policy."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "# psloco grid v1":
        raise ParameterError(f"{path}: not a psloco grid file")
    meta: dict[str, str] = {}
    row_start = None
    for i, ln in enumerate(lines[1:], start=1):
        if "=" not in ln:
            row_start = i
            break
        key, value = ln.split("=", 1)
        meta[key] = value
    if row_start is None:
        raise ParameterError(f"{path}: missing data rows")
    kind = meta.pop("kind")
    epsilon = float(meta.pop("epsilon", "0")) if kind == "mask" else None
    n_points = int(meta.pop("stage_points"))
    n_states = int(meta.pop("state_points"))
    meta.pop("columns", None)
    cfg = DPConfig(**{k: (int(v) if k in _INT_KEYS else float(v))
                      for k, v in meta.items()})
    rows = lines[row_start:]
    if kind == "policy":
        omega = np.zeros((n_points - 1, n_states))
        tau = np.zeros((n_points - 1, n_states))
        cost = np.zeros((n_points, n_states))
        for ln in rows:
            n_s, i_s, om, ta, c = ln.split(",")
            n, i = int(n_s), int(i_s)
            cost[n, i] = float(c)
            if om:
                omega[n, i] = float(om)
                tau[n, i] = float(ta)
        return PolicyTable(cfg, omega, tau, cost)
    if kind == "mask":
        cells = np.zeros((n_points, n_states), dtype=bool)
        for ln in rows:
            n_s, i_s, flag = ln.split(",")
            cells[int(n_s), int(i_s)] = flag == "1"
        return RecoverabilityMask(cfg, epsilon, cells)
    raise ParameterError(f"{path}: unknown grid kind {kind!r}")


def export_terrain(terrain, path) -> None:
    """CSV dump of a terrain specification."""
    lines = ["step,foot_x,foot_y,foot_z,tilt,surface_a,surface_b"]
    for k, st in enumerate(terrain.steps):
        a = _fmt(st.surface.a) if st.surface is not None else ""
        b = _fmt(st.surface.b) if st.surface is not None else ""
        lines.append(f"{k},{_fmt(st.foot[0])},{_fmt(st.foot[1])},"
                     f"{_fmt(st.foot[2])},{_fmt(st.tilt)},{a},{b}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def export_manifold(manifold, path) -> None:
    """CSV dump of one step manifold's phase samples."""
    lines = ["x,xdot"]
    for x, v in zip(manifold.xs, manifold.xdots):
        lines.append(f"{_fmt(x)},{_fmt(v)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def export_transitions(tps, path) -> None:
    """CSV dump of the planned step transition points."""
    lines = ["step,x_trans,xdot_trans,zeta_trans"]
    for q, tp in enumerate(tps):
        lines.append(f"{q},{_fmt(tp.x_trans)},{_fmt(tp.xdot_trans)},"
                     f"{_fmt(tp.zeta_trans)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
