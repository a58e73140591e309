"""Scenario files (JSON) and report emission (CSV, JSON).

Indices in files are 1-based: node numbers, graph edges and
``known_input_columns`` all count from one, as a reader of the model would.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from duio.builtin import BUILTINS, REFERENCE_G, builtin_scenario
from duio.decomp import DETECTABILITY, NodeSpec, PlantModel
from duio.errors import DuioError, InvalidScenario
from duio.graph import CommGraph
from duio.sim import Controller, Scenario, TraceSet, UnknownInput
from duio.synthesis import ObserverNetworkDesign


# ---------------------------------------------------------------------------
# reading


def _get(doc: dict, key: str, path: str, default: Any = ...):
    if not isinstance(doc, dict):
        raise InvalidScenario(f"{path}: expected an object")
    if key in doc:
        return doc[key]
    if default is ...:
        raise InvalidScenario(f"{path}.{key}: missing")
    return default


def _matrix(value, path: str, allow_empty: bool = False) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InvalidScenario(f"{path}: not a numeric matrix (ragged rows or non-numbers)") from None
    if arr.size == 0 and allow_empty:
        return arr.reshape(0, 0)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidScenario(f"{path}: expected a non-empty 2-D array of rows")
    if not np.all(np.isfinite(arr)):
        raise InvalidScenario(f"{path}: contains NaN or Inf")
    return arr


def _vector_or_scalar(value, path: str):
    arr = np.asarray(value, dtype=float)
    if arr.ndim > 1 or not np.all(np.isfinite(arr)):
        raise InvalidScenario(f"{path}: expected a number or a list of numbers")
    return float(arr) if arr.ndim == 0 else arr


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise InvalidScenario(f"{path}: expected an integer, got {value!r}")
    return int(value)


def _plant(doc: dict) -> PlantModel:
    A = _matrix(_get(doc, "A", "plant"), "plant.A")
    n = A.shape[0]
    B = _get(doc, "B", "plant", [])
    Bw = _get(doc, "B_w", "plant", [])
    B = _matrix(B, "plant.B") if np.size(B) else np.zeros((n, 0))
    Bw = _matrix(Bw, "plant.B_w") if np.size(Bw) else np.zeros((n, 0))
    t_c = _get(doc, "t_c", "plant", 1.0)
    return PlantModel(A, B, Bw, step_time=t_c)


def _node(doc: dict, i: int, plant: PlantModel) -> NodeSpec:
    path = f"nodes[{i + 1}]"
    C = _matrix(_get(doc, "C", path), f"{path}.C")
    declared = _get(doc, "n_y", path, None)
    if declared is not None and _int(declared, f"{path}.n_y") != C.shape[0]:
        raise InvalidScenario(
            f"{path}.C has {C.shape[0]} rows but node {i + 1} declares n_y = {declared}"
        )
    cols = _get(doc, "known_input_columns", path, [])
    if not isinstance(cols, list):
        raise InvalidScenario(f"{path}.known_input_columns: expected a list")
    zero_based = []
    for c in cols:
        c = _int(c, f"{path}.known_input_columns")
        if not 1 <= c <= plant.n_u:
            raise InvalidScenario(
                f"{path}.known_input_columns: column {c} outside 1..{plant.n_u}"
            )
        zero_based.append(c - 1)
    return NodeSpec(i, C, tuple(zero_based))


def _graph(doc: dict, m_nodes: int) -> CommGraph:
    m = _int(_get(doc, "m", "graph", m_nodes), "graph.m")
    edges = []
    for k, e in enumerate(_get(doc, "edges", "graph", [])):
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise InvalidScenario(f"graph.edges[{k + 1}]: expected a pair of node numbers")
        a, b = (_int(v, f"graph.edges[{k + 1}]") for v in e)
        edges.append((a - 1, b - 1))
    try:
        return CommGraph(m, edges)
    except DuioError as exc:
        raise InvalidScenario(f"graph: {exc}") from None


def _noise(doc: dict, n_y: int) -> np.ndarray:
    if "covariance" in doc:
        return _matrix(doc["covariance"], "noise.covariance")
    if "variance" in doc:
        var = doc["variance"]
        if np.ndim(var) == 0:
            return float(var) * np.eye(n_y)
        return np.diag(np.asarray(var, float))
    raise InvalidScenario("noise: give either 'covariance' or 'variance'")


def _unknown_input(doc: dict) -> UnknownInput:
    values = doc.get("values")
    return UnknownInput(
        kind=_get(doc, "kind", "unknown_input", "zero"),
        amplitude=float(_get(doc, "amplitude", "unknown_input", 0.0)),
        period=float(_get(doc, "period", "unknown_input", 1.0)),
        values=None if values is None else _matrix(values, "unknown_input.values"),
    )


def _controller(doc: dict) -> Controller:
    mode = _get(doc, "mode", "controller", "lqr" if "lqr" in doc else "none")
    weights = doc.get("lqr") or {}
    Q = weights.get("Q", doc.get("Q"))
    R = weights.get("R", doc.get("R"))
    return Controller(
        mode=mode,
        Q=None if Q is None else _matrix(Q, "controller.lqr.Q"),
        R=None if R is None else _matrix(R, "controller.lqr.R"),
        x_ref=_vector_or_scalar(_get(doc, "x_ref", "controller", 0.0), "controller.x_ref"),
    )


def scenario_from_dict(doc: dict, name: str = "") -> Scenario:
    """Build and validate a Scenario from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise InvalidScenario("scenario document must be a JSON object")
    plant = _plant(_get(doc, "plant", "scenario"))
    raw_nodes = _get(doc, "nodes", "scenario")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise InvalidScenario("nodes: expected a non-empty list")
    nodes = [_node(nd, i, plant) for i, nd in enumerate(raw_nodes)]
    for node in nodes:
        node.validate(plant)
    graph = _graph(_get(doc, "graph", "scenario", {}), len(nodes))
    n_y = sum(node.n_y for node in nodes)
    sim = _get(doc, "sim", "scenario", {})
    design = _get(doc, "design", "scenario", {})
    poles = design.get("poles")
    return Scenario(
        plant=plant,
        nodes=nodes,
        graph=graph,
        noise_covariance=_noise(_get(doc, "noise", "scenario", {"variance": 0.0}), n_y),
        unknown_input=_unknown_input(_get(doc, "unknown_input", "scenario", {})),
        controller=_controller(_get(doc, "controller", "scenario", {})),
        horizon=_int(_get(sim, "horizon", "sim", 100), "sim.horizon"),
        seed=_int(_get(sim, "seed", "sim", 0), "sim.seed"),
        x0=_vector_or_scalar(_get(sim, "x0", "sim", 1.0), "sim.x0"),
        decomposition_mode=_get(design, "decomposition", "design", DETECTABILITY),
        hinf=bool(_get(design, "hinf", "design", True)),
        poles=None if poles is None else tuple(float(p) for p in poles),
        name=str(doc.get("name", name)),
    )


def load_scenario(source: str | Path) -> Scenario:
    """Load a built-in scenario by id, or a JSON scenario file by path."""
    if str(source) in BUILTINS:
        return builtin_scenario(str(source))
    path = Path(source)
    if not path.is_file():
        raise InvalidScenario(
            f"{source!s}: no such file, and not a built-in id ({', '.join(sorted(BUILTINS))})"
        )
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidScenario(f"{path}: JSON parse error at line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(doc, name=path.stem)


# ---------------------------------------------------------------------------
# writing


def _plain(value):
    """Make numpy values JSON-serializable."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def scenario_to_dict(scenario: Scenario) -> dict:
    plant, ctl, ui = scenario.plant, scenario.controller, scenario.unknown_input
    controller = {"mode": ctl.mode, "x_ref": _plain(ctl.x_ref)}
    if ctl.mode == "lqr":
        controller["lqr"] = {
            k: _plain(v) for k, v in (("Q", ctl.Q), ("R", ctl.R)) if v is not None
        }
    unknown = {"kind": ui.kind, "amplitude": ui.amplitude, "period": ui.period}
    if ui.values is not None:
        unknown["values"] = ui.values.tolist()
    design = {"decomposition": scenario.decomposition_mode, "hinf": scenario.hinf}
    if scenario.poles is not None:
        design["poles"] = list(scenario.poles)
    return {
        "name": scenario.name,
        "plant": {
            "A": plant.A.tolist(),
            "B": plant.B.tolist(),
            "B_w": plant.B_w.tolist(),
            "t_c": plant.step_time,
        },
        "nodes": [
            {
                "C": node.C.tolist(),
                "n_y": node.n_y,
                "known_input_columns": [c + 1 for c in node.known_input_columns],
            }
            for node in scenario.nodes
        ],
        "graph": {
            "m": scenario.graph.node_count,
            "edges": [[a + 1, b + 1] for a, b in scenario.graph.sorted_edges()],
        },
        "noise": {"covariance": scenario.noise_covariance.tolist()},
        "unknown_input": unknown,
        "controller": controller,
        "sim": {"horizon": scenario.horizon, "seed": scenario.seed, "x0": _plain(scenario.x0)},
        "design": design,
    }


def dump_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


def design_to_dict(design: ObserverNetworkDesign, name: str = "") -> dict:
    cert = design.certification
    nodes = []
    for obs in design.observers:
        dec = obs.decomposition
        nodes.append(
            {
                "node": obs.node.index + 1,
                "nu": dec.nu,
                "n_d": dec.n_d,
                "beta_d": obs.gain.beta,
                "solver": obs.gain.solver,
                "g": obs.g,
                "K_d": obs.gain.K_d,
                "K": obs.K,
                "L": obs.L,
                "E": obs.E,
            }
        )
    out = {
        "scenario": name,
        "method": design.method,
        "decomposition": design.mode,
        "g": design.g,
        "beta_u": design.diffusive.beta_u,
        "nodes": nodes,
    }
    if cert is not None:
        out.update(rho_d=cert.rho_d, rho_u=cert.rho_u, rho=cert.rho, stable=cert.stable)
    if name in REFERENCE_G:
        out["g_reference"] = REFERENCE_G[name]
    return _plain(out)


TRACE_HEADER = ["k", "node", "err_norm"]


def write_trace_csv(trace: TraceSet, stream: TextIO, estimates: bool = True) -> None:
    """One row per (step, node); columns ``k,node,err_norm[,x_hat_0..]``."""
    n = trace.x.shape[1]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRACE_HEADER + ([f"x_hat_{j}" for j in range(n)] if estimates else []))
    err = trace.err_norm
    for k in range(trace.horizon):
        for i in range(trace.node_count):
            row = [k, i + 1, repr(float(err[k, i]))]
            if estimates:
                row += [repr(float(v)) for v in trace.x_hat[k, i]]
            writer.writerow(row)


def write_states_csv(trace: TraceSet, stream: TextIO) -> None:
    n, n_u, n_w = trace.x.shape[1], trace.u.shape[1], trace.w.shape[1]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(
        ["k", "t"]
        + [f"x_{j}" for j in range(n)]
        + [f"u_{j}" for j in range(n_u)]
        + [f"w_{j}" for j in range(n_w)]
    )
    for k in range(trace.horizon):
        vals = np.concatenate([trace.x[k], trace.u[k], trace.w[k]])
        writer.writerow([k, repr(k * trace.step_time)] + [repr(float(v)) for v in vals])


SUMMARY_HEADER = ["node", "steady_state_rms", "peak_error", "convergence_step"]


def write_summary_csv(trace: TraceSet, stream: TextIO, threshold: float = 1e-3) -> None:
    """Per-node steady-state RMS (last 10% of the horizon), peak error and
    the network-wide convergence step (empty if never reached)."""
    summary = trace.summary(threshold)
    step = summary["convergence_step"]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for i, (rms, peak) in enumerate(zip(summary["steady_state_rms"], summary["peak_error"])):
        writer.writerow([i + 1, f"{rms:.6e}", f"{peak:.6e}", "" if step is None else step])
