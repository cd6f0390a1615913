"""Scenario documents and the decompose / run / sweep pipeline."""

from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .geometry import decompose_node
from .graphs import complete_edges, laplacian_from_edges, path_edges, ring_edges
from .plants import (DguParams, build_dgu_microgrid, build_example_ct,
                     build_example_dt, equilibrium_state, exact_discretize,
                     node_system, plant_from_dict)
from .simulate import (NoiseConfig, SimConfig, bound_check, simulate_continuous,
                       simulate_discrete, steady_error)
from .subspace import ContinuousRegion, DiscreteRegion
from .synthesis import (build_continuous_bank, build_discrete_bank,
                        check_joint_condition_ct, check_joint_condition_dt,
                        continuous_gain_bounds, theorem3_bound)

__all__ = [
    "Scenario",
    "BUILTIN_SCENARIOS",
    "load_scenario",
    "Pipeline",
    "decompose_scenario",
    "run_scenario",
    "sweep_scenario",
]

log = logging.getLogger(__name__)

BUILTIN_PLANTS = ("example_ct", "example_dt", "dgu")
GRAPH_KINDS = ("ring", "path", "complete", "edges")
SIM_KEYS = {"horizon", "dt", "x0", "xhat0", "sign_smoothing_eps", "noise",
            "record_stride", "tail_fraction"}


@dataclass
class Scenario:
    """Complete pipeline input, stored as plain JSON-compatible data.

    ``plant`` is a builtin name, a path to a plant document, or an inline
    plant object. ``gains`` is ``"auto"`` (bounds times ``gain_safety``) or
    ``{"chi": ..., "gamma": ...}``. ``rounds`` and ``error_budget`` choose the
    number of consensus rounds for discrete plants; ``rounds`` wins when both
    are set. ``sim.x0`` may be ``"equilibrium"``.
    """

    name: str = "scenario"
    plant: object = "example_ct"
    dgu_params: dict | None = None
    sampling_time: float | None = None
    graph: dict = field(default_factory=lambda: {"kind": "ring"})
    region: dict | None = None
    poles: list | None = None
    gains: object = "auto"
    gain_safety: float = 1.5
    u_max: float = 0.0
    rounds: int | None = None
    error_budget: float | None = None
    sim: dict = field(default_factory=lambda: {"horizon": 10.0})
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown scenario keys: {sorted(extra)}")
        sc = cls(**copy.deepcopy(data))
        sc.validate()
        return sc

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def validate(self):
        if isinstance(self.plant, str):
            if self.plant not in BUILTIN_PLANTS and not self.plant.endswith(".json"):
                raise ConfigError(f"unknown builtin plant {self.plant!r}")
        elif not isinstance(self.plant, dict):
            raise ConfigError("plant must be a builtin name, a path or an object")
        if self.dgu_params is not None:
            _check_keys(self.dgu_params, {f.name for f in fields(DguParams)},
                        "dgu_params")
        if not isinstance(self.graph, dict) or self.graph.get("kind") not in GRAPH_KINDS:
            raise ConfigError(f"graph.kind must be one of {GRAPH_KINDS}")
        _check_keys(self.graph, {"kind", "edges"}, "graph")
        if self.graph["kind"] == "edges" and not self.graph.get("edges"):
            raise ConfigError("graph of kind 'edges' needs an edge list")
        if self.region is not None:
            _check_keys(self.region, {"kind", "margin", "radius"}, "region")
            if self.region.get("kind") not in ("continuous", "discrete"):
                raise ConfigError("region.kind must be continuous or discrete")
        if self.gains != "auto":
            if not isinstance(self.gains, dict):
                raise ConfigError("gains must be 'auto' or {chi, gamma}")
            _check_keys(self.gains, {"chi", "gamma"}, "gains")
            if set(self.gains) != {"chi", "gamma"}:
                raise ConfigError("gains needs both chi and gamma")
        if not self.gain_safety > 1.0:
            raise ConfigError("gain_safety must exceed 1")
        if self.u_max < 0:
            raise ConfigError("u_max must be nonnegative")
        if self.rounds is not None and (int(self.rounds) != self.rounds
                                        or self.rounds < 1):
            raise ConfigError("rounds must be a positive integer")
        if self.error_budget is not None and not self.error_budget > 0:
            raise ConfigError("error_budget must be positive")
        if not isinstance(self.sim, dict):
            raise ConfigError("sim must be an object")
        _check_keys(self.sim, SIM_KEYS, "sim")
        if "horizon" not in self.sim:
            raise ConfigError("sim.horizon is required")
        if self.sampling_time is not None and not self.sampling_time > 0:
            raise ConfigError("sampling_time must be positive")

    def with_overrides(self, **changes):
        data = self.to_dict()
        for key, value in changes.items():
            if value is None:
                continue
            if key.startswith("sim."):
                data["sim"][key[4:]] = value
            elif key == "seed":
                noise = data["sim"].get("noise") or {}
                noise["seed"] = value
                data["sim"]["noise"] = noise
            else:
                data[key] = value
        return Scenario.from_dict(data)


def _check_keys(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(data) - set(allowed)
    if extra:
        raise ConfigError(f"unknown {where} keys: {sorted(extra)}")


BUILTIN_SCENARIOS = {
    "example_ct": {
        "name": "example_ct",
        "plant": "example_ct",
        "graph": {"kind": "ring"},
        "region": {"kind": "continuous", "margin": 0.0},
        "gains": {"chi": 279.0354, "gamma": 30.7682},
        "u_max": 2.0,
        "sim": {"horizon": 20.0, "dt": 1e-4, "x0": [1.0] * 6,
                "sign_smoothing_eps": 1e-3, "record_stride": 10},
        "output_dir": "out/example_ct",
    },
    "example_dt": {
        "name": "example_dt",
        "plant": "example_dt",
        "graph": {"kind": "ring"},
        "region": {"kind": "discrete", "radius": 0.999},
        "rounds": 12,
        "sim": {"horizon": 3000, "x0": [1.0] * 6},
        "output_dir": "out/example_dt",
    },
    "dgu": {
        "name": "dgu",
        "plant": "dgu",
        "sampling_time": 1e-3,
        "graph": {"kind": "ring"},
        "region": {"kind": "discrete", "radius": 0.99},
        "rounds": 16,
        "sim": {"horizon": 1000, "x0": "equilibrium"},
        "output_dir": "out/dgu",
    },
}


def load_scenario(source):
    """Scenario from a builtin name or a JSON file path."""
    if source in BUILTIN_SCENARIOS:
        return Scenario.from_dict(BUILTIN_SCENARIOS[source])
    try:
        with open(source) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario {source!r} is neither a builtin nor a file") \
            from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file is not valid JSON: {exc}") from exc
    return Scenario.from_dict(data)


# --- pipeline ---------------------------------------------------------------

def _build_plant(sc):
    if isinstance(sc.plant, dict):
        plant = plant_from_dict(sc.plant)
    elif sc.plant == "example_ct":
        plant = build_example_ct()
    elif sc.plant == "example_dt":
        plant = build_example_dt()
    elif sc.plant == "dgu":
        params = DguParams(**{k: tuple(map(tuple, v)) if k == "lines" else
                              (tuple(v) if isinstance(v, list) else v)
                              for k, v in (sc.dgu_params or {}).items()})
        plant = build_dgu_microgrid(params)
    else:
        try:
            with open(sc.plant) as fh:
                plant = plant_from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read plant file {sc.plant!r}: {exc}") from exc
    if sc.sampling_time is not None:
        plant = exact_discretize(plant, sc.sampling_time)
    return plant


def _build_graph(sc, n_nodes):
    kind = sc.graph["kind"]
    edges = {"ring": ring_edges, "path": path_edges,
             "complete": complete_edges}.get(kind)
    edges = edges(n_nodes) if edges else [tuple(e) for e in sc.graph["edges"]]
    return laplacian_from_edges(n_nodes, edges)


def _build_region(sc, discrete):
    reg = sc.region or {"kind": "discrete" if discrete else "continuous"}
    if (reg["kind"] == "discrete") != discrete:
        raise ConfigError("region kind does not match the plant time domain")
    if discrete:
        return DiscreteRegion(float(reg.get("radius", 1.0)))
    return ContinuousRegion(float(reg.get("margin", 0.0)))


def _parse_poles(spec):
    out = []
    for p in spec:
        if isinstance(p, (list, tuple)):
            out.append(complex(p[0], p[1]))
        else:
            out.append(complex(p))
    return np.array(out, dtype=complex)


@dataclass
class Pipeline:
    scenario: Scenario
    plant: object
    graph: object
    region: object
    decomps: list

    @property
    def discrete(self):
        return self.plant.is_discrete


def prepare(sc):
    plant = _build_plant(sc)
    graph = _build_graph(sc, plant.n_nodes)
    region = _build_region(sc, plant.is_discrete)
    if sc.poles is not None and len(sc.poles) != plant.n_nodes:
        raise ConfigError(f"poles needs one list per node ({plant.n_nodes})")
    decomps = []
    for i in range(plant.n_nodes):
        poles = None
        if sc.poles is not None and sc.poles[i] is not None:
            poles = _parse_poles(sc.poles[i])
        decomps.append(decompose_node(node_system(plant, i), region, poles))
        log.info("node %d decomposed: dim W*_g = %d", i + 1, decomps[-1].w_g_star.dim)
    return Pipeline(sc, plant, graph, region, decomps)


def _fmt_eigs(eigs):
    eigs = np.sort_complex(np.asarray(eigs, dtype=complex))
    if eigs.size == 0:
        return "{}"
    parts = []
    for z in eigs:
        if abs(z.imag) < 1e-9 * max(1.0, abs(z)):
            parts.append(f"{z.real:.6g}")
        else:
            parts.append(f"{z.real:.6g}{z.imag:+.6g}j")
    return "{" + ", ".join(parts) + "}"


def decompose_scenario(sc):
    """Per-node subspace report plus both joint-condition verdicts."""
    pipe = prepare(sc)
    lines = [f"scenario: {sc.name}",
             f"plant: n = {pipe.plant.n}, m = {pipe.plant.m}, "
             f"N = {pipe.plant.n_nodes}, "
             f"{'discrete' if pipe.discrete else 'continuous'}",
             f"region: {pipe.region.to_dict()}", ""]
    for i, d in enumerate(pipe.decomps):
        res = d.residuals()
        lines += [
            f"node {i + 1}: dim W* = {d.w_star.dim}, dim S* = {d.s_star.dim}, "
            f"dim W*_g = {d.w_g_star.dim}",
            f"  good zeros: {_fmt_eigs(d.fixed_spectrum.good)}",
            f"  bad zeros:  {_fmt_eigs(d.fixed_spectrum.bad)}",
            f"  quotient spectrum: {_fmt_eigs(d.assigned_spectrum)}",
            "  residuals: " + ", ".join(f"{k} {v:.1e}" for k, v in res.items()),
        ]
    ct = check_joint_condition_ct(pipe.decomps)
    dt = check_joint_condition_dt(pipe.decomps)
    lines.append("")
    for label, chk in (("continuous (intersection of W*_g)", ct),
                       ("discrete (intersection of Ker[P; C])", dt)):
        lines.append(f"joint condition {label}: {'holds' if chk.ok else 'VIOLATED'}")
        if not chk.ok:
            lines.append("  witness basis (columns):")
            for row in chk.witness.basis:
                lines.append("    " + " ".join(f"{v: .6f}" for v in row))
    return pipe, ct, dt, "\n".join(lines) + "\n"


def _sim_config(sc, plant):
    sim = dict(sc.sim)
    sim.pop("tail_fraction", None)
    x0 = sim.get("x0")
    if isinstance(x0, str):
        if x0 != "equilibrium":
            raise ConfigError("sim.x0 must be a vector, null or 'equilibrium'")
        sim["x0"] = tuple(equilibrium_state(plant))
    elif x0 is not None:
        sim["x0"] = tuple(x0)
    if sim.get("xhat0") is not None:
        sim["xhat0"] = tuple(np.asarray(sim["xhat0"], float).ravel())
    if sim.get("noise") is not None:
        sim["noise"] = NoiseConfig.from_dict(sim["noise"])
    return SimConfig(**sim)


def build_bank(pipe, rounds=None):
    sc = pipe.scenario
    if pipe.discrete:
        rounds = rounds if rounds is not None else sc.rounds
        return build_discrete_bank(pipe.decomps, pipe.graph, rounds=rounds,
                                   error_budget=sc.error_budget)
    if sc.gains == "auto":
        bounds = continuous_gain_bounds(pipe.decomps, pipe.graph, sc.u_max)
        chi = sc.gain_safety * bounds.chi_min
        gamma = sc.gain_safety * bounds.gamma_min
        log.info("auto gains: chi = %.6g, gamma = %.6g", chi, gamma)
    else:
        chi, gamma = sc.gains["chi"], sc.gains["gamma"]
    return build_continuous_bank(pipe.decomps, pipe.graph, sc.u_max, chi, gamma)


def tail_fraction(sc):
    return float(sc.sim.get("tail_fraction", 0.1))


def run_scenario(sc, rounds=None, pipe=None):
    """Decompose, synthesize and simulate. Returns ``(pipeline, bank, trace)``."""
    pipe = pipe or prepare(sc)
    if not pipe.discrete:
        chk = check_joint_condition_ct(pipe.decomps)
        if not chk.ok:
            log.warning("continuous joint condition fails (common dim %d)",
                        chk.witness.dim)
    bank = build_bank(pipe, rounds)
    cfg = _sim_config(sc, pipe.plant)
    sim = simulate_discrete if pipe.discrete else simulate_continuous
    trace = sim(pipe.plant, bank, cfg)
    return pipe, bank, trace


def summary_text(sc, pipe, bank, trace):
    tail = tail_fraction(sc)
    se = steady_error(trace, tail)
    lines = [f"scenario: {sc.name}",
             f"domain: {'discrete' if pipe.discrete else 'continuous'}",
             f"samples recorded: {len(trace.times)}",
             f"config digest: {trace.metadata['config_digest']}"]
    if pipe.discrete:
        net, bound = bound_check(trace, bank, tail)
        lines += [f"rounds d: {bank.rounds}", f"mu: {bank.mu:.6g}",
                  f"rate r: {bank.rate:.6g}",
                  f"state norm (tail max): {trace.x_norm_tail(tail):.6g}",
                  f"steady network error: {net:.6g}",
                  f"error bound: {bound:.6g}"]
    else:
        b = bank.bounds
        lines += [f"chi: {bank.chi.tolist()} (bound {b.chi_min:.6g})",
                  f"gamma: {bank.gamma.tolist()} (bound {b.gamma_min:.6g})",
                  f"u_max: {bank.u_max}"]
    lines.append("initial error per node: " + ", ".join(
        f"{v:.6g}" for v in trace.err_norm[0]))
    lines.append(f"steady error per node (tail {tail:g}): " + ", ".join(
        f"{v:.6g}" for v in se))
    return "\n".join(lines) + "\n"


def plot_errors(trace, path, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    floor = np.finfo(float).tiny
    for i in range(trace.n_nodes):
        ax.semilogy(trace.times, np.maximum(trace.err_norm[:, i], floor),
                    label=f"node {i + 1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("||e_i(t)||")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    tmp = os.fspath(path) + ".tmp.png"
    fig.savefig(tmp, dpi=120)
    plt.close(fig)
    os.replace(tmp, path)


def sweep_scenario(sc, d_values):
    """Rerun a discrete scenario per ``d``; rows ``(d, x_norm, error, bound)``."""
    d_values = list(d_values)
    if not d_values:
        raise ConfigError("d-list is empty")
    pipe = prepare(sc)
    if not pipe.discrete:
        raise ConfigError("sweep needs a discrete plant")
    rows = []
    tail = tail_fraction(sc)
    for d in d_values:
        _, bank, trace = run_scenario(sc, rounds=int(d), pipe=pipe)
        net, _ = bound_check(trace, bank, tail)
        x_norm = trace.x_norm_tail(tail)
        rows.append((int(d), x_norm, net, theorem3_bound(bank, x_norm)))
        log.info("d = %d: steady error %.6g", d, net)
    return rows
