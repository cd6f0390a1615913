"""Global plants, per-node partitions, built-in examples and discretization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, DimensionMismatch
from .geometry import NodeSystem
from .graphs import laplacian_from_edges, path_edges
from .signals import InputSignal, constant, cosine, sinusoid

__all__ = [
    "GlobalPlant",
    "DguParams",
    "node_system",
    "build_example_ct",
    "build_example_dt",
    "build_dgu_microgrid",
    "exact_discretize",
    "equilibrium_state",
    "plant_to_dict",
    "plant_from_dict",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GlobalPlant:
    """LTI plant ``x' = A x + B u`` (or ``x+ = ...``) observed by N nodes.

    ``known_inputs[i]`` lists the columns of ``B`` whose inputs node ``i``
    can read; the remaining columns are unknown to it. ``ts`` is ``None`` for
    continuous time, otherwise the sampling period used to evaluate the input
    signal at step ``k`` (time ``k * ts``).
    """

    a: np.ndarray
    b: np.ndarray
    outputs: tuple
    known_inputs: tuple
    ts: float | None = None
    signal: InputSignal | None = None
    name: str = "plant"
    state_names: tuple = field(default_factory=tuple)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {a.shape}")
        b = np.asarray(self.b, dtype=float).reshape(n, -1)
        outs = tuple(np.asarray(c, dtype=float).reshape(-1, n) for c in self.outputs)
        known = tuple(tuple(int(j) for j in k) for k in self.known_inputs)
        if len(known) != len(outs):
            raise ConfigError("one known-input set is needed per node output")
        m = b.shape[1]
        for i, k in enumerate(known):
            if len(set(k)) != len(k) or any(not 0 <= j < m for j in k):
                raise ConfigError(f"node {i + 1}: invalid known input columns {k}")
            p_i, unknown = outs[i].shape[0], m - len(k)
            if not unknown <= p_i <= n:
                log.warning("node %d: size relation m - l_i <= p_i <= n does "
                            "not hold (%d, %d, %d)", i + 1, unknown, p_i, n)
        if self.signal is not None and self.signal.m != m:
            raise DimensionMismatch(
                f"signal has {self.signal.m} channels, B has {m} columns")
        for mat in (a, b, *outs):
            mat.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "outputs", outs)
        object.__setattr__(self, "known_inputs", known)

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.b.shape[1]

    @property
    def n_nodes(self):
        return len(self.outputs)

    @property
    def is_discrete(self):
        return self.ts is not None

    def unknown_inputs(self, i):
        return tuple(j for j in range(self.m) if j not in self.known_inputs[i])

    def input_at(self, t):
        if self.signal is None:
            return np.zeros(self.m)
        return self.signal(t)


def node_system(plant, i):
    """Local system of node ``i`` (0-based)."""
    if not 0 <= i < plant.n_nodes:
        raise IndexError(f"node index {i} out of range for {plant.n_nodes} nodes")
    known = list(plant.known_inputs[i])
    unknown = list(plant.unknown_inputs(i))
    return NodeSystem(plant.a, plant.b[:, known], plant.b[:, unknown],
                      plant.outputs[i], node_id=i, known_columns=tuple(known))


def _unit_rows(n, *rows):
    c = np.zeros((len(rows), n))
    for r, cols in enumerate(rows):
        for j in np.atleast_1d(cols):
            c[r, j] = 1.0
    return c


def build_example_ct():
    """Six-state, three-input continuous-time plant observed by four nodes."""
    a = np.array([
        [0, 3, 0, 0, 0, 0],
        [-2, 0, 1, 0, 0, 0],
        [0, 0, 0, 2, 0, 0],
        [0, 0, -3, -2, 0, 0],
        [0, 0, 0, 1, 0, -3],
        [0, 1.5, 0, 0, 4, 0],
    ], dtype=float)
    b = np.array([
        [0, 1, 0, 0, 0, 1],
        [0, 0, 0, 1, 0, 0],
        [0, 0, 1, 0, 0, 1],
    ], dtype=float).T
    outputs = (
        _unit_rows(6, 0, 1),
        _unit_rows(6, [1, 4]),
        _unit_rows(6, 2, 4),
        _unit_rows(6, [0, 1]),
    )
    known = ((0, 1), (0, 2), (1, 2), (0,))
    signal = InputSignal(((sinusoid(1.0, 1.0),), (cosine(2.0, 1.0),),
                          (sinusoid(2.0, 0.5),)))
    return GlobalPlant(a, b, outputs, known, None, signal, "example_ct")


def build_example_dt():
    """Six-state, three-input discrete-time plant observed by four nodes."""
    a = np.array([
        [0.9925, 0.1496, 0.0037, 0.0001, 0, 0],
        [-0.0998, 0.9925, 0.0498, 0.0024, 0, 0],
        [0, 0, 0.9928, 0.0949, 0, 0],
        [0, 0, -0.1424, 0.8978, 0, 0],
        [0.0002, -0.0056, -0.0037, 0.0472, 0.9850, -0.1493],
        [-0.0037, 0.0744, 0.0016, 0.0049, 0.1990, 0.9850],
    ])
    b = np.array([
        [0.0037, 0.0499, 0, 0, 0.0497, 0.0069],
        [0, 0, 0.0024, 0.0475, 0.0012, 0.0001],
        [0.0001, 0.0012, 0.0499, -0.0036, -0.0038, 0.0498],
    ]).T
    outputs = (
        _unit_rows(6, 0),
        _unit_rows(6, 1),
        _unit_rows(6, 2),
        _unit_rows(6, [3, 5]),
    )
    known = ((1,), (0, 2), (2,), (1, 2))
    signal = InputSignal(((sinusoid(1.0, 0.01),), (cosine(1.0, 0.05),),
                          (sinusoid(0.5, 0.05),)))
    return GlobalPlant(a, b, outputs, known, 1.0, signal, "example_dt")


@dataclass(frozen=True)
class DguParams:
    """Electrical and control parameters of the five-unit DC microgrid.

    Inductance is in henries (1.8 mH). Each unit ``i`` belongs to load /
    reference ``group[i]``; units of a group share one load current and one
    voltage reference. The default references and loads put the equilibrium
    state at norm 357.34.
    """

    c_t: float = 2.2e-3
    l_t: float = 1.8e-3
    r_t: float = 0.2
    r_line: float = 0.05
    k_gain: tuple = (-2.134, -0.163, 13.553)
    groups: tuple = (0, 0, 0, 1, 1)
    lines: tuple = tuple(path_edges(5))
    v_ref: tuple = (150.0, 148.0)
    loads: tuple = (37.1054, 37.1054)

    def __post_init__(self):
        for name in ("c_t", "l_t", "r_t", "r_line"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if len(self.v_ref) != len(self.loads):
            raise ConfigError("one reference and one load per group")


def build_dgu_microgrid(params=None):
    """Continuous-time DC microgrid with voltage-tracking primary control.

    State per unit: (V_i, I_ti, v_i) with integrator ``v_i' = V_ref - V_i``.
    Global inputs are ``(I_load, V_ref)`` per group; each unit knows its own
    group's pair and measures ``(V_i, I_ti)``.
    """
    p = params or DguParams()
    n_units = len(p.groups)
    n_groups = len(p.v_ref)
    graph = laplacian_from_edges(n_units, p.lines)
    if not graph.is_connected():
        raise ConfigError("electrical line graph is disconnected")
    adj = graph.adjacency
    k1, k2, k3 = p.k_gain
    a = np.zeros((3 * n_units, 3 * n_units))
    for i in range(n_units):
        s = slice(3 * i, 3 * i + 3)
        a[s, s] = [
            [-adj[i].sum() / (p.r_line * p.c_t), 1 / p.c_t, 0],
            [(k1 - 1) / p.l_t, (k2 - p.r_t) / p.l_t, k3 / p.l_t],
            [-1, 0, 0],
        ]
        for j in range(n_units):
            if adj[i, j]:
                a[3 * i, 3 * j] = 1 / (p.r_line * p.c_t)
    b = np.zeros((3 * n_units, 2 * n_groups))
    for i, g in enumerate(p.groups):
        b[3 * i, 2 * g] = -1 / p.c_t
        b[3 * i + 2, 2 * g + 1] = 1.0
    outputs = tuple(np.eye(3 * n_units)[3 * i:3 * i + 2] for i in range(n_units))
    known = tuple((2 * g, 2 * g + 1) for g in p.groups)
    chans = []
    for load, ref in zip(p.loads, p.v_ref):
        chans += [(constant(load),), (constant(ref),)]
    names = tuple(f"{q}_{i + 1}" for i in range(n_units) for q in ("V", "It", "int"))
    return GlobalPlant(a, b, outputs, known, None, InputSignal(tuple(chans)),
                       "dgu", names)


def exact_discretize(plant, ts):
    """Zero-order-hold discretization via one matrix exponential."""
    if plant.is_discrete:
        raise ConfigError("plant is already discrete")
    if ts <= 0:
        raise ConfigError("sampling time must be positive")
    n, m = plant.n, plant.m
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = plant.a
    blk[:n, n:] = plant.b
    phi = expm(blk * ts)
    return GlobalPlant(phi[:n, :n], phi[:n, n:], plant.outputs,
                       plant.known_inputs, float(ts), plant.signal,
                       plant.name, plant.state_names)


def equilibrium_state(plant, t=0.0):
    """Steady state for the input held at its value at time ``t``."""
    u = plant.input_at(t)
    lhs = np.eye(plant.n) - plant.a if plant.is_discrete else -plant.a
    try:
        return np.linalg.solve(lhs, plant.b @ u)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("plant has no unique equilibrium") from exc


def plant_to_dict(plant):
    return {
        "name": plant.name,
        "a": plant.a.tolist(),
        "b": plant.b.tolist(),
        "outputs": [c.tolist() for c in plant.outputs],
        "known_inputs": [list(k) for k in plant.known_inputs],
        "ts": plant.ts,
        "signals": plant.signal.to_list() if plant.signal is not None else None,
    }


_PLANT_KEYS = {"name", "a", "b", "outputs", "known_inputs", "ts", "signals"}


def plant_from_dict(data):
    extra = set(data) - _PLANT_KEYS
    if extra:
        raise ConfigError(f"unknown plant keys: {sorted(extra)}")
    missing = {"a", "b", "outputs", "known_inputs"} - set(data)
    if missing:
        raise ConfigError(f"missing plant keys: {sorted(missing)}")
    signal = data.get("signals")
    n = len(data["a"])
    outputs = [np.asarray(c, dtype=float).reshape(-1, n) for c in data["outputs"]]
    return GlobalPlant(
        np.asarray(data["a"], dtype=float), np.asarray(data["b"], dtype=float),
        tuple(outputs), tuple(data["known_inputs"]), data.get("ts"),
        InputSignal.from_list(signal) if signal is not None else None,
        data.get("name", "plant"))
