"""Deterministic simulation of plants together with DUIO banks."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, NonFiniteState, RankDeficientChannel
from .synthesis import theorem3_bound

__all__ = [
    "NoiseConfig",
    "SimConfig",
    "SimulationTrace",
    "simulate_continuous",
    "simulate_discrete",
    "consensus_rounds",
    "reconstruct_unknown_input_dt",
    "reconstruct_unknown_input_ct",
    "steady_error",
    "steady_network_error",
    "write_trace_csv",
    "bound_check",
]

STATE_LIMIT = 1e12
DEFAULT_TAIL = 0.1


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement and input noise.

    ``sensor_std`` is added to every output channel (a scalar, or one value
    per stacked output row). ``input_snr_db`` perturbs the plant inputs listed
    in ``input_channels`` with white noise at that signal-to-noise ratio, the
    signal power being the running value squared; observers keep the nominal
    input.
    """

    sensor_std: float | tuple = 0.0
    input_snr_db: float | None = None
    input_channels: tuple = ()
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        extra = set(data) - {"sensor_std", "input_snr_db", "input_channels", "seed"}
        if extra:
            raise ConfigError(f"unknown noise keys: {sorted(extra)}")
        d = dict(data)
        if isinstance(d.get("sensor_std"), list):
            d["sensor_std"] = tuple(d["sensor_std"])
        d["input_channels"] = tuple(d.get("input_channels", ()))
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["input_channels"] = list(self.input_channels)
        if isinstance(self.sensor_std, tuple):
            d["sensor_std"] = list(self.sensor_std)
        return d


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``horizon`` is in seconds for continuous plants and in samples for
    discrete ones. ``x0`` and ``xhat0`` default to zeros; ``xhat0`` is either
    one vector shared by all nodes or one vector per node.
    """

    horizon: float
    dt: float = 1e-4
    x0: tuple | None = None
    xhat0: tuple | None = None
    sign_smoothing_eps: float = 1e-3
    noise: NoiseConfig | None = None
    record_stride: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.sign_smoothing_eps < 0:
            raise ConfigError("sign smoothing must be nonnegative")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigError("record_stride must be a positive integer")

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "dt": self.dt,
            "x0": None if self.x0 is None else np.asarray(self.x0, float).tolist(),
            "xhat0": None if self.xhat0 is None
            else np.asarray(self.xhat0, float).tolist(),
            "sign_smoothing_eps": self.sign_smoothing_eps,
            "noise": None if self.noise is None else self.noise.to_dict(),
            "record_stride": self.record_stride,
        }

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    err_norm: np.ndarray
    u: np.ndarray
    z: tuple | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.xhat.shape[1]

    @property
    def steady_err(self):
        return steady_error(self)

    @property
    def network_err(self):
        """Norm of the stacked error ``col(e_1, ..., e_N)`` per sample."""
        return np.sqrt(np.sum(self.err_norm ** 2, axis=1))

    def x_norm_tail(self, tail_fraction=DEFAULT_TAIL):
        k = _tail_len(len(self.times), tail_fraction)
        return float(np.linalg.norm(self.x[-k:], axis=1).max())


def _tail_len(count, tail_fraction):
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    return max(1, int(math.ceil(tail_fraction * count)))


def steady_error(trace, tail_fraction=DEFAULT_TAIL):
    """Per-node mean of ``||e_i||`` over the last ``tail_fraction`` of the run."""
    k = _tail_len(len(trace.times), tail_fraction)
    return trace.err_norm[-k:].mean(axis=0)


def steady_network_error(trace, tail_fraction=DEFAULT_TAIL):
    """Tail mean of the stacked error norm, the quantity bounded network-wide."""
    k = _tail_len(len(trace.times), tail_fraction)
    return float(trace.network_err[-k:].mean())


def _initial_states(plant, n_nodes, cfg):
    n = plant.n
    x0 = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, float).ravel()
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 has {x0.size} entries, plant has {n} states")
    if cfg.xhat0 is None:
        xh = np.zeros((n_nodes, n))
    else:
        xh = np.asarray(cfg.xhat0, float)
        xh = np.broadcast_to(xh.reshape(-1, n), (n_nodes, n)).copy() \
            if xh.size in (n, n * n_nodes) else None
        if xh is None:
            raise DimensionMismatch("xhat0 must have n or N*n entries")
    return x0, xh


class _Noise:
    def __init__(self, cfg, plant):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed if cfg else 0)
        p_total = sum(c.shape[0] for c in plant.outputs)
        if cfg is None:
            self.sensor = np.zeros(p_total)
        else:
            std = np.asarray(cfg.sensor_std, float).ravel()
            if std.size not in (1, p_total):
                raise ConfigError(f"sensor_std needs 1 or {p_total} entries")
            self.sensor = np.broadcast_to(std, (p_total,)).copy()
        self.channels = list(cfg.input_channels) if cfg else []
        if any(not 0 <= j < plant.m for j in self.channels):
            raise ConfigError("input noise channel out of range")
        self.snr = None if cfg is None else cfg.input_snr_db

    def output(self):
        if not np.any(self.sensor):
            return np.zeros_like(self.sensor)
        return self.sensor * self.rng.standard_normal(self.sensor.size)

    def input(self, u):
        if self.snr is None or not self.channels:
            return u
        u = u.copy()
        scale = 10.0 ** (-self.snr / 20.0)
        for j in self.channels:
            u[j] += abs(u[j]) * scale * self.rng.standard_normal()
        return u


def _split_rows(vec, plant):
    out, k = [], 0
    for c in plant.outputs:
        out.append(vec[k:k + c.shape[0]])
        k += c.shape[0]
    return out


def _check_bank(plant, bank):
    if bank.n != plant.n or bank.n_nodes != plant.n_nodes:
        raise DimensionMismatch(
            f"bank ({bank.n_nodes} nodes, n={bank.n}) does not match plant "
            f"({plant.n_nodes} nodes, n={plant.n})")


# --- continuous time --------------------------------------------------------

def _continuous_matrices(plant, bank):
    n, nn = plant.n, bank.n_nodes
    dim = n * (nn + 1)
    lap = bank.graph.laplacian
    m_lin = np.zeros((dim, dim))
    m_lin[:n, :n] = plant.a
    g_obs = np.zeros((dim, plant.m))
    l_out = np.zeros((dim, sum(c.shape[0] for c in plant.outputs)))
    w_cols = [d.w_g_star.dim for d in bank.decomps]
    s_mat = np.zeros((sum(w_cols), dim))
    gam = np.zeros((dim, sum(w_cols)))
    row_y, col_w = 0, 0
    for i, d in enumerate(bank.decomps):
        rows = slice(n * (i + 1), n * (i + 2))
        c_i = plant.outputs[i]
        m_lin[rows, :n] = -d.l_gain @ c_i
        m_lin[rows, rows] = plant.a + d.l_gain @ c_i
        w = d.w_g_star.basis
        proj = w @ w.T
        for j in range(nn):
            if lap[i, j]:
                cols = slice(n * (j + 1), n * (j + 2))
                m_lin[rows, cols] -= bank.chi[i] * lap[i, j] * proj
                s_mat[col_w:col_w + w.shape[1], cols] = lap[i, j] * w.T
        known = list(plant.known_inputs[i])
        g_obs[rows, known] = plant.b[:, known]
        p_i = c_i.shape[0]
        l_out[rows, row_y:row_y + p_i] = -d.l_gain
        gam[rows, col_w:col_w + w.shape[1]] = -bank.gamma[i] * w
        row_y += p_i
        col_w += w.shape[1]
    b_plant = np.zeros((dim, plant.m))
    b_plant[:n] = plant.b
    return m_lin, b_plant, g_obs, l_out, s_mat, gam


def simulate_continuous(plant, bank, cfg):
    """Fixed-step RK4 integration of the plant and every node observer.

    The sliding term uses ``s / (|s| + eps)`` when ``eps > 0``. With
    ``eps = 0`` it uses ``sign(s)`` saturated linearly inside the band the
    sliding term itself can cross in one step, which prevents the explicit
    scheme from overshooting the switching surface.
    """
    if plant.is_discrete:
        raise ConfigError("simulate_continuous needs a continuous plant")
    _check_bank(plant, bank)
    n, nn = plant.n, bank.n_nodes
    x0, xh0 = _initial_states(plant, nn, cfg)
    m_lin, b_plant, g_obs, l_out, s_mat, gam = _continuous_matrices(plant, bank)
    dt = float(cfg.dt)
    steps = int(round(cfg.horizon / dt))
    if steps < 1:
        raise ConfigError("horizon shorter than one step")
    eps = float(cfg.sign_smoothing_eps)
    has_sliding = s_mat.shape[0] > 0 and np.any(gam)
    band = dt * np.linalg.norm(s_mat @ gam, 2) if has_sliding else 0.0

    def sliding(s):
        if eps > 0:
            return s / (np.abs(s) + eps)
        if band > 0:
            return np.clip(s / band, -1.0, 1.0)
        return np.sign(s)

    def rhs(state, drive):
        out = m_lin @ state + drive
        if has_sliding:
            out += gam @ sliding(s_mat @ state)
        return out

    noise = _Noise(cfg.noise, plant)
    stride = int(cfg.record_stride)
    n_rec = steps // stride + 1
    rec_t = np.empty(n_rec)
    rec_s = np.empty((n_rec, n * (nn + 1)))
    rec_u = np.empty((n_rec, plant.m))
    state = np.concatenate([x0, xh0.ravel()])
    u_nom = plant.input_at(0.0)
    rec_t[0], rec_s[0], rec_u[0] = 0.0, state, u_nom
    r = 1
    for k in range(steps):
        t = k * dt
        nu = l_out @ noise.output()
        u_mid, u_end = plant.input_at(t + 0.5 * dt), plant.input_at(t + dt)
        d0 = b_plant @ noise.input(u_nom) + g_obs @ u_nom + nu
        d1 = b_plant @ noise.input(u_mid) + g_obs @ u_mid + nu
        d2 = b_plant @ noise.input(u_end) + g_obs @ u_end + nu
        k1 = rhs(state, d0)
        k2 = rhs(state + 0.5 * dt * k1, d1)
        k3 = rhs(state + 0.5 * dt * k2, d1)
        k4 = rhs(state + dt * k3, d2)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        u_nom = u_end
        if (k + 1) % stride == 0:
            if not np.all(np.abs(state) < STATE_LIMIT):
                raise NonFiniteState(
                    f"state left the finite range at t = {t + dt:.6g}; "
                    "check gains and step size")
            rec_t[r], rec_s[r], rec_u[r] = (k + 1) * dt, state, u_nom
            r += 1
    if not np.all(np.isfinite(state)):
        raise NonFiniteState("state is not finite at the end of the run")
    x = rec_s[:r, :n]
    xhat = rec_s[:r, n:].reshape(r, nn, n)
    err = np.linalg.norm(x[:, None, :] - xhat, axis=2)
    meta = {"config_digest": cfg.digest(), "domain": "continuous",
            "bank": bank.to_dict(), "steps": steps, "smoothing": eps}
    return SimulationTrace(rec_t[:r], x, xhat, err, rec_u[:r], None, meta)


def reconstruct_unknown_input_ct(trace, bank, node, tau, eps=None):
    """Low-pass filtered sliding term ``gamma Bbar^+ W sigma(s)`` at ``node``.

    ``tau`` is the filter time constant. ``eps`` defaults to the smoothing in
    the trace metadata if present, else 1e-3.
    """
    if tau <= 0:
        raise ConfigError("filter time constant must be positive")
    d = bank.decomps[node]
    b_bar = d.system.b_unknown
    _require_full_column_rank(b_bar, node)
    if eps is None:
        eps = trace.metadata.get("smoothing", 1e-3)
    lap = bank.graph.laplacian
    w = d.w_g_star.basis
    diff = -np.einsum("j,tjn->tn", lap[node], trace.xhat)
    s = diff @ w
    sig = s / (np.abs(s) + eps) if eps > 0 else np.sign(s)
    raw = bank.gamma[node] * sig @ w.T @ np.linalg.pinv(b_bar).T
    out = np.empty_like(raw)
    out[0] = raw[0]
    steps = np.diff(trace.times)
    for k in range(1, len(raw)):
        a = math.exp(-steps[k - 1] / tau)
        out[k] = a * out[k - 1] + (1.0 - a) * raw[k]
    return out


# --- discrete time ----------------------------------------------------------

def consensus_rounds(w, zeta, rounds):
    """Apply ``rounds`` synchronous averaging steps; rows of ``zeta`` are nodes."""
    for _ in range(rounds):
        zeta = w @ zeta
    return zeta


def simulate_discrete(plant, bank, cfg):
    """Two-time-scale simulation: one plant step, then ``d`` consensus rounds.

    ``z_i(0)`` is ``P_i xhat0_i``. Samples ``0..horizon`` are recorded; the
    estimate at sample ``t`` uses the measurement taken at ``t``.
    """
    if not plant.is_discrete:
        raise ConfigError("simulate_discrete needs a discrete plant")
    _check_bank(plant, bank)
    steps = int(cfg.horizon)
    if steps != cfg.horizon:
        raise ConfigError("discrete horizon must be an integer number of samples")
    n, nn = plant.n, bank.n_nodes
    x0, xh0 = _initial_states(plant, nn, cfg)
    noise = _Noise(cfg.noise, plant)
    decomps = bank.decomps
    proj = [d.projection for d in decomps]
    inj = [-p @ d.l_gain for p, d in zip(proj, decomps)]
    drive = [p @ s.b_known for p, s in zip(proj, bank.systems)]
    z = [p @ xh0[i] for i, p in enumerate(proj)]
    w_cons = bank.consensus_w
    stride = int(cfg.record_stride)
    n_rec = steps // stride + 1
    rec_t = np.empty(n_rec)
    rec_x = np.empty((n_rec, n))
    rec_xh = np.empty((n_rec, nn, n))
    rec_u = np.empty((n_rec, plant.m))
    rec_z = [np.empty((n_rec, p.shape[0])) for p in proj]
    x = x0.copy()
    zeta = np.empty((nn, n))
    r = 0
    for t in range(steps + 1):
        u_nom = plant.input_at(t * plant.ts)
        ys = _split_rows(np.concatenate([c @ x for c in plant.outputs])
                         + noise.output(), plant)
        for i in range(nn):
            e_i, f_i = bank.ei_fi[i]
            zeta[i] = e_i @ z[i] + f_i @ ys[i]
        xhat = nn * consensus_rounds(w_cons, zeta, bank.rounds)
        if t % stride == 0:
            rec_t[r], rec_x[r], rec_xh[r], rec_u[r] = t, x, xhat, u_nom
            for i in range(nn):
                rec_z[i][r] = z[i]
            r += 1
        if t == steps:
            break
        for i in range(nn):
            u_i = u_nom[list(plant.known_inputs[i])]
            z[i] = bank.a_bar[i] @ z[i] + inj[i] @ ys[i] + drive[i] @ u_i
        x = plant.a @ x + plant.b @ noise.input(u_nom)
        if not np.all(np.abs(x) < STATE_LIMIT) or not all(
                np.all(np.abs(zi) < STATE_LIMIT) for zi in z):
            raise NonFiniteState(f"state left the finite range at sample {t + 1}")
    err = np.linalg.norm(rec_x[:r, None, :] - rec_xh[:r], axis=2)
    meta = {"config_digest": cfg.digest(), "domain": "discrete",
            "bank": bank.to_dict(), "ts": plant.ts, "steps": steps}
    return SimulationTrace(rec_t[:r] * plant.ts, rec_x[:r], rec_xh[:r], err,
                           rec_u[:r], tuple(z_[:r] for z_ in rec_z), meta)


def _require_full_column_rank(b_bar, node):
    if b_bar.shape[1] == 0:
        raise RankDeficientChannel(f"node {node + 1} has no unknown inputs")
    s = np.linalg.svd(b_bar, compute_uv=False)
    if s[-1] <= 1e-9 * max(b_bar.shape) * s[0]:
        raise RankDeficientChannel(
            f"node {node + 1}: unknown-input matrix has dependent columns")


def reconstruct_unknown_input_dt(trace, bank, node):
    """One-step-delayed estimate of the unknown inputs of ``node``.

    ``ubar(t-1) = Bbar^+ (xhat(t) - A xhat(t-1) - B_i u_i(t-1))`` using the
    known-input matrix ``B_i``. Row ``k`` of the result estimates the input
    applied between samples ``k`` and ``k + 1``; the trace must be recorded at
    every sample.
    """
    sys = bank.systems[node]
    _require_full_column_rank(sys.b_unknown, node)
    if trace.metadata.get("domain") != "discrete":
        raise ConfigError("reconstruction needs a discrete trace")
    xh = trace.xhat[:, node, :]
    known = _known_columns(sys)
    u_i = trace.u[:-1][:, known]
    resid = xh[1:] - xh[:-1] @ sys.a.T - u_i @ sys.b_known.T
    return resid @ np.linalg.pinv(sys.b_unknown).T


def _known_columns(sys):
    cols = sys.known_columns
    if cols is None:
        raise ConfigError("node system does not record its known input columns")
    return list(cols)


# --- export -----------------------------------------------------------------

def trace_header(trace):
    n = trace.x.shape[1]
    cols = ["t"] + [f"x_{k + 1}" for k in range(n)]
    for i in range(trace.n_nodes):
        cols += [f"xhat{i + 1}_{k + 1}" for k in range(n)]
    cols += [f"errnorm_{i + 1}" for i in range(trace.n_nodes)]
    return cols


def write_trace_csv(trace, path):
    """Write the trace as CSV with 15 significant digits, atomically."""
    data = np.column_stack([trace.times, trace.x,
                            trace.xhat.reshape(len(trace.times), -1),
                            trace.err_norm])
    _atomic_savetxt(path, data, ",".join(trace_header(trace)))


def _atomic_savetxt(path, data, header):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            np.savetxt(fh, data, delimiter=",", fmt="%.15g", header=header,
                       comments="")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def bound_check(trace, bank, tail_fraction=DEFAULT_TAIL):
    """Steady network error next to the consensus error bound at the tail state norm."""
    x_norm = trace.x_norm_tail(tail_fraction)
    return steady_network_error(trace, tail_fraction), theorem3_bound(bank, x_norm)
