"""Observer-bank synthesis for the continuous and discrete DUIO schemes.

Continuous bank
    Each node runs ``A_L x_i - L y_i + B_i u_i`` plus a consensus term
    ``chi W W^T sum a_ij (x_j - x_i)`` and a sliding term acting inside its
    W*_g. Gains must exceed the Lyapunov lower bounds returned by
    :func:`continuous_gain_bounds`.

Discrete bank
    Each node runs a reduced estimator ``z_i`` of ``P_i x``, forms
    ``zeta_i = E_i z_i + F_i y_i`` and averages it over ``d`` rounds of the
    consensus matrix ``W = I - L/mu``. Since ``sum_i (E_i P_i + F_i C_i) = I``
    the network average of ``zeta`` equals ``x / N`` in steady state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import Disconnected, GainTooSmall, JointConditionViolated
from .subspace import SubspaceBasis, intersect_all, kernel

__all__ = [
    "JointCheck",
    "GainBounds",
    "ContinuousObserverBank",
    "DiscreteObserverBank",
    "check_joint_condition_ct",
    "check_joint_condition_dt",
    "continuous_gain_bounds",
    "build_continuous_bank",
    "build_consensus_matrix",
    "compute_ei_fi",
    "build_discrete_bank",
    "rounds_for_budget",
    "theorem3_bound",
]

PHI_RCOND = 1e-8
THETA_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class JointCheck:
    """Verdict of a joint geometric condition; ``witness`` spans the failure."""

    ok: bool
    witness: SubspaceBasis

    def __bool__(self):
        return self.ok


def _ambient(decomps):
    dims = {d.system.n for d in decomps}
    if len(dims) != 1:
        raise ValueError(f"decompositions live in different spaces: {sorted(dims)}")
    return dims.pop()


def check_joint_condition_ct(decomps):
    """Whether the W*_g of all nodes intersect only in the origin."""
    _ambient(decomps)
    common = intersect_all([d.w_g_star for d in decomps])
    return JointCheck(common.is_zero(), common)


def _stacked_rows(d):
    return np.vstack([d.projection, d.system.c])


def check_joint_condition_dt(decomps, systems=None):
    """Whether the kernels of ``[P_i; C_i]`` intersect only in the origin.

    ``systems`` defaults to the systems stored in the decompositions.
    """
    n = _ambient(decomps)
    systems = systems or [d.system for d in decomps]
    kernels = []
    for d, sys in zip(decomps, systems):
        rows = np.vstack([d.projection, sys.c]).reshape(-1, n)
        kernels.append(kernel(rows))
    common = intersect_all(kernels)
    return JointCheck(common.is_zero(), common)


# --- continuous-time bank ---------------------------------------------------

@dataclass(frozen=True)
class GainBounds:
    chi_min: float
    gamma_min: float
    a_tilde_norm: float
    theta_sigma_min: float


def _block_diag(blocks, rows):
    blocks = [np.asarray(b, dtype=float).reshape(rows, -1) for b in blocks]
    return scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))


def stacked_insertion(decomps):
    """Block-diagonal insertion ``diag(W_g,1, ..., W_g,N)``."""
    n = _ambient(decomps)
    return _block_diag([d.w_g_star.basis for d in decomps], n)


def theta_matrix(decomps, graph):
    """``Theta = W^T (L kron I_n) W`` for the stacked insertion ``W``."""
    n = _ambient(decomps)
    w = stacked_insertion(decomps)
    return w.T @ np.kron(graph.laplacian, np.eye(n)) @ w


def continuous_gain_bounds(decomps, graph, u_max):
    """Lower bounds on the uniform consensus and sliding gains.

    ``chi > ||A~_L||_2 / sigma_min(Theta)`` with ``A~_L`` the block diagonal
    of the restrictions to W*_g, and
    ``gamma > u_max * max ||Bbar_i||_1 * max ||W_g,i||_inf``.
    """
    if u_max < 0:
        raise ValueError("u_max must be nonnegative")
    theta = theta_matrix(decomps, graph)
    a_tilde = scipy.linalg.block_diag(*[d.a_tilde for d in decomps])
    if theta.size == 0:
        chi_min, a_norm, sig = 0.0, 0.0, math.inf
    else:
        sig = float(np.linalg.svd(theta, compute_uv=False)[-1])
        scale = max(1.0, float(np.linalg.norm(theta, 2)))
        if sig <= THETA_TOL * scale:
            raise JointConditionViolated(
                f"Theta is singular (sigma_min = {sig:.3e}); the W*_g "
                "subspaces share a nonzero direction or the graph is disconnected")
        a_norm = float(np.linalg.norm(a_tilde, 2))
        chi_min = a_norm / sig
    b_norm = max((np.linalg.norm(d.system.b_unknown, 1)
                  if d.system.b_unknown.size else 0.0) for d in decomps)
    w_norm = max((np.linalg.norm(d.w_g_star.basis, np.inf)
                  if d.w_g_star.dim else 0.0) for d in decomps)
    return GainBounds(chi_min, float(u_max * b_norm * w_norm), a_norm, sig)


@dataclass(frozen=True, eq=False)
class ContinuousObserverBank:
    decomps: tuple
    graph: object
    chi: np.ndarray
    gamma: np.ndarray
    u_max: float
    bounds: GainBounds

    @property
    def n(self):
        return self.decomps[0].system.n

    @property
    def n_nodes(self):
        return len(self.decomps)

    def to_dict(self):
        return {
            "chi": self.chi.tolist(),
            "gamma": self.gamma.tolist(),
            "u_max": self.u_max,
            "chi_min": self.bounds.chi_min,
            "gamma_min": self.bounds.gamma_min,
        }


def _per_node(value, count, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (count,)).copy()
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    return arr


def build_continuous_bank(decomps, graph, u_max, chi, gamma, check_bounds=True):
    """Assemble the continuous bank; gains may be scalars or per-node arrays.

    With ``check_bounds=False`` gains below the bounds are accepted, which is
    useful for experiments that disable coupling on purpose.
    """
    decomps = tuple(decomps)
    if graph.n_nodes != len(decomps):
        raise ValueError(f"graph has {graph.n_nodes} nodes, "
                         f"{len(decomps)} decompositions given")
    if not graph.is_connected():
        raise Disconnected("communication graph is not connected")
    chi = _per_node(chi, len(decomps), "chi")
    gamma = _per_node(gamma, len(decomps), "gamma")
    try:
        bounds = continuous_gain_bounds(decomps, graph, u_max)
    except JointConditionViolated:
        if check_bounds:
            raise
        bounds = GainBounds(math.nan, math.nan, math.nan, 0.0)
    if check_bounds:
        if chi.min() <= bounds.chi_min:
            raise GainTooSmall(
                f"chi = {chi.min():.6g} does not exceed the bound "
                f"{bounds.chi_min:.6g}")
        if bounds.gamma_min > 0 and gamma.min() <= bounds.gamma_min:
            raise GainTooSmall(
                f"gamma = {gamma.min():.6g} does not exceed the bound "
                f"{bounds.gamma_min:.6g}")
    chi.setflags(write=False)
    gamma.setflags(write=False)
    return ContinuousObserverBank(decomps, graph, chi, gamma, float(u_max), bounds)


# --- discrete-time bank -----------------------------------------------------

def build_consensus_matrix(graph):
    """Fastest uniform-weight consensus matrix ``W = I - L/mu``.

    Returns ``(W, mu, r)`` with ``mu = (l2 + lN)/2`` and
    ``r = (lN - l2)/(lN + l2)``, the modulus of the second largest eigenvalue
    of ``W``.
    """
    if not graph.is_connected():
        raise Disconnected(f"graph is disconnected (lambda_2 = {graph.lambda2:.3e})")
    n = graph.n_nodes
    if n == 1:
        return np.ones((1, 1)), 1.0, 0.0
    l2, ln = graph.lambda2, graph.lambda_max
    mu = 0.5 * (l2 + ln)
    w = np.eye(n) - graph.laplacian / mu
    r = (ln - l2) / (ln + l2)
    return w, mu, r


def compute_ei_fi(decomps, systems=None):
    """Blocks ``(E_i, F_i)`` of the pseudoinverse of ``R = col([P_i; C_i])``.

    Raises :class:`JointConditionViolated` when ``Phi = R^T R`` is numerically
    singular (``sigma_min(Phi) < 1e-8 sigma_max(Phi)``).
    """
    n = _ambient(decomps)
    systems = systems or [d.system for d in decomps]
    blocks = [(d.projection.reshape(-1, n), s.c.reshape(-1, n))
              for d, s in zip(decomps, systems)]
    r = np.vstack([np.vstack(b) for b in blocks])
    u, s, vh = np.linalg.svd(r, full_matrices=False)
    if s.size < n or s[0] == 0 or (s[-1] / s[0]) ** 2 < PHI_RCOND:
        sig = 0.0 if s.size < n else s[-1] ** 2
        raise JointConditionViolated(
            f"stacked [P_i; C_i] is rank deficient (sigma_min(Phi) = {sig:.3e})")
    pinv = (vh.T / s) @ u.T
    out, col = [], 0
    for p, c in blocks:
        e = pinv[:, col:col + p.shape[0]]
        col += p.shape[0]
        f = pinv[:, col:col + c.shape[0]]
        col += c.shape[0]
        out.append((e, f))
    return out


def theorem3_constant(n_nodes, rate, rounds):
    return (n_nodes - 1) * math.sqrt(n_nodes) * rate ** rounds


def rounds_for_budget(n_nodes, rate, budget):
    """Smallest ``d >= 1`` whose relative consensus error bound is within ``budget``.

    ``budget`` bounds the steady error relative to ``||x||``.
    """
    if budget <= 0:
        raise ValueError("error budget must be positive")
    if rate == 0.0 or n_nodes == 1:
        return 1
    c = (n_nodes - 1) * math.sqrt(n_nodes)
    if c <= budget:
        return 1
    return max(1, math.ceil(math.log(budget / c) / math.log(rate) - 1e-12))


@dataclass(frozen=True, eq=False)
class DiscreteObserverBank:
    decomps: tuple
    graph: object
    a_bar: tuple
    ei_fi: tuple
    consensus_w: np.ndarray
    mu: float
    rounds: int
    rate: float
    systems: tuple = field(default_factory=tuple)

    @property
    def n(self):
        return self.decomps[0].system.n

    @property
    def n_nodes(self):
        return len(self.decomps)

    def k_matrices(self):
        """``K_i = E_i P_i + F_i C_i`` per node."""
        return [e @ d.projection + f @ s.c
                for (e, f), d, s in zip(self.ei_fi, self.decomps, self.systems)]

    def partition_residual(self):
        return float(np.linalg.norm(sum(self.k_matrices()) - np.eye(self.n), 2))

    def to_dict(self):
        return {"rounds": self.rounds, "mu": self.mu, "rate": self.rate}


def build_discrete_bank(decomps, graph, rounds=None, systems=None,
                        error_budget=None):
    """Assemble the discrete bank.

    Exactly one of ``rounds`` and ``error_budget`` should be given; with a
    budget the number of rounds comes from :func:`rounds_for_budget`.
    """
    decomps = tuple(decomps)
    systems = tuple(systems or [d.system for d in decomps])
    if graph.n_nodes != len(decomps):
        raise ValueError(f"graph has {graph.n_nodes} nodes, "
                         f"{len(decomps)} decompositions given")
    w, mu, rate = build_consensus_matrix(graph)
    if rounds is None:
        if error_budget is None:
            raise ValueError("give either rounds or an error budget")
        rounds = rounds_for_budget(len(decomps), rate, error_budget)
    if int(rounds) != rounds or rounds < 1:
        raise ValueError(f"rounds must be a positive integer, got {rounds}")
    ei_fi = compute_ei_fi(decomps, systems)
    w.setflags(write=False)
    return DiscreteObserverBank(decomps, graph, tuple(d.a_bar for d in decomps),
                                tuple(ei_fi), w, float(mu), int(rounds),
                                float(rate), systems)


def theorem3_bound(bank, x_norm):
    """``(N - 1) sqrt(N) r^d ||x||`` with ``r`` the second eigenvalue modulus."""
    return theorem3_constant(bank.n_nodes, bank.rate, bank.rounds) * float(x_norm)
