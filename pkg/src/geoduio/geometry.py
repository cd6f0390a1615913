"""Per-node geometric decomposition.

For one sensor node with dynamics ``A``, unknown-input channel ``Bbar`` and
output map ``C`` this module computes

* ``W*``  - the infimal (C, A)-invariant subspace containing Im Bbar,
* ``S*``  - the infimal unobservability subspace containing Im Bbar,
* the invariant zeros (spectrum of the map induced on S*/W*), split into
  good and bad parts,
* ``W*_g`` - W* enlarged by the invariant subspace of the bad zeros, and
* an output injection ``L`` that keeps W*_g invariant and places the
  spectrum of the map induced on X/W*_g.

The minimal-polynomial factorization used in the textbook construction is
replaced by an ordered real Schur form, which yields the same bad invariant
subspace with far better conditioning.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.signal

from .errors import (IllPosedSplit, InvalidMatrix, NotConditionedInvariant,
                     PlacementFailed, Undetectable)
from .subspace import (ContinuousRegion, DiscreteRegion, ProjectionPair,
                       SpectrumSplit, SubspaceBasis, _conjugate_pairs,
                       complement_in,
                       default_tol, image, intersect, inverse_image, kernel,
                       same_multiset, split_spectrum, subspace_sum)

__all__ = [
    "NodeSystem",
    "NodeDecomposition",
    "compute_w_star",
    "compute_s_star",
    "find_friend",
    "fixed_spectrum",
    "compute_w_g_star",
    "place_output_injection",
    "compute_output_injection",
    "default_poles",
    "spectral_tolerance",
    "decompose_node",
]

SPECTRAL_TOL = 1e-6
ROUNDOFF_SLACK = 100.0

log = logging.getLogger(__name__)


def spectral_tolerance(closed_loop):
    """Tolerance for comparing the spectrum of ``closed_loop`` to a target.

    ``SPECTRAL_TOL`` unless the Bauer-Fike estimate
    ``kappa(V) * eps * ||M||`` says roundoff alone moves eigenvalues further,
    as happens for single-output placement of many spread poles.
    """
    m = np.atleast_2d(closed_loop)
    if m.size == 0:
        return SPECTRAL_TOL
    _, vecs = np.linalg.eig(m)
    kappa = np.linalg.cond(vecs)
    if not np.isfinite(kappa):
        return SPECTRAL_TOL
    floor = ROUNDOFF_SLACK * kappa * np.finfo(float).eps * max(1.0, np.linalg.norm(m, 2))
    return max(SPECTRAL_TOL, float(floor))


def _spectrum_matches(closed_loop, target, what):
    tol = spectral_tolerance(closed_loop)
    ok = same_multiset(np.linalg.eigvals(closed_loop), target, tol)
    if ok and tol > SPECTRAL_TOL:
        log.warning("%s: spectrum matched only to %.2e (ill-conditioned eigenvectors)",
                    what, tol)
    return ok


@dataclass(frozen=True, eq=False)
class NodeSystem:
    """Local view ``(A, B_i, Bbar_i, C_i)`` of the plant at one sensor node."""

    a: np.ndarray
    b_known: np.ndarray
    b_unknown: np.ndarray
    c: np.ndarray
    node_id: int = 0
    known_columns: tuple | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        n = a.shape[0]
        if a.shape != (n, n) or n < 1:
            raise InvalidMatrix(f"A must be square, got {a.shape}")
        mats = {"a": a}
        for name in ("b_known", "b_unknown"):
            m = np.asarray(getattr(self, name), dtype=float)
            mats[name] = m.reshape(n, -1) if m.size else np.zeros((n, 0))
        c = np.asarray(self.c, dtype=float)
        mats["c"] = c.reshape(-1, n) if c.size else np.zeros((0, n))
        for name, m in mats.items():
            if not np.all(np.isfinite(m)):
                raise InvalidMatrix(f"{name} has non-finite entries")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def p(self):
        return self.c.shape[0]


def _rel_tol(sys):
    return default_tol((sys.n, sys.n))


def _norm(m):
    return float(np.linalg.norm(m, 2)) if m.size else 0.0


def _invariance_tol(sys):
    return 1e-8 * max(1.0, float(np.linalg.norm(sys.a, 2)))


def compute_w_star(sys):
    """Infimal (C, A)-invariant subspace containing Im Bbar.

    Runs ``W_k = Im Bbar + A (W_{k-1} & Ker C)`` from ``W_0 = 0`` until the
    dimension stops growing.
    """
    tol = _rel_tol(sys)
    b_img = image(sys.b_unknown, tol)
    ker_c = kernel(sys.c, tol)
    w = SubspaceBasis.zero(sys.n, tol)
    for _ in range(sys.n + 1):
        t = intersect(w, ker_c, tol)
        w_next = subspace_sum(b_img, image(sys.a @ t.basis, tol, _norm(sys.a)), tol)
        if w_next.dim == w.dim:
            return w_next
        w = w_next
    return w


def compute_s_star(sys, w_star):
    """Infimal unobservability subspace containing Im Bbar.

    Descending recursion ``S_k = W* + (A^{-1} S_{k-1} & Ker C)`` from
    ``S_0 = X``.
    """
    tol = _rel_tol(sys)
    ker_c = kernel(sys.c, tol)
    s = SubspaceBasis.full(sys.n, tol)
    for _ in range(sys.n + 1):
        t = intersect(inverse_image(sys.a, s, tol), ker_c, tol)
        s_next = subspace_sum(w_star, t, tol)
        if s_next.dim == s.dim:
            return s_next
        s = s_next
    return s


def find_friend(sys, w):
    """Minimum-norm ``L`` with ``P_W (A + L C) W = 0``.

    The least-squares problem ``P_W L (C W) = -P_W A W`` has the closed-form
    minimum-norm solution ``L = -P_W^T P_W A W (C W)^+``.
    """
    if w.dim == 0 or w.is_full():
        return np.zeros((sys.n, sys.p))
    p_w = w.projection_pair().projection
    cw = sys.c @ w.basis
    rhs = p_w @ sys.a @ w.basis
    cw_norm = _norm(cw)
    cutoff = default_tol(cw.shape) * _norm(sys.c)
    if cw.size and cw_norm > cutoff:
        gain = -p_w.T @ rhs @ np.linalg.pinv(cw, rcond=cutoff / cw_norm)
    else:
        gain = np.zeros((sys.n, sys.p))
    resid = np.linalg.norm(p_w @ (sys.a + gain @ sys.c) @ w.basis, 2)
    if resid > _invariance_tol(sys):
        raise NotConditionedInvariant(
            f"node {sys.node_id + 1}: no friend, invariance residual {resid:.3e}")
    return gain


def _restricted_map(sys, friend, v):
    return v.basis.T @ (sys.a + friend @ sys.c) @ v.basis


def fixed_spectrum(sys, w_star, s_star, friend):
    """Invariant zeros: eigenvalues of the map induced on S*/W*."""
    v = complement_in(w_star, s_star)
    if v.dim == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(_restricted_map(sys, friend, v))


def compute_w_g_star(sys, w_star, s_star, friend, region):
    """Smallest W containing W* whose quotient dynamics can be made good.

    Returns ``(W*_g, split)`` where ``split`` is the good/bad partition of
    the invariant zeros. The bad invariant subspace is found in the frame of
    the complement V of W* inside S* and mapped back through V before being
    added to W*.
    """
    v = complement_in(w_star, s_star)
    if v.dim == 0:
        empty = np.zeros(0, dtype=complex)
        return w_star, SpectrumSplit(empty, empty, region)
    a_lv = _restricted_map(sys, friend, v)
    split = split_spectrum(np.linalg.eigvals(a_lv), region)
    if split.bad.size == 0:
        return w_star, split
    if split.good.size == 0:
        return s_star, split

    def is_bad(re, im):
        return not region.is_good(complex(re, im))

    _, z, sdim = scipy.linalg.schur(a_lv, output="real", sort=is_bad)
    if sdim != split.bad.size:
        raise IllPosedSplit(
            f"node {sys.node_id + 1}: Schur reordering selected {sdim} bad modes, "
            f"expected {split.bad.size}; eigenvalues too close to the boundary")
    lifted = image(v.basis @ z[:, :sdim], _rel_tol(sys))
    w_g = subspace_sum(w_star, lifted, _rel_tol(sys))
    if w_g.dim != w_star.dim + sdim:
        raise IllPosedSplit(f"node {sys.node_id + 1}: lifted bad subspace "
                            "is not independent of W*")
    return w_g, split


def default_poles(count, discrete):
    """Default requested observer poles: -(2+j) or 0.5 * 0.8**j."""
    j = np.arange(count)
    if discrete:
        return (0.5 * 0.8 ** j).astype(complex)
    return -(2.0 + j).astype(complex)


def _spread_duplicates(poles, eps=1e-6):
    poles = np.asarray(poles, dtype=complex).copy()
    seen = []
    for group in _conjugate_pairs(poles):
        rep = poles[group[0]]
        k = sum(1 for r in seen if abs(r - rep) < eps or abs(r - np.conj(rep)) < eps)
        seen.append(rep)
        for idx in group:
            poles[idx] += k * eps
    return poles


def place_output_injection(a0, c0, poles, region=None):
    """Gain ``L0`` with ``eig(a0 + L0 c0) = poles``.

    Placement is done on the dual pair ``(a0^T, c0^T)`` after reducing ``c0``
    to full row rank. Requested poles closer than 1e-6 are spread apart.
    """
    a0 = np.atleast_2d(np.asarray(a0, dtype=float))
    n0 = a0.shape[0] if a0.size else 0
    c0 = np.asarray(c0, dtype=float).reshape(-1, n0) if n0 else np.zeros((0, 0))
    poles = np.asarray(poles, dtype=complex).ravel()
    if n0 == 0:
        return np.zeros((0, c0.shape[0]))
    if poles.size != n0:
        raise PlacementFailed(f"need {n0} poles, got {poles.size}")

    u, s, vh = np.linalg.svd(c0, full_matrices=False) if c0.size else (
        np.zeros((0, 0)), np.zeros(0), np.zeros((0, n0)))
    r = 0 if s.size == 0 or s[0] == 0 else int(np.count_nonzero(
        s > default_tol(c0.shape) * s[0]))
    if r == 0:
        if same_multiset(np.linalg.eigvals(a0), poles, SPECTRAL_TOL):
            return np.zeros((n0, c0.shape[0]))
        _raise_unplaceable(a0, c0, region)
    c_r = s[:r, None] * vh[:r]

    target = _spread_duplicates(poles)
    # cheap default first; the tight settings rescue ill-conditioned pairs
    attempts = (("YT", 1e-3, 30), ("YT", 1e-12, 1000), ("KNV0", 1e-12, 1000))
    for method, rtol, maxiter in attempts:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = scipy.signal.place_poles(a0.T, c_r.T, target, method=method,
                                               rtol=rtol, maxiter=maxiter)
        except (ValueError, np.linalg.LinAlgError):
            continue
        l_r = -res.gain_matrix.T
        if _spectrum_matches(a0 + l_r @ c_r, target, "pole placement"):
            return l_r @ u[:, :r].T
    _raise_unplaceable(a0, c0, region)


def _unobservable_modes(a0, c0):
    n0 = a0.shape[0]
    modes = []
    for lam in np.linalg.eigvals(a0):
        pbh = np.vstack([a0 - lam * np.eye(n0), c0.astype(complex)])
        sv = np.linalg.svd(pbh, compute_uv=False)
        if sv[-1] <= 1e-8 * max(1.0, sv[0]):
            modes.append(lam)
    return modes


def _raise_unplaceable(a0, c0, region):
    modes = _unobservable_modes(a0, c0)
    if region is not None and any(not region.is_good(m) for m in modes):
        raise Undetectable(f"quotient pair has unobservable bad modes {modes}")
    raise PlacementFailed(
        f"pole placement on the quotient pair failed (unobservable modes "
        f"{modes})")


def compute_output_injection(sys, friend, s_star, w_g_star, desired_poles,
                             good_fixed=(), region=None):
    """Output injection placing the spectrum induced on X/W*_g.

    ``friend`` must keep W* (and therefore W*_g and S*) invariant. The
    correction ``P_S^T L0 P_Y`` acts only on measurement directions outside
    ``C S*``, so it leaves W*_g invariant while assigning the spectrum on
    X/S*. The achieved spectrum on X/W*_g is checked against
    ``desired_poles`` plus the good invariant zeros.
    """
    tol = _rel_tol(sys)
    desired_poles = np.asarray(desired_poles, dtype=complex).ravel()
    p_s = s_star.projection_pair().projection
    a_l = sys.a + friend @ sys.c
    a0 = p_s @ a_l @ p_s.T
    if sys.p:
        cs = image(sys.c @ s_star.basis, tol, _norm(sys.c)) if s_star.dim else \
            SubspaceBasis.zero(sys.p, tol)
        p_y = cs.projection_pair().projection
    else:
        p_y = np.zeros((0, 0))
    c0 = p_y @ sys.c @ p_s.T
    l0 = place_output_injection(a0, c0, desired_poles, region)
    gain = friend + p_s.T @ l0 @ p_y if l0.size else friend.copy()

    p_g = w_g_star.projection_pair().projection
    closed = p_g @ (sys.a + gain @ sys.c) @ p_g.T
    achieved = np.linalg.eigvals(closed)
    expected = np.concatenate([_spread_duplicates(desired_poles),
                               np.asarray(good_fixed, dtype=complex)])
    if not _spectrum_matches(closed, expected, f"node {sys.node_id + 1}"):
        raise PlacementFailed(
            f"node {sys.node_id + 1}: achieved spectrum {np.sort_complex(achieved)}"
            f" differs from requested {np.sort_complex(expected)}")
    return gain


@dataclass(frozen=True, eq=False)
class NodeDecomposition:
    system: NodeSystem
    w_star: SubspaceBasis
    s_star: SubspaceBasis
    w_g_star: SubspaceBasis
    proj_w_g: ProjectionPair
    l_gain: np.ndarray
    friend: np.ndarray
    fixed_spectrum: SpectrumSplit
    assigned_spectrum: np.ndarray
    desired_poles: np.ndarray
    region: object = field(default_factory=ContinuousRegion)

    @property
    def a_l(self):
        return self.system.a + self.l_gain @ self.system.c

    @property
    def projection(self):
        return self.proj_w_g.projection

    @property
    def a_bar(self):
        """Matrix of the map induced on X/W*_g."""
        p = self.projection
        return p @ self.a_l @ p.T

    @property
    def a_tilde(self):
        """Matrix of the restriction to W*_g."""
        w = self.w_g_star.basis
        return w.T @ self.a_l @ w

    def residuals(self):
        """Numerical residuals of the structural identities."""
        sys = self.system
        w = self.w_g_star.basis
        p = self.projection
        chain = max(self.w_star.residual(sys.b_unknown),
                    self.w_g_star.residual(self.w_star.basis),
                    self.s_star.residual(self.w_g_star.basis))
        return {
            "chain": chain,
            "invariance": float(np.linalg.norm(p @ self.a_l @ w, 2))
            if w.size and p.size else 0.0,
            "commutation": float(np.linalg.norm(
                p @ self.a_l - self.a_bar @ p, 2)) if p.size else 0.0,
            "annihilates_unknown": float(np.linalg.norm(
                p @ sys.b_unknown, 2)) if p.size and sys.b_unknown.size else 0.0,
        }


def decompose_node(sys, region=None, desired_poles=None):
    """Full per-node design: subspaces, invariant zeros and output injection.

    ``desired_poles`` must contain ``n - dim S*`` values in the good region;
    when omitted :func:`default_poles` is used.
    """
    if region is None:
        region = ContinuousRegion()
    w_star = compute_w_star(sys)
    s_star = compute_s_star(sys, w_star)
    friend = find_friend(sys, w_star)
    w_g, split = compute_w_g_star(sys, w_star, s_star, friend, region)
    n_free = sys.n - s_star.dim
    if desired_poles is None:
        desired_poles = default_poles(n_free, isinstance(region, DiscreteRegion))
    desired_poles = np.asarray(desired_poles, dtype=complex).ravel()
    if desired_poles.size != n_free:
        raise PlacementFailed(
            f"node {sys.node_id + 1}: {n_free} free poles required, "
            f"{desired_poles.size} given")
    bad_req = [p for p in desired_poles if not region.is_good(p)]
    if bad_req:
        raise PlacementFailed(f"requested poles outside good region: {bad_req}")
    gain = compute_output_injection(sys, friend, s_star, w_g, desired_poles,
                                    split.good, region)
    proj = w_g.projection_pair()
    p = proj.projection
    assigned = np.linalg.eigvals(p @ (sys.a + gain @ sys.c) @ p.T) \
        if p.size else np.zeros(0, dtype=complex)
    return NodeDecomposition(
        system=sys, w_star=w_star, s_star=s_star, w_g_star=w_g,
        proj_w_g=proj, l_gain=gain, friend=friend, fixed_spectrum=split,
        assigned_spectrum=assigned, desired_poles=desired_poles,
        region=region)
