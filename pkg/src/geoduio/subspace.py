"""Subspace linear algebra on orthonormal bases.

Subspaces of R^n are carried around as :class:`SubspaceBasis` objects whose
columns are orthonormal. Numeric rank is always decided from singular values
with a threshold relative to the largest one, so results do not depend on the
scale of the input matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContainmentViolated, DimensionMismatch, InvalidMatrix

__all__ = [
    "CONTAINMENT_TOL",
    "SubspaceBasis",
    "ProjectionPair",
    "ContinuousRegion",
    "DiscreteRegion",
    "SpectrumSplit",
    "image",
    "kernel",
    "subspace_sum",
    "intersect",
    "intersect_all",
    "inverse_image",
    "complement_in",
    "split_spectrum",
    "same_multiset",
]

CONTAINMENT_TOL = 1e-7
PAIRING_TOL = 1e-8


def default_tol(shape):
    """Relative rank threshold used when the caller does not pass one."""
    return 1e-9 * max(max(shape), 1)


def _as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise InvalidMatrix(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    return m


def _rank(s, tol, scale=0.0):
    ref = max(s[0], scale) if s.size else scale
    if s.size == 0 or ref == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * ref))


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal column basis of a subspace of R^n.

    The zero subspace has an ``(n, 0)`` basis. Construct instances through
    :func:`image`, :func:`kernel` or the class helpers rather than directly,
    since the constructor trusts that the columns are already orthonormal.
    """

    basis: np.ndarray
    ambient_dim: int
    tol: float = field(default=1e-9)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(self.ambient_dim, -1)
        object.__setattr__(self, "basis", _frozen(b))

    @property
    def dim(self):
        return self.basis.shape[1]

    @classmethod
    def zero(cls, n, tol=1e-9):
        return cls(np.zeros((n, 0)), n, tol)

    @classmethod
    def full(cls, n, tol=1e-9):
        return cls(np.eye(n), n, tol)

    def is_zero(self):
        return self.dim == 0

    def is_full(self):
        return self.dim == self.ambient_dim

    def projector(self):
        """Orthogonal projector onto the subspace."""
        return self.basis @ self.basis.T

    def residual(self, vectors):
        """Spectral norm of the part of ``vectors`` lying outside the subspace."""
        v = np.asarray(vectors, dtype=float).reshape(self.ambient_dim, -1)
        if v.shape[1] == 0:
            return 0.0
        r = v - self.basis @ (self.basis.T @ v)
        return float(np.linalg.norm(r, 2))

    def contains(self, other, tol=CONTAINMENT_TOL):
        """True when ``other`` (a basis or a matrix of vectors) lies inside."""
        if isinstance(other, SubspaceBasis):
            _check_ambient(self, other)
            other = other.basis
        return self.residual(other) <= tol

    def equals(self, other, tol=CONTAINMENT_TOL):
        return (self.dim == other.dim and self.contains(other, tol)
                and other.contains(self, tol))

    def complement(self):
        """Orthogonal complement in R^n."""
        return kernel(self.basis.T, tol=self.tol) if self.dim else \
            SubspaceBasis.full(self.ambient_dim, self.tol)

    def projection_pair(self):
        return ProjectionPair.from_subspace(self)

    def __repr__(self):
        return f"SubspaceBasis(dim={self.dim}, ambient_dim={self.ambient_dim})"


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    """Insertion map of a subspace together with the canonical projection.

    ``projection`` has orthonormal rows spanning the orthogonal complement,
    so it realizes the quotient map X -> X/W in an orthonormal frame and its
    transpose is a right inverse.
    """

    insertion: SubspaceBasis
    projection: np.ndarray

    @classmethod
    def from_subspace(cls, w):
        comp = w.complement()
        return cls(w, _frozen(comp.basis.T))

    @property
    def quotient_dim(self):
        return self.projection.shape[0]

    def transform(self):
        """Orthogonal matrix ``[W, P^T]`` adapted to the decomposition."""
        return np.hstack([self.insertion.basis, self.projection.T])


def _check_ambient(a, b):
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatch(
            f"ambient dimensions differ: {a.ambient_dim} vs {b.ambient_dim}")


def image(m, tol=None, scale=0.0):
    """Orthonormal basis of the column space of ``m``.

    Singular values are compared with ``tol * max(sigma_max, scale)``. Pass
    the norm of the operator behind a product such as ``C @ basis`` as
    ``scale`` so that a product that is zero up to roundoff has rank 0.
    """
    m = _as_matrix(m)
    n = m.shape[0]
    if tol is None:
        tol = default_tol(m.shape)
    if m.shape[1] == 0:
        return SubspaceBasis.zero(n, tol)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    r = _rank(s, tol, scale)
    return SubspaceBasis(u[:, :r], n, tol)


def kernel(m, tol=None):
    """Orthonormal basis of ``{x : m x = 0}``."""
    m = _as_matrix(m)
    n = m.shape[1]
    if tol is None:
        tol = default_tol(m.shape)
    if m.shape[0] == 0:
        return SubspaceBasis.full(n, tol)
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    r = _rank(s, tol)
    return SubspaceBasis(vh[r:].T, n, tol)


def subspace_sum(a, b, tol=None):
    _check_ambient(a, b)
    return image(np.hstack([a.basis, b.basis]), tol=tol)


def intersect(a, b, tol=None):
    """Intersection as the kernel of the stacked orthogonal complements."""
    _check_ambient(a, b)
    if a.is_full():
        return b
    if b.is_full():
        return a
    if a.is_zero() or b.is_zero():
        return SubspaceBasis.zero(a.ambient_dim, a.tol)
    stacked = np.vstack([a.complement().basis.T, b.complement().basis.T])
    return kernel(stacked, tol=tol)


def intersect_all(subspaces, tol=None):
    subspaces = list(subspaces)
    if not subspaces:
        raise ValueError("need at least one subspace")
    out = subspaces[0]
    for s in subspaces[1:]:
        out = intersect(out, s, tol=tol)
    return out


def inverse_image(m, s, tol=None):
    """Basis of ``{x : m x in s}``."""
    m = _as_matrix(m)
    if m.shape[0] != s.ambient_dim:
        raise DimensionMismatch(
            f"map has {m.shape[0]} rows but subspace lives in R^{s.ambient_dim}")
    if s.is_full():
        return SubspaceBasis.full(m.shape[1], s.tol)
    p_perp = s.complement().basis.T
    return kernel(p_perp @ m, tol=tol)


def complement_in(inner, outer, tol=None):
    """Orthonormal V with Im[inner V] = outer and V orthogonal to inner."""
    _check_ambient(inner, outer)
    if not outer.contains(inner):
        raise ContainmentViolated(
            f"inner subspace (dim {inner.dim}) is not contained in outer "
            f"(dim {outer.dim}); residual {outer.residual(inner.basis):.3e}")
    k = outer.dim - inner.dim
    if k == 0:
        return SubspaceBasis.zero(outer.ambient_dim, outer.tol)
    residual = outer.basis - inner.basis @ (inner.basis.T @ outer.basis)
    u, _, _ = np.linalg.svd(residual, full_matrices=False)
    return SubspaceBasis(u[:, :k], outer.ambient_dim,
                         outer.tol if tol is None else tol)


# --- spectra ---------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousRegion:
    """Good region ``Re(lambda) < -margin``."""

    margin: float = 0.0

    def is_good(self, lam):
        return complex(lam).real < -self.margin

    def to_dict(self):
        return {"kind": "continuous", "margin": self.margin}


@dataclass(frozen=True)
class DiscreteRegion:
    """Good region ``|lambda| < radius``."""

    radius: float = 1.0

    def is_good(self, lam):
        return abs(complex(lam)) < self.radius

    def to_dict(self):
        return {"kind": "discrete", "radius": self.radius}


@dataclass(frozen=True, eq=False)
class SpectrumSplit:
    good: np.ndarray
    bad: np.ndarray
    region: object

    @property
    def all(self):
        return np.concatenate([self.good, self.bad])


def _conjugate_pairs(eigs, tol=PAIRING_TOL):
    """Group indices into real singletons and conjugate pairs."""
    eigs = np.asarray(eigs, dtype=complex)
    used = np.zeros(len(eigs), dtype=bool)
    groups = []
    for i, lam in enumerate(eigs):
        if used[i]:
            continue
        used[i] = True
        scale = max(1.0, abs(lam))
        if abs(lam.imag) <= tol * scale:
            groups.append((i,))
            continue
        candidates = [j for j in range(len(eigs)) if not used[j]]
        if not candidates:
            raise ValueError(f"eigenvalue {lam} has no conjugate partner")
        dist = [abs(eigs[j] - np.conj(lam)) for j in candidates]
        k = int(np.argmin(dist))
        if dist[k] > tol * scale:
            raise ValueError(f"eigenvalue {lam} has no conjugate partner")
        used[candidates[k]] = True
        groups.append((i, candidates[k]))
    return groups


def split_spectrum(eigs, region):
    """Partition ``eigs`` into good and bad parts; conjugate pairs stay together.

    Points on the region boundary are bad.
    """
    eigs = np.asarray(eigs, dtype=complex).ravel()
    good, bad = [], []
    for group in _conjugate_pairs(eigs):
        rep = np.mean(eigs[list(group)].real) + 1j * abs(eigs[group[0]].imag)
        target = good if region.is_good(rep) else bad
        target.extend(eigs[list(group)])
    return SpectrumSplit(np.array(good, dtype=complex),
                         np.array(bad, dtype=complex), region)


def same_multiset(a, b, tol=1e-6):
    """Multiset equality of complex numbers up to ``tol`` (scaled by size)."""
    a = list(np.asarray(a, dtype=complex).ravel())
    b = list(np.asarray(b, dtype=complex).ravel())
    if len(a) != len(b):
        return False
    for x in a:
        dist = [abs(x - y) for y in b]
        k = int(np.argmin(dist))
        if dist[k] > tol * max(1.0, abs(x)):
            return False
        b.pop(k)
    return True
