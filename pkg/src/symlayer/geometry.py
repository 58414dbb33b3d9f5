"""Plane bases, in-plane rotations and symmetric weight layouts in R^d.

Everything here is a pure function of its inputs. Vectors are plain 1-D
float64 numpy arrays; the small dataclasses below freeze their arrays so
instances can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, InvalidClassCount, PlaneMissesSum

EPS_NORM = 1e-9
UNIT_TOL = 1e-12
LAYOUT_ANGLE_TOL = 1e-10
LAYOUT_SUM_TOL = 1e-10
LEMMA3_TOL = 1e-9


def as_vector(v, name="v"):
    """Return `v` as a finite 1-D float64 array of length >= 2."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ValueError(f"{name} must be a 1-D vector with d >= 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


def angle_between(a, b):
    """Unsigned angle in [0, pi] between two nonzero vectors.

    Uses atan2(|a_perp|, a.b) so that nearly parallel vectors keep full
    precision; a clamped arccos loses about half the digits near 0 and pi.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    bh = b / nb
    along = float(a @ bh)
    perp = float(np.linalg.norm(a - along * bh))
    return float(np.arctan2(perp, along))


@dataclass(frozen=True)
class PlaneBasis:
    """Ordered orthonormal pair (n1, n2) spanning a 2-plane in R^d."""

    n1: np.ndarray
    n2: np.ndarray

    def __post_init__(self):
        n1 = as_vector(self.n1, "n1")
        n2 = as_vector(self.n2, "n2")
        if n1.shape != n2.shape:
            raise ValueError(f"basis vectors differ in dimension: {n1.shape} vs {n2.shape}")
        if abs(np.linalg.norm(n1) - 1.0) > UNIT_TOL or abs(np.linalg.norm(n2) - 1.0) > UNIT_TOL:
            raise ValueError("basis vectors must be unit length")
        if abs(float(n1 @ n2)) > UNIT_TOL:
            raise ValueError("basis vectors must be orthogonal")
        object.__setattr__(self, "n1", _frozen(n1))
        object.__setattr__(self, "n2", _frozen(n2))

    @property
    def d(self):
        return self.n1.shape[0]

    @property
    def matrix(self):
        """2 x d matrix whose rows are n1 and n2."""
        return np.stack([self.n1, self.n2])

    def coords(self, v):
        """In-plane coordinates (v.n1, v.n2); accepts a vector or a k x d stack."""
        return np.asarray(v, dtype=np.float64) @ self.matrix.T

    def rotated(self, theta):
        """The same plane with its frame turned by `theta` (same orientation)."""
        return PlaneBasis(rotate_in_plane(self, theta), rotate_in_plane(self, theta + np.pi / 2))

    @classmethod
    def axes(cls, d, i=0, j=1):
        """Basis (e_i, e_j) of R^d."""
        e = np.eye(d)
        return cls(e[i], e[j])


def orthonormal_pair(v1, v2, eps=EPS_NORM):
    """Unvalidated core of `gram_schmidt`: returns the arrays (n1, n2)."""
    r1 = np.sqrt(v1 @ v1)
    if not r1 > eps:
        raise DegenerateInput(f"|v1| = {r1:.3e} <= {eps:g}")
    n1 = v1 / r1
    u = v2 - (n1 @ v2) * n1
    ru = np.sqrt(u @ u)
    if not ru > eps:
        raise DegenerateInput(f"v2 is collinear with v1 (residual {ru:.3e} <= {eps:g})")
    n2 = u / ru
    # one re-orthogonalization pass keeps |n1.n2| at roundoff level
    n2 = n2 - (n1 @ n2) * n1
    return n1, n2 / np.sqrt(n2 @ n2)


def gram_schmidt(v1, v2, eps=EPS_NORM):
    """Orthonormalize (v1, v2) into a PlaneBasis.

    ``n1 = v1 / |v1|`` and ``n2`` is the normalized residual of ``v2``
    after removing its component along ``n1``.

    Raises
    ------
    DegenerateInput
        If ``|v1| <= eps`` or the residual of ``v2`` has norm ``<= eps``.
    """
    v1 = as_vector(v1, "v1")
    v2 = as_vector(v2, "v2")
    if v1.shape != v2.shape:
        raise ValueError(f"dimension mismatch: {v1.shape} vs {v2.shape}")
    return PlaneBasis(*orthonormal_pair(v1, v2, eps))


def rotate_in_plane(basis, theta):
    """Rotate ``basis.n1`` by ``theta`` radians towards ``basis.n2``."""
    return np.cos(theta) * basis.n1 + np.sin(theta) * basis.n2


def rotation_matrix(basis, theta):
    """Full d x d rotation by `theta` in the plane of `basis`, identity elsewhere.

    R = I + (n2 n1^T - n1 n2^T) sin(theta) + (n1 n1^T + n2 n2^T)(cos(theta) - 1)
    """
    n1, n2 = basis.n1, basis.n2
    return (
        np.eye(basis.d)
        + (np.outer(n2, n1) - np.outer(n1, n2)) * np.sin(theta)
        + (np.outer(n1, n1) + np.outer(n2, n2)) * (np.cos(theta) - 1.0)
    )


def layout_angles(n):
    """The n equally spaced angles 2*pi*i/n."""
    return 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class SymmetricLayout:
    """n unit vectors in one plane at equal 2*pi/n spacing."""

    weights: np.ndarray
    basis: PlaneBasis
    n: int = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != self.basis.d:
            raise ValueError(f"weights must be n x {self.basis.d}, got {w.shape}")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "n", w.shape[0])

    @property
    def d(self):
        return self.basis.d

    def invariant_residuals(self):
        """Worst-case residual of each layout invariant.

        Keys: ``unit`` (max | |w_i| - 1 |), ``spacing`` (max deviation of the
        angle between consecutive weights from 2*pi/n, radians), ``planar``
        (max distance of a weight from the plane) and ``sum`` (|sum w_i|).
        """
        w = self.weights
        nxt = np.roll(w, -1, axis=0)
        step = 2.0 * np.pi / self.n
        unsigned = np.array([angle_between(a, b) for a, b in zip(w, nxt)])
        proj = self.basis.coords(w) @ self.basis.matrix
        return {
            "unit": float(np.max(np.abs(np.linalg.norm(w, axis=1) - 1.0))),
            "spacing": float(np.max(np.abs(unsigned - step))),
            "planar": float(np.max(np.linalg.norm(w - proj, axis=1))),
            "sum": float(np.linalg.norm(w.sum(axis=0))),
        }

    def check_invariants(self):
        r = self.invariant_residuals()
        return (
            r["unit"] <= UNIT_TOL
            and r["spacing"] <= LAYOUT_ANGLE_TOL
            and r["planar"] <= UNIT_TOL
            and r["sum"] <= LAYOUT_SUM_TOL
        )


def build_symmetric_layout(basis, n):
    """Place n unit weights at angles 2*pi*i/n from ``basis.n1``."""
    n = int(n)
    if n < 3:
        raise InvalidClassCount(f"symmetric layouts need n >= 3, got {n}")
    t = layout_angles(n)
    w = np.cos(t)[:, None] * basis.n1 + np.sin(t)[:, None] * basis.n2
    return SymmetricLayout(w, basis)


def project_onto_plane(v, basis):
    """Orthogonal projection (v.n1) n1 + (v.n2) n2."""
    v = np.asarray(v, dtype=np.float64)
    return basis.coords(v) @ basis.matrix


def random_basis(rng, d):
    """Uniformly oriented random plane basis in R^d."""
    while True:
        try:
            return gram_schmidt(rng.standard_normal(d), rng.standard_normal(d))
        except DegenerateInput:
            continue


def random_unit(rng, d):
    while True:
        v = rng.standard_normal(d)
        r = np.linalg.norm(v)
        if r > EPS_NORM:
            return v / r


@dataclass(frozen=True)
class RhombusReport:
    norm_a_par: float
    norm_b_par: float
    angle_a_s: float
    angle_b_s: float
    passes: bool

    @property
    def norm_gap(self):
        return abs(self.norm_a_par - self.norm_b_par)

    @property
    def angle_gap(self):
        return abs(self.angle_a_s - self.angle_b_s)

    @property
    def residual(self):
        return max(self.norm_gap, self.angle_gap)


def verify_lemma3(a, b, basis, tol=LEMMA3_TOL):
    """Check that the projections of unit vectors a, b onto a plane through
    s = a + b have equal norms and make equal angles with s.

    Raises
    ------
    PlaneMissesSum
        If s is not contained in the plane spanned by `basis`.
    """
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if abs(np.linalg.norm(a) - 1.0) > LEMMA3_TOL or abs(np.linalg.norm(b) - 1.0) > LEMMA3_TOL:
        raise ValueError("a and b must be unit vectors")
    s = a + b
    if np.linalg.norm(s) <= EPS_NORM:
        raise DegenerateInput("a + b is zero; no plane passes through the sum")
    off = np.linalg.norm(s - project_onto_plane(s, basis))
    if off > LEMMA3_TOL:
        raise PlaneMissesSum(f"sum vector lies {off:.3e} away from the plane")
    ap = project_onto_plane(a, basis)
    bp = project_onto_plane(b, basis)
    na, nb = float(np.linalg.norm(ap)), float(np.linalg.norm(bp))
    ang_a, ang_b = angle_between(ap, s), angle_between(bp, s)
    ok = abs(na - nb) <= tol and abs(ang_a - ang_b) <= tol
    return RhombusReport(na, nb, ang_a, ang_b, bool(ok))
