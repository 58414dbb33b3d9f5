"""Logit and softmax fields along an angular sweep of unit embeddings.

An embedding e(theta) = cos(theta) n1 + sin(theta) n2 travels around a
plane; each class logit is z_j(theta) = sigma * w_j . e(theta), which on
that plane is sigma * r_j * cos(theta - phi_j) with (r_j, phi_j) the polar
coordinates of w_j's projection. Extrema of z_j and of softmax_j along the
sweep coincide only for special weight layouts; this module measures that.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, InvalidClassCount, NoExtremumFound
from .geometry import PlaneBasis, SymmetricLayout, gram_schmidt, layout_angles

TWO_PI = 2.0 * np.pi
DEFAULT_RESOLUTION_DEG = 0.1
CONSTANT_TOL = 1e-14


@dataclass(frozen=True)
class WeightSet:
    """Class weight vectors, optionally with their polar form on an analysis plane.

    `angles` (radians, in [0, 2*pi)) and `norms` hold the polar coordinates
    of each weight's projection onto the plane the set was reduced on.
    """

    weights: np.ndarray
    angles: np.ndarray | None = None
    norms: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1:
            raise ValueError(f"need an n x d weight matrix with n >= 1, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if (self.angles is None) != (self.norms is None):
            raise ValueError("angles and norms must be given together")
        if self.angles is not None:
            a = np.mod(np.asarray(self.angles, dtype=np.float64), TWO_PI)
            # mod of a tiny negative angle rounds up to exactly 2*pi
            a = np.where(a >= TWO_PI, 0.0, a)
            r = np.asarray(self.norms, dtype=np.float64)
            if a.shape != (w.shape[0],) or r.shape != (w.shape[0],):
                raise ValueError("one angle and one norm per weight expected")
            object.__setattr__(self, "angles", a)
            object.__setattr__(self, "norms", r)

    @property
    def n(self):
        return self.weights.shape[0]

    @property
    def is_planar(self):
        return self.angles is not None

    @classmethod
    def from_angles(cls, angles, norms=None):
        """Weights in R^2 at the given polar angles (radians); unit norm by default."""
        a = np.asarray(angles, dtype=np.float64)
        r = np.ones_like(a) if norms is None else np.asarray(norms, dtype=np.float64)
        w = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
        return cls(w, a, r)

    @classmethod
    def from_layout(cls, layout: SymmetricLayout):
        return cls(layout.weights).planar(layout.basis)

    def planar(self, basis: PlaneBasis):
        """Same weights with polar coordinates of their projections onto `basis`."""
        xy = basis.coords(self.weights)
        return WeightSet(self.weights, np.arctan2(xy[:, 1], xy[:, 0]), np.hypot(xy[:, 0], xy[:, 1]))


def _require_planar(ws):
    if not ws.is_planar:
        raise ValueError("weight set has no planar form; call ws.planar(basis) first")


@dataclass(frozen=True)
class SweepResult:
    thetas: np.ndarray
    logits: np.ndarray
    softmax: np.ndarray
    winner: np.ndarray

    @property
    def n(self):
        return self.logits.shape[0]

    def write_csv(self, path):
        n = self.n
        header = ["theta_deg"] + [f"z_{j}" for j in range(n)] + [f"s_{j}" for j in range(n)] + ["winner"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            for t in range(self.thetas.shape[0]):
                out.writerow(
                    [f"{np.degrees(self.thetas[t]):.6f}"]
                    + [repr(float(v)) for v in self.logits[:, t]]
                    + [repr(float(v)) for v in self.softmax[:, t]]
                    + [int(self.winner[t])]
                )


def sweep_grid(resolution_deg):
    if not (0.0 < resolution_deg <= 1.0):
        raise ValueError(f"resolution must lie in (0, 1] degrees, got {resolution_deg}")
    count = int(round(360.0 / resolution_deg))
    return TWO_PI * np.arange(count) / count


def _softmax_columns(z):
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def sweep(ws, basis, resolution_deg=DEFAULT_RESOLUTION_DEG, sigma=1.0):
    """Logits and softmax of every class for embeddings swept around `basis`."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    thetas = sweep_grid(resolution_deg)
    emb = np.cos(thetas)[:, None] * basis.n1 + np.sin(thetas)[:, None] * basis.n2
    z = sigma * (ws.weights @ emb.T)
    s = _softmax_columns(z)
    return SweepResult(thetas, z, s, np.argmax(z, axis=0))


def criterion_sum(ws, theta, sigma=1.0):
    """sum_j (dz_j/dtheta) exp(z_j) with z_j = sigma r_j cos(theta - phi_j).

    Zero at theta = phi_i exactly when phi_i is a stationary point of the
    class-i softmax. `theta` may be a scalar or an array.
    """
    _require_planar(ws)
    th = np.asarray(theta, dtype=np.float64)
    d = th[..., None] - ws.angles
    r = sigma * ws.norms
    return np.sum(-r * np.sin(d) * np.exp(r * np.cos(d)), axis=-1)


def logit_field(ws, theta, i, sigma=1.0):
    """(z_i, dz_i/dtheta) on the analysis plane."""
    _require_planar(ws)
    d = np.asarray(theta, dtype=np.float64) - ws.angles[i]
    r = sigma * ws.norms[i]
    return r * np.cos(d), -r * np.sin(d)


def log_softmax_field(ws, theta, i, sigma=1.0):
    """(log S_i, d log S_i / dtheta) on the analysis plane.

    Written through R_i = sum_{j != i} exp(z_j - z_i), which keeps full
    relative precision where S_i itself rounds to exactly 1.
    """
    _require_planar(ws)
    th = np.asarray(theta, dtype=np.float64)[..., None]
    r = sigma * ws.norms
    d = th - ws.angles
    z = r * np.cos(d)
    dz = -r * np.sin(d)
    others = np.arange(ws.n) != i
    gap = z[..., others] - z[..., [i]]
    e = np.exp(gap)
    big = e.sum(axis=-1)
    dbig = np.sum((dz[..., others] - dz[..., [i]]) * e, axis=-1)
    return -np.log1p(big), -dbig / (1.0 + big)


def softmax_derivative(ws, theta, i, sigma=1.0):
    """dS_i/dtheta = S_i (z_i' - sum_j S_j z_j')."""
    _require_planar(ws)
    th = np.asarray(theta, dtype=np.float64)[..., None]
    r = sigma * ws.norms
    d = th - ws.angles
    z = r * np.cos(d)
    dz = -r * np.sin(d)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)
    return s[..., i] * (dz[..., i] - np.sum(s * dz, axis=-1))


@dataclass(frozen=True)
class LemmaReport:
    max_abs_residual: float
    passes: bool
    residuals: np.ndarray
    extra_sign_changes: int = 0


def _lemma2_sum(x, n):
    k = layout_angles(n)
    d = np.asarray(x, dtype=np.float64)[..., None] - k
    return np.sum(np.sin(d) * np.exp(np.cos(d)), axis=-1)


def verify_lemma2(n, tol=1e-10):
    """Evaluate sum_k sin(x - 2k pi/n) e^{cos(x - 2k pi/n)} at x_r = 2 r pi / n.

    Also counts sign changes of the sum on a fine grid away from the
    claimed roots; they are reported only (the midpoints (2r+1) pi / n are
    roots as well by reflection symmetry).
    """
    n = int(n)
    if n < 2:
        raise InvalidClassCount(f"need n >= 2, got {n}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    roots = layout_angles(n)
    res = np.abs(_lemma2_sum(roots, n))
    worst = float(res.max())

    grid = TWO_PI * (np.arange(64 * n) + 0.5) / (64 * n)
    f = _lemma2_sum(grid, n)
    flips = np.nonzero(np.sign(f) != np.sign(np.roll(f, -1)))[0]
    mids = (grid[flips] + TWO_PI / (128 * n)) % TWO_PI
    near = np.min(np.abs(((mids[:, None] - roots) + np.pi) % TWO_PI - np.pi), axis=1) if len(mids) else mids
    extra = int(np.sum(near > TWO_PI / (64 * n)))
    return LemmaReport(worst, worst <= tol, res, extra)


def refutability_value(n):
    """sum_{j<n} sin(j pi/n) e^{cos(j pi/n)}: the criterion at theta = 0 for
    n unit weights fanned at pi/n steps. Nonzero means w_0 is not an
    extremum of its own softmax."""
    n = int(n)
    if n < 3:
        raise InvalidClassCount(f"need n >= 3, got {n}")
    t = np.pi * np.arange(n) / n
    return float(np.sum(np.sin(t) * np.exp(np.cos(t))))


def _wrap(theta):
    t = np.mod(theta, TWO_PI)
    return np.where(t >= TWO_PI, 0.0, t)


def _circ_dist(a, b):
    """Circular distance in [0, pi]."""
    return np.abs((np.asarray(a) - np.asarray(b) + np.pi) % TWO_PI - np.pi)


def _bisect(fn, lo, hi, f_lo, tol=1e-13, max_iter=200):
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if f_mid == 0.0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _locate(values, thetas, derivative):
    """(angle, is_max) for every sign change of the discrete derivative."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 3:
        raise ValueError("need a 1-D sample vector with at least 3 entries")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    if np.ptp(v) <= CONSTANT_TOL:
        raise NoExtremumFound("values are constant over the sweep")
    T = v.shape[0]
    h = TWO_PI / T
    if thetas is None:
        thetas = h * np.arange(T)
    step = np.sign(np.roll(v, -1) - v)
    # carry the last nonzero slope across flat runs
    nz = np.nonzero(step)[0]
    filled = step.copy()
    last = step[nz[-1]]
    for k in range(T):
        if step[k] == 0:
            filled[k] = last
        else:
            last = step[k]
    out = []
    for k in range(T):
        before, after = filled[k - 1], filled[k]
        if before == after:
            continue
        is_max = before > 0
        t0 = thetas[k]
        angle = None
        if derivative is not None:
            lo, hi = t0 - h, t0 + h
            d_lo, d_hi = derivative(lo), derivative(hi)
            if d_lo == 0.0:
                angle = lo
            elif d_hi == 0.0:
                angle = hi
            elif np.sign(d_lo) != np.sign(d_hi):
                angle = _bisect(derivative, lo, hi, d_lo)
        if angle is None:
            y0, y1, y2 = v[k - 1], v[k], v[(k + 1) % T]
            curv = y0 - 2.0 * y1 + y2
            shift = 0.0 if curv == 0.0 else 0.5 * (y0 - y2) / curv
            angle = t0 + float(np.clip(shift, -1.0, 1.0)) * h
        out.append((float(_wrap(angle)), bool(is_max)))
    out.sort()
    return out


def find_extrema(values, derivative=None, thetas=None):
    """Angles in [0, 2*pi) where sampled `values` reach a local extremum.

    `values` must sample one full turn on a uniform grid (theta_k = 2 pi k/T
    unless `thetas` is given). Each sign change of the discrete slope is
    refined by bisection on `derivative` (a callable of theta) when it
    brackets a root, otherwise by a parabola through the three samples
    around the turning point.

    Raises
    ------
    NoExtremumFound
        If the samples are constant to within 1e-14.
    """
    return np.array([a for a, _ in _locate(values, thetas, derivative)])


def find_extrema_with_kind(values, derivative=None, thetas=None):
    """Like `find_extrema`, returning ``(angles, is_max)`` arrays."""
    found = _locate(values, thetas, derivative)
    return np.array([a for a, _ in found]), np.array([m for _, m in found], dtype=bool)


@dataclass(frozen=True)
class DivergenceResult:
    """Per-class softmax peak, nearest logit extremum, and their gap in degrees."""

    softmax_peak_deg: np.ndarray
    logit_extremum_deg: np.ndarray
    divergence_deg: np.ndarray

    @property
    def max(self):
        return float(np.max(self.divergence_deg))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["class", "softmax_peak_deg", "logit_extremum_deg", "divergence_deg"])
            for i, (s, z, g) in enumerate(zip(self.softmax_peak_deg, self.logit_extremum_deg, self.divergence_deg)):
                out.writerow([i, f"{s:.6f}", f"{z:.6f}", repr(float(g))])


def softmax_peak(ws, i, sigma=1.0, resolution_deg=DEFAULT_RESOLUTION_DEG):
    """Refined angle (radians) of the global maximum of the class-i softmax."""
    thetas = sweep_grid(resolution_deg)
    log_s, _ = log_softmax_field(ws, thetas, i, sigma)

    def slope(t):
        return float(log_softmax_field(ws, t, i, sigma)[1])

    angles, is_max = find_extrema_with_kind(log_s, derivative=slope, thetas=thetas)
    peaks = angles[is_max]
    if peaks.size == 0:
        raise NoExtremumFound(f"class {i} softmax has no maximum")
    heights = log_softmax_field(ws, peaks, i, sigma)[0]
    return float(peaks[int(np.argmax(heights))])


def extremum_divergence(ws, basis, sigma=1.0, resolution_deg=DEFAULT_RESOLUTION_DEG):
    """Angular gap between each class's softmax peak and its nearest logit extremum.

    Both fields are evaluated on the plane of `basis`. Gaps are in degrees,
    wrapped to [0, 180].
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pw = ws.planar(basis)
    thetas = sweep_grid(resolution_deg)
    peaks, nearest, gaps = [], [], []
    for i in range(pw.n):
        z, _ = logit_field(pw, thetas, i, sigma)
        ext = find_extrema(z, derivative=lambda t, i=i: float(logit_field(pw, t, i, sigma)[1]), thetas=thetas)
        peak = softmax_peak(pw, i, sigma, resolution_deg)
        dist = _circ_dist(peak, ext)
        # ties go to the smaller angle; ext is sorted ascending
        j = int(np.argmin(dist))
        peaks.append(np.degrees(peak))
        nearest.append(np.degrees(ext[j]))
        gaps.append(np.degrees(dist[j]))
    return DivergenceResult(np.array(peaks), np.array(nearest), np.array(gaps))


def astride_cancellation_check(layout, i, plane_seed):
    """|criterion sum| at w_i, evaluated on the plane through w_i and `plane_seed`.

    `layout` may be a SymmetricLayout or any n x d weight matrix. The
    plane P' = span{w_i, plane_seed}; every weight is projected onto P' and
    the criterion is evaluated at the polar angle of w_i there (which is 0,
    since w_i is the first basis vector).

    Raises
    ------
    DegenerateInput
        If `plane_seed` is parallel to w_i.
    """
    w = layout.weights if isinstance(layout, SymmetricLayout) else np.asarray(layout, dtype=np.float64)
    if not 0 <= i < w.shape[0]:
        raise IndexError(f"class index {i} out of range")
    try:
        basis = gram_schmidt(w[i], plane_seed)
    except DegenerateInput as exc:
        raise DegenerateInput(f"plane seed is parallel to w_{i}: {exc}") from None
    pw = WeightSet(w).planar(basis)
    return float(abs(criterion_sum(pw, pw.angles[i])))
