"""Classifier heads with hand-written forward and backward passes.

Four heads share one calling convention: ``forward(x, labels=None)``
returns logits, ``backward(x, upstream, labels=None)`` returns a
`Gradients` holding d(sum(upstream * logits)) for every parameter and for
the input. Margin heads only apply their margin when labels are given.

The symmetric head owns two free vectors v1, v2. Each forward pass
orthonormalizes them into (n1, n2) and rotates n1 in that plane by
2*pi*i/n to get the n class weights, so the weights always sit in one
plane at equal spacing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .errors import DegenerateInput, InvalidClassCount, ZeroNormInput
from .geometry import (
    EPS_NORM,
    PlaneBasis,
    SymmetricLayout,
    gram_schmidt,
    layout_angles,
    orthonormal_pair,
)

INPUT_EPS = 1e-12
KINDS = ("symmetric", "fc", "arcface", "sphereface")


@dataclass
class Gradients:
    """Parameter gradients keyed like ``head.params`` plus the input gradient."""

    params: dict[str, np.ndarray]
    d_input: np.ndarray

    def __getitem__(self, key):
        return self.params[key]


def normalize_rows(x, eps=INPUT_EPS):
    """Row-normalize `x`; returns (x_hat, norms)."""
    x = np.asarray(x, dtype=np.float64)
    norms = row_norms(x, eps)
    return x / norms[:, None], norms


def _normalize_backward(x_hat, norms, g):
    """Pull a gradient on x_hat back to x for x_hat = x / |x| row-wise."""
    radial = np.einsum("ij,ij->i", g, x_hat)
    return (g - x_hat * radial[:, None]) / norms[:, None]


# --------------------------------------------------------------------------
# symmetric head
# --------------------------------------------------------------------------


@dataclass
class SymmetricalHead:
    """Symmetric layout head: n unit weights at 2*pi/n steps in span{v1, v2}.

    `sigma` is the fixed radius of the logit hypersphere.
    """

    v1: np.ndarray
    v2: np.ndarray
    sigma: float
    n: int
    kind: str = field(default="symmetric", init=False)

    def __post_init__(self):
        if self.n < 3:
            raise InvalidClassCount(f"symmetric head needs n >= 3, got {self.n}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        self.v1 = np.array(self.v1, dtype=np.float64)
        self.v2 = np.array(self.v2, dtype=np.float64)
        self._angles = layout_angles(self.n)
        self._cos = np.cos(self._angles)
        self._sin = np.sin(self._angles)
        self._rot = np.stack([self._cos, self._sin], axis=1)
        self._derived = None
        self._seen = None

    @property
    def d(self):
        return self.v1.shape[0]

    @property
    def params(self):
        return {"v1": self.v1, "v2": self.v2}

    def basis(self):
        return gram_schmidt(self.v1, self.v2)

    def layout(self):
        """The derived weights as a SymmetricLayout (invariants checked).

        Raises DegenerateInput if the derived layout violates an invariant.
        """
        n1, n2, w = _symmetric_weights(self)
        lay = SymmetricLayout(w, PlaneBasis(n1, n2))
        if not lay.check_invariants():
            raise DegenerateInput(f"derived layout violates invariants: {lay.invariant_residuals()}")
        return lay

    def weights(self):
        """n x d class weights derived from the current (v1, v2)."""
        return _symmetric_weights(self)[2].copy()

    def forward(self, x, labels=None):
        logits, cached = _symmetric_forward(self, np.asarray(x, dtype=np.float64))
        self._seen = (x, self._derived[0], cached)
        return logits

    def backward(self, x, upstream, labels=None):
        seen = self._seen
        cached = None
        if seen is not None and seen[0] is x and self._derived is not None and seen[1] == self._derived[0]:
            cached = seen[2]
        return backward_symmetric(self, x, upstream, cached)


FRAME_TOL = 1e-13


def _symmetric_weights(head):
    """(n1, n2, weights) for the head's current (v1, v2), cached per state.

    The guard here only checks that the frame (n1, n2) is orthonormal to
    1e-13; with the fixed cos/sin table that bounds every layout invariant
    well inside its tolerance. `SymmetricalHead.layout()` runs the full
    check on demand.
    """
    key = (head.v1.tobytes(), head.v2.tobytes())
    if head._derived is not None and head._derived[0] == key:
        return head._derived[1]
    n1, n2 = orthonormal_pair(head.v1, head.v2)
    frame = np.stack([n1, n2])
    drift = np.abs(frame @ frame.T - _I2).max()
    if not drift <= FRAME_TOL:
        raise DegenerateInput(f"plane frame drifted from orthonormal by {drift:.2e}")
    w = head._rot @ frame
    head._derived = (key, (n1, n2, w))
    return n1, n2, w


_I2 = np.eye(2)


def row_norms(x, eps=INPUT_EPS):
    """Euclidean norm of each row; raises ZeroNormInput below `eps`."""
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if not norms.min() >= eps:
        bad = int(np.argmax(~(norms >= eps)))
        raise ZeroNormInput(bad, norms[bad])
    return norms


def forward_symmetric(head, x):
    """logits[b, i] = sigma * cos(angle(x_b, w_i)) for the derived layout."""
    return _symmetric_forward(head, np.asarray(x, dtype=np.float64))[0]


def _symmetric_forward(head, x):
    _, _, w = _symmetric_weights(head)
    norms = row_norms(x)
    proj = x @ w.T
    # dividing the B x n products instead of the B x d inputs is the same
    # normalization at a fraction of the cost
    return (head.sigma / norms)[:, None] * proj, (proj, norms)


def backward_symmetric(head, x, upstream, cached=None):
    """Exact gradients of sum(upstream * logits) w.r.t. v1, v2 and x.

    With P = x W^T and r = |x| row-wise, logits = sigma P / r, so

        dx = G' W - x * rowsum(G' * P) / r^2,   dW = G'^T x,   G' = sigma G / r.

    dW then flows through the rotation w_i = cos(t_i) n1 + sin(t_i) n2 and
    the Gram-Schmidt step n1 = v1/|v1|, u = v2 - (n1.v2) n1, n2 = u/|u|.
    `cached` may carry ``(P, r)`` from a forward pass on the same `x`.
    """
    x = np.asarray(x, dtype=np.float64)
    n1, n2, w = _symmetric_weights(head)
    if cached is None:
        cached = _symmetric_forward(head, x)[1]
    proj, norms = cached
    gs = (head.sigma / norms)[:, None] * np.asarray(upstream, dtype=np.float64)
    radial = np.einsum("ij,ij->i", gs, proj) / (norms * norms)
    d_x = gs @ w - x * radial[:, None]
    g_n1, g_n2 = head._rot.T @ (gs.T @ x)

    v1, v2 = head.v1, head.v2
    r1 = np.sqrt(v1 @ v1)
    proj_v2 = n1 @ v2
    u = v2 - proj_v2 * n1
    ru = np.sqrt(u @ u)
    g_u = (g_n2 - (n2 @ g_n2) * n2) / ru
    gu_n1 = n1 @ g_u
    d_v2 = g_u - gu_n1 * n1
    g_n1 = g_n1 - proj_v2 * g_u - gu_n1 * v2
    d_v1 = (g_n1 - (n1 @ g_n1) * n1) / r1
    return Gradients({"v1": d_v1, "v2": d_v2}, d_x)


# --------------------------------------------------------------------------
# plain fully connected head
# --------------------------------------------------------------------------


def forward_fc(W, bias, x):
    return np.asarray(x, dtype=np.float64) @ W.T + bias


def backward_fc(W, bias, x, upstream):
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    return Gradients({"W": g.T @ x, "bias": g.sum(axis=0)}, g @ W)


@dataclass
class FCHead:
    W: np.ndarray
    bias: np.ndarray
    kind: str = field(default="fc", init=False)

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    @property
    def params(self):
        return {"W": self.W, "bias": self.bias}

    def forward(self, x, labels=None):
        return forward_fc(self.W, self.bias, x)

    def backward(self, x, upstream, labels=None):
        return backward_fc(self.W, self.bias, x, upstream)


# --------------------------------------------------------------------------
# ArcFace: additive angular margin on the target logit
# --------------------------------------------------------------------------

SINE_FLOOR = 1e-9


def _cosines(W, x):
    w_hat, w_norms = normalize_rows(W)
    x_hat, x_norms = normalize_rows(x)
    return x_hat @ w_hat.T, (w_hat, w_norms), (x_hat, x_norms)


def _cosine_backward(d_cos, w_cache, x_cache):
    w_hat, w_norms = w_cache
    x_hat, x_norms = x_cache
    d_w = _normalize_backward(w_hat, w_norms, d_cos.T @ x_hat)
    d_x = _normalize_backward(x_hat, x_norms, d_cos @ w_hat)
    return d_w, d_x


def _arc_target(c, m):
    """(margined value, d value / d c, applied mask) for target cosines `c`.

    cos(theta + m) = c cos m - sin(theta) sin m. The value uses the exact
    sine; the slope divides by the sine floored at sqrt(1e-9), which keeps
    it finite as theta -> 0. Where theta + m would pass pi the plain
    cosine is kept.
    """
    sine = np.sqrt(np.maximum(1.0 - c * c, 0.0))
    phi = c * np.cos(m) - sine * np.sin(m)
    dphi = np.cos(m) + np.sin(m) * c / np.maximum(sine, np.sqrt(SINE_FLOOR))
    applied = c > np.cos(np.pi - m)
    return np.where(applied, phi, c), np.where(applied, dphi, 1.0), applied


def forward_arcface(W, x, label, sigma, m):
    """sigma * cos(theta_j), with cos(theta_y + m) on each row's target class."""
    cos, _, _ = _cosines(W, x)
    if label is None:
        return sigma * cos
    rows = np.arange(cos.shape[0])
    label = np.asarray(label)
    val, _, _ = _arc_target(cos[rows, label], m)
    cos = cos.copy()
    cos[rows, label] = val
    return sigma * cos


def backward_arcface(W, x, label, sigma, m, upstream):
    cos, w_cache, x_cache = _cosines(W, x)
    d_cos = sigma * np.asarray(upstream, dtype=np.float64)
    if label is not None:
        rows = np.arange(cos.shape[0])
        label = np.asarray(label)
        _, slope, _ = _arc_target(cos[rows, label], m)
        d_cos = d_cos.copy()
        d_cos[rows, label] *= slope
    d_w, d_x = _cosine_backward(d_cos, w_cache, x_cache)
    return Gradients({"W": d_w}, d_x)


@dataclass
class ArcFaceHead:
    W: np.ndarray
    sigma: float
    m: float = 0.1
    kind: str = field(default="arcface", init=False)

    def __post_init__(self):
        if self.sigma <= 0 or self.m < 0:
            raise ValueError("ArcFace needs sigma > 0 and m >= 0")

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    @property
    def params(self):
        return {"W": self.W}

    def forward(self, x, labels=None):
        return forward_arcface(self.W, x, labels, self.sigma, self.m)

    def backward(self, x, upstream, labels=None):
        return backward_arcface(self.W, x, labels, self.sigma, self.m, upstream)


# --------------------------------------------------------------------------
# SphereFace: multiplicative angular margin, annealed against plain softmax
# --------------------------------------------------------------------------


def sphere_psi(c, m):
    """psi(theta) = (-1)^k cos(m theta) - 2k on [k pi/m, (k+1) pi/m], with its
    derivative with respect to c = cos(theta).

    cos(m theta) is the Chebyshev polynomial T_m(c), so both value and slope
    are polynomial in c on each segment.
    """
    c = np.clip(np.asarray(c, dtype=np.float64), -1.0, 1.0)
    coef = np.zeros(m + 1)
    coef[m] = 1.0
    theta = np.arccos(c)
    k = np.minimum(np.floor(m * theta / np.pi), m - 1)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return sign * cheb.chebval(c, coef) - 2.0 * k, sign * cheb.chebval(c, cheb.chebder(coef))


def forward_sphereface(W, x, label, m, anneal_lambda):
    """|x| cos(theta_j); the target becomes |x| (lambda cos + psi) / (1 + lambda)."""
    m = _check_sphere_margin(m)
    cos, _, (_, x_norms) = _cosines(W, x)
    unit = cos
    if label is not None:
        rows = np.arange(cos.shape[0])
        label = np.asarray(label)
        c = cos[rows, label]
        psi, _ = sphere_psi(c, m)
        unit = cos.copy()
        unit[rows, label] = (anneal_lambda * c + psi) / (1.0 + anneal_lambda)
    return x_norms[:, None] * unit


def backward_sphereface(W, x, label, m, anneal_lambda, upstream):
    m = _check_sphere_margin(m)
    cos, w_cache, x_cache = _cosines(W, x)
    x_hat, x_norms = x_cache
    g = np.asarray(upstream, dtype=np.float64)
    unit = cos
    slope = np.ones_like(cos)
    if label is not None:
        rows = np.arange(cos.shape[0])
        label = np.asarray(label)
        c = cos[rows, label]
        psi, dpsi = sphere_psi(c, m)
        unit = cos.copy()
        unit[rows, label] = (anneal_lambda * c + psi) / (1.0 + anneal_lambda)
        slope[rows, label] = (anneal_lambda + dpsi) / (1.0 + anneal_lambda)
    d_cos = g * slope * x_norms[:, None]
    d_radius = np.sum(g * unit, axis=1)
    d_w, d_x = _cosine_backward(d_cos, w_cache, x_cache)
    return Gradients({"W": d_w}, d_x + x_hat * d_radius[:, None])


def _check_sphere_margin(m):
    if int(m) != m or m < 1:
        raise ValueError(f"SphereFace margin must be a positive integer, got {m}")
    return int(m)


def anneal_lambda(iteration, lambda0=1000.0, lambda_min=5.0, gamma=0.1):
    return max(lambda_min, lambda0 / (1.0 + gamma * iteration))


@dataclass
class SphereFaceHead:
    W: np.ndarray
    m: int = 4
    lambda0: float = 1000.0
    lambda_min: float = 5.0
    gamma: float = 0.1
    iteration: int = 0
    kind: str = field(default="sphereface", init=False)

    def __post_init__(self):
        self.m = _check_sphere_margin(self.m)

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    @property
    def params(self):
        return {"W": self.W}

    @property
    def current_lambda(self):
        return anneal_lambda(self.iteration, self.lambda0, self.lambda_min, self.gamma)

    def step(self):
        """Advance the annealing schedule by one optimizer iteration."""
        self.iteration += 1

    def forward(self, x, labels=None):
        return forward_sphereface(self.W, x, labels, self.m, self.current_lambda)

    def backward(self, x, upstream, labels=None):
        return backward_sphereface(self.W, x, labels, self.m, self.current_lambda, upstream)


# --------------------------------------------------------------------------
# loss and construction
# --------------------------------------------------------------------------


def cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    b = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    total = e.sum(axis=1, keepdims=True)
    rows = np.arange(b)
    loss = float(np.mean(np.log(total[:, 0]) - shifted[rows, labels]))
    grad = e / total
    grad[rows, labels] -= 1.0
    return loss, grad / b


MAX_INIT_ATTEMPTS = 100


def init_head(kind, n, d, seed, sigma=16.0, m=None):
    """Freshly initialized head, deterministic in `seed`.

    Symmetric heads draw v1, v2 ~ U(0, 1)^d (redrawn while degenerate);
    the others draw W (and the FC bias) ~ U(-1/sqrt(d), 1/sqrt(d)).
    `m` defaults to 0.1 for ArcFace and 4 for SphereFace.
    """
    rng = np.random.default_rng(seed)
    if kind == "symmetric":
        if n < 3:
            raise InvalidClassCount(f"symmetric head needs n >= 3, got {n}")
        for _ in range(MAX_INIT_ATTEMPTS):
            v1, v2 = rng.uniform(0.0, 1.0, size=(2, d))
            try:
                gram_schmidt(v1, v2, EPS_NORM)
            except DegenerateInput:
                continue
            return SymmetricalHead(v1, v2, sigma, n)
        raise DegenerateInput(f"no non-degenerate (v1, v2) after {MAX_INIT_ATTEMPTS} draws")
    bound = 1.0 / np.sqrt(d)
    W = rng.uniform(-bound, bound, size=(n, d))
    if kind == "fc":
        return FCHead(W, rng.uniform(-bound, bound, size=n))
    if kind == "arcface":
        return ArcFaceHead(W, sigma, 0.1 if m is None else m)
    if kind == "sphereface":
        return SphereFaceHead(W, 4 if m is None else int(m))
    raise ValueError(f"unknown head kind {kind!r}; expected one of {KINDS}")
