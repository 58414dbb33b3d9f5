"""Randomized trial runner for the layout, root and rhombus lemmas."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .analysis import WeightSet, astride_cancellation_check, criterion_sum
from .errors import InvalidClassCount
from .geometry import build_symmetric_layout, gram_schmidt, random_basis, random_unit, verify_lemma3

LEMMA_HEADER = ["lemma", "n", "d", "trial", "residual", "pass"]
LEMMAS = ("sum", "roots", "rhombus", "astride")


@dataclass(frozen=True)
class LemmaRow:
    lemma: str
    n: int
    d: int
    trial: int
    residual: float
    passed: bool


def _trial_rows(n, d, trial, tol, seed):
    rng = np.random.default_rng([seed, n, d, trial])
    basis = random_basis(rng, d).rotated(rng.uniform(0.0, 2.0 * np.pi))
    layout = build_symmetric_layout(basis, n)

    # weights of a symmetric layout cancel
    r_sum = float(np.linalg.norm(layout.weights.sum(axis=0)))

    # every weight angle is a root of the criterion sum on the layout plane
    pw = WeightSet.from_layout(layout)
    r_roots = float(np.max(np.abs(criterion_sum(pw, pw.angles))))

    # projections of a, b onto a plane through a + b form a rhombus
    a, b = random_unit(rng, d), random_unit(rng, d)
    rep = verify_lemma3(a, b, gram_schmidt(a + b, rng.standard_normal(d)), tol=tol)
    r_rhombus = rep.residual

    # same cancellation viewed from a random plane through one weight
    i = int(rng.integers(n))
    r_astride = astride_cancellation_check(layout, i, rng.standard_normal(d))

    out = []
    for name, r in zip(LEMMAS, (r_sum, r_roots, r_rhombus, r_astride)):
        out.append(LemmaRow(name, n, d, trial, r, bool(r <= tol)))
    return out


def run_lemma_suite(n_values, dims, trials, tol, seed=0):
    """All lemma checks over the (n, d, trial) grid; returns a list of rows."""
    n_values = [int(n) for n in n_values]
    dims = [int(d) for d in dims]
    if not n_values or not dims or trials < 1:
        raise ValueError("n range, dimension list and trial count must be non-empty")
    if min(n_values) < 3:
        raise InvalidClassCount(f"lemma suite needs n >= 3, got {min(n_values)}")
    if min(dims) < 2:
        raise ValueError("dimensions must be >= 2")
    if not tol > 0:
        raise ValueError("tol must be positive")
    rows = []
    for n in n_values:
        for d in dims:
            for t in range(trials):
                rows.extend(_trial_rows(n, d, t, tol, seed))
    return rows


def write_lemma_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(LEMMA_HEADER)
        for r in rows:
            out.writerow([r.lemma, r.n, r.d, r.trial, repr(r.residual), int(r.passed)])
