"""Seed-repeat stability grid and per-epoch timing benchmark."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..head import KINDS
from .loop import train

STABILITY_HEADER = ["kind", "sigma", "m", "repeat", "seed", "best_eval_acc_or_x"]
DIVERGED_MARK = "x"
BENCH_HEADER = ["kind", "mean_sec", "std_sec", "repeats"]
# order of the rows in the timing table
BENCH_KINDS = ("fc", "sphereface", "arcface", "symmetric")


@dataclass(frozen=True)
class StabilityCell:
    kind: str
    sigma: float
    m: float | None
    repeat: int
    seed: int
    best_eval_acc: float
    diverged: bool

    @property
    def value(self):
        return DIVERGED_MARK if self.diverged else repr(float(self.best_eval_acc))


@dataclass
class StabilityTable:
    cells: list

    def __len__(self):
        return len(self.cells)

    def groups(self):
        """Cells keyed by (kind, sigma, m), in grid order."""
        out = {}
        for c in self.cells:
            out.setdefault((c.kind, c.sigma, c.m), []).append(c)
        return out

    def summary(self):
        """Per grid cell: accuracy spread over finite repeats and divergence count."""
        rows = []
        for (kind, sigma, m), cells in self.groups().items():
            accs = [c.best_eval_acc for c in cells if not c.diverged]
            n_div = sum(c.diverged for c in cells)
            spread = float(np.ptp(accs)) if len(accs) > 1 else 0.0
            rows.append(
                {
                    "kind": kind,
                    "sigma": sigma,
                    "m": m,
                    "spread": spread,
                    "diverged": n_div,
                    # repeats disagree on the divergence flag
                    "flag_disagreement": 0 < n_div < len(cells),
                }
            )
        return rows

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(STABILITY_HEADER)
            for c in self.cells:
                out.writerow([c.kind, repr(float(c.sigma)), "" if c.m is None else repr(float(c.m)), c.repeat, c.seed, c.value])


def _run_cell(job):
    kind, sigma, m, repeat, config, dataset = job
    log = train(config, dataset)
    return StabilityCell(kind, sigma, m, repeat, config.seed, log.best_eval_acc, log.diverged)


def stability_study(head_grid, repeats, base_config, dataset, workers=1):
    """Train every (kind, sigma, m) cell `repeats` times with seeds base+r.

    `dataset` is a ``(train, eval)`` pair. Cells may run in `workers`
    processes; results are always returned in (grid, repeat) order.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    jobs = []
    for kind, sigma, m in head_grid:
        for r in range(repeats):
            cfg = replace(base_config, head=kind, sigma=float(sigma), m=m, seed=base_config.seed + r)
            jobs.append((kind, float(sigma), m, r, cfg, dataset))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]
    return StabilityTable(cells)


@dataclass(frozen=True)
class BenchRow:
    kind: str
    mean_sec: float
    std_sec: float
    repeats: int


def bench_epoch(config, dataset, repeats=3, kinds=BENCH_KINDS):
    """Seconds per training epoch for each head kind on one backbone and dataset.

    Each kind runs one untimed warm-up epoch followed by `repeats` timed
    epochs; std uses ddof=1. Every kind sees the same backbone init and
    shuffle order, so only the head differs.
    """
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    rows = []
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(f"unknown head kind {kind!r}")
        cfg = replace(config, head=kind, epochs=repeats + 1)
        log = train(cfg, dataset)
        secs = log.column("seconds")[1:]
        if len(secs) < repeats:
            raise RuntimeError(f"{kind} run diverged before {repeats} timed epochs")
        rows.append(BenchRow(kind, float(np.mean(secs)), float(np.std(secs, ddof=1)), repeats))
    return rows


def write_bench_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(BENCH_HEADER)
        for r in rows:
            out.writerow([r.kind, repr(r.mean_sec), repr(r.std_sec), r.repeats])

