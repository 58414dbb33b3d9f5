"""SGD training of MLP + classifier head, with per-epoch logging."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import SymLayerError
from ..geometry import angle_between
from ..head import KINDS, SymmetricalHead, cross_entropy, init_head
from .mlp import MLP

log = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e4
RUNLOG_HEADER = ["epoch", "train_loss", "train_acc", "eval_loss", "eval_acc", "plane_delta_deg", "seconds"]
# appended after the fixed columns: learning rate in effect and raw n1 step
RUNLOG_EXTRA = ["lr", "n1_delta_deg"]


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay_epochs: tuple = (0.5, 0.75)
    seed: int = 0
    head: str = "symmetric"
    sigma: float = 16.0
    m: float | None = None
    widths: tuple = (64, 64)

    def __post_init__(self):
        if self.head not in KINDS:
            raise ValueError(f"unknown head kind {self.head!r}; expected one of {KINDS}")
        if not self.lr0 >= 0:
            raise ValueError("lr0 must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if any(not 0 < f <= 1 for f in self.lr_decay_epochs):
            raise ValueError("lr decay points are fractions of the run in (0, 1]")
        self.lr_decay_epochs = tuple(float(f) for f in self.lr_decay_epochs)
        self.widths = tuple(int(w) for w in self.widths)
        if not self.widths or min(self.widths) < 1:
            raise ValueError("backbone widths must be positive")

    def milestones(self):
        return sorted(math.ceil(f * self.epochs) for f in self.lr_decay_epochs)

    def lr_at(self, epoch):
        """Step schedule: x0.1 at each milestone epoch (0-based)."""
        drops = sum(1 for e in self.milestones() if epoch >= e)
        return self.lr0 * 0.1**drops


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    eval_loss: float
    eval_acc: float
    plane_delta_deg: float
    seconds: float
    lr: float
    n1_delta_deg: float


@dataclass
class RunLog:
    config: TrainConfig
    epochs: list = field(default_factory=list)
    # trained head, kept for checkpointing; not part of the CSV
    head: object = field(default=None, repr=False, compare=False)

    @property
    def diverged(self):
        return any(is_divergent(r.train_loss) or is_divergent(r.eval_loss) for r in self.epochs)

    @property
    def best_eval_acc(self):
        accs = [r.eval_acc for r in self.epochs if np.isfinite(r.eval_acc)]
        return max(accs) if accs else float("nan")

    def column(self, name):
        return np.array([getattr(r, name) for r in self.epochs])

    def epochs_to(self, fraction):
        """First epoch (1-based count) whose eval accuracy reaches fraction * best."""
        best = self.best_eval_acc
        for r in self.epochs:
            if r.eval_acc >= fraction * best:
                return r.epoch + 1
        return None

    def write_summary(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["head", "epochs_run", "best_eval_acc", "diverged"])
            out.writerow([self.config.head, len(self.epochs), repr(float(self.best_eval_acc)), int(self.diverged)])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(RUNLOG_HEADER + RUNLOG_EXTRA)
            for r in self.epochs:
                row = asdict(r)
                out.writerow([_fmt(row[k]) for k in RUNLOG_HEADER + RUNLOG_EXTRA])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def is_divergent(loss):
    return not np.isfinite(loss) or loss > DIVERGENCE_LOSS


def plane_rotation_monitor(prev_basis, cur_basis):
    """Largest principal angle (degrees) between two plane spans.

    The cosines of the principal angles are the singular values of the
    2 x 2 cross-Gram matrix of the two orthonormal bases.
    """
    if prev_basis.d != cur_basis.d:
        raise ValueError("bases live in different dimensions")
    gram = prev_basis.matrix @ cur_basis.matrix.T
    sv = np.linalg.svd(gram, compute_uv=False)
    # sin of the largest angle from the residual of cur's frame against prev's
    # plane; more accurate than arccos(min sv) for small rotations
    resid = cur_basis.matrix - gram.T @ prev_basis.matrix
    s_max = np.linalg.norm(resid, ord=2)
    c_min = float(np.clip(sv.min(), 0.0, 1.0))
    return float(np.degrees(np.arctan2(min(s_max, 1.0), c_min)))


def shuffle_order(seed, epoch, size):
    """Per-epoch permutation from a counter-based generator keyed on (seed, epoch)."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, epoch])))
    return gen.permutation(size)


def build_model(config, d_in, n_classes):
    ss = np.random.SeedSequence(config.seed)
    mlp_seed, head_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    mlp = MLP(d_in, config.widths, seed=mlp_seed)
    head = init_head(config.head, n_classes, mlp.d_out, head_seed, sigma=config.sigma, m=config.m)
    return mlp, head


class _SGD:
    """Momentum SGD with coupled L2 weight decay (buf = mu*buf + g + wd*p)."""

    def __init__(self, params, momentum, weight_decay):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.bufs = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, grads, lr):
        for k, p in self.params.items():
            g = grads[k]
            if self.weight_decay:
                g = g + self.weight_decay * p
            buf = self.bufs[k]
            buf *= self.momentum
            buf += g
            p -= lr * buf


def _evaluate(mlp, head, ds, chunk=2048):
    losses, hits = [], 0
    for start in range(0, len(ds), chunk):
        x = ds.features[start:start + chunk]
        y = ds.labels[start:start + chunk]
        feats = mlp.forward(x)
        loss, _ = cross_entropy(head.forward(feats, y), y)
        losses.append(loss * len(y))
        hits += int(np.sum(np.argmax(head.forward(feats), axis=1) == y))
    return float(np.sum(losses) / len(ds)), hits / len(ds)


def train(config, dataset, eval_dataset=None):
    """Train a fresh MLP + head on `dataset`; returns the RunLog.

    `dataset` is either a single train Dataset or a ``(train, eval)`` pair.
    The run stops early, flagged as diverged, once a batch loss is
    non-finite or exceeds 1e4; numerical failures inside the model
    (collapsed embeddings, degenerate head vectors) count as a non-finite
    loss.
    """
    if eval_dataset is None:
        dataset, eval_dataset = dataset
    if dataset.n_classes != eval_dataset.n_classes:
        raise ValueError("train and eval class counts differ")
    mlp, head = build_model(config, dataset.d_in, dataset.n_classes)
    params = {f"mlp.{k}": v for k, v in mlp.params.items()}
    params.update({f"head.{k}": v for k, v in head.params.items()})
    opt = _SGD(params, config.momentum, config.weight_decay)
    runlog = RunLog(config)
    symmetric = isinstance(head, SymmetricalHead)
    prev_basis = head.basis() if symmetric else None

    x_all, y_all = dataset.features, dataset.labels
    n = len(dataset)
    with np.errstate(all="ignore"):
        for epoch in range(config.epochs):
            lr = config.lr_at(epoch)
            order = shuffle_order(config.seed, epoch, n)
            t0 = time.perf_counter()
            loss_sum, hit, seen, halted = 0.0, 0, 0, None
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                xb, yb = x_all[idx], y_all[idx]
                try:
                    feats = mlp.forward(xb)
                    logits = head.forward(feats, yb)
                    loss, d_logits = cross_entropy(logits, yb)
                except (SymLayerError, FloatingPointError) as exc:
                    log.info("epoch %d: model failure treated as divergence: %s", epoch, exc)
                    loss = float("nan")
                if is_divergent(loss):
                    halted = loss
                    break
                hg = head.backward(feats, d_logits, yb)
                grads = {f"mlp.{k}": v for k, v in mlp.backward(hg.d_input).items()}
                grads.update({f"head.{k}": v for k, v in hg.params.items()})
                opt.step(grads, lr)
                if hasattr(head, "step"):
                    head.step()
                loss_sum += loss * len(idx)
                hit += int(np.sum(np.argmax(logits, axis=1) == yb))
                seen += len(idx)
            seconds = time.perf_counter() - t0

            if halted is not None:
                train_loss = float(halted)
                eval_loss, eval_acc = float("nan"), float("nan")
            else:
                train_loss = loss_sum / seen
                try:
                    eval_loss, eval_acc = _evaluate(mlp, head, eval_dataset)
                except (SymLayerError, FloatingPointError):
                    eval_loss, eval_acc = float("nan"), float("nan")

            plane_delta = n1_delta = float("nan")
            if symmetric and halted is None:
                try:
                    # full layout invariant check once per epoch; forwards only
                    # verify the orthonormal frame
                    head.layout()
                    cur = head.basis()
                    plane_delta = plane_rotation_monitor(prev_basis, cur)
                    n1_delta = float(np.degrees(angle_between(prev_basis.n1, cur.n1)))
                    prev_basis = cur
                except SymLayerError as exc:
                    log.warning("epoch %d: symmetric layout check failed: %s", epoch, exc)

            runlog.epochs.append(
                EpochRecord(
                    epoch,
                    float(train_loss),
                    hit / seen if seen else float("nan"),
                    float(eval_loss),
                    float(eval_acc),
                    plane_delta,
                    seconds,
                    lr,
                    n1_delta,
                )
            )
            log.debug("epoch %d lr=%g loss=%.4f eval_acc=%.4f", epoch, lr, train_loss, eval_acc)
            if runlog.diverged:
                break
    runlog.head = head
    return runlog
