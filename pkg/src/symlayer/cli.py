"""Command-line front end: ``symlayer <command> [flags]``.

Every command writes its CSVs and a ``manifest.txt`` into ``--out``.
Settings resolve as flags > ``--config`` file > defaults. A manifest is
itself a valid ``--config`` file, so any run can be repeated from it.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import WeightSet, extremum_divergence, refutability_value, sweep
from .checkpoint import save_head
from .errors import SymLayerError
from .geometry import PlaneBasis, build_symmetric_layout
from .head import KINDS
from .suite import run_lemma_suite, write_lemma_csv
from .trainer.data import load_idx, make_blobs, split_dataset
from .trainer.loop import TrainConfig, train
from .trainer.studies import BENCH_KINDS, bench_epoch, stability_study, write_bench_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MANIFEST = "manifest.txt"
# keys that never come from a config file
_RESERVED = {"command", "config", "out", "verbose"}

log = logging.getLogger("symlayer")


class UsageError(Exception):
    """Bad flag value or config entry; maps to exit code 2."""


# -- value parsers ----------------------------------------------------------


def int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def optional_float(text):
    if text.strip().lower() in ("", "none"):
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'none', got {text!r}") from None


def n_range(text):
    """``3:32`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
            return list(range(lo, hi + 1))
        return int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI or a comma list, got {text!r}") from None


def parse_weights_spec(text):
    """``symmetric:N`` or ``angles:A0,A1,...`` (degrees) -> (WeightSet, PlaneBasis)."""
    kind, _, rest = text.partition(":")
    basis = PlaneBasis.axes(2)
    try:
        if kind == "symmetric":
            return WeightSet.from_layout(build_symmetric_layout(basis, int(rest))), basis
        if kind == "angles":
            deg = float_list(rest)
            if not deg:
                raise ValueError("empty angle list")
            return WeightSet.from_angles(np.radians(deg)), basis
    except (ValueError, argparse.ArgumentTypeError, SymLayerError) as exc:
        raise UsageError(f"bad weights spec {text!r}: {exc}") from None
    raise UsageError(f"weights spec must be symmetric:N or angles:A,B,..., got {text!r}")


def parse_grid_spec(text, default_sigma):
    """``kind:sigma=4,8:m=0.1`` entries joined by ';' -> list of (kind, sigma, m)."""
    cells = []
    for entry in filter(None, (e.strip() for e in text.split(";"))):
        kind, *fields = entry.split(":")
        if kind not in KINDS:
            raise UsageError(f"unknown head kind {kind!r} in grid entry {entry!r}")
        values = {"sigma": [default_sigma], "m": [None]}
        for f in fields:
            key, eq, raw = f.partition("=")
            if not eq or key not in values:
                raise UsageError(f"grid field must be sigma=... or m=..., got {f!r}")
            try:
                values[key] = float_list(raw)
            except argparse.ArgumentTypeError as exc:
                raise UsageError(str(exc)) from None
            if not values[key]:
                raise UsageError(f"empty value list in {f!r}")
        cells.extend((kind, s, m) for s, m in itertools.product(values["sigma"], values["m"]))
    if not cells:
        raise UsageError("empty grid")
    return cells


def load_dataset(args):
    """(train, eval) pair from ``blobs:NxD`` or ``idx:IMAGES,LABELS``."""
    kind, _, rest = args.dataset.partition(":")
    if kind == "blobs":
        try:
            n, d = (int(v) for v in rest.lower().split("x"))
        except ValueError:
            raise UsageError(f"blobs spec must be blobs:NxD, got {args.dataset!r}") from None
        return make_blobs(n, d, args.per_class, args.spread, args.data_seed)
    if kind == "idx":
        paths = rest.split(",")
        if len(paths) != 2:
            raise UsageError(f"idx spec must be idx:IMAGES,LABELS, got {args.dataset!r}")
        return split_dataset(load_idx(*paths), args.data_seed)
    raise UsageError(f"dataset spec must start with blobs: or idx:, got {args.dataset!r}")


# -- parser -----------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="key=value file; flags override its entries")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_training(p):
    d = TrainConfig()
    p.add_argument("--dataset", default="blobs:10x64", help="blobs:NxD or idx:IMAGES,LABELS")
    p.add_argument("--per-class", type=int, default=625, help="blob samples per class before the split")
    p.add_argument("--spread", type=float, default=0.05, help="blob standard deviation")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr0", type=float, default=d.lr0)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--lr-decay", type=float_list, default=list(d.lr_decay_epochs), help="decay points as run fractions")
    p.add_argument("--widths", type=int_list, default=list(d.widths))
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--sigma", type=float, default=d.sigma)
    p.add_argument("--m", type=optional_float, default=None, help="margin; 'none' for the head default")


def build_parser():
    parser = argparse.ArgumentParser(prog="symlayer", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-lemmas", help="randomized checks of the layout lemmas")
    p.add_argument("--n-range", type=n_range, default=list(range(3, 33)), help="LO:HI inclusive or list")
    p.add_argument("--dims", type=int_list, default=[2, 3, 8, 32])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("analyze", help="logit/softmax sweep and extremum divergence")
    p.add_argument("--weights", default="symmetric:10", help="symmetric:N or angles:A,B,... (degrees)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--resolution", type=float, default=0.1, help="sweep step in degrees, (0, 1]")
    _add_common(p)

    p = sub.add_parser("refute", help="criterion value of a half-circle fan for n = 3..N")
    p.add_argument("--n-max", type=int, default=64)
    _add_common(p)

    p = sub.add_parser("train", help="train backbone + head, write the run log")
    p.add_argument("--head", choices=KINDS, default="symmetric")
    _add_training(p)
    _add_common(p)

    p = sub.add_parser("stability", help="seed-repeat grid of training runs")
    p.add_argument("--grid", default="arcface:sigma=4,8,16,32,64:m=0.1", help="kind:sigma=..:m=.. entries joined by ';'")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    _add_training(p)
    _add_common(p)

    p = sub.add_parser("bench", help="seconds per epoch for each head kind")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--kinds", default=",".join(BENCH_KINDS))
    _add_training(p)
    _add_common(p)
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    return None


def read_config(path, sub):
    """Flag-style argv from a key=value file, validated against `sub`'s options."""
    known = {a.dest: a for a in sub._actions if a.option_strings}
    argv = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not eq:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        if key == "command":
            if value != sub.prog.split()[-1]:
                raise UsageError(f"{path}:{lineno}: config is for '{value}', not '{sub.prog.split()[-1]}'")
            continue
        if key in _RESERVED or key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        argv += [known[key].option_strings[-1], value]
    return argv


def parse_args(argv):
    """Parse with config-file layering; raises UsageError or SystemExit(2)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = _subparser(parser, args.command)
        file_argv = read_config(args.config, sub)
        # file entries first so explicit flags win (argparse keeps the last value)
        i = argv.index(args.command)
        args = parser.parse_args(argv[: i + 1] + file_argv + argv[i + 1:])
    return args


# -- manifest ---------------------------------------------------------------


def _manifest_value(v):
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return ",".join(_manifest_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_manifest(args, out_dir, extra=None):
    """key=value file of every resolved setting; reusable as --config."""
    lines = [
        "# symlayer run manifest",
        f"# symlayer={__version__} numpy={np.__version__} python={platform.python_version()}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={_manifest_value(v)}")
    lines.append(f"command={args.command}")
    for k, v in sorted(vars(args).items()):
        if k in _RESERVED:
            continue
        lines.append(f"{k}={_manifest_value(v)}")
    path = Path(out_dir) / MANIFEST
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def train_config(args, head=None):
    try:
        return TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr0=args.lr0,
            momentum=args.momentum,
            weight_decay=args.weight_decay,
            lr_decay_epochs=tuple(args.lr_decay),
            seed=args.seed,
            head=head or getattr(args, "head", "symmetric"),
            sigma=args.sigma,
            m=args.m,
            widths=tuple(args.widths),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- commands ---------------------------------------------------------------


def cmd_verify_lemmas(args, out):
    if not args.n_range or not args.dims:
        raise UsageError("n range and dimension list must be non-empty")
    if min(args.n_range) < 3:
        raise UsageError(f"n must be >= 3, got {min(args.n_range)}")
    if min(args.dims) < 2 or args.trials < 1 or not args.tol > 0:
        raise UsageError("need dims >= 2, trials >= 1 and tol > 0")
    write_manifest(args, out)
    rows = run_lemma_suite(args.n_range, args.dims, args.trials, args.tol, args.seed)
    write_lemma_csv(rows, out / "verify_lemmas.csv")
    failed = [r for r in rows if not r.passed]
    worst = max(rows, key=lambda r: r.residual)
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed; worst residual {worst.residual:.3e} ({worst.lemma}, n={worst.n}, d={worst.d})")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_analyze(args, out):
    if not 0 < args.resolution <= 1:
        raise UsageError(f"resolution must lie in (0, 1] degrees, got {args.resolution}")
    if not args.sigma > 0:
        raise UsageError("sigma must be positive")
    ws, basis = parse_weights_spec(args.weights)
    write_manifest(args, out)
    sweep(ws, basis, args.resolution, args.sigma).write_csv(out / "sweep.csv")
    div = extremum_divergence(ws, basis, args.sigma, args.resolution)
    div.write_csv(out / "divergence.csv")
    print(f"max divergence {div.max:.6f} deg")
    return EXIT_OK


def cmd_refute(args, out):
    if args.n_max < 3:
        raise UsageError(f"n-max must be >= 3, got {args.n_max}")
    write_manifest(args, out)
    values = [(n, refutability_value(n)) for n in range(3, args.n_max + 1)]
    with open(out / "refute.csv", "w", encoding="utf-8") as fh:
        fh.write("n,value\n")
        for n, v in values:
            fh.write(f"{n},{v!r}\n")
    bad = [n for n, v in values if not v > 0]
    print(f"{len(values) - len(bad)}/{len(values)} values positive")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_train(args, out):
    cfg = train_config(args)
    ds = load_dataset(args)
    # child seeds are a pure function of cfg.seed; recorded for the reader
    ss = np.random.SeedSequence(cfg.seed)
    child = [int(s.generate_state(1)[0]) for s in ss.spawn(2)]
    write_manifest(args, out, {"backbone_seed": child[0], "head_seed": child[1]})
    runlog = train(cfg, ds)
    runlog.write_csv(out / "runlog.csv")
    runlog.write_summary(out / "summary.csv")
    save_head(runlog.head, out / "head.ckpt")
    status = "diverged" if runlog.diverged else "ok"
    print(f"{cfg.head}: best eval acc {runlog.best_eval_acc:.4f} over {len(runlog.epochs)} epochs ({status})")
    return EXIT_OK


def cmd_stability(args, out):
    base = train_config(args)
    grid = parse_grid_spec(args.grid, args.sigma)
    if args.repeats < 1 or args.workers < 1:
        raise UsageError("repeats and workers must be >= 1")
    ds = load_dataset(args)
    write_manifest(args, out, {"repeat_seeds": [base.seed + r for r in range(args.repeats)]})
    table = stability_study(grid, args.repeats, base, ds, workers=args.workers)
    table.write_csv(out / "stability.csv")
    for row in table.summary():
        print(f"{row['kind']} sigma={row['sigma']:g} m={row['m']}: spread {row['spread']:.4f}, diverged {row['diverged']}/{args.repeats}")
    return EXIT_OK


def cmd_bench(args, out):
    kinds = [k for k in args.kinds.split(",") if k]
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise UsageError(f"unknown head kinds {bad}; expected a subset of {KINDS}")
    if args.repeats < 3:
        raise UsageError("bench needs --repeats >= 3")
    base = train_config(args, head=kinds[0])
    ds = load_dataset(args)
    write_manifest(args, out)
    rows = bench_epoch(base, ds, args.repeats, kinds)
    write_bench_csv(rows, out / "bench.csv")
    for r in rows:
        print(f"{r.kind:<11} {r.mean_sec:.4f} +- {r.std_sec:.4f} s/epoch")
    return EXIT_OK


COMMANDS = {
    "verify-lemmas": cmd_verify_lemmas,
    "analyze": cmd_analyze,
    "refute": cmd_refute,
    "train": cmd_train,
    "stability": cmd_stability,
    "bench": cmd_bench,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for bad flags
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"symlayer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"symlayer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SymLayerError, OSError) as exc:
        # bad data files and similar input problems
        print(f"symlayer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
