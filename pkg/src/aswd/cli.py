"""Command-line entry point.

    aswd distance X.csv Y.csv [--metric ID]
    aswd flow | matrix | ablation | histogram | bench

Configuration is a plain-text file of ``section.key = value`` lines; absent
keys take their defaults. ``--seed`` overrides ``run.seed``. Outputs go to
``--out`` and existing files are only replaced with ``--force``.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from statistics import median

import numpy as np

from . import flow
from .augmentation import aswd, save_network
from .errors import ConfigError, ContractError, NumericError
from .exact_ot import exact_wasserstein
from .metrics import (
    DefiningFunction,
    ProjectionNet,
    gswd,
    gswd_nn,
    max_swd,
    projection_histogram,
    sample_unit_sphere,
    swd,
)

log = logging.getLogger("aswd")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4
EXIT_EXISTS = 5

DISTANCE_METRICS = ("swd", "gswd-linear", "gswd-poly3", "gswd-circular", "gswd-nn", "max-swd", "aswd", "exact")


class InputError(Exception):
    """Bad input data (as opposed to bad configuration)."""


class OutputExists(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunSection:
    seed: int = 0


@dataclass(frozen=True)
class FlowSection:
    metric: str = "swd"
    target: str = "eight-gaussian"
    noise: float | None = None
    n: int = 500
    L: int = 10
    k: float = 2.0
    lr: float = 0.002
    iterations: int = 500
    lam: float = 0.1
    M: int = 10
    inner_lr: float | None = None
    eval_every: int = 1
    poly_degree: int = 3
    circular_radius: float = 1.0
    max_steps: int = 10
    max_lr: float = 0.01

    def __post_init__(self):
        self.flow_config(0)
        self.target_spec(0)

    def flow_config(self, seed: int) -> flow.FlowConfig:
        names = {f.name for f in fields(flow.FlowConfig)}
        kw = {k: v for k, v in vars(self).items() if k in names}
        return flow.FlowConfig(seed=seed, **kw)

    def target_spec(self, seed: int, name: str | None = None) -> flow.TargetSpec:
        return flow.TargetSpec(name or self.target, self.noise, seed)


@dataclass(frozen=True)
class MatrixSection:
    metrics: tuple[str, ...] = ("swd", "aswd")
    targets: tuple[str, ...] = ("eight-gaussian", "swiss-roll", "moon", "knot")
    repeats: int = 20
    workers: int = 1

    def __post_init__(self):
        for m in self.metrics:
            if m not in flow.METRICS:
                raise ConfigError(f"matrix.metrics: unknown metric {m!r}; expected one of {flow.METRICS}")
        for t in self.targets:
            flow.TargetSpec(t)
        _positive(self, "repeats", "workers")


@dataclass(frozen=True)
class DistanceSection:
    metric: str = "swd"
    L: int = 10
    k: float = 2.0
    lam: float = 0.1
    M: int = 10
    lr: float = 0.002
    poly_degree: int = 3
    circular_radius: float = 1.0
    max_steps: int = 50
    max_lr: float = 0.01

    def __post_init__(self):
        if self.metric not in DISTANCE_METRICS:
            raise ConfigError(f"distance.metric must be one of {DISTANCE_METRICS}, got {self.metric!r}")
        _positive(self, "L", "lr", "max_lr", "circular_radius")
        DefiningFunction("polynomial", degree=self.poly_degree)
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lam < 0 or self.M < 0 or self.max_steps < 0:
            raise ConfigError("lam, M and max_steps must be >= 0")


@dataclass(frozen=True)
class HistogramSection:
    dim: int = 100
    shift: float = 5.0
    n: int = 500
    L: int = 1000
    train_L: int = 1000
    bins: int = 20
    k: float = 2.0
    lam: float = 0.1
    M: int = 10
    lr: float = 0.002

    def __post_init__(self):
        _positive(self, "dim", "n", "L", "train_L", "bins", "lr")
        if self.shift < 0 or self.lam < 0 or self.M < 0:
            raise ConfigError("shift, lam and M must be >= 0")


@dataclass(frozen=True)
class BenchSection:
    metrics: tuple[str, ...] = ("swd", "aswd")
    n: tuple[int, ...] = (250, 500, 1000)
    L: tuple[int, ...] = (10, 100)
    d: int = 2
    repeats: int = 5

    def __post_init__(self):
        for m in self.metrics:
            if m not in DISTANCE_METRICS:
                raise ConfigError(f"bench.metrics: unknown metric {m!r}")
        if not self.n or not self.L or min(self.n + self.L) < 1:
            raise ConfigError("bench.n and bench.L need positive entries")
        _positive(self, "d", "repeats")


def _positive(obj, *names):
    for name in names:
        if not getattr(obj, name) > 0:
            raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class Config:
    run: RunSection = field(default_factory=RunSection)
    flow: FlowSection = field(default_factory=FlowSection)
    matrix: MatrixSection = field(default_factory=MatrixSection)
    distance: DistanceSection = field(default_factory=DistanceSection)
    histogram: HistogramSection = field(default_factory=HistogramSection)
    bench: BenchSection = field(default_factory=BenchSection)


def _sections() -> dict[str, type]:
    return {f.name: typing.get_type_hints(Config)[f.name] for f in fields(Config)}


def _convert(text: str, hint, key: str):
    args = typing.get_args(hint)
    try:
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
        if type(None) in args:
            return None if text.lower() == "none" else float(text)
        if typing.get_origin(hint) is tuple:
            item = args[0]
            return tuple(item(p.strip()) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {_type_name(hint)}") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def _type_name(hint) -> str:
    if typing.get_origin(hint) is tuple:
        return f"comma-separated list of {typing.get_args(hint)[0].__name__}"
    if type(None) in typing.get_args(hint):
        return "number or 'none'"
    return hint.__name__


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> Config:
    """Parse ``section.key = value`` lines; ``#`` starts a comment."""
    sections = _sections()
    values: dict[str, dict] = {name: {} for name in sections}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        section, dot, name = key.partition(".")
        if not eq or not dot or not name or not val:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        if section not in sections:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        hints = typing.get_type_hints(sections[section])
        if name not in hints:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if name in values[section]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[section][name] = _convert(val, hints[name], key)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    built = {}
    for name, cls in sections.items():
        try:
            built[name] = cls(**values[name])
        except ConfigError as exc:
            raise ConfigError(f"{source}: {name}: {exc}") from None
    return Config(**built)


def parse_config(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def emit_config(cfg: Config) -> str:
    lines = []
    for f in fields(Config):
        section = getattr(cfg, f.name)
        for sf in fields(section):
            lines.append(f"{f.name}.{sf.name} = {_format(getattr(section, sf.name))}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# input / output helpers


def read_samples(path) -> np.ndarray:
    """One point per row; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"sample file not found: {path}")
    rows, width = [], None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InputError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise InputError(f"{path}: row {lineno} has a non-numeric entry") from None
            if not all(np.isfinite(vals)):
                raise InputError(f"{path}: row {lineno} has a non-finite entry")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no samples")
    return np.array(rows)


class Output:
    """Collects files under one directory, refusing to clobber without ``force``."""

    def __init__(self, root, force: bool):
        self.root = Path(root)
        self.force = force

    def claim(self, names) -> list[Path]:
        paths = [self.root / n for n in names]
        if not self.force:
            taken = [p for p in paths if p.exists()]
            if taken:
                raise OutputExists(f"{taken[0]} exists (use --force to overwrite)")
        self.root.mkdir(parents=True, exist_ok=True)
        return paths


def _write_rows(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands


def compute_distance(X, Y, sec: DistanceSection, seed: int):
    """Distance by metric id; returns ``(value, trained net or None)``."""
    d = X.shape[1]
    m = sec.metric
    if m == "exact":
        return exact_wasserstein(X, Y, sec.k), None
    if m == "aswd":
        value, net = aswd(X, Y, sec.L, sec.k, sec.lam, sec.M, sec.lr, seed)
        return float(value), net
    if m == "max-swd":
        return max_swd(X, Y, sec.k, sec.max_steps, sec.max_lr, seed), None
    if m == "gswd-nn":
        return gswd_nn(X, Y, ProjectionNet.random(d, sec.L, seed), sec.k), None
    if m == "swd":
        return swd(X, Y, sample_unit_sphere(sec.L, d, seed), sec.k), None
    if m == "gswd-linear":
        fn = DefiningFunction("linear")
    elif m == "gswd-poly3":
        fn = DefiningFunction("polynomial", degree=sec.poly_degree, dim=d)
    else:
        fn = DefiningFunction("circular", radius=sec.circular_radius)
    return gswd(X, Y, fn, sample_unit_sphere(sec.L, fn.projection_dim(d), seed), sec.k), None


def cmd_distance(args, cfg: Config) -> int:
    sec = cfg.distance if args.metric is None else replace(cfg.distance, metric=args.metric)
    X, Y = read_samples(args.x), read_samples(args.y)
    if X.shape != Y.shape:
        raise InputError(f"sample sets differ in shape: {X.shape} vs {Y.shape}")
    value, net = compute_distance(X, Y, sec, cfg.run.seed)
    if args.save_net:
        if net is None:
            raise ConfigError("--save-net only applies to metric aswd")
        (path,) = Output(args.out, args.force).claim(["network.txt"])
        save_network(net, path)
    print(repr(float(value)))
    return EXIT_OK


def _write_records(out: Output, records, timing: bool) -> int:
    names = [flow.record_filename(r) for r in records] + ["summary.csv"]
    paths = out.claim(names)
    for rec, path in zip(records, paths):
        flow.write_record(rec, path, timing)
    flow.write_summary(flow.summarize(records), paths[-1])
    for rec in records:
        if rec.failed:
            log.warning("%s: %s", flow.record_filename(rec), rec.error)
    if all(r.failed for r in records):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_flow(args, cfg: Config) -> int:
    seed = cfg.run.seed
    rec = flow.flow_run(cfg.flow.flow_config(seed), cfg.flow.target_spec(seed))
    log.info("final W2 %.6g (initial %.6g)", rec.final, rec.initial)
    return _write_records(Output(args.out, args.force), [rec], args.timing)


def _matrix(args, cfg: Config, metrics) -> int:
    sec = cfg.matrix
    targets = [cfg.flow.target_spec(0, t) for t in sec.targets]
    records = flow.run_experiment_matrix(
        metrics, targets, sec.repeats, cfg.run.seed, cfg.flow.flow_config(cfg.run.seed), sec.workers
    )
    return _write_records(Output(args.out, args.force), records, args.timing)


def cmd_matrix(args, cfg: Config) -> int:
    return _matrix(args, cfg, cfg.matrix.metrics)


def cmd_ablation(args, cfg: Config) -> int:
    return _matrix(args, cfg, flow.ABLATION_METRICS)


def histogram_pair(sec: HistogramSection, seed: int):
    """SWD and trained-ASWD per-direction histograms for N(0, I) vs a shifted copy.

    Y is X translated by ``shift`` along a random unit vector, so a zero
    shift gives identical sample sets.
    """
    init_ss, shift_ss, train_ss, proj_ss = np.random.SeedSequence(seed).spawn(4)
    X = np.random.default_rng(init_ss).standard_normal((sec.n, sec.dim))
    direction = sample_unit_sphere(1, sec.dim, np.random.default_rng(shift_ss)).directions[0]
    Y = X + sec.shift * direction
    _, net = aswd(X, Y, sec.train_L, sec.k, sec.lam, sec.M, sec.lr, int(train_ss.generate_state(1)[0]))
    prng = np.random.default_rng(proj_ss)
    h_swd = projection_histogram(X, Y, None, sample_unit_sphere(sec.L, sec.dim, prng), sec.k, sec.bins)
    h_aswd = projection_histogram(
        X, Y, net.numpy, sample_unit_sphere(sec.L, net.output_dim, prng), sec.k, sec.bins
    )
    return h_swd, h_aswd


def cmd_histogram(args, cfg: Config) -> int:
    h_swd, h_aswd = histogram_pair(cfg.histogram, cfg.run.seed)
    (path,) = Output(args.out, args.force).claim(["histogram.csv"])
    rows = []
    for name, h in (("swd", h_swd), ("aswd", h_aswd)):
        for i, c in enumerate(h.counts):
            rows.append([name, i, repr(float(h.edges[i])), repr(float(h.edges[i + 1])), int(c)])
        log.info("%s: mean per-direction distance %.6g", name, h.mean)
    _write_rows(path, ["projector", "bin", "left", "right", "count"], rows)
    return EXIT_OK


def bench_table(sec: BenchSection, seed: int, clock=time.perf_counter) -> list[list]:
    rng = np.random.default_rng(seed)
    rows = []
    for metric in sec.metrics:
        for n in sec.n:
            X = rng.standard_normal((n, sec.d))
            Y = rng.standard_normal((n, sec.d)) + 1.0
            for L in sec.L:
                dsec = DistanceSection(metric=metric, L=L)
                times = []
                for r in range(sec.repeats):
                    t0 = clock()
                    compute_distance(X, Y, dsec, seed + r)
                    times.append(clock() - t0)
                rows.append([metric, n, L, sec.d, median(times)])
    return rows


def cmd_bench(args, cfg: Config) -> int:
    (path,) = Output(args.out, args.force).claim(["bench.csv"])
    rows = bench_table(cfg.bench, cfg.run.seed)
    _write_rows(path, ["metric", "N", "L", "d", "seconds"], [r[:4] + [repr(r[4])] for r in rows])
    return EXIT_OK


COMMANDS = {
    "distance": cmd_distance,
    "flow": cmd_flow,
    "matrix": cmd_matrix,
    "ablation": cmd_ablation,
    "histogram": cmd_histogram,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="section.key = value file")
    common.add_argument("--out", type=Path, default=Path("aswd-out"), help="output directory")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aswd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    d = sub.add_parser("distance", parents=[common], help="distance between two sample files")
    d.add_argument("x", type=Path)
    d.add_argument("y", type=Path)
    d.add_argument("--metric", choices=DISTANCE_METRICS)
    d.add_argument("--save-net", action="store_true", help="write the trained ASWD network")
    for name in ("flow", "matrix", "ablation"):
        p = sub.add_parser(name, parents=[common], help=f"{name} run(s), one CSV per record")
        p.add_argument("--timing", action="store_true", help="record wall-clock seconds instead of 0")
    sub.add_parser("histogram", parents=[common], help="per-direction distance histograms")
    sub.add_parser("bench", parents=[common], help="median-of-repeats timing table")
    sub.add_parser("defaults", help="print the default configuration")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    if args.command == "defaults":
        sys.stdout.write(emit_config(Config()))
        return EXIT_OK
    try:
        cfg = parse_config(args.config) if args.config else Config()
        if args.seed is not None:
            cfg = replace(cfg, run=RunSection(args.seed))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, ContractError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OutputExists as exc:
        print(f"refusing to overwrite: {exc}", file=sys.stderr)
        return EXIT_EXISTS


if __name__ == "__main__":
    sys.exit(main())
