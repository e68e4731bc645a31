"""Sliced Wasserstein flows on synthetic 2-D targets.

A cloud of particles drawn from N(0, I) is moved by Adam steps on a sliced
distance to a fixed target sample; after each step the exact 2-Wasserstein
distance to the target is recorded.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import median

import numpy as np

from . import autodiff as ad
from .augmentation import AugmentationNetwork, aswd_fixed, optimize_network
from .errors import ConfigError, ContractError, NumericError
from .exact_ot import exact_wasserstein
from .metrics import (
    DefiningFunction,
    ProjectionNet,
    ProjectionSet,
    gswd,
    gswd_nn,
    max_swd_direction,
    sample_unit_sphere,
    swd,
)

log = logging.getLogger(__name__)

TARGET_NAMES = ("eight-gaussian", "twentyfive-gaussian", "swiss-roll", "moon", "knot")
DEFAULT_NOISE = {
    "eight-gaussian": 0.2,
    "twentyfive-gaussian": 0.2,
    "swiss-roll": 0.1,
    "moon": 0.1,
    "knot": 0.05,
}

# metric id -> (augmentation mode, trains the network)
ASWD_VARIANTS = {
    "aswd": ("injective", True),
    "aswd-vanilla": ("injective", False),
    "aswd-non-injective": ("raw", True),
    "aswd-vanilla-non-injective": ("raw", False),
    "aswd-identity": ("identity", False),
}
METRICS = ("swd", "gswd-poly3", "gswd-circular", "gswd-nn", "max-swd") + tuple(ASWD_VARIANTS)
ABLATION_METRICS = ("aswd", "aswd-vanilla", "aswd-non-injective", "aswd-vanilla-non-injective")


@dataclass(frozen=True)
class TargetSpec:
    name: str
    noise: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.name not in TARGET_NAMES:
            raise ConfigError(f"unknown target {self.name!r}; expected one of {TARGET_NAMES}")
        if self.noise is not None and self.noise < 0:
            raise ConfigError(f"noise scale must be >= 0, got {self.noise}")

    @property
    def noise_scale(self) -> float:
        return DEFAULT_NOISE[self.name] if self.noise is None else self.noise


def eight_gaussian_means() -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8
    return 4.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def twentyfive_gaussian_means() -> np.ndarray:
    grid = np.array([-4.0, -2.0, 0.0, 2.0, 4.0])
    gx, gy = np.meshgrid(grid, grid, indexing="ij")
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)


def sample_target(spec: TargetSpec, n: int) -> np.ndarray:
    """Draw ``n`` points from the named 2-D target; deterministic in ``spec.seed``."""
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(spec.seed)
    s = spec.noise_scale
    if spec.name in ("eight-gaussian", "twentyfive-gaussian"):
        means = eight_gaussian_means() if spec.name == "eight-gaussian" else twentyfive_gaussian_means()
        idx = rng.integers(0, len(means), n)
        return means[idx] + s * rng.standard_normal((n, 2))
    if spec.name == "swiss-roll":
        t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, n)
        pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / 2.0
    elif spec.name == "moon":
        t = rng.uniform(0.0, np.pi, n)
        upper = rng.random(n) < 0.5
        pts = np.where(
            upper[:, None],
            np.stack([2.0 * np.cos(t), 2.0 * np.sin(t)], axis=1),
            np.stack([2.0 - 2.0 * np.cos(t), 1.0 - 2.0 * np.sin(t)], axis=1),
        )
    else:  # knot
        t = rng.uniform(0.0, 2.0 * np.pi, n)
        pts = np.stack([np.sin(t) + 2 * np.sin(2 * t), np.cos(t) - 2 * np.cos(2 * t)], axis=1) / 1.5
    return pts + s * rng.standard_normal((n, 2))


@dataclass(frozen=True)
class FlowConfig:
    metric: str = "swd"
    n: int = 500
    L: int = 10
    k: float = 2.0
    lr: float = 0.002
    iterations: int = 500
    lam: float = 0.1
    M: int = 10
    inner_lr: float | None = None
    seed: int = 0
    eval_every: int = 1
    poly_degree: int = 3
    circular_radius: float = 1.0
    max_steps: int = 10
    max_lr: float = 0.01

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        for name in ("n", "L", "M", "iterations", "eval_every", "max_steps"):
            v = getattr(self, name)
            lower = 0 if name in ("M", "iterations", "max_steps") else 1
            if v < lower:
                raise ConfigError(f"{name} must be >= {lower}, got {v}")
        for name in ("lr", "max_lr", "circular_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.inner_lr is not None and not self.inner_lr > 0:
            raise ConfigError("inner_lr must be positive")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")

    @property
    def network_lr(self) -> float:
        return self.lr if self.inner_lr is None else self.inner_lr


@dataclass
class FlowRunRecord:
    config: FlowConfig
    target: TargetSpec
    iterations: list = field(default_factory=list)
    w2: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    failed: bool = False
    error: str = ""

    @property
    def initial(self) -> float:
        return self.w2[0]

    @property
    def final(self) -> float:
        return self.w2[-1]


class _Loss:
    """Per-run state of one distance: builds the loss for the current particles."""

    def __init__(self, cfg: FlowConfig, Y: np.ndarray, seeds):
        self.cfg = cfg
        self.Y = Y
        proj_ss, inner_ss, net_ss = seeds
        self.proj_rng = np.random.default_rng(proj_ss)
        self.inner_rng = np.random.default_rng(inner_ss)
        net_rng = np.random.default_rng(net_ss)
        m = cfg.metric
        self.fn = None
        self.net = None
        if m == "gswd-poly3":
            self.fn = DefiningFunction("polynomial", degree=cfg.poly_degree, dim=2)
        elif m == "gswd-circular":
            self.fn = DefiningFunction("circular", radius=cfg.circular_radius)
        elif m == "gswd-nn":
            self.proj_net = ProjectionNet.random(2, cfg.L, net_rng)
        elif m == "max-swd":
            self.theta = None
        elif m in ASWD_VARIANTS:
            mode, self.train = ASWD_VARIANTS[m]
            if mode == "identity":
                self.net = AugmentationNetwork.identity(2, cfg.lam)
            else:
                self.net = AugmentationNetwork.random(2, net_rng, mode, cfg.lam)
            self.opt = ad.Adam(self.net.parameters(), lr=cfg.network_lr) if self.train else None

    def __call__(self, Xv: ad.Var, X: np.ndarray):
        cfg, Y, m = self.cfg, self.Y, self.cfg.metric
        if m == "swd":
            return swd(Xv, Y, sample_unit_sphere(cfg.L, 2, self.proj_rng), cfg.k)
        if self.fn is not None:
            proj = sample_unit_sphere(cfg.L, self.fn.projection_dim(2), self.proj_rng)
            return gswd(Xv, Y, self.fn, proj, cfg.k)
        if m == "gswd-nn":
            return gswd_nn(Xv, Y, self.proj_net, cfg.k)
        if m == "max-swd":
            start = self.theta
            if start is None:
                start = sample_unit_sphere(1, 2, self.proj_rng).directions[0]
            res = max_swd_direction(X, Y, cfg.k, cfg.max_steps, cfg.max_lr, start=start)
            self.theta = res.direction
            return swd(Xv, Y, ProjectionSet(self.theta[None, :]), cfg.k)
        if self.train and cfg.M > 0:
            optimize_network(
                self.net, X, Y, cfg.L, self.inner_rng, cfg.k, cfg.M, cfg.network_lr, self.opt
            )
        proj = sample_unit_sphere(cfg.L, self.net.output_dim, self.proj_rng)
        return aswd_fixed(Xv, Y, self.net, proj, cfg.k)


def flow_run(config: FlowConfig, target: TargetSpec) -> FlowRunRecord:
    """Evolve N(0, I) particles toward ``target`` for ``config.iterations`` Adam steps.

    Exact W2 is recorded at iteration 0, every ``eval_every`` steps and at
    the last step. A numeric failure truncates the record and sets ``failed``.
    """
    cfg = config
    particle_ss, proj_ss, inner_ss, net_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    X = ad.Parameter(np.random.default_rng(particle_ss).standard_normal((cfg.n, 2)))
    Y = sample_target(target, cfg.n)
    rec = FlowRunRecord(cfg, target)
    start = time.perf_counter()

    def evaluate(it):
        try:
            w2 = exact_wasserstein(X.value, Y, 2)
        except ContractError as exc:
            raise NumericError(f"exact W2 evaluation failed: {exc}") from exc
        rec.iterations.append(it)
        rec.w2.append(w2)
        rec.seconds.append(time.perf_counter() - start)

    evaluate(0)
    loss_fn = _Loss(cfg, Y, (proj_ss, inner_ss, net_ss))
    opt = ad.AdamState.for_param(X, lr=cfg.lr)
    for it in range(1, cfg.iterations + 1):
        try:
            tape = ad.Tape()
            loss = loss_fn(tape.watch(X), X.value)
            ad.backward(loss)
            ad.adam_step(X, opt)
            if not np.all(np.isfinite(X.value)):
                raise NumericError("particle positions became non-finite")
            if it % cfg.eval_every == 0 or it == cfg.iterations:
                evaluate(it)
        except NumericError as exc:
            rec.failed = True
            rec.error = f"iteration {it}: {exc}"
            log.warning("flow %s/%s seed %d aborted: %s", cfg.metric, target.name, cfg.seed, rec.error)
            break
    return rec


def run_experiment_matrix(
    metrics,
    targets,
    repeats: int,
    base_seed: int = 0,
    config: FlowConfig | None = None,
    workers: int = 1,
) -> list[FlowRunRecord]:
    """Run every (metric, target, repeat) cell.

    Repeat ``r`` uses seed ``base_seed + r`` for both the particles and the
    target sample, so cells that differ only in metric start from identical
    particles. A failing cell yields a record flagged ``failed``.
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    base = config or FlowConfig()
    jobs = []
    for metric in metrics:
        for t in targets:
            for r in range(repeats):
                seed = base_seed + r
                spec = TargetSpec(t, seed=seed) if isinstance(t, str) else replace(t, seed=seed)
                jobs.append((replace(base, metric=metric, seed=seed), spec))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_safe_run, jobs))
    return [_safe_run(job) for job in jobs]


def _safe_run(job) -> FlowRunRecord:
    cfg, spec = job
    try:
        return flow_run(cfg, spec)
    except Exception as exc:  # one bad cell must not sink the matrix
        log.error("cell %s/%s seed %d failed: %s", cfg.metric, spec.name, cfg.seed, exc)
        return FlowRunRecord(cfg, spec, failed=True, error=repr(exc))


def summarize(records) -> list[dict]:
    """Median final W2 per (metric, target), over records that produced one."""
    cells: dict[tuple, list] = {}
    for r in records:
        cells.setdefault((r.config.metric, r.target.name), [])
        if r.w2:
            cells[(r.config.metric, r.target.name)].append(r)
    rows = []
    for (metric, target), recs in cells.items():
        rows.append(
            {
                "metric": metric,
                "target": target,
                "median_final_w2": median(r.final for r in recs) if recs else float("nan"),
                "seeds": len(recs),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# CSV persistence

RECORD_HEADER = ["iteration", "w2", "seconds"]
SUMMARY_HEADER = ["metric", "target", "median_final_w2", "seeds"]


def record_filename(rec: FlowRunRecord) -> str:
    return f"{rec.config.metric}_{rec.target.name}_{rec.config.seed}.csv"


def record_to_csv(rec: FlowRunRecord, timing: bool = True) -> str:
    """CSV text of a record.

    The first line is ``#`` followed by the JSON config; with ``timing=False``
    the seconds column is written as 0 so reruns are byte-identical.
    """
    meta = {
        "config": asdict(rec.config),
        "target": asdict(rec.target),
        "failed": rec.failed,
        "error": rec.error,
    }
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for it, v, s in zip(rec.iterations, rec.w2, rec.seconds):
        w.writerow([it, repr(float(v)), repr(float(s)) if timing else "0.0"])
    return buf.getvalue()


def write_record(rec: FlowRunRecord, path, timing: bool = True) -> Path:
    path = Path(path)
    path.write_text(record_to_csv(rec, timing))
    return path


def read_record(path) -> FlowRunRecord:
    text = Path(path).read_text()
    first, _, body = text.partition("\n")
    if not first.startswith("# "):
        raise ConfigError(f"{path}: missing record metadata line")
    meta = json.loads(first[2:])
    cfg_fields = {f.name for f in fields(FlowConfig)}
    cfg = FlowConfig(**{k: v for k, v in meta["config"].items() if k in cfg_fields})
    target = TargetSpec(**meta["target"])
    rows = list(csv.reader(io.StringIO(body)))
    if not rows or rows[0] != RECORD_HEADER:
        raise ConfigError(f"{path}: expected header {','.join(RECORD_HEADER)}")
    rec = FlowRunRecord(cfg, target, failed=meta["failed"], error=meta["error"])
    for row in rows[1:]:
        rec.iterations.append(int(row[0]))
        rec.w2.append(float(row[1]))
        rec.seconds.append(float(row[2]))
    return rec


def write_summary(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r["metric"], r["target"], repr(float(r["median_final_w2"])), r["seeds"]])
    return path
