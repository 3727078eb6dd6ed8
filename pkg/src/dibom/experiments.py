"""Experiment runners behind the command line.

Each runner takes a validated ``ExperimentConfig`` and returns the CSV
texts it produced plus a JSON-ready summary. Nothing here touches the
filesystem, so runs are easy to compare byte for byte.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from dibom.config import ExperimentConfig
from dibom.datagen import CorruptionConfig, IntrinsicSpec, corrupt, dumps_dataset, gen_dataset, split
from dibom.expressivity import UNIVERSAL_3Q_LAYERS, FBEConfig, fbe_upper_bound
from dibom.network import ModelKind, build_model, count_parameters, trainable_teleport_model
from dibom.training import (
    TrainingConfig,
    global_loss,
    iterations_to,
    longest_plateau,
    model_params,
    model_with_params,
    train,
)


@dataclass
class RunOutput:
    files: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


class ConfigError(ValueError):
    """A config passed schema validation but is inconsistent with the experiment."""


def _map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    # results keep input order, so output bytes do not depend on scheduling
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def csv_text(header: Iterable[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def training_config(cfg: ExperimentConfig, seed: int, **overrides) -> TrainingConfig:
    params = cfg.training.model_dump()
    params.update(overrides)
    return TrainingConfig(seed=seed, **params)


def make_data(cfg: ExperimentConfig, seed: int, **overrides):
    """Train/test split of the configured dataset for run ``seed``."""
    d = cfg.dataset.model_copy(update=overrides)
    spec = IntrinsicSpec(d.intrinsic, d.L)
    n = 1 if d.intrinsic == "teleportation" else cfg.model.n
    data_seed = seed + d.seed_offset
    ds = gen_dataset(spec, n, d.N, data_seed, product_inputs=d.product_inputs)
    return split(ds, d.train_fraction, data_seed)


def _digest(ds) -> str:
    return hashlib.sha256(dumps_dataset(ds).encode()).hexdigest()


def _model(cfg: ExperimentConfig, seed: int, kind: str | None = None, n: int | None = None, L: int | None = None):
    m = cfg.model
    return build_model(kind or m.kind, n or m.n, m.L if L is None else L, rng=seed, connectivity=m.connectivity, n_hidden=m.n_hidden)


def _trace_summary(trace) -> dict:
    return {
        "final_train_loss": trace.final_loss,
        "final_test_loss": float(trace.test_losses[-1]),
        "iterations": trace.records[-1].iter,
    }


# --------------------------------------------------------------- runners


def run_train(cfg: ExperimentConfig, timing: bool = False, threads: int = 1, **_) -> RunOutput:
    out = RunOutput()

    def one(seed):
        tr, te = make_data(cfg, seed)
        return train(_model(cfg, seed), tr, training_config(cfg, seed), test=te)

    for seed, trace in zip(cfg.seeds, _map(one, cfg.seeds, threads)):
        out.files[f"trace_seed{seed}.csv"] = trace.to_csv(timing)
        s = _trace_summary(trace)
        s["iterations_to_1e-3"] = iterations_to(trace.train_losses, 1e-3)
        out.summary[f"seed{seed}"] = s
    return out


def params_rows(kinds: Sequence[str], n_values: Sequence[int], L_values: Sequence[int], n_hidden: int = 0) -> list[tuple]:
    rows = []
    for kind in kinds:
        for n in n_values:
            for L in L_values:
                rows.append((kind, n, L, count_parameters(kind, n, L, n_hidden=n_hidden)))
    return rows


def run_compare(cfg: ExperimentConfig, timing: bool = False, threads: int = 1, **_) -> RunOutput:
    out = RunOutput()
    for seed in cfg.seeds:
        tr, te = make_data(cfg, seed)
        digest = _digest(tr)

        def one(kind, seed=seed, tr=tr, te=te):
            return train(_model(cfg, seed, kind), tr, training_config(cfg, seed), test=te)

        traces = _map(one, cfg.compare.kinds, threads)
        out.summary[f"seed{seed}"] = {"train_set_sha256": digest}
        for kind, trace in zip(cfg.compare.kinds, traces):
            out.files[f"trace_{kind}_seed{seed}.csv"] = trace.to_csv(timing)
            out.summary[f"seed{seed}"][kind] = _trace_summary(trace)
    rows = params_rows(cfg.compare.kinds, [cfg.model.n], cfg.compare.param_table_L, cfg.model.n_hidden)
    if cfg.model.n != 3:
        rows.append(("dibom", 3, UNIVERSAL_3Q_LAYERS, count_parameters(ModelKind.DIBOM, 3, UNIVERSAL_3Q_LAYERS)))
    out.files["params.csv"] = csv_text(["model", "n", "L", "params"], rows)
    return out


def run_params(cfg: ExperimentConfig, **_) -> RunOutput:
    p = cfg.params
    rows = params_rows(p.kinds, p.n_values, p.L_values, cfg.model.n_hidden)
    out = RunOutput()
    out.files["params.csv"] = csv_text(["model", "n", "L", "params"], rows)
    ratio_rows = []
    for n in p.n_values:
        for L in p.L_values:
            d = count_parameters(ModelKind.DIBOM, n, L)
            q = count_parameters(ModelKind.DISSIPATIVE, n, L, n_hidden=cfg.model.n_hidden)
            ratio_rows.append((n, L, d, q, d / q))
    out.files["ratio.csv"] = csv_text(["n", "L", "dibom", "dissipative", "ratio"], ratio_rows)
    out.summary["universal_3q_dibom"] = count_parameters(ModelKind.DIBOM, 3, UNIVERSAL_3Q_LAYERS)
    return out


def landscape_grid(model, dataset, coords: tuple[int, int], center: np.ndarray, span: float, points: int) -> list[tuple]:
    """Loss on a square grid over two coordinates, all others held at ``center``."""
    rows = []
    offsets = np.linspace(-span, span, points)
    for d1 in offsets:
        for d2 in offsets:
            theta = center.copy()
            theta[coords[0]] += d1
            theta[coords[1]] += d2
            rows.append((float(theta[coords[0]]), float(theta[coords[1]]), global_loss(model_with_params(model, theta), dataset)))
    return rows


def run_landscape(cfg: ExperimentConfig, timing: bool = False, **_) -> RunOutput:
    spec = cfg.landscape
    out = RunOutput()
    for seed in cfg.seeds:
        model = _model(cfg, seed)
        n_params = model_params(model).size
        if any(not 0 <= c < n_params for c in spec.coords) or spec.coords[0] == spec.coords[1]:
            raise ConfigError(f"landscape coordinates {spec.coords} invalid for a model with {n_params} parameters")
        tr, te = make_data(cfg, seed)
        trace = train(model, tr, training_config(cfg, seed, max_iters=spec.pretrain_iters))
        center = model_params(trace.model)
        rows = landscape_grid(trace.model, tr, spec.coords, center, spec.span, spec.points)
        out.files[f"landscape_seed{seed}.csv"] = csv_text(["p1", "p2", "loss"], rows)
        out.files[f"pretrain_seed{seed}.csv"] = trace.to_csv(timing)
        out.summary[f"seed{seed}"] = {
            "center": [float(center[spec.coords[0]]), float(center[spec.coords[1]])],
            "center_loss": trace.final_loss,
            "grid_min_loss": min(r[2] for r in rows),
        }
    return out


def run_barren(cfg: ExperimentConfig, timing: bool = False, threads: int = 1, **_) -> RunOutput:
    spec = cfg.barren
    out = RunOutput()
    jobs = [(n, kind, seed) for n in spec.n_values for kind in spec.loss_kinds for seed in cfg.seeds]

    def one(job):
        n, kind, seed = job
        d = cfg.dataset
        ds = gen_dataset(IntrinsicSpec(d.intrinsic, d.L), n, d.N, seed + d.seed_offset, product_inputs=True)
        tr, te = split(ds, d.train_fraction, seed + d.seed_offset)
        model = _model(cfg, seed, n=n)
        return train(model, tr, training_config(cfg, seed, loss=kind), test=te)

    rows = []
    for (n, kind, seed), trace in zip(jobs, _map(one, jobs, threads)):
        out.files[f"trace_n{n}_{kind}_seed{seed}.csv"] = trace.to_csv(timing)
        losses = trace.train_losses
        rows.append((n, kind, seed, trace.final_loss, iterations_to(losses, spec.threshold), longest_plateau(losses)))
    out.files["plateau.csv"] = csv_text(["n", "loss", "seed", "final_loss", "iters_to_threshold", "longest_plateau"], rows)
    out.summary["threshold"] = spec.threshold
    return out


def run_teleport(cfg: ExperimentConfig, timing: bool = False, threads: int = 1, **_) -> RunOutput:
    out = RunOutput()
    jobs = [(seed, control) for seed in cfg.seeds for control in (True, False)]

    def one(job):
        seed, control = job
        tr, te = make_data(cfg, seed, intrinsic="teleportation", L=None)
        model = trainable_teleport_model(cfg.teleport.L, seed, control)
        return model, train(model, tr, training_config(cfg, seed), test=te)

    rows = []
    for (seed, control), (model, trace) in zip(jobs, _map(one, jobs, threads)):
        tag = "control" if control else "nocontrol"
        out.files[f"trace_{tag}_seed{seed}.csv"] = trace.to_csv(timing)
        branch_params = sum(b.n_params for b in model.branches)
        rows.append((seed, tag, trace.final_loss, float(trace.test_losses[-1]), branch_params))
        out.summary[f"seed{seed}_{tag}"] = {**_trace_summary(trace), "branch_params": branch_params}
    out.files["summary.csv"] = csv_text(["seed", "variant", "final_train_loss", "final_test_loss", "branch_params"], rows)
    return out


def corrupted_test_loss(cfg: ExperimentConfig, seed: int, ratio: float, L: int | None = None) -> float:
    """Clean-test loss after training on a train split with ``ratio`` of pairs replaced."""
    tr, te = make_data(cfg, seed)
    tr = corrupt(tr, CorruptionConfig(ratio, seed))
    trace = train(_model(cfg, seed, L=L), tr, training_config(cfg, seed), test=te)
    return float(trace.test_losses[-1])


def run_corruption(cfg: ExperimentConfig, threads: int = 1, **_) -> RunOutput:
    spec = cfg.corruption
    out = RunOutput()
    jobs = [(r, s) for r in spec.ratios for s in cfg.seeds]
    losses = _map(lambda job: corrupted_test_loss(cfg, job[1], job[0]), jobs, threads)
    out.files["corruption.csv"] = csv_text(["ratio", "seed", "test_loss"], [(r, s, v) for (r, s), v in zip(jobs, losses)])
    means = []
    for r in spec.ratios:
        means.append((r, float(np.mean([v for (rr, _), v in zip(jobs, losses) if rr == r]))))
    out.files["corruption_mean.csv"] = csv_text(["ratio", "mean_test_loss"], means)
    layer_jobs = [(L, s) for L in spec.layer_sweep_L for s in cfg.seeds]
    layer_losses = _map(lambda job: corrupted_test_loss(cfg, job[1], spec.layer_sweep_ratio, job[0]), layer_jobs, threads)
    out.files["layers.csv"] = csv_text(["L", "seed", "test_loss"], [(L, s, v) for (L, s), v in zip(layer_jobs, layer_losses)])
    out.summary["mean_test_loss"] = {str(r): v for r, v in means}
    return out


def fbe_config(cfg: ExperimentConfig, seed: int, fast: bool) -> FBEConfig:
    f = cfg.fbe
    k, m = (20, 5) if fast else (f.k, f.m)
    return FBEConfig(k=k, m=m, restarts=f.restarts, inner_iters=f.inner_iters, seed=seed, optimizer=f.optimizer, step=f.step)


def run_fbe(cfg: ExperimentConfig, fast: bool = False, timing: bool = False, threads: int = 1, **_) -> RunOutput:
    spec = cfg.fbe
    out = RunOutput()
    for seed in cfg.seeds:
        fconf = fbe_config(cfg, seed, fast)
        jobs = [(arch, L) for arch in spec.architectures for L in spec.L_grid]
        results = _map(lambda job: fbe_upper_bound(job[0], spec.n, job[1], fconf), jobs, threads)
        by_arch: dict[str, list] = {}
        for (arch, L), res in zip(jobs, results):
            seconds = round(res.seconds, 3) if timing else None
            by_arch.setdefault(arch, []).append((L, res.n_params, res.estimate, seconds))
        for arch, rows in by_arch.items():
            out.files[f"fbe_{arch}_seed{seed}.csv"] = csv_text(["L", "params", "fbe", "seconds"], rows)
        if "dibom" in by_arch:
            front = [(r[0], r[1], _log(r[1]), r[2], False) for r in by_arch["dibom"]]
            if spec.n == 3:
                universal = count_parameters(ModelKind.DIBOM, 3, UNIVERSAL_3Q_LAYERS)
                front = [(0, 0, _log(0), 0.0, True)] + front + [(UNIVERSAL_3Q_LAYERS, universal, _log(universal), 1.0, True)]
            out.files[f"frontier_seed{seed}.csv"] = csv_text(["L", "params", "log_params", "fbe", "analytic"], front)
        out.summary[f"seed{seed}"] = {f"{arch}_L{L}": res.estimate for (arch, L), res in zip(jobs, results)}
    out.summary["profile"] = "fast (k=20, m=5)" if fast else f"full (k={spec.k}, m={spec.m})"
    out.summary["estimator"] = "upper bound: min over sampled unitaries of the maximized overlap score"
    return out


def _log(count: int) -> float:
    return math.log(count) if count > 0 else -math.inf


RUNNERS: dict[str, Callable[..., RunOutput]] = {
    "train": run_train,
    "compare": run_compare,
    "landscape": run_landscape,
    "barren": run_barren,
    "teleport": run_teleport,
    "corruption": run_corruption,
    "fbe": run_fbe,
    "params": run_params,
}


def run(cfg: ExperimentConfig, **options) -> RunOutput:
    return RUNNERS[cfg.experiment](cfg, **options)
