"""Experiment orchestration: train -> prune -> finetune -> eval -> time -> report."""

from __future__ import annotations

import csv
import hashlib
import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import accumulate_movement, apply_weight_masks, magnitude_prune, WeightMaskSet, _prune_lowest
from .bench import methodology, single_thread, time_interleaved
from .data import make_splits, read_csv
from .errors import ConfigError
from .io import load, save
from .nn import (
    Batch,
    FreezeSpec,
    MaskSet,
    Network,
    TrainConfig,
    accuracy,
    count_flops,
    forward,
    init_network,
    squeeze,
    train,
)
from .pruner import (
    IterativePlan,
    iterative_prune,
    layerwise_prune,
    make_schedule,
    resolve_counts,
    retrain_pruned,
)
from .selector import SelectorConfig
from .stats import DEFAULT_SAMPLE_CAP, collect

METHODS = ("mi", "magnitude", "movement", "random")


def _train_cfg(d, **override) -> TrainConfig:
    d = {**(d or {}), **override}
    try:
        return TrainConfig(**d)
    except TypeError as exc:
        raise ConfigError(f"bad training config: {exc}") from exc


@dataclass
class ExperimentConfig:
    task: dict = field(default_factory=lambda: {"generator": "planted-subspace(4,32)"})
    n_train: int = 2000
    n_dev: int = 500
    n_test: int = 1000
    hidden: list = field(default_factory=lambda: [64, 64])
    activation: str = "relu"
    train: dict = field(default_factory=lambda: {"steps": 1500, "lr": 3e-3, "batch_size": 64})
    finetune: dict = field(default_factory=lambda: {"steps": 300, "lr": 1e-3, "batch_size": 64})
    methods: list = field(default_factory=lambda: list(METHODS))
    keep_ratios: list = field(default_factory=lambda: [1.0, 0.5, 0.3])
    schedule: str = "uniform"
    spread: float = 0.1
    selector: dict = field(default_factory=dict)
    iterations: int = 1
    movement_steps: int = 300
    sample_cap: int = DEFAULT_SAMPLE_CAP
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    timing: dict = field(default_factory=lambda: {"trials": 30, "warmups": 5})
    out_dir: str = "runs/default"

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        import yaml

        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data or {})

    def validate(self):
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}; expected {METHODS}")
        for k in self.keep_ratios:
            if not 0.0 < float(k) <= 1.0:
                raise ConfigError(f"keep ratio {k} outside (0, 1]")
        if self.schedule not in ("uniform", "pyramid", "inverted_pyramid", "inverted"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if "generator" not in self.task and "csv" not in self.task:
            raise ConfigError("task needs either 'generator' or 'csv'")
        try:
            SelectorConfig(**self.selector)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad selector config: {exc}") from exc
        _train_cfg(self.train)
        _train_cfg(self.finetune)
        if self.timing.get("trials", 30) < 30 or self.timing.get("warmups", 5) < 5:
            raise ConfigError("timing needs >= 30 trials and >= 5 warmups")

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_task_data(cfg: ExperimentConfig, seed: int):
    """``(splits, metadata)`` for one seed."""
    if "csv" in cfg.task:
        root = Path(cfg.task["csv"])
        splits = {name: read_csv(root / f"{name}.csv") for name in ("train", "dev", "test")}
        return splits, {"csv": str(root)}
    task, splits = make_splits(cfg.task["generator"], seed, cfg.n_train, cfg.n_dev, cfg.n_test)
    return splits, task.metadata()


def n_classes(splits) -> int:
    return int(max(s.labels.max() for s in splits.values())) + 1


def train_base(cfg: ExperimentConfig, splits, seed: int) -> Network:
    widths = [splits["train"].inputs.shape[1], *cfg.hidden, n_classes(splits)]
    net = init_network(widths, cfg.activation, seed=seed)
    return train(net, splits["train"], _train_cfg(cfg.train, seed=seed)).net


def _narrow(net: Network, x):
    if net.input_index is not None and x.shape[1] != net.input_dim:
        return np.ascontiguousarray(x[:, net.input_index])
    return x


def _eval_times(base: Network, pruned: Network, x, trials, warmups):
    """``(dense, pruned)`` median forward times, measured round-robin."""
    xp = _narrow(pruned, x)
    with single_thread():
        return time_interleaved([lambda: forward(base, x), lambda: forward(pruned, xp)], trials, warmups)


def _sparse_flops(net: Network, weight_masks: WeightMaskSet) -> int:
    total = 0
    for layer, m in zip(net.layers, weight_masks.masks):
        total += 2 * int(m.sum()) + 2 * layer.out_dim
    return total


def matched_weight_sparsity(net: Network, keep: float, cfg: ExperimentConfig) -> float:
    """Weight sparsity giving the same weight count as structured pruning at ``keep``."""
    schedule = make_schedule(cfg.schedule, keep, net.depth, cfg.spread)
    counts = resolve_counts(net, schedule) + [net.output_dim]
    kept = sum(counts[l] * counts[l + 1] for l in range(len(net.layers)))
    return 1.0 - kept / net.n_weights()


def _finetune_masked(net, weight_masks, data, cfg, seed):
    """Finetune with pruned weights pinned at zero."""
    net = apply_weight_masks(net, weight_masks)
    freeze = FreezeSpec([~m for m in weight_masks.masks], [np.zeros(l.bias.shape, bool) for l in net.layers])
    return train(net, data, _train_cfg(cfg.finetune, seed=seed), freeze=freeze).net


def prune_variant(method, base: Network, splits, keep, cfg: ExperimentConfig, seed, schedule=None, iterations=None):
    """Prune + finetune one variant; returns ``(network, weight_masks_or_None, extras)``."""
    train_data = splits["train"]
    iterations = iterations or cfg.iterations
    if method in ("mi", "random"):
        plan = IterativePlan(keep, iterations, _train_cfg(cfg.finetune, seed=seed))
        result = iterative_prune(
            base, train_data, plan, schedule or cfg.schedule, SelectorConfig(**cfg.selector),
            sample_cap=cfg.sample_cap, spread=cfg.spread, method=method, seed=seed,
        )
        extras = {"counts": result.history[-1].counts}
        if method == "mi":
            extras.update(stats_split="train", stats_samples=min(cfg.sample_cap, len(train_data)))
        return result.net, None, extras
    sparsity = matched_weight_sparsity(base, keep, cfg)
    if sparsity <= 0:
        return base, None, {"weight_sparsity": 0.0}
    if method == "magnitude":
        wm = magnitude_prune(base, sparsity)
        start = base
    else:
        mov, start = accumulate_movement(base, train_data, cfg.movement_steps, _train_cfg(cfg.finetune, seed=seed))
        wm = WeightMaskSet(_prune_lowest(mov.scores, sparsity, "global"), sparsity, mov.scores)
    net = _finetune_masked(start, wm, train_data, cfg, seed)
    return net, wm, {"weight_sparsity": wm.achieved_sparsity}


def _row(method, keep, seed, net, wm, base, base_acc, acc, t_dense, t_pruned, cfg, extras):
    if wm is None:
        flops, params, kernel = count_flops(net), net.n_params(), "squeezed"
    else:
        flops = _sparse_flops(net, wm)
        params = wm.n_kept + sum(l.bias.size for l in net.layers)
        kernel = "masked"
    return {
        "status": "ok",
        "method": method,
        "keep": keep,
        "seed": seed,
        "accuracy": acc,
        "base_accuracy": base_acc,
        "flops": flops,
        "flops_ratio": flops / count_flops(base),
        "params": params,
        "params_ratio": params / base.n_params(),
        "time_dense_s": t_dense,
        "time_pruned_s": t_pruned,
        "speedup": t_dense / t_pruned if t_pruned else None,
        "kernel": kernel,
        **extras,
        "config_hash": cfg.hash(),
        "code_version": __version__,
        "methodology": methodology(cfg.timing.get("trials", 30), cfg.timing.get("warmups", 5)),
    }


def _seed_model(cfg, splits, seed, out: Path):
    """Train or reload the base model for ``seed``."""
    path = out / f"seed{seed}" / "model.mipr"
    tag = path.with_suffix(".hash")
    if path.exists() and tag.exists() and tag.read_text() == cfg.hash():
        return load(path)[0]
    net = train_base(cfg, splits, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    save(net, path)
    tag.write_text(cfg.hash())
    return net


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    """Run every (method, keep, seed) cell and write ``report.jsonl`` + ``summary.csv``.

    Finished cells are cached under ``<out>/seed*/cells`` and reused when the
    config hash matches. Failing cells become rows with ``status: error``.
    """
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    trials = cfg.timing.get("trials", 30)
    warmups = cfg.timing.get("warmups", 5)
    rows = []
    for seed in cfg.seeds:
        stage = "data"
        try:
            splits, _ = load_task_data(cfg, seed)
            stage = "train"
            base = _seed_model(cfg, splits, seed, out)
        except Exception as exc:  # noqa: BLE001 - recorded in the report
            rows.extend(
                {"status": "error", "stage": stage, "method": m, "keep": k, "seed": seed,
                 "error": repr(exc), "config_hash": cfg.hash(), "code_version": __version__}
                for m in cfg.methods for k in cfg.keep_ratios
            )
            continue
        test = splits["test"]
        base_acc = accuracy(base, test)
        for method in cfg.methods:
            for keep in cfg.keep_ratios:
                cell = out / f"seed{seed}" / "cells" / f"{method}_{keep}.json"
                if cell.exists():
                    cached = json.loads(cell.read_text())
                    if cached.get("config_hash") == cfg.hash() and cached.get("status") == "ok":
                        rows.append(cached)
                        continue
                stage = "prune"
                try:
                    net, wm, extras = prune_variant(method, base, splits, float(keep), cfg, seed)
                    stage = "eval"
                    if wm is None:
                        acc = accuracy(net, test)
                        evaluated = net
                    else:
                        evaluated = apply_weight_masks(net, wm)
                        acc = accuracy(evaluated, test)
                    stage = "bench"
                    t_dense, t_pruned = _eval_times(base, evaluated, test.inputs, trials, warmups)
                    row = _row(method, float(keep), seed, net, wm, base, base_acc, acc,
                               t_dense, t_pruned, cfg, extras)
                except Exception as exc:  # noqa: BLE001
                    row = {"status": "error", "stage": stage, "method": method, "keep": keep,
                           "seed": seed, "error": repr(exc), "config_hash": cfg.hash(),
                           "code_version": __version__}
                cell.parent.mkdir(parents=True, exist_ok=True)
                cell.write_text(json.dumps(row, sort_keys=True))
                rows.append(row)
    write_report(rows, out)
    return rows


def _dumps(row) -> str:
    return json.dumps(row, sort_keys=True, default=float, allow_nan=True)


def write_report(rows, out_dir) -> None:
    out = Path(out_dir)
    with open(out / "report.jsonl", "w", encoding="utf-8") as f:
        for row in rows:
            f.write(_dumps(row) + "\n")
    write_summary(summarize(rows), out / "summary.csv")


def read_report(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def summarize(rows) -> list[dict]:
    groups: dict = {}
    for row in rows:
        if row.get("status") != "ok":
            continue
        groups.setdefault((row["method"], row["keep"]), []).append(row)
    out = []
    for (method, keep), group in sorted(groups.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
        accs = [r["accuracy"] for r in group]
        speedups = [r["speedup"] for r in group if r.get("speedup")]
        out.append({
            "method": method,
            "keep": keep,
            "n_seeds": len(group),
            "mean_accuracy": statistics.fmean(accs),
            "std_accuracy": statistics.pstdev(accs),
            "mean_flops_ratio": statistics.fmean(r["flops_ratio"] for r in group),
            "mean_params_ratio": statistics.fmean(r["params_ratio"] for r in group),
            "median_speedup": statistics.median(speedups) if speedups else "",
            "seed_accuracies": ";".join(f"{r['seed']}:{r['accuracy']:.4f}" for r in group),
            "config_hash": group[0]["config_hash"],
        })
    return out


def write_summary(summary_rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        if not summary_rows:
            f.write("")
            return
        fields = list(dict.fromkeys(k for r in summary_rows for k in r))
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for r in summary_rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# Qualitative claims checked across seeds -------------------------------------------------


@dataclass
class ClaimOutcome:
    name: str
    variant_a: str
    variant_b: str
    seeds: list
    acc_a: list
    acc_b: list

    @property
    def wins(self) -> int:
        return sum(a >= b for a, b in zip(self.acc_a, self.acc_b))

    @property
    def n(self) -> int:
        return len(self.seeds)

    def passed(self, required=4) -> bool:
        return self.wins >= required

    def rows(self) -> list[dict]:
        out = [
            {"claim": self.name, "seed": s, "variant_a": self.variant_a, "accuracy_a": a,
             "variant_b": self.variant_b, "accuracy_b": b, "a_ge_b": a >= b}
            for s, a, b in zip(self.seeds, self.acc_a, self.acc_b)
        ]
        out.append({"claim": self.name, "seed": "mean", "variant_a": self.variant_a,
                    "accuracy_a": statistics.fmean(self.acc_a), "variant_b": self.variant_b,
                    "accuracy_b": statistics.fmean(self.acc_b), "a_ge_b": f"{self.wins}/{self.n}"})
        return out


def benchmark_config(**overrides) -> ExperimentConfig:
    """The synthetic task used for the direction checks."""
    base = dict(
        task={"generator": "planted-subspace(relevant_dims=4, total_dims=48, classes=8, label_noise=0.05)"},
        n_train=3000,
        n_test=2000,
        hidden=[64, 64, 64],
        train={"steps": 2000, "lr": 3e-3, "batch_size": 64},
        finetune={"steps": 400, "lr": 1e-3, "batch_size": 64},
        seeds=[0, 1, 2, 3, 4],
        sample_cap=20_000,
    )
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


def _mi_accuracy(base, splits, keep, cfg, seed, schedule=None, iterations=1):
    net, _, _ = prune_variant("mi", base, splits, keep, cfg, seed, schedule, iterations)
    return accuracy(net, splits["test"])


def direction_checks(cfg: ExperimentConfig | None = None, claims=("a", "b", "c", "d")) -> list[ClaimOutcome]:
    """Seed-level comparisons mirroring the qualitative claims of the method.

    a: MI vs random dimension pruning at keep 0.3
    b: two-iteration vs one-shot MI pruning at keep 0.25
    c: retraining pruned dims vs the pruned model before retraining, 60% pruned
    d: inverted pyramid vs pyramid schedule at overall keep 0.2
    """
    cfg = cfg or benchmark_config()
    acc = {c: ([], []) for c in claims}
    for seed in cfg.seeds:
        splits, _ = load_task_data(cfg, seed)
        base = train_base(cfg, splits, seed)
        test = splits["test"]
        if "a" in claims:
            acc["a"][0].append(_mi_accuracy(base, splits, 0.3, cfg, seed))
            net, _, _ = prune_variant("random", base, splits, 0.3, cfg, seed)
            acc["a"][1].append(accuracy(net, test))
        if "b" in claims:
            acc["b"][0].append(_mi_accuracy(base, splits, 0.25, cfg, seed, iterations=2))
            acc["b"][1].append(_mi_accuracy(base, splits, 0.25, cfg, seed, iterations=1))
        if "c" in claims:
            schedule = make_schedule("uniform", 0.4, base.depth)
            stats = collect(base, splits["train"], sample_cap=cfg.sample_cap, seed=seed)
            masks = layerwise_prune(base, stats, schedule, SelectorConfig(**cfg.selector))
            acc["c"][1].append(accuracy(base, test, masks))
            retrained = retrain_pruned(base, masks, splits["train"], _train_cfg(cfg.finetune, seed=seed), seed)
            acc["c"][0].append(accuracy(retrained, test))
        if "d" in claims:
            acc["d"][0].append(_mi_accuracy(base, splits, 0.2, cfg, seed, schedule="inverted_pyramid"))
            acc["d"][1].append(_mi_accuracy(base, splits, 0.2, cfg, seed, schedule="pyramid"))
    names = {
        "a": ("mi_vs_random_keep0.3", "mi", "random"),
        "b": ("iter2_vs_iter1_keep0.25", "mi_2iter", "mi_1iter"),
        "c": ("retrain_vs_pruned_60pct", "retrained", "pruned"),
        "d": ("inverted_vs_pyramid_keep0.2", "inverted_pyramid", "pyramid"),
    }
    return [ClaimOutcome(*names[c], list(cfg.seeds), *acc[c]) for c in claims]


def write_claims_csv(outcomes, path) -> None:
    rows = [r for o in outcomes for r in o.rows()]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
