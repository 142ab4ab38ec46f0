"""``miprune`` command line.

Every subcommand reads an optional YAML ``--config`` (the same keys as
:class:`ExperimentConfig`) and lets the common flags override it. Exit codes:
0 on success, 2 for a bad config or arguments, 3 when a stage fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import magnitude_prune, masked_eval, movement_prune
from .bench import bench_kernels, single_thread, time_callable, write_timings_csv
from .data import gen_data, load_split
from .errors import ConfigError, ScheduleError
from .experiment import (
    ExperimentConfig,
    _train_cfg,
    direction_checks,
    matched_weight_sparsity,
    read_report,
    run_experiment,
    summarize,
    write_claims_csv,
    write_summary,
)
from .io import load, load_stats, save, save_stats
from .nn import FreezeSpec, MaskSet, accuracy, count_flops, forward, init_network, squeeze, train
from .pruner import (
    IterativePlan,
    iterative_prune,
    layerwise_prune,
    make_schedule,
    manifest,
    random_prune,
    retrain_pruned,
    single_shot_manifest,
    write_manifest,
)
from .selector import SelectorConfig
from .stats import collect

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _config(args) -> ExperimentConfig:
    """Load ``--config`` (if any) and fold the common flags into it."""
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seeds"] = [args.seed]
    if getattr(args, "method", None):
        d["methods"] = [args.method]
    if getattr(args, "keep", None) is not None:
        d["keep_ratios"] = [args.keep]
    if getattr(args, "iterations", None) is not None:
        d["iterations"] = args.iterations
    if getattr(args, "schedule", None):
        d["schedule"] = args.schedule
    sel = dict(d["selector"])
    if getattr(args, "alpha", None) is not None:
        sel["alpha"] = args.alpha
    if getattr(args, "beta", None) is not None:
        sel["beta"] = args.beta
    if getattr(args, "mode", None):
        sel["mode"] = args.mode
    d["selector"] = sel
    if args.out and "out_dir" in d and args.command == "report":
        d["out_dir"] = args.out
    return ExperimentConfig.from_dict(d)


def _seed(args, cfg):
    return args.seed if args.seed is not None else int(cfg.seeds[0])


def _emit(obj):
    print(json.dumps(obj, sort_keys=True, default=float))


def cmd_gen_data(args):
    cfg = _config(args)
    spec = args.spec or cfg.task.get("generator")
    if spec is None:
        raise ConfigError("gen-data needs --spec or a generator task in the config")
    try:
        paths = gen_data(spec, _seed(args, cfg), args.out, cfg.n_train, cfg.n_dev, cfg.n_test)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit({k: str(v) for k, v in paths.items()})


def cmd_train(args):
    cfg = _config(args)
    seed = _seed(args, cfg)
    data = load_split(args.data, "train")
    n_classes = int(data.labels.max()) + 1
    widths = [data.inputs.shape[1], *cfg.hidden, n_classes]
    net = init_network(widths, cfg.activation, seed=seed)
    result = train(net, data, _train_cfg(cfg.train, seed=seed))
    save(result.net, args.out)
    _emit({"model": args.out, "widths": widths, "final_loss": result.final_loss})


def cmd_collect_stats(args):
    cfg = _config(args)
    net = load(args.model)[0]
    stats = collect(net, load_split(args.data, "train"), sample_cap=cfg.sample_cap, seed=_seed(args, cfg))
    save_stats(stats, args.out)
    _emit({"stats": args.out, "pairs": len(stats), "samples": stats[0].n})


def _manifest_path(args):
    return args.manifest or str(Path(args.out).with_suffix(".json"))


def cmd_prune(args):
    cfg = _config(args)
    seed = _seed(args, cfg)
    method = cfg.methods[0]
    keep = float(cfg.keep_ratios[0]) if args.keep is not None or args.config else 0.5
    net = load(args.model)[0]
    sel_cfg = SelectorConfig(**cfg.selector)
    if method in ("magnitude", "movement"):
        sparsity = matched_weight_sparsity(net, keep, cfg)
        if method == "magnitude":
            wm = magnitude_prune(net, sparsity, args.scope)
        else:
            if not args.data:
                raise ConfigError("movement pruning needs --data")
            wm = movement_prune(net, load_split(args.data, "train"), sparsity, cfg.movement_steps,
                                _train_cfg(cfg.finetune, seed=seed), args.scope)
        save(net, args.out, weight_masks=wm)
        info = {"method": method, "keep": keep, "weight_sparsity": wm.achieved_sparsity}
        write_manifest(_manifest_path(args), info)
        _emit({"model": args.out, **info})
        return
    schedule = make_schedule(cfg.schedule, keep, net.depth, cfg.spread)
    if cfg.iterations > 1:
        if not args.data:
            raise ConfigError("iterative pruning retrains between rounds and needs --data")
        plan = IterativePlan(keep, cfg.iterations, _train_cfg(cfg.finetune, seed=seed))
        result = iterative_prune(net, load_split(args.data, "train"), plan, schedule, sel_cfg,
                                 sample_cap=cfg.sample_cap, method=method, seed=seed)
        pruned = result.net
        info = manifest(result.history, schedule, {"method": method, "keep": keep,
                                                   "preserved": [u.tolist() for u in result.masks.preserved]})
    else:
        if method == "random":
            masks = random_prune(net, schedule, seed)
        else:
            if args.stats:
                stats = load_stats(args.stats)
            elif args.data:
                stats = collect(net, load_split(args.data, "train"), sample_cap=cfg.sample_cap, seed=seed)
            else:
                raise ConfigError("mi pruning needs --stats or --data")
            masks = layerwise_prune(net, stats, schedule, sel_cfg)
        pruned = squeeze(net, masks)
        info = single_shot_manifest(masks, schedule, {"method": method, "keep": keep,
                                                      "selector": sel_cfg.__dict__})
    save(pruned, args.out)
    write_manifest(_manifest_path(args), info)
    _emit({"model": args.out, "manifest": _manifest_path(args), "widths": pruned.widths,
           "flops": count_flops(pruned)})


def cmd_retrain(args):
    """Finetune a pruned model, or (with ``--manifest``) retrain the pruned dims of the original."""
    cfg = _config(args)
    seed = _seed(args, cfg)
    net, _, weight_masks = load(args.model)
    data = load_split(args.data, "train")
    tcfg = _train_cfg(cfg.finetune, seed=seed)
    if args.manifest:
        info = json.loads(Path(args.manifest).read_text())
        if "preserved" not in info:
            raise ConfigError(f"{args.manifest} has no 'preserved' index lists")
        masks = MaskSet.from_indices(net.widths, info["preserved"])
        out = retrain_pruned(net, masks, data, tcfg, seed)
        save(out, args.out)
        _emit({"model": args.out, "mode": "pruned-dims"})
        return
    freeze = None
    if weight_masks is not None:
        freeze = FreezeSpec([~m for m in weight_masks.masks], [np.zeros(l.bias.shape, bool) for l in net.layers])
    result = train(net, data, tcfg, freeze=freeze)
    save(result.net, args.out, weight_masks=weight_masks)
    _emit({"model": args.out, "mode": "finetune", "final_loss": result.final_loss})


def cmd_eval(args):
    net, masks, weight_masks = load(args.model)
    data = load_split(args.data, args.split)
    if weight_masks is not None:
        res = masked_eval(net, weight_masks, data, args.trials, args.warmups)
        out = {"accuracy": res.accuracy, "median_seconds": res.median_seconds,
               "kept_weights": weight_masks.n_kept, "kernel": "masked"}
    else:
        acc = accuracy(net, data, masks)
        x = data.inputs
        if net.input_index is not None:
            x = np.ascontiguousarray(x[:, net.input_index])
        with single_thread():
            seconds = time_callable(lambda: forward(net, x, masks), args.trials, args.warmups)
        out = {"accuracy": acc, "median_seconds": seconds, "flops": count_flops(net),
               "params": net.n_params(), "kernel": "dense"}
    _emit({"model": args.model, "split": args.split, **out})


def cmd_bench(args):
    timings = bench_kernels(_ints(args.sizes), _floats(args.keep_ratios), args.batch,
                            args.trials, args.warmups, np.dtype(args.dtype), seed=args.seed or 0)
    write_timings_csv(timings, args.out)
    for t in timings:
        _emit(t.row())


def cmd_report(args):
    out = Path(args.out or "runs/report")
    if args.claims:
        cfg = _config(args) if args.config else None
        outcomes = direction_checks(cfg)
        out.mkdir(parents=True, exist_ok=True)
        write_claims_csv(outcomes, out / "summary.csv")
        for o in outcomes:
            _emit({"claim": o.name, "wins": o.wins, "n": o.n, "passed": o.passed()})
        return
    if args.input:
        rows = read_report(args.input)
        out.mkdir(parents=True, exist_ok=True)
        write_summary(summarize(rows), out / "summary.csv")
    else:
        if not args.config:
            raise ConfigError("report needs --config (to run) or --in (to summarize)")
        rows = run_experiment(_config(args), out)
    failed = [r for r in rows if r.get("status") != "ok"]
    _emit({"rows": len(rows), "failed": len(failed), "out": str(out)})
    if failed:
        raise RuntimeError(f"{len(failed)} report rows failed; first at stage {failed[0].get('stage')}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")

    prune_flags = argparse.ArgumentParser(add_help=False)
    prune_flags.add_argument("--method", choices=("mi", "magnitude", "movement", "random"))
    prune_flags.add_argument("--keep", type=float)
    prune_flags.add_argument("--alpha", type=float)
    prune_flags.add_argument("--beta", type=float)
    prune_flags.add_argument("--mode", choices=("exact_greedy", "mrmr"))
    prune_flags.add_argument("--iterations", type=int)
    prune_flags.add_argument("--schedule", choices=("uniform", "pyramid", "inverted"))

    p = _Parser(prog="miprune", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset")
    s.add_argument("--spec", help='e.g. "planted-subspace(4,32)"')
    s.set_defaults(func=cmd_gen_data, need_out=True)

    s = sub.add_parser("train", parents=[common], help="train a dense model")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_train, need_out=True)

    s = sub.add_parser("collect-stats", parents=[common], help="dump activation statistics")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_collect_stats, need_out=True)

    s = sub.add_parser("prune", parents=[common, prune_flags], help="prune a model")
    s.add_argument("--model", required=True)
    s.add_argument("--stats")
    s.add_argument("--data")
    s.add_argument("--manifest", help="manifest JSON path (default: the --out path with a .json suffix)")
    s.add_argument("--scope", choices=("global", "layer"), default="global")
    s.set_defaults(func=cmd_prune, need_out=True)

    s = sub.add_parser("retrain", parents=[common], help="finetune, or retrain pruned dims")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--manifest", help="prune manifest; retrains the dims it dropped")
    s.set_defaults(func=cmd_retrain, need_out=True)

    s = sub.add_parser("eval", parents=[common], help="accuracy and timing")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=("train", "dev", "test"))
    s.add_argument("--trials", type=int, default=30)
    s.add_argument("--warmups", type=int, default=5)
    s.set_defaults(func=cmd_eval, need_out=False)

    s = sub.add_parser("bench", parents=[common], help="dense vs squeezed vs masked matmul")
    s.add_argument("--sizes", default="256,512,1024")
    s.add_argument("--keep-ratios", default="1.0,0.5")
    s.add_argument("--batch", type=int, default=256)
    s.add_argument("--trials", type=int, default=30)
    s.add_argument("--warmups", type=int, default=5)
    s.add_argument("--dtype", default="float64", choices=("float32", "float64"))
    s.set_defaults(func=cmd_bench, need_out=True)

    s = sub.add_parser("report", parents=[common, prune_flags], help="run or summarize an experiment")
    s.add_argument("--in", dest="input", help="existing report.jsonl to summarize")
    s.add_argument("--claims", action="store_true", help="run the seed-level direction checks")
    s.set_defaults(func=cmd_report, need_out=False)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.need_out and not args.out:
            raise ConfigError(f"{args.command} needs --out")
        if getattr(args, "schedule", None) == "inverted":
            args.schedule = "inverted_pyramid"
        args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ConfigError, ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
