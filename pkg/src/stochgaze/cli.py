"""Command-line entry point: ``stochgaze {train,eval,gradcheck,synth,baselines,bench}``.

Exit codes: 0 success, 1 validation (bad config, bad data, version or
dimension mismatch), 2 I/O (missing or unreadable files), 3 numeric
failure (gradient check above tolerance, non-finite loss).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import reports
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .dataset import FormatError, load_dataset, save_dataset
from .experiments import compare_baselines, run_gradcheck
from .grid import InvalidInput
from .learning import OptimState, batch_forward_train, loss_and_grads, predict, sgd_step, train
from .metrics import evaluate
from .model import init_params
from .synthetic import generate, oracle_accuracy

log = logging.getLogger("stochgaze")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class ValidationError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().with_seed(0)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "data", None):
        cfg = dataclasses.replace(cfg, data=args.data)
    if args.out:
        cfg = dataclasses.replace(cfg, out=args.out)
    return cfg


def _emit(args, text: str) -> None:
    if not args.quiet:
        sys.stdout.write(text)


def _training_split(cfg: ExperimentConfig):
    if cfg.data:
        return load_dataset(cfg.data)
    return generate(cfg.synth).train


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = _training_split(cfg)
    data = ds.to_training_data(cfg.prior, cfg.prior_mode)
    dims = {"H": cfg.model.H, "C": cfg.model.C, "K": ds.num_classes}
    result = train(data, cfg.train, cfg.prior_mode, dims=dims)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = [e.as_dict() for e in result.log]
    final = entries[-1] if entries else {}
    ckpt = Checkpoint(result.params, cfg.to_dict(), cfg.train.total_epochs, final, cfg.prior_mode)
    ckpt_path = save_checkpoint(ckpt, out / "checkpoint.ckpt")
    (out / "train_log.jsonl").write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in entries))
    rep = reports.make_report("train", epochs=cfg.train.total_epochs, final=final, checkpoint=ckpt_path.name)
    reports.write_report(rep, out / "train_report.json")
    rows = [[e["epoch"], e["lr"], e["nll"], e["kl"], e["total"], e["accuracy"]] for e in entries]
    _emit(args, reports.table(rows, ["epoch", "lr", "nll", "kl", "total", "accuracy"]))
    log.info("wrote %s", ckpt_path)
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise ValidationError("eval needs --checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    try:
        snap = from_dict(ckpt.config) if ckpt.config else ExperimentConfig()
    except ConfigError as e:
        raise ValidationError(f"checkpoint config snapshot invalid: {e}") from e
    if args.data:
        ds = load_dataset(args.data)
        data_name = str(args.data)
    else:
        ds = generate(snap.synth).test
        data_name = f"synthetic-test(seed={snap.seed})"
    dims = ckpt.params.dims
    if ds.num_classes != dims["K"]:
        raise ValidationError(f"checkpoint has K={dims['K']} classes but dataset has {ds.num_classes}")
    if len(ds) == 0:
        raise ValidationError("dataset is empty")
    if ds.descriptor_dim != dims["D"]:
        raise ValidationError(f"checkpoint expects D={dims['D']} descriptors, dataset has {ds.descriptor_dim}")
    data = ds.to_training_data(snap.prior, "none")
    probs, maps = predict(ckpt.params, data, "gaze")
    report = evaluate(probs, data.labels, ds.num_classes, ds.gaze_eval_items(maps, snap.prior))
    rep = reports.make_report("eval", metrics=report.to_dict(), checkpoint=Path(args.checkpoint).name,
                              data=data_name, prior_mode=ckpt.prior_mode)
    out = Path(args.out or snap.out)
    reports.write_report(rep, out / "eval_report.json")
    text = reports.metrics_table(rep["metrics"])
    (out / "eval_report.txt").write_text(text)
    _emit(args, text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    res = run_gradcheck(cfg.gradcheck, cfg.train, cfg.prior, cfg.seed)
    rep = reports.make_report("gradcheck", **res)
    reports.write_report(rep, Path(cfg.out) / "gradcheck.json")
    rows = [[r["index"], r["prior_mode"], "on" if r["dropout"] else "off",
             *(f"{r['errors'][g]:.2e}" for g in ("encoder", "gaze_head", "feature_head", "classifier"))]
            for r in res["configs"]]
    _emit(args, reports.table(rows, ["case", "objective", "dropout", "encoder", "gaze_head",
                                     "feature_head", "classifier"]))
    _emit(args, f"max relative error {res['max_rel_error']:.3e} (tolerance {res['tolerance']:.0e}): "
                f"{'PASS' if res['passed'] else 'FAIL'}\n")
    if not res["passed"]:
        raise NumericFailure(f"gradient check failed: max relative error {res['max_rel_error']:.3e}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    sd = generate(cfg.synth)
    out = Path(cfg.out)
    files = {
        "train": save_dataset(sd.train, out / "train").name,
        "test": save_dataset(sd.test, out / "test").name,
    }
    acc = oracle_accuracy(sd)
    reports.write_report(reports.make_report("synth", oracle_accuracy=acc, files=files), out / "synth.json")
    _emit(args, f"wrote {len(sd.train)} train / {len(sd.test)} test clips to {out}; "
                f"oracle test accuracy {acc:.4f}\n")
    return EXIT_OK


def cmd_baselines(args) -> int:
    cfg = _config(args)
    comp = compare_baselines(cfg)
    runs = {v: [r.to_dict() for r in reps] for v, reps in comp.runs.items()}
    summary = comp.summary()
    rep = reports.make_report("baselines", seeds=comp.seeds, oracle_accuracy=comp.oracle, runs=runs,
                              summary=summary, checks=comp.checks())
    out = Path(cfg.out)
    reports.write_report(rep, out / "baselines.json")
    rows = [[v, s["mean_class_accuracy"], s["best_f1"]] for v, s in summary.items()]
    text = reports.table(rows, ["variant", "mean class acc", "gaze best F1"])
    text += f"oracle accuracy (mean over seeds): {np.mean(comp.oracle):.4f}\n"
    text += "".join(f"{k}: {v:.4f}\n" for k, v in comp.checks().items())
    (out / "baselines.txt").write_text(text)
    _emit(args, text)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    bc = cfg.bench
    sc = dataclasses.replace(cfg.synth, n_train=bc.batch_size, n_test=0)
    ds = generate(sc).train
    data = ds.to_training_data(cfg.prior, "gaze")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(ds.descriptor_dim, cfg.model.H, cfg.model.C, ds.num_classes, rng)
    params.wg[:] = rng.normal(size=params.wg.shape)
    state = OptimState.fresh(params, cfg.train.lr0)
    timings = {"forward": [], "backward": [], "step": []}
    for _ in range(bc.repeats):
        t0 = time.perf_counter()
        out = batch_forward_train(params, data, "gaze", cfg.train, rng)
        t1 = time.perf_counter()
        _, grads = loss_and_grads(params, out, data.labels, priors=data.priors, kl_weight=cfg.train.kl_weight)
        t2 = time.perf_counter()
        sgd_step(params, grads, state, cfg.train)
        t3 = time.perf_counter()
        timings["forward"].append(t1 - t0)
        timings["backward"].append(t2 - t1)
        timings["step"].append(t3 - t2)
    seconds = {k: float(np.median(v)) for k, v in timings.items()}
    rep = reports.make_report("bench", batch_size=bc.batch_size, seconds=seconds)
    reports.write_report(rep, Path(cfg.out) / "bench.json")
    _emit(args, reports.table([[k, v * 1e3] for k, v in seconds.items()], ["phase", "ms (median)"]))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
    "synth": cmd_synth, "baselines": cmd_baselines, "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochgaze", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint", help="checkpoint file (eval)")
        p.add_argument("--data", help="dataset manifest (.jsonl)")
        p.add_argument("--quiet", action="store_true", help="suppress tables on stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValidationError, InvalidInput, FormatError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (NumericFailure, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
