"""Command-line workflow: ``gen``, ``train``, ``eval`` and ``diag``.

Exit codes: 0 success, 2 configuration or usage error, 3 training failure,
4 evaluation failure. Scenario and hyperparameters come from a preset and/or
a ``key = value`` file, with ``--set key=value`` applied last.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as D
from .baseline import BaseDNN, BaseDNNConfig
from .channel import rms_azimuth_spread, rms_delay_spread
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import PRESETS, ConfigError, load_config
from .model import AVERAGE, LID, WiT, WiTConfig
from .numcore import DimensionError
from .training import FitConfig, TrainingDivergence, evaluate, fit, mae, percentile95, write_ecdf, write_history

EXIT_OK, EXIT_CONFIG, EXIT_TRAIN, EXIT_EVAL = 0, 2, 3, 4


class CommandError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _config(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    try:
        return load_config(args.config, args.preset, overrides)
    except (ConfigError, OSError) as exc:
        raise CommandError(f"config error: {exc}", EXIT_CONFIG) from exc


def _load_dataset(path, code):
    try:
        return D.load(path)
    except (D.DatasetFormatError, D.DatasetIOError, OSError) as exc:
        raise CommandError(f"dataset error: {exc}", code) from exc


def method_label(meta: dict) -> str:
    if meta["kind"] == "base":
        return "Base-DNN"
    return "WiT [LID]" if meta.get("pooling") == LID else "WiT (avg.)"


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    cfg = _config(args)
    try:
        ds = D.prepare(cfg)
    except (D.GenerationError, D.NormalizationError) as exc:
        raise CommandError(f"generation failed: {exc}", 1) from exc
    D.save(ds, args.out)
    print(f"samples {len(ds)}  discarded {ds.n_discarded}  N_c' {ds.n_active}  N_r {ds.n_antennas}")
    print("delta re {:.6g}  im {:.6g}  abs {:.6g}".format(*ds.scale))
    print(f"train {len(ds.train_idx)}  val {len(ds.val_idx)}  test {len(ds.holdout_test_idx)}")
    return EXIT_OK


def build_model(kind: str, pooling: str, cfg, ds):
    if kind == "base":
        return BaseDNN(BaseDNNConfig(ds.n_active, ds.n_antennas, cfg.D, cfg.base_dropout), seed=cfg.seed)
    wcfg = WiTConfig(
        ds.n_active,
        ds.n_antennas,
        cfg.D,
        pooling,
        blocks=cfg.blocks,
        dropout=cfg.dropout,
        ln_gamma=cfg.ln_gamma,
        ln_beta=cfg.ln_beta,
        learn_ln=cfg.learn_ln,
        residual=cfg.residual,
    )
    return WiT(wcfg, seed=cfg.seed)


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = _load_dataset(args.dataset, EXIT_TRAIN)
    pooling = args.pooling or cfg.pooling
    model = build_model(args.model, pooling, cfg, ds)
    patience = cfg.base_patience if args.model == "base" else cfg.wit_patience
    fcfg = FitConfig(cfg.epochs, cfg.batch, cfg.lr, cfg.weight_decay, patience, cfg.seed)
    history_path = Path(str(args.out) + ".history.txt")
    try:
        res = fit(model, ds, fcfg)
    except TrainingDivergence as exc:
        write_history(exc.history, history_path)
        raise CommandError(f"training diverged: {exc}", EXIT_TRAIN) from exc
    write_history(res.history, history_path)
    extra = {"seed": cfg.seed, "epochs_run": len(res.history), "best_epoch": res.best_epoch}
    save_checkpoint(model, args.out, extra=extra)
    print(f"{method_label(model.meta())}  params {model.param_count()}  best epoch {res.best_epoch}")
    print(f"validation MAE(m) {res.best_val_mae:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = _load_dataset(args.dataset, EXIT_EVAL)
    idx = ds.holdout_test_idx
    if len(idx) == 0:
        raise CommandError("dataset has no test split", EXIT_EVAL)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for ck in args.checkpoint:
        try:
            model, meta = load_checkpoint(ck)
            errs = evaluate(model, ds, idx)
        except (CheckpointError, OSError) as exc:
            raise CommandError(f"checkpoint error: {exc}", EXIT_EVAL) from exc
        except DimensionError as exc:
            raise CommandError(f"{ck}: checkpoint does not fit dataset: {exc}", EXIT_EVAL) from exc
        ecdf_path = (out_dir / Path(ck).name if out_dir else Path(ck)).with_suffix(".ecdf.txt")
        write_ecdf(errs, ecdf_path)
        rows.append((method_label(meta), mae(errs), percentile95(errs)))
    width = max(12, *(len(r[0]) for r in rows))
    print(f"{'method':<{width}}  {'MAE(m)':>10}  {'p95(m)':>10}")
    for name, m, p in rows:
        print(f"{name:<{width}}  {m:>10.4f}  {p:>10.4f}")
    return EXIT_OK


def spread_series(cfg, tx: int = 0) -> np.ndarray:
    """``(T, 2)`` RMS delay spread (s) and azimuth spread (rad) of one transmitter per snapshot."""
    if not 0 <= tx < cfg.R:
        raise CommandError(f"transmitter index {tx} outside 0..{cfg.R - 1}", EXIT_CONFIG)
    scene = D.build_scene(cfg)
    phys = cfg.physics()
    out = np.empty((cfg.T, 2))
    for t in range(cfg.T):
        snap, rain = D.snapshot(cfg, scene, t)
        paths = D.sample_paths(cfg, snap, rain, tx, t, phys)
        out[t] = rms_delay_spread(paths), rms_azimuth_spread(paths)
    return out


def cmd_diag(args) -> int:
    cfg = _config(args)
    series = spread_series(cfg, args.tx)
    lines = ["# tau_rms_s phi_rms_rad"] + [f"{a:.9e} {b:.9e}" for a, b in series]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    cfg_args = argparse.ArgumentParser(add_help=False)
    cfg_args.add_argument("--config", help="key = value config file")
    cfg_args.add_argument("--preset", choices=PRESETS, help="built-in scenario")
    cfg_args.add_argument("--seed", type=int, help="overrides the config seed")
    cfg_args.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = argparse.ArgumentParser(prog="witloc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common, cfg_args], help="generate a dataset file")
    g.add_argument("--out", required=True, help="dataset file to write")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", parents=[common, cfg_args], help="train a model on a dataset file")
    t.add_argument("--dataset", required=True)
    t.add_argument("--model", choices=("wit", "base"), default="wit")
    t.add_argument("--pooling", choices=(AVERAGE, LID), help="WiT pooling (default from config)")
    t.add_argument("--out", required=True, help="checkpoint file; history goes to <out>.history.txt")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="test-split MAE and p95 for one or more checkpoints")
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", action="append", required=True, help="repeat to compare methods")
    e.add_argument("--out", help="directory for ECDF files (default: beside each checkpoint)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("diag", parents=[common, cfg_args], help="per-snapshot RMS delay and angle spread")
    d.add_argument("--tx", type=int, default=0, help="transmitter index")
    d.add_argument("--out", help="text file (default stdout)")
    d.set_defaults(func=cmd_diag)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"witloc {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
