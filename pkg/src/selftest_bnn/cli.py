"""Command line: train -> calibrate -> campaign -> report.

Every subcommand reads the same YAML config (``--config``) and writes into
``--out`` (default: the config's ``output.dir``).  Exit status is 0 on
success, 1 on usage errors and 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .campaign import evaluate_model, run_campaign, summarize
from .checkpoint import config_hash, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .data import load_idx, load_idx_dataset, make_synthetic
from .detector import FingerprintBoundary, calibrate_boundary, classify_batch
from .errors import FormatError, InvalidConfig, SelfTestError
from .nn import binary_mlp, count_macs, count_params, desk_cnn, fingerprint
from .report import fmt, read_runs_csv, write_plot_csv, write_report
from .rng import derive
from .training import Dataset, SplitDataset, split_dataset, train_two_stage

log = logging.getLogger("selftest_bnn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- pipeline pieces ----------------------------------------------------------------

def load_data(cfg: ExperimentConfig) -> tuple[Dataset, SplitDataset]:
    """Training data and the held-out data split into (test, calibration).

    The held-out set is split 80:20; ``task_split`` is the evaluation set for
    accuracy, FPR and campaigns, ``fingerprint_split`` calibrates the boundary.
    """
    d = cfg.data
    if d.kind == "idx":
        train = load_idx_dataset(d.train_images, d.train_labels)
        held = load_idx_dataset(d.eval_images, d.eval_labels)
    else:
        full = make_synthetic(d.kind, d.n_train + d.n_eval, d.classes, d.noise, d.seed, d.shape)
        train, held = full.subset(np.arange(d.n_train)), full.subset(np.arange(d.n_train, len(full)))
    return train, split_dataset(held, 0.8, derive(d.seed, 7))


def build_model(cfg: ExperimentConfig, input_shape: tuple[int, ...], num_classes: int):
    mc = cfg.model
    if mc.topology == "desk_cnn":
        if len(input_shape) != 3:
            raise InvalidConfig("desk_cnn needs image data of shape (C, H, W)")
        return desk_cnn(input_shape, num_classes, mc.uncertainty_width, tuple(mc.channels), mc.hidden, mc.seed,
                        binary_features=mc.binary_features)
    return binary_mlp(int(np.prod(input_shape)), num_classes, (mc.hidden, mc.hidden), mc.uncertainty_width, mc.seed)


def _fingerprints(m, x, batch=512) -> np.ndarray:
    return np.concatenate([np.atleast_1d(fingerprint(m.forward(x[s:s + batch]))) for s in range(0, len(x), batch)])


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- subcommands --------------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, out: Path, args) -> int:
    train, held = load_data(cfg)
    classes = int(max(train.y.max(), held.task_split.y.max())) + 1
    m = build_model(cfg, train.x.shape[1:], classes)
    m, _, history = train_two_stage(m, train, cfg.train)
    acc = evaluate_model(m, held.task_split, FingerprintBoundary(-np.inf, np.inf)).accuracy
    path = save_checkpoint(m, out / "model.ckpt", {"config_hash": config_hash(cfg.to_dict()),
                                                    "train_seed": cfg.train.seed, "model_seed": cfg.model.seed})
    _write_json(out / "train_history.json", history)
    print(f"trained: held-out accuracy {fmt(acc)}; checkpoint {path}")
    return 0


def cmd_calibrate(cfg: ExperimentConfig, out: Path, args) -> int:
    m = load_checkpoint(args.checkpoint or out / "model.ckpt")
    _, held = load_data(cfg)
    d = cfg.detector
    b = calibrate_boundary(_fingerprints(m, held.fingerprint_split.x), d.q_low, d.q_high, d.z_threshold)
    fpr = classify_batch(_fingerprints(m, held.task_split.x), b)[0].mean()
    _write_json(out / "boundary.json", b.to_dict())
    print(f"boundary l={fmt(b.l)} h={fmt(b.h)}; fault-free FPR {fmt(fpr)}")
    return 0


def _load_boundary(path) -> FingerprintBoundary:
    return FingerprintBoundary.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cmd_campaign(cfg: ExperimentConfig, out: Path, args) -> int:
    m = load_checkpoint(args.checkpoint or out / "model.ckpt")
    b = _load_boundary(args.boundary or out / "boundary.json")
    _, held = load_data(cfg)
    golden = evaluate_model(m, held.task_split, b)
    results = run_campaign(m, b, cfg.campaign, held.task_split, golden.accuracy)
    summary = summarize(results, golden.accuracy, golden.coverage, cfg.campaign.runs_per_rate,
                        cfg.campaign.nonfunctional_drop)
    write_report(results, summary, b, out, "csv")
    write_report(results, summary, b, out, "json")
    for s in summary.rates:
        print(f"rate {fmt(s.rate)}: coverage median {fmt(s.cov_median)}, accuracy {fmt(s.acc_mean)}")
    return 0


def cmd_classify(cfg: ExperimentConfig, out: Path, args) -> int:
    m = load_checkpoint(args.checkpoint or out / "model.ckpt")
    b = _load_boundary(args.boundary or out / "boundary.json")
    src = Path(args.input)
    x = np.load(src) if src.suffix == ".npy" else load_idx(src)
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == len(m.input_shape):
        x = x[:, None] if len(m.input_shape) == 3 else x[None]
    if x.shape[1:] != m.input_shape:
        raise FormatError(f"inputs have shape {x.shape[1:]}, model expects {m.input_shape}")
    rec = m.forward(x)
    f = np.atleast_1d(fingerprint(rec)).astype(np.float64)
    faulty, _ = classify_batch(f, b)
    lines = ["index,fingerprint,status,prediction"]
    lines += [f"{i},{fmt(fi)},{'Faulty' if bad else 'FaultFree'},{int(p)}"
              for i, (fi, bad, p) in enumerate(zip(f, faulty, rec.prediction_logits.argmax(1)))]
    (out / "verdicts.csv").parent.mkdir(parents=True, exist_ok=True)
    (out / "verdicts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{int(faulty.sum())} of {len(f)} inputs flagged Faulty")
    return 0


def overhead_table(m) -> list[tuple[str, int, float, int, float]]:
    p, c = count_params(m), count_macs(m)
    return [(part, p[part], p[part] / p["total"], c[part], c[part] / c["total"])
            for part in ("backbone", "prediction_head", "uncertainty_head", "total")]


def cmd_overhead(cfg: ExperimentConfig, out: Path, args) -> int:
    m = load_checkpoint(args.checkpoint or out / "model.ckpt")
    rows = overhead_table(m)
    lines = ["part,params,params_share,macs,macs_share"] + [",".join([r[0], *(fmt(v) for v in r[1:])]) for r in rows]
    out.mkdir(parents=True, exist_ok=True)
    (out / "overhead.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for part, n, ps, macs, ms in rows:
        print(f"{part:<17} params {n:>9} ({ps:.4%})  MACs {macs:>10} ({ms:.4%})")
    return 0


def cmd_report(cfg: ExperimentConfig, out: Path, args) -> int:
    runs_path = Path(args.results or out / "runs.csv")
    results = read_runs_csv(runs_path)
    baseline, fpr = args.baseline, args.fpr
    meta = runs_path.with_name("report.json")
    if (baseline is None or fpr is None) and meta.exists():
        s = json.loads(meta.read_text(encoding="utf-8"))["summary"]
        baseline = float(s["baseline_accuracy"]) if baseline is None else baseline
        fpr = float(s["fault_free_fpr"]) if fpr is None else fpr
    if baseline is None or fpr is None:
        raise InvalidConfig("report needs --baseline and --fpr (or a report.json next to the results)")
    summary = summarize(results, baseline, fpr, nonfunctional_drop=cfg.campaign.nonfunctional_drop)
    write_report(results, summary, None, out, "csv")
    write_plot_csv(summary, results, out / "plot.csv")
    print(f"summary of {len(results)} runs written to {out}")
    return 0


COMMANDS = {"train": cmd_train, "calibrate": cmd_calibrate, "campaign": cmd_campaign,
            "classify": cmd_classify, "overhead": cmd_overhead, "report": cmd_report}


def _add_common(p: argparse.ArgumentParser, suppress: bool):
    # on subparsers the defaults must not clobber flags given before the subcommand
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--config", help="YAML experiment config", **kw)
    p.add_argument("--seed", type=int, help="override train, model and campaign seeds", **kw)
    p.add_argument("--out", help="output directory", **kw)
    p.add_argument("--workers", type=int, help="campaign worker processes", **kw)
    p.add_argument("-v", "--verbose", action="store_true", **kw)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="selftest-bnn", description="BNN self-test via uncertainty fingerprints")
    _add_common(p, suppress=False)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    helps = {"train": "two-stage training, writes model.ckpt",
             "calibrate": "fit the fingerprint boundary, writes boundary.json",
             "campaign": "Monte Carlo fault campaign, writes runs.csv, summary.csv, report.json",
             "classify": "per-input verdicts for a batch, writes verdicts.csv",
             "overhead": "parameter and MAC shares, writes overhead.csv",
             "report": "summary.csv and plot.csv from runs.csv"}
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        _add_common(sp, suppress=True)
        if name in ("calibrate", "campaign", "classify", "overhead"):
            sp.add_argument("--checkpoint")
        if name in ("campaign", "classify"):
            sp.add_argument("--boundary")
        if name == "classify":
            sp.add_argument("--input", required=True, help=".npy array or IDX file")
        if name == "report":
            sp.add_argument("--results")
            sp.add_argument("--baseline", type=float)
            sp.add_argument("--fpr", type=float)
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise InvalidConfig("--seed must be an unsigned 64-bit integer")
        cfg.train.seed = cfg.model.seed = cfg.campaign.base_seed = args.seed
    if args.workers is not None:
        cfg.campaign.parallel_workers = args.workers
    cfg.validate()
    return cfg


def cli_main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
        out = Path(args.out or cfg.output_dir)
        return COMMANDS[args.command](cfg, out, args)
    except (SelfTestError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
