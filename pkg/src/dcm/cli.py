"""Command-line entry points.

Subcommands: pretrain, finetune-ood, finetune-sc, score, evaluate,
experiment, theory-check.  Each accepts --config <path>, --seed <int>
(overrides the config seed), and --out <dir>.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings as _warnings
from dataclasses import replace

import numpy as np

from ._backend import kernel_backend
from .datagen import default_spec, generate, read_dataset_csv
from .errors import ConfigError, DcmError
from .harness import (
    Mode,
    atomic_write_text,
    config_echo,
    parse_config,
    run_experiment,
    write_outputs,
)
from .metrics import EvalReport, ScoredExample, build_report
from .netcore import init_model, load_checkpoint, save_checkpoint
from .scoring import ScoreKind, read_score_csv, score_dataset, write_score_csv
from .theory import descend_single_example, optimal_distribution, pinsker_check
from .training import STREAM_INIT, finetune_ood, finetune_sc, pretrain


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required for this command")


def _load_config(args):
    _require(args, "config")
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(
            cfg,
            base_seed=int(args.seed),
            benchmark=replace(cfg.benchmark, seed=int(args.seed)),
            dcm=cfg.dcm.with_seed(int(args.seed)),
        )
    else:
        cfg = replace(
            cfg,
            benchmark=replace(cfg.benchmark, seed=cfg.base_seed),
            dcm=cfg.dcm.with_seed(cfg.base_seed),
        )
    return cfg


def _out_dir(args, cfg=None) -> str:
    out = args.out or (cfg.output_dir if cfg is not None else None)
    if out is None:
        raise ConfigError("--out is required (or set output_dir in the config)")
    os.makedirs(out, exist_ok=True)
    return out


def _write_train_manifest(out, cfg, history, warnings, ckpt_path, t0) -> None:
    manifest = {
        "config": config_echo(cfg),
        "per_epoch_loss": history,
        "warnings": warnings,
        "checkpoint": os.path.basename(ckpt_path),
        "backend": kernel_backend(),
        "wall_clock_s": time.perf_counter() - t0,
    }
    atomic_write_text(
        os.path.join(out, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _init_for(cfg):
    dims = [cfg.benchmark.dim, *cfg.hidden_dims, cfg.benchmark.n_classes]
    return init_model(
        dims, cfg.activation, np.random.default_rng([cfg.base_seed, STREAM_INIT])
    )


def cmd_pretrain(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    data = generate(cfg.benchmark)
    history: list = []
    model = pretrain(_init_for(cfg), data["train"], cfg.dcm, history=history)
    ckpt = os.path.join(out, "pretrained.ckpt")
    save_checkpoint(model, ckpt)
    _write_train_manifest(out, cfg, history, [], ckpt, t0)
    print(f"pretrained {cfg.dcm.pretrain_epochs} epochs, final loss {history[-1]:.6f}")
    print(f"checkpoint: {ckpt}")
    return 0


def _start_model(args, cfg):
    if args.checkpoint:
        return load_checkpoint(args.checkpoint)
    data = generate(cfg.benchmark)
    return pretrain(_init_for(cfg), data["train"], cfg.dcm)


def cmd_finetune_ood(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    data = generate(cfg.benchmark)
    if cfg.mode is Mode.TRANSDUCTIVE:
        unc = data["test"].features
    elif args.unlabeled:
        unc = read_dataset_csv(args.unlabeled).features
    else:
        unc = data["uncertainty"].features
    model = _start_model(args, cfg)
    history: list = []
    tuned = finetune_ood(model, data["train"], unc, cfg.dcm, history=history)
    ckpt = os.path.join(out, "finetuned.ckpt")
    save_checkpoint(tuned, ckpt)
    _write_train_manifest(out, cfg, history, [], ckpt, t0)
    print(f"fine-tuned {cfg.dcm.finetune_epochs} epochs, final objective {history[-1]:.6f}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_finetune_sc(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    data = generate(cfg.benchmark)
    model = _start_model(args, cfg)
    history: list = []
    caught: list[str] = []
    with _warnings.catch_warnings(record=True) as wrec:
        _warnings.simplefilter("always")
        tuned = finetune_sc(model, data["train"], data["val"], cfg.dcm, history=history)
        caught = [f"{w.category.__name__}: {w.message}" for w in wrec]
    ckpt = os.path.join(out, "finetuned.ckpt")
    save_checkpoint(tuned, ckpt)
    _write_train_manifest(out, cfg, history, caught, ckpt, t0)
    for w in caught:
        print(f"warning: {w}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_score(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    _require(args, "checkpoint")
    model = load_checkpoint(args.checkpoint)
    if args.data:
        dataset = read_dataset_csv(args.data)
    else:
        data = generate(cfg.benchmark)
        if args.split not in data:
            raise ConfigError(
                f"split {args.split!r} not in this benchmark; has {sorted(data)}"
            )
        dataset = data[args.split]
    rows = score_dataset(model, dataset, cfg.score_kinds)
    path = os.path.join(out, "scores.csv")
    write_score_csv(path, rows)
    print(f"wrote {len(rows)} score rows: {path}")
    return 0


def cmd_evaluate(args) -> int:
    _require(args, "scores")
    out = _out_dir(args)
    rows = read_score_csv(args.scores)
    if not rows:
        raise ConfigError(f"{args.scores}: no score rows")
    by_kind: dict[ScoreKind, list] = {}
    for r in rows:
        by_kind.setdefault(r.score_kind, []).append(r)
    lines = ["score_kind," + ",".join(EvalReport.CSV_FIELDS)]
    report_dict = {}
    for kind in sorted(by_kind, key=lambda k: k.value):
        examples = []
        for r in by_kind[kind]:
            has_label = r.label >= 0
            examples.append(
                ScoredExample(
                    score=r.score,
                    is_ood=r.domain_tag == "OOD",
                    correct=(r.prediction == r.label) if has_label else None,
                    # only MSP scores encode a confidence directly
                    confidence=-r.score if kind is ScoreKind.MSP and has_label else None,
                )
            )
        report = build_report(examples)
        lines.append(kind.value + "," + ",".join(report.csv_cells()))
        report_dict[kind.value] = report.to_json_dict()
    path = os.path.join(out, "report.csv")
    atomic_write_text(path, "\n".join(lines) + "\n")
    atomic_write_text(
        os.path.join(out, "report.json"),
        json.dumps(report_dict, indent=2, sort_keys=True) + "\n",
    )
    print(f"wrote {path}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    manifest = run_experiment(cfg)
    paths = write_outputs(manifest, out)
    for agg in manifest.aggregates:
        if agg["metric"] == "auroc" and agg["split"] in ("test", "mixed"):
            sweep = (
                f" {agg['sweep_parameter']}={agg['sweep_value']}"
                if agg["sweep_parameter"]
                else ""
            )
            print(
                f"auroc {agg['variant']}/{agg['score_kind']}{sweep}: "
                f"{agg['mean']:.4f} +/- {agg['stderr']:.4f} (n={agg['n']})"
            )
    if manifest.partial:
        print(f"{len(manifest.failures)} seed(s) failed; manifest marks partial")
    print(f"results: {paths['results']}")
    return 1 if manifest.partial else 0


def cmd_theory_check(args) -> int:
    if args.config:
        cfg = _load_config(args)
        if cfg.mode is not Mode.THEORY_CHECK:
            cfg = replace(cfg, mode=Mode.THEORY_CHECK)
    else:
        from .harness import ExperimentConfig
        from .netcore import Activation
        from .training import DcmConfig

        seed = int(args.seed) if args.seed is not None else 0
        # bounded activations keep far-field confidence flat, which is what
        # lets the fine-tuned model separate the MSP ranges empirically
        cfg = ExperimentConfig(
            benchmark=replace(
                default_spec("standard", seed=seed),
                unc_id_from_train=True,
                n_uncertainty=480,
            ),
            mode=Mode.THEORY_CHECK,
            dcm=DcmConfig(finetune_epochs=60, seed=seed),
            hidden_dims=[64],
            activation=Activation.TANH,
            n_seeds=5,
            base_seed=seed,
        )
    ok = True

    rng = np.random.default_rng(20240)
    worst_tv = 0.0
    for _ in range(20):
        c = int(rng.integers(2, 11))
        p = rng.dirichlet(np.ones(c))
        lam = float(rng.uniform(0.05, 2.0))
        s = descend_single_example(p, lam)
        tv = 0.5 * float(np.abs(s - optimal_distribution(p, lam)).sum())
        worst_tv = max(worst_tv, tv)
    closed_ok = worst_tv < 1e-6
    ok &= closed_ok
    print(f"closed-form optimum vs gradient descent: worst TV {worst_tv:.2e} "
          f"[{'ok' if closed_ok else 'FAIL'}]")

    violations = 0
    for _ in range(1000):
        c = int(rng.integers(2, 11))
        if not pinsker_check(rng.dirichlet(np.ones(c)), rng.dirichlet(np.ones(c))).holds:
            violations += 1
    pinsker_ok = violations == 0
    ok &= pinsker_ok
    print(f"pinsker inequality on 1000 random pairs: {violations} violations "
          f"[{'ok' if pinsker_ok else 'FAIL'}]")

    manifest = run_experiment(cfg)
    header = (
        f"{'seed':>5} {'eps_hat':>12} {'eps_thresh':>12} {'id_lower':>9} "
        f"{'ood_upper':>9} {'min_id':>8} {'max_ood':>8} {'sep':>5} {'test':>5} {'bounds':>6}"
    )
    print(header)
    n_test_sep = 0
    for cert in manifest.certificates:
        bounds_ok = cert["id_bound_ok"] and cert["ood_bound_ok"]
        if cert["premise_met"] and not bounds_ok:
            ok = False
        n_test_sep += bool(cert["test_separation"])
        print(
            f"{cert['seed']:>5} {cert['epsilon_hat']:>12.6f} "
            f"{cert['epsilon_threshold']:>12.6f} {cert['id_msp_lower_bound']:>9.4f} "
            f"{cert['ood_msp_upper_bound']:>9.4f} {cert['min_id_msp']:>8.4f} "
            f"{cert['max_ood_msp']:>8.4f} "
            f"{'yes' if cert['separation_holds'] else 'no':>5} "
            f"{'yes' if cert['test_separation'] else 'no':>5} "
            f"{'ok' if bounds_ok else 'FAIL':>6}"
        )
    n_certs = len(manifest.certificates)
    if n_certs:
        # empirical bar: MSP ranges must separate on held-out test data in
        # at least 4 of 5 seeds (pro-rated when n_seeds differs)
        need = max(1, (4 * n_certs + 4) // 5)
        sep_ok = n_test_sep >= need
        ok &= sep_ok
        print(f"test-set MSP separation in {n_test_sep}/{n_certs} seeds "
              f"(need {need}) [{'ok' if sep_ok else 'FAIL'}]")
    if manifest.partial:
        ok = False
        print(f"{len(manifest.failures)} seed(s) failed")
    if args.out:
        write_outputs(manifest, _out_dir(args))
    print("theory checks passed" if ok else "theory checks FAILED")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a dotted-key config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(
        prog="dcm",
        description="Confidence-minimization training, scoring, and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("pretrain", parents=[common]).set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune-ood", parents=[common])
    p.add_argument("--checkpoint", help="pretrained checkpoint (default: pretrain first)")
    p.add_argument("--unlabeled", help="dataset CSV overriding the uncertainty features")
    p.set_defaults(fn=cmd_finetune_ood)

    p = sub.add_parser("finetune-sc", parents=[common])
    p.add_argument("--checkpoint", help="pretrained checkpoint (default: pretrain first)")
    p.set_defaults(fn=cmd_finetune_sc)

    p = sub.add_parser("score", parents=[common])
    p.add_argument("--checkpoint", help="checkpoint to score with")
    p.add_argument("--data", help="dataset CSV to score (default: benchmark split)")
    p.add_argument("--split", default="test", help="benchmark split name (default: test)")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("evaluate", parents=[common])
    p.add_argument("--scores", help="score dump CSV to evaluate")
    p.set_defaults(fn=cmd_evaluate)

    sub.add_parser("experiment", parents=[common]).set_defaults(fn=cmd_experiment)
    sub.add_parser("theory-check", parents=[common]).set_defaults(fn=cmd_theory_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DcmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
