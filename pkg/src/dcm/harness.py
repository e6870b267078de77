"""Experiment orchestration: strict config parsing, seed and parameter
sweeps, the pretrained-baseline comparison, and deterministic persistence.

Outputs: results.csv (one row per sweep value x seed x variant x split x
score kind), manifest.json (config echo, aggregates, warnings,
certificates), and optional selective-curve CSVs.  Files are written
atomically; identical configs produce byte-identical results.csv.
"""

from __future__ import annotations

import enum
import json
import os
import time
import warnings as _warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import kernel_backend
from .datagen import (
    BenchmarkKind,
    BenchmarkSpec,
    LabeledDataset,
    default_spec,
    generate,
)
from .errors import ConfigError
from .metrics import (
    DEFAULT_ECE_BINS,
    EvalReport,
    ScoredExample,
    build_report,
    selective_curve,
    write_curve_csv,
)
from .netcore import Activation, MlpModel, init_model
from .scoring import ScoreKind, msp_confidence, ood_score, predictions
from .theory import SeparationCertificate, certify_separation
from .training import (
    STREAM_INIT,
    DcmConfig,
    finetune_ood,
    finetune_sc,
    pretrain,
)

SWEEP_PARAMETERS = ("lambda", "alpha_u", "unc_size", "severity")

VARIANT_BASELINE = "baseline"
VARIANT_DCM = "dcm"


class Mode(enum.Enum):
    OOD_DETECTION = "ood"
    SELECTIVE_CLASSIFICATION = "sc"
    TRANSDUCTIVE = "transductive"
    THEORY_CHECK = "theory"

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"unknown mode {value!r}; expected {', '.join(m.value for m in cls)}"
            ) from None


@dataclass
class Sweep:
    parameter: str
    values: list[float]

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(
                f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {self.parameter!r}"
            )
        if not self.values:
            raise ConfigError("sweep.values must be nonempty")
        self.values = [float(v) for v in self.values]


@dataclass
class ExperimentConfig:
    benchmark: BenchmarkSpec
    mode: Mode
    dcm: DcmConfig = field(default_factory=DcmConfig)
    hidden_dims: list[int] = field(default_factory=lambda: [32])
    activation: Activation = Activation.RELU
    score_kinds: list[ScoreKind] = field(
        default_factory=lambda: [ScoreKind.MSP, ScoreKind.MAXLOGIT, ScoreKind.ENERGY]
    )
    sweep: Sweep | None = None
    n_seeds: int = 1
    base_seed: int = 0
    n_bins: int = DEFAULT_ECE_BINS
    output_dir: str | None = None

    def __post_init__(self) -> None:
        self.mode = Mode.parse(self.mode)
        self.activation = Activation.parse(self.activation)
        self.score_kinds = [ScoreKind.parse(k) for k in self.score_kinds]
        if not self.score_kinds:
            raise ConfigError("score_kinds must be nonempty")
        if self.n_seeds < 1:
            raise ConfigError(f"n_seeds must be >= 1, got {self.n_seeds}")
        if self.n_bins < 1:
            raise ConfigError(f"metrics.n_bins must be >= 1, got {self.n_bins}")
        if any(int(h) <= 0 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive, got {self.hidden_dims}")
        self.hidden_dims = [int(h) for h in self.hidden_dims]
        sc_kind = self.benchmark.kind is BenchmarkKind.COVARIATE_SHIFT
        if self.mode is Mode.SELECTIVE_CLASSIFICATION and not sc_kind:
            raise ConfigError("mode sc requires benchmark.kind = shift")
        if self.mode in (Mode.OOD_DETECTION, Mode.TRANSDUCTIVE) and sc_kind:
            raise ConfigError(f"mode {self.mode.value} requires a detection benchmark")
        if self.mode is Mode.THEORY_CHECK and self.benchmark.kind is not BenchmarkKind.STANDARD_OOD:
            raise ConfigError("mode theory requires benchmark.kind = standard")


# ---------------------------------------------------------------------------
# config file parsing

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _cast_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _cast_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _cast_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _cast_float_list(key: str, raw: str) -> list[float]:
    return [_cast_float(key, part) for part in raw.split(",") if part.strip()]


def _cast_int_list(key: str, raw: str) -> list[int]:
    return [_cast_int(key, part) for part in raw.split(",") if part.strip()]


def _cast_str_list(key: str, raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


# key -> caster; None means keep the raw string
_KEY_TABLE: dict[str, object] = {
    "mode": None,
    "seed": _cast_int,
    "n_seeds": _cast_int,
    "output_dir": None,
    "score_kinds": _cast_str_list,
    "metrics.n_bins": _cast_int,
    "benchmark.kind": None,
    "benchmark.n_classes": _cast_int,
    "benchmark.dim": _cast_int,
    "benchmark.class_separation": _cast_float,
    "benchmark.ood_offset": _cast_float,
    "benchmark.alpha_u": _cast_float,
    "benchmark.alpha_test": _cast_float,
    "benchmark.n_train": _cast_int,
    "benchmark.n_val": _cast_int,
    "benchmark.n_uncertainty": _cast_int,
    "benchmark.n_test": _cast_int,
    "benchmark.corruption_severity": _cast_float,
    "benchmark.corruption_rotation": _cast_float,
    "benchmark.unc_id_from_train": _cast_bool,
    "dcm.lambda": _cast_float,
    "dcm.pretrain_epochs": _cast_int,
    "dcm.finetune_epochs": _cast_int,
    "dcm.lr_pretrain": _cast_float,
    "dcm.lr_finetune": _cast_float,
    "dcm.batch_id": _cast_int,
    "dcm.batch_unc": _cast_int,
    "model.hidden_dims": _cast_int_list,
    "model.activation": None,
    "sweep.parameter": None,
    "sweep.values": _cast_float_list,
}

# BenchmarkSpec field per config key, applied over per-kind defaults
_BENCH_FIELDS = {
    "benchmark.n_classes": "n_classes",
    "benchmark.dim": "dim",
    "benchmark.class_separation": "class_separation",
    "benchmark.ood_offset": "ood_offset",
    "benchmark.alpha_u": "alpha_u",
    "benchmark.alpha_test": "alpha_test",
    "benchmark.n_train": "n_train",
    "benchmark.n_val": "n_val",
    "benchmark.n_uncertainty": "n_uncertainty",
    "benchmark.n_test": "n_test",
    "benchmark.corruption_severity": "corruption_severity",
    "benchmark.corruption_rotation": "corruption_rotation",
    "benchmark.unc_id_from_train": "unc_id_from_train",
}

_DCM_FIELDS = {
    "dcm.lambda": "lam",
    "dcm.pretrain_epochs": "pretrain_epochs",
    "dcm.finetune_epochs": "finetune_epochs",
    "dcm.lr_pretrain": "lr_pretrain",
    "dcm.lr_finetune": "lr_finetune",
    "dcm.batch_id": "batch_id",
    "dcm.batch_unc": "batch_unc",
}


def read_config_text(text: str) -> dict[str, str]:
    """Parses `key = value` lines; '#' starts a comment; keys must be known."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_TABLE:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        raw[key] = value
    return raw


def config_from_text(text: str) -> ExperimentConfig:
    raw = read_config_text(text)
    for required in ("mode", "benchmark.kind"):
        if required not in raw:
            raise ConfigError(f"missing required config key {required!r}")
    values: dict[str, object] = {}
    for key, raw_value in raw.items():
        caster = _KEY_TABLE[key]
        values[key] = raw_value if caster is None else caster(key, raw_value)  # type: ignore[operator]

    base_seed = int(values.get("seed", 0))
    bench = default_spec(str(values["benchmark.kind"]), seed=base_seed)
    bench_over = {f: values[k] for k, f in _BENCH_FIELDS.items() if k in values}
    if bench_over:
        bench = replace(bench, **bench_over)
    dcm_over = {f: values[k] for k, f in _DCM_FIELDS.items() if k in values}
    dcm_cfg = replace(DcmConfig(seed=base_seed), **dcm_over) if dcm_over else DcmConfig(seed=base_seed)

    sweep = None
    if "sweep.parameter" in values or "sweep.values" in values:
        if "sweep.parameter" not in values or "sweep.values" not in values:
            raise ConfigError("sweep.parameter and sweep.values must be given together")
        sweep = Sweep(str(values["sweep.parameter"]), list(values["sweep.values"]))  # type: ignore[arg-type]

    kw: dict[str, object] = {}
    if "score_kinds" in values:
        kw["score_kinds"] = values["score_kinds"]
    if "model.hidden_dims" in values:
        kw["hidden_dims"] = values["model.hidden_dims"]
    if "model.activation" in values:
        kw["activation"] = values["model.activation"]
    if "metrics.n_bins" in values:
        kw["n_bins"] = values["metrics.n_bins"]
    if "output_dir" in values:
        kw["output_dir"] = values["output_dir"]
    return ExperimentConfig(
        benchmark=bench,
        mode=Mode.parse(str(values["mode"])),
        dcm=dcm_cfg,
        sweep=sweep,
        n_seeds=int(values.get("n_seeds", 1)),
        base_seed=base_seed,
        **kw,  # type: ignore[arg-type]
    )


def parse_config(path) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


def config_echo(cfg: ExperimentConfig) -> dict[str, object]:
    """The resolved config as a flat dotted-key mapping (for the manifest)."""
    b, d = cfg.benchmark, cfg.dcm
    echo: dict[str, object] = {
        "mode": cfg.mode.value,
        "seed": cfg.base_seed,
        "n_seeds": cfg.n_seeds,
        "score_kinds": ",".join(k.value for k in cfg.score_kinds),
        "metrics.n_bins": cfg.n_bins,
        "benchmark.kind": b.kind.value,
        "benchmark.n_classes": b.n_classes,
        "benchmark.dim": b.dim,
        "benchmark.class_separation": b.class_separation,
        "benchmark.ood_offset": b.ood_offset,
        "benchmark.alpha_u": b.alpha_u,
        "benchmark.alpha_test": b.alpha_test,
        "benchmark.n_train": b.n_train,
        "benchmark.n_val": b.n_val,
        "benchmark.n_uncertainty": b.n_uncertainty,
        "benchmark.n_test": b.n_test,
        "benchmark.corruption_severity": b.corruption_severity,
        "benchmark.corruption_rotation": b.corruption_rotation,
        "benchmark.unc_id_from_train": b.unc_id_from_train,
        "dcm.lambda": d.lam,
        "dcm.pretrain_epochs": d.pretrain_epochs,
        "dcm.finetune_epochs": d.finetune_epochs,
        "dcm.lr_pretrain": d.lr_pretrain,
        "dcm.lr_finetune": d.lr_finetune,
        "dcm.batch_id": d.batch_id,
        "dcm.batch_unc": d.batch_unc,
        "model.hidden_dims": ",".join(str(h) for h in cfg.hidden_dims),
        "model.activation": cfg.activation.value,
    }
    if cfg.sweep is not None:
        echo["sweep.parameter"] = cfg.sweep.parameter
        echo["sweep.values"] = ",".join(repr(v) for v in cfg.sweep.values)
    if cfg.output_dir is not None:
        echo["output_dir"] = cfg.output_dir
    return echo


def apply_sweep_value(cfg: ExperimentConfig, parameter: str, value: float) -> ExperimentConfig:
    """A copy of cfg with one swept parameter replaced."""
    if parameter == "lambda":
        return replace(cfg, dcm=replace(cfg.dcm, lam=float(value)))
    if parameter == "alpha_u":
        return replace(cfg, benchmark=replace(cfg.benchmark, alpha_u=float(value)))
    if parameter == "unc_size":
        return replace(cfg, benchmark=replace(cfg.benchmark, n_uncertainty=int(value)))
    if parameter == "severity":
        return replace(cfg, benchmark=replace(cfg.benchmark, corruption_severity=float(value)))
    raise ConfigError(f"unknown sweep parameter {parameter!r}")


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class ResultRow:
    seed: int
    variant: str
    split: str
    score_kind: ScoreKind
    report: EvalReport
    sweep_parameter: str | None = None
    sweep_value: float | None = None

    def csv_cells(self) -> list[str]:
        head = [
            self.sweep_parameter or "",
            "" if self.sweep_value is None else repr(float(self.sweep_value)),
            str(self.seed),
            self.variant,
            self.split,
            self.score_kind.value,
        ]
        return head + self.report.csv_cells()


RESULTS_HEADER = (
    "sweep_parameter,sweep_value,seed,variant,split,score_kind,"
    + ",".join(EvalReport.CSV_FIELDS)
)


def evaluate_detection(
    model: MlpModel,
    test: LabeledDataset,
    kinds: list[ScoreKind],
    n_bins: int,
) -> list[tuple[ScoreKind, EvalReport]]:
    """Detection metrics over the mixed test set, selective metrics over
    its ID portion (OOD examples carry no valid label here)."""
    preds = predictions(model, test.features)
    conf = msp_confidence(model, test.features)
    out = []
    for kind in kinds:
        scores = ood_score(model, test.features, kind)
        examples = []
        for i in range(len(test)):
            ood = bool(test.is_ood[i])
            examples.append(
                ScoredExample(
                    score=float(scores[i]),
                    is_ood=ood,
                    correct=None if ood else bool(preds[i] == test.labels[i]),
                    confidence=None if ood else float(conf[i]),
                )
            )
        out.append((kind, build_report(examples, n_bins=n_bins)))
    return out


def evaluate_selective(
    model: MlpModel,
    split: LabeledDataset,
    kinds: list[ScoreKind],
    n_bins: int,
) -> list[tuple[ScoreKind, EvalReport]]:
    """Selective metrics over every example (labels survive the shift);
    detection metrics appear only when the split mixes both domains."""
    preds = predictions(model, split.features)
    conf = msp_confidence(model, split.features)
    out = []
    for kind in kinds:
        scores = ood_score(model, split.features, kind)
        examples = [
            ScoredExample(
                score=float(scores[i]),
                is_ood=bool(split.is_ood[i]),
                correct=bool(preds[i] == split.labels[i]),
                confidence=float(conf[i]),
            )
            for i in range(len(split))
        ]
        out.append((kind, build_report(examples, n_bins=n_bins)))
    return out


def sc_curve_points(model: MlpModel, split: LabeledDataset):
    """The MSP selective curve of a split, for curve dumps."""
    preds = predictions(model, split.features)
    conf = msp_confidence(model, split.features)
    return selective_curve(conf, preds == split.labels)


# ---------------------------------------------------------------------------
# experiment driver

@dataclass
class SeedOutcome:
    rows: list[ResultRow]
    warnings: list[str]
    certificate: SeparationCertificate | None = None
    test_separation: bool | None = None
    curves: dict[str, list[tuple[float, float]]] = field(default_factory=dict)


def _train_and_eval(cfg: ExperimentConfig, seed: int) -> SeedOutcome:
    spec = replace(cfg.benchmark, seed=seed)
    if cfg.mode is Mode.THEORY_CHECK:
        spec = replace(spec, unc_id_from_train=True)
    data = generate(spec)
    dims = [spec.dim, *cfg.hidden_dims, spec.n_classes]
    init = init_model(dims, cfg.activation, np.random.default_rng([seed, STREAM_INIT]))
    dcm_cfg = cfg.dcm.with_seed(seed)

    caught: list[str] = []
    with _warnings.catch_warnings(record=True) as wrec:
        _warnings.simplefilter("always")
        base = pretrain(init, data["train"], dcm_cfg)

        if cfg.mode is Mode.SELECTIVE_CLASSIFICATION:
            tuned = finetune_sc(base, data["train"], data["val"], dcm_cfg)
            splits = [("id", data["test_id"]), ("ood", data["test_ood"]), ("mixed", data["test_mixed"])]
            rows = []
            curves = {}
            for variant, model in ((VARIANT_BASELINE, base), (VARIANT_DCM, tuned)):
                for split_name, split in splits:
                    for kind, report in evaluate_selective(model, split, cfg.score_kinds, cfg.n_bins):
                        rows.append(ResultRow(seed, variant, split_name, kind, report))
                    curves[f"selective_{variant}_{split_name}_seed{seed}"] = sc_curve_points(model, split)
            outcome = SeedOutcome(rows=rows, warnings=[], curves=curves)
        else:
            if cfg.mode is Mode.TRANSDUCTIVE:
                unc_features = data["test"].features
            else:
                unc_features = data["uncertainty"].features
            tuned = finetune_ood(base, data["train"], unc_features, dcm_cfg)
            rows = []
            for variant, model in ((VARIANT_BASELINE, base), (VARIANT_DCM, tuned)):
                for kind, report in evaluate_detection(model, data["test"], cfg.score_kinds, cfg.n_bins):
                    rows.append(ResultRow(seed, variant, "test", kind, report))
            outcome = SeedOutcome(rows=rows, warnings=[])
            if cfg.mode is Mode.THEORY_CHECK:
                unc = data["uncertainty"]
                cert = certify_separation(
                    tuned, unc.id_part(), unc.ood_part().features, dcm_cfg.lam
                )
                test = data["test"]
                test_cert = certify_separation(
                    tuned, test.id_part(), test.ood_part().features, dcm_cfg.lam
                )
                outcome.certificate = cert
                outcome.test_separation = test_cert.separation_holds
        caught.extend(f"{w.category.__name__}: {w.message}" for w in wrec)
    outcome.warnings = caught
    return outcome


def run_experiment(cfg: ExperimentConfig) -> "RunManifest":
    """Runs all (sweep value, seed) cells and aggregates the results."""
    t0 = time.perf_counter()
    cells: list[tuple[str | None, float | None, ExperimentConfig]] = []
    if cfg.sweep is None:
        cells.append((None, None, cfg))
    else:
        for value in cfg.sweep.values:
            cells.append((cfg.sweep.parameter, value, apply_sweep_value(cfg, cfg.sweep.parameter, value)))

    rows: list[ResultRow] = []
    warnings: list[str] = []
    failures: list[dict] = []
    certificates: list[dict] = []
    curves: dict[str, list[tuple[float, float]]] = {}
    for parameter, value, cell_cfg in cells:
        for i in range(cfg.n_seeds):
            seed = cfg.base_seed + i
            try:
                outcome = _train_and_eval(cell_cfg, seed)
            except Exception as exc:  # noqa: BLE001 - a seed failure must not sink the sweep
                failures.append(
                    {
                        "sweep_parameter": parameter,
                        "sweep_value": value,
                        "seed": seed,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
                continue
            for row in outcome.rows:
                row.sweep_parameter = parameter
                row.sweep_value = value
            rows.extend(outcome.rows)
            warnings.extend(f"seed {seed}: {w}" for w in outcome.warnings)
            curves.update(outcome.curves)
            if outcome.certificate is not None:
                cert = vars(outcome.certificate).copy()
                cert["seed"] = seed
                cert["test_separation"] = outcome.test_separation
                certificates.append(cert)

    return RunManifest(
        config=config_echo(cfg),
        rows=rows,
        aggregates=aggregate_rows(rows),
        warnings=warnings,
        failures=failures,
        certificates=certificates,
        curves=curves,
        partial=bool(failures),
        wall_clock_s=time.perf_counter() - t0,
        backend=kernel_backend(),
    )


@dataclass
class RunManifest:
    config: dict[str, object]
    rows: list[ResultRow]
    aggregates: list[dict]
    warnings: list[str]
    failures: list[dict]
    certificates: list[dict]
    curves: dict[str, list[tuple[float, float]]]
    partial: bool
    wall_clock_s: float
    backend: str

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "rows": [
                {
                    "sweep_parameter": r.sweep_parameter,
                    "sweep_value": r.sweep_value,
                    "seed": r.seed,
                    "variant": r.variant,
                    "split": r.split,
                    "score_kind": r.score_kind.value,
                    "report": r.report.to_json_dict(),
                }
                for r in self.rows
            ],
            "aggregates": self.aggregates,
            "warnings": self.warnings,
            "failures": self.failures,
            "certificates": self.certificates,
            "partial": self.partial,
            "wall_clock_s": self.wall_clock_s,
            "backend": self.backend,
        }


def aggregate_rows(rows: list[ResultRow]) -> list[dict]:
    """Mean and standard error (sample std / sqrt(n)) over seeds for every
    (sweep cell, variant, split, kind, metric) group with data."""
    groups: dict[tuple, dict[str, list[float]]] = {}
    for row in rows:
        key = (row.sweep_parameter, row.sweep_value, row.variant, row.split, row.score_kind.value)
        bucket = groups.setdefault(key, {})
        for name in EvalReport.CSV_FIELDS:
            v = row.report._cell(name)
            if v is not None:
                bucket.setdefault(name, []).append(float(v))
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(p) for p in k)):
        parameter, value, variant, split, kind = key
        for name, vals in sorted(groups[key].items()):
            arr = np.asarray(vals)
            stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
            out.append(
                {
                    "sweep_parameter": parameter,
                    "sweep_value": value,
                    "variant": variant,
                    "split": split,
                    "score_kind": kind,
                    "metric": name,
                    "mean": float(arr.mean()),
                    "stderr": stderr,
                    "n": int(arr.size),
                }
            )
    return out


# ---------------------------------------------------------------------------
# persistence

def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def results_csv_text(rows: list[ResultRow]) -> str:
    lines = [RESULTS_HEADER]
    lines.extend(",".join(row.csv_cells()) for row in rows)
    return "\n".join(lines) + "\n"


def write_outputs(manifest: RunManifest, out_dir) -> dict[str, str]:
    """Writes results.csv, manifest.json, and curve CSVs under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    results_path = os.path.join(out_dir, "results.csv")
    atomic_write_text(results_path, results_csv_text(manifest.rows))
    paths["results"] = results_path
    manifest_path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(
        manifest_path, json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    paths["manifest"] = manifest_path
    if manifest.curves:
        curve_dir = os.path.join(out_dir, "curves")
        os.makedirs(curve_dir, exist_ok=True)
        for name, curve in sorted(manifest.curves.items()):
            write_curve_csv(os.path.join(curve_dir, f"{name}.csv"), curve)
        paths["curves"] = curve_dir
    return paths
