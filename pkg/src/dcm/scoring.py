"""Confidence-to-OOD-score functions with one sign convention.

Every score is oriented so that higher means more OOD; the per-score signs
are baked in here so downstream metrics never branch on the kind.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .datagen import DOMAIN_ID, DOMAIN_OOD, LabeledDataset
from .errors import ConfigError
from .netcore import MlpModel, forward_logits, softmax


class ScoreKind(enum.Enum):
    MSP = "msp"
    MAXLOGIT = "maxlogit"
    ENERGY = "energy"

    @classmethod
    def parse(cls, value: "ScoreKind | str") -> "ScoreKind":
        if isinstance(value, ScoreKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"unknown score kind {value!r}; expected "
                f"{', '.join(k.value for k in cls)}"
            ) from None


def ood_score(model: MlpModel, inputs, kind: "ScoreKind | str") -> np.ndarray:
    """Per-row OOD score, higher = more OOD.

    MSP: -max softmax; MaxLogit: -max logit; Energy: -logsumexp(logits),
    computed with max-subtraction so large logits cannot overflow.
    """
    kind = ScoreKind.parse(kind)
    logits = forward_logits(model, inputs)
    if kind is ScoreKind.MSP:
        return -softmax(logits).max(axis=1)
    if kind is ScoreKind.MAXLOGIT:
        return -logits.max(axis=1)
    return -logsumexp(logits, axis=1)


def msp_confidence(model: MlpModel, inputs) -> np.ndarray:
    """Max softmax probability per row; equals -ood_score(..., MSP)."""
    return softmax(forward_logits(model, inputs)).max(axis=1)


def predictions(model: MlpModel, inputs) -> np.ndarray:
    """Argmax class per row, ties broken toward the lowest index."""
    return np.argmax(forward_logits(model, inputs), axis=1)


@dataclass
class ScoreRow:
    """One line of the score dump format."""

    example_id: int
    domain_tag: str
    label: int
    prediction: int
    score_kind: ScoreKind
    score: float


def score_dataset(
    model: MlpModel, dataset: LabeledDataset, kinds: "list[ScoreKind | str]"
) -> list[ScoreRow]:
    """Rows for every (example, kind) pair, kind-major, example-minor."""
    parsed = [ScoreKind.parse(k) for k in kinds]
    preds = predictions(model, dataset.features)
    tags = dataset.domain_tag
    rows = []
    for kind in parsed:
        scores = ood_score(model, dataset.features, kind)
        for i in range(len(dataset)):
            rows.append(
                ScoreRow(
                    example_id=i,
                    domain_tag=str(tags[i]),
                    label=int(dataset.labels[i]),
                    prediction=int(preds[i]),
                    score_kind=kind,
                    score=float(scores[i]),
                )
            )
    return rows


SCORE_CSV_HEADER = "example_id,domain_tag,label,prediction,score_kind,score"


def write_score_csv(path, rows: list[ScoreRow]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(SCORE_CSV_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.example_id},{r.domain_tag},{r.label},{r.prediction},"
                f"{r.score_kind.value},{repr(r.score)}\n"
            )


def read_score_csv(path) -> list[ScoreRow]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != SCORE_CSV_HEADER:
        raise ConfigError(f"{path}: missing score dump header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ConfigError(f"{path}: row with {len(parts)} fields, expected 6")
        tag = parts[1]
        if tag not in (DOMAIN_ID, DOMAIN_OOD):
            raise ConfigError(f"{path}: unknown domain tag {tag!r}")
        rows.append(
            ScoreRow(
                example_id=int(parts[0]),
                domain_tag=tag,
                label=int(parts[2]),
                prediction=int(parts[3]),
                score_kind=ScoreKind.parse(parts[4]),
                score=float(parts[5]),
            )
        )
    return rows
