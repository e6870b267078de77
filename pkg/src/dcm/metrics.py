"""Detection and selective-classification metrics.

Detection metrics consume two score vectors (ID and OOD) with higher =
more OOD.  Tie and threshold conventions are fixed here once: AUROC gives
half credit to ties (Mann-Whitney), FPR@TPR uses >=-threshold semantics,
and the selective curve sorts by confidence descending with a stable
tie-break on original order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import EmptyInputError, ShapeError

DEFAULT_ECE_BINS = 15

# coverage / accuracy targets reported by default
DEFAULT_COVERAGES = (0.9, 0.95, 0.99)
DEFAULT_ACCURACIES = (0.9, 0.95, 0.99)


def _score_vec(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInputError(f"{name} is empty")
    return arr


def auroc(scores_id, scores_ood) -> float:
    """P(ood > id) + half credit for ties, over all cross pairs."""
    sid = np.sort(_score_vec(scores_id, "scores_id"))
    sood = _score_vec(scores_ood, "scores_ood")
    less = np.searchsorted(sid, sood, side="left")
    less_or_eq = np.searchsorted(sid, sood, side="right")
    wins = less + 0.5 * (less_or_eq - less)
    return float(wins.sum() / (sid.size * sood.size))


def _aupr_core(pos: np.ndarray, neg: np.ndarray) -> float:
    """Step-rule area: sum over thresholds of (recall step) * precision."""
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size, bool), np.zeros(neg.size, bool)])
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    tp = np.cumsum(labels)
    predicted = np.arange(1, scores.size + 1)
    # thresholds are distinct score values: keep the last row of each tie group
    last_of_group = np.ones(scores.size, dtype=bool)
    last_of_group[:-1] = scores[:-1] != scores[1:]
    tp_g = tp[last_of_group]
    predicted_g = predicted[last_of_group]
    recall = tp_g / pos.size
    precision = tp_g / predicted_g
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def aupr(scores_id, scores_ood, positive: str = "out") -> float:
    """Area under precision-recall with the chosen domain as positive.

    positive='out' treats OOD as positive at high scores; 'in' treats ID
    as positive at low scores (scores are negated so the same sweep
    applies).
    """
    sid = _score_vec(scores_id, "scores_id")
    sood = _score_vec(scores_ood, "scores_ood")
    tag = str(positive).strip().lower()
    if tag == "out":
        return _aupr_core(sood, sid)
    if tag == "in":
        return _aupr_core(-sid, -sood)
    raise ShapeError(f"positive must be 'in' or 'out', got {positive!r}")


def fpr_at_tpr(scores_id, scores_ood, tpr_target: float) -> float:
    """FPR at the largest threshold whose OOD recall reaches tpr_target."""
    if not 0.0 < tpr_target <= 1.0:
        raise ShapeError(f"tpr_target must be in (0, 1], got {tpr_target}")
    sid = _score_vec(scores_id, "scores_id")
    sood = np.sort(_score_vec(scores_ood, "scores_ood"))[::-1]
    # after the descending sort, taking the top k means threshold sood[k-1]
    # and TPR >= k/n; the smallest such k gives the largest threshold
    k = int(math.ceil(tpr_target * sood.size - 1e-9))
    k = min(max(k, 1), sood.size)
    # ties: threshold value may admit more than k, which only raises TPR
    t = sood[k - 1]
    return float(np.mean(sid >= t))


def ece(confidences, correct, n_bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over equal-width bins on [0, 1]."""
    conf = np.asarray(confidences, dtype=np.float64).ravel()
    corr = np.asarray(correct, dtype=bool).ravel()
    if conf.shape != corr.shape:
        raise ShapeError(
            f"confidences ({conf.shape}) and correct ({corr.shape}) lengths differ"
        )
    if conf.size == 0:
        raise EmptyInputError("ece needs at least one example")
    if n_bins <= 0:
        raise ShapeError(f"n_bins must be positive, got {n_bins}")
    if np.any(conf < 0) or np.any(conf > 1):
        raise ShapeError("confidences must lie in [0, 1]")
    bins = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    total = 0.0
    for b in range(n_bins):
        mask = bins == b
        n_b = int(mask.sum())
        if n_b == 0:
            continue
        gap = abs(corr[mask].mean() - conf[mask].mean())
        total += (n_b / conf.size) * gap
    return float(total)


def selective_curve(confidences, correct) -> list[tuple[float, float]]:
    """All n (coverage, prefix accuracy) points, confidence descending.

    Ties keep their original order (stable sort), so the curve is a pure
    function of the input sequence.
    """
    conf = np.asarray(confidences, dtype=np.float64).ravel()
    corr = np.asarray(correct, dtype=bool).ravel()
    if conf.shape != corr.shape:
        raise ShapeError(
            f"confidences ({conf.shape}) and correct ({corr.shape}) lengths differ"
        )
    if conf.size == 0:
        raise EmptyInputError("selective_curve needs at least one example")
    order = np.argsort(-conf, kind="stable")
    hits = np.cumsum(corr[order])
    n = conf.size
    ks = np.arange(1, n + 1)
    return [(float(k) / n, float(h) / int(k)) for k, h in zip(ks, hits)]


def _check_curve(curve) -> list[tuple[float, float]]:
    if not curve:
        raise EmptyInputError("empty selective curve")
    return list(curve)


def acc_at_cov(curve, cov: float) -> float:
    """Accuracy of the curve point at coverage ceil(cov * n) / n."""
    pts = _check_curve(curve)
    if not 0.0 < cov <= 1.0:
        raise ShapeError(f"cov must be in (0, 1], got {cov}")
    n = len(pts)
    # the epsilon guards against float artifacts like 0.9 * 10 -> 9.000000000000002
    k = int(math.ceil(cov * n - 1e-9))
    k = min(max(k, 1), n)
    return float(pts[k - 1][1])


def cov_at_acc(curve, acc: float) -> float:
    """Largest coverage whose selective accuracy reaches acc; 0 if none."""
    pts = _check_curve(curve)
    if not 0.0 < acc <= 1.0:
        raise ShapeError(f"acc must be in (0, 1], got {acc}")
    best = 0.0
    for cov, a in pts:
        if a >= acc:
            best = max(best, cov)
    return float(best)


def sc_auc(curve) -> float:
    """Rectangle-rule area: mean accuracy over all n prefix points."""
    pts = _check_curve(curve)
    return float(np.mean([a for _, a in pts]))


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


@dataclass
class EvalReport:
    """All metrics for one (model, score kind, test set) triple.

    Fields are None when the metric family does not apply to the split
    (for example no detection metrics on a pure-ID split); None serializes
    to an empty CSV cell.
    """

    auroc: float | None = None
    aupr_in: float | None = None
    aupr_out: float | None = None
    fpr_at_95: float | None = None
    fpr_at_99: float | None = None
    id_accuracy: float | None = None
    ece: float | None = None
    sc_auc: float | None = None
    acc_at_cov: dict[float, float] | None = None
    cov_at_acc: dict[float, float] | None = None

    CSV_FIELDS = (
        "auroc",
        "aupr_in",
        "aupr_out",
        "fpr_at_95",
        "fpr_at_99",
        "id_accuracy",
        "ece",
        "sc_auc",
        "acc_at_cov_90",
        "acc_at_cov_95",
        "acc_at_cov_99",
        "cov_at_acc_90",
        "cov_at_acc_95",
        "cov_at_acc_99",
    )

    def _cell(self, name: str):
        if name.startswith("acc_at_cov_") or name.startswith("cov_at_acc_"):
            table = self.acc_at_cov if name.startswith("acc") else self.cov_at_acc
            if table is None:
                return None
            target = float(name.rsplit("_", 1)[1]) / 100.0
            return table.get(round(target, 6))
        return getattr(self, name)

    def csv_cells(self) -> list[str]:
        return [_fmt(self._cell(name)) for name in self.CSV_FIELDS]

    def to_json_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, dict):
                v = {repr(k): val for k, val in v.items()}
            out[f.name] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


@dataclass
class ScoredExample:
    """One example's view for metric computation.

    score: OOD score (higher = more OOD); is_ood: domain tag; correct:
    whether the classifier's argmax matched the label; confidence: the MSP
    confidence used for selective classification.  Only the fields needed
    by the metric family being computed must be non-None.
    """

    score: float | None = None
    is_ood: bool | None = None
    correct: bool | None = None
    confidence: float | None = None


def build_report(
    examples: list[ScoredExample],
    n_bins: int = DEFAULT_ECE_BINS,
    coverages=DEFAULT_COVERAGES,
    accuracies=DEFAULT_ACCURACIES,
) -> EvalReport:
    """Computes every metric the example fields support.

    Detection metrics need scores and both domains; selective metrics need
    confidence + correct; id_accuracy needs ID-tagged examples with
    correctness.
    """
    if not examples:
        raise EmptyInputError("no scored examples")
    report = EvalReport()

    det = [e for e in examples if e.score is not None and e.is_ood is not None]
    sid = np.array([e.score for e in det if not e.is_ood])
    sood = np.array([e.score for e in det if e.is_ood])
    if sid.size and sood.size:
        report.auroc = auroc(sid, sood)
        report.aupr_in = aupr(sid, sood, "in")
        report.aupr_out = aupr(sid, sood, "out")
        report.fpr_at_95 = fpr_at_tpr(sid, sood, 0.95)
        report.fpr_at_99 = fpr_at_tpr(sid, sood, 0.99)

    id_correct = [
        e.correct
        for e in examples
        if e.is_ood is not None and not e.is_ood and e.correct is not None
    ]
    if id_correct:
        report.id_accuracy = float(np.mean(id_correct))

    sel = [e for e in examples if e.confidence is not None and e.correct is not None]
    if sel:
        conf = np.array([e.confidence for e in sel])
        corr = np.array([e.correct for e in sel])
        report.ece = ece(conf, corr, n_bins)
        curve = selective_curve(conf, corr)
        report.sc_auc = sc_auc(curve)
        report.acc_at_cov = {round(c, 6): acc_at_cov(curve, c) for c in coverages}
        report.cov_at_acc = {round(a, 6): cov_at_acc(curve, a) for a in accuracies}
    return report


def write_curve_csv(path, curve) -> None:
    """Two-column coverage,accuracy dump of a selective curve."""
    pts = _check_curve(curve)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("coverage,accuracy\n")
        for cov, acc in pts:
            fh.write(f"{repr(float(cov))},{repr(float(acc))}\n")
