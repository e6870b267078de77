"""Independent reference implementations used to freeze expected values.

Everything here is deliberately written the slow, obvious way (explicit
loops, finite differences, threshold sweeps) so the fast vectorized code
in the package is checked against a second, structurally different path.
"""

from __future__ import annotations

import numpy as np

CLAMP = 1e-12


def forward_probs(model, inputs: np.ndarray) -> np.ndarray:
    """Forward pass done with a plain loop over layers."""
    a = np.asarray(inputs, dtype=np.float64)
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w.T + b
        if i < n_layers - 1:
            if model.activation.value == "relu":
                a = np.maximum(a, 0.0)
            else:
                a = np.tanh(a)
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def objective_value(model, ft_inputs, ft_labels, unc_inputs, lam: float) -> float:
    """Mean cross-entropy on the fine-tune batch plus lam times the mean
    uniform cross-entropy on the uncertainty batch."""
    probs = forward_probs(model, ft_inputs)
    n, c = probs.shape
    total = 0.0
    for i in range(n):
        total += -np.log(max(probs[i, ft_labels[i]], CLAMP))
    value = total / n
    if lam != 0.0 and unc_inputs is not None and len(unc_inputs):
        uprobs = forward_probs(model, unc_inputs)
        m = uprobs.shape[0]
        utotal = 0.0
        for i in range(m):
            for j in range(c):
                utotal += -np.log(max(uprobs[i, j], CLAMP)) / c
        value += lam * utotal / m
    return value


def fd_gradients(model, ft_inputs, ft_labels, unc_inputs, lam: float, h: float = 1e-6):
    """Central finite differences of the objective over every parameter."""
    d_weights, d_biases = [], []
    for arrays, grads in ((model.weights, d_weights), (model.biases, d_biases)):
        for arr in arrays:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                up = objective_value(model, ft_inputs, ft_labels, unc_inputs, lam)
                arr[idx] = orig - h
                down = objective_value(model, ft_inputs, ft_labels, unc_inputs, lam)
                arr[idx] = orig
                g[idx] = (up - down) / (2.0 * h)
            grads.append(g)
    return d_weights, d_biases


def trapezoid_auroc(scores_id, scores_ood) -> float:
    """ROC built point-by-point over distinct thresholds, trapezoid area."""
    sid = np.asarray(scores_id, dtype=np.float64)
    sood = np.asarray(scores_ood, dtype=np.float64)
    thresholds = np.unique(np.concatenate([sid, sood]))[::-1]
    fpr = [0.0]
    tpr = [0.0]
    for t in thresholds:
        fpr.append(np.mean(sid >= t))
        tpr.append(np.mean(sood >= t))
    fpr.append(1.0)
    tpr.append(1.0)
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(tpr, fpr))


def loop_aupr(scores_id, scores_ood, positive: str = "out") -> float:
    """Average precision by explicit threshold enumeration.

    positive='out': OOD positive, higher score ranked first.
    positive='in': ID positive, lower score ranked first.
    """
    sid = np.asarray(scores_id, dtype=np.float64)
    sood = np.asarray(scores_ood, dtype=np.float64)
    if positive == "out":
        pos, neg = sood, sid
    else:
        pos, neg = -sid, -sood
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    n_pos = len(pos)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        tp = int(np.sum(pos >= t))
        fp = int(np.sum(neg >= t))
        recall = tp / n_pos
        precision = tp / (tp + fp) if tp + fp else 1.0
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def loop_ece(confidences, correct, n_bins: int) -> float:
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correct, dtype=bool)
    n = len(conf)
    total = 0.0
    for b in range(n_bins):
        lo, hi = b / n_bins, (b + 1) / n_bins
        if b == n_bins - 1:
            mask = (conf >= lo) & (conf <= hi)
        else:
            mask = (conf >= lo) & (conf < hi)
        if mask.any():
            total += mask.sum() / n * abs(conf[mask].mean() - corr[mask].mean())
    return total


def loop_selective(confidences, correct):
    """(coverage, accuracy) prefix points via an explicit stable sort."""
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correct, dtype=bool)
    order = np.argsort(-conf, kind="stable")
    points = []
    n_right = 0
    for k, idx in enumerate(order, start=1):
        n_right += bool(corr[idx])
        points.append((k / len(conf), n_right / k))
    return points


def kl_div(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0:
            if qi == 0.0:
                return float("inf")
            total += pi * np.log(pi / qi)
    return total


def tv_dist(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=np.float64) - np.asarray(q)).sum())


def nearest_mean_accuracy(train, test) -> float:
    """Accuracy of classifying test points by the nearest train class mean."""
    means = np.stack([
        train.features[train.labels == c].mean(axis=0) for c in range(train.n_classes)
    ])
    dists = np.linalg.norm(test.features[:, None, :] - means[None, :, :], axis=2)
    return float(np.mean(dists.argmin(axis=1) == test.labels))
