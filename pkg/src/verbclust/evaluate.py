"""Binary message classification over predicate-cluster features.

An L2-regularized logistic regression is trained with full-batch gradient
descent (backtracking line search), scored with precision/recall/F1 on the
positive class, and cross-validated over stratified folds whose sizes are
balanced globally and per class.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from .errors import DataError
from .featurize import FeatureVector, feature_matrix

logger = logging.getLogger(__name__)

_ARMIJO_C = 1e-4
_MIN_STEP = 1e-20


class LabeledInstance(NamedTuple):
    message_id: str
    features: FeatureVector
    label: int


class FoldMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float


@dataclass
class LogregFit:
    weights: np.ndarray
    bias: float
    loss: float
    n_iter: int
    converged: bool


@dataclass
class CvReport:
    """Per-fold positive-class metrics plus the run's configuration."""

    folds: list[FoldMetrics]
    n_folds: int
    lam: float
    seed: int
    binary: bool

    @property
    def mean_precision(self) -> float:
        return float(np.mean([f.precision for f in self.folds]))

    @property
    def mean_recall(self) -> float:
        return float(np.mean([f.recall for f in self.folds]))

    @property
    def mean_f1(self) -> float:
        return float(np.mean([f.f1 for f in self.folds]))


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-d, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    return X, y


def logreg_loss(X, y, weights, bias, lam):
    """Mean logistic log-loss plus lam * ||weights||^2 / 2 (bias free)."""
    z = X @ weights + bias
    data = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(data + 0.5 * lam * weights @ weights)


def logreg_gradient(X, y, weights, bias, lam):
    z = X @ weights + bias
    resid = (expit(z) - y) / len(y)
    return X.T @ resid + lam * weights, float(resid.sum())


def train_logreg(X, y, lam=1.0, tol=1e-6, max_iter=1000,
                 init_weights=None, init_bias=0.0) -> LogregFit:
    """Minimize the regularized log-loss by gradient descent.

    Each step's length is found by halving until the Armijo sufficient-
    decrease test passes. Stops when the gradient norm falls to ``tol`` or
    after ``max_iter`` iterations. Requires both classes in ``y``.
    """
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError(f"training labels contain the single class "
                         f"{int(classes[0])}; need both 0 and 1")
    if init_weights is None:
        weights = np.zeros(X.shape[1])
    else:
        weights = np.asarray(init_weights, dtype=np.float64).copy()
        if weights.shape != (X.shape[1],):
            raise ValueError(f"init weights have shape {weights.shape}, "
                             f"expected ({X.shape[1]},)")
    if max_iter < 0:
        raise ValueError(f"max_iter must be >= 0, got {max_iter}")
    bias = float(init_bias)
    loss = logreg_loss(X, y, weights, bias, lam)
    step = 1.0
    n_iter = 0
    converged = False
    while True:
        grad_w, grad_b = logreg_gradient(X, y, weights, bias, lam)
        grad_sq = float(grad_w @ grad_w + grad_b * grad_b)
        if np.sqrt(grad_sq) <= tol:
            converged = True
            break
        if n_iter >= max_iter:
            break
        n_iter += 1
        step = min(step * 2.0, 1e6)
        while True:
            trial_w = weights - step * grad_w
            trial_b = bias - step * grad_b
            trial_loss = logreg_loss(X, y, trial_w, trial_b, lam)
            if trial_loss <= loss - _ARMIJO_C * step * grad_sq:
                break
            step *= 0.5
            if step < _MIN_STEP:
                # No float step can decrease the loss further.
                return LogregFit(weights, bias, loss, n_iter, True)
        weights, bias, loss = trial_w, trial_b, trial_loss
    return LogregFit(weights, bias, loss, n_iter, converged)


class LogisticRegression(BaseEstimator):
    """Estimator wrapper around :func:`train_logreg`."""

    def __init__(self, lam=1.0, tol=1e-6, max_iter=1000):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        fit = train_logreg(X, y, lam=self.lam, tol=self.tol,
                           max_iter=self.max_iter)
        self.coef_ = fit.weights
        self.intercept_ = fit.bias
        self.loss_ = fit.loss
        self.n_iter_ = fit.n_iter
        self.converged_ = fit.converged
        return self

    def decision_function(self, X):
        if not hasattr(self, "coef_"):
            raise ValueError("model is not fitted; call fit first")
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def predict(self, X):
        return (self.decision_function(X) >= 0.0).astype(int)


def f_score(y_true, y_pred) -> FoldMetrics:
    """Positive-class precision, recall, and F1; each is 0 when its
    denominator is 0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return FoldMetrics(precision, recall, f1)


def stratified_folds(labels, n_folds, seed=0) -> np.ndarray:
    """Random fold assignment preserving class proportions.

    Within each class the shuffled instances are dealt round-robin-equally,
    with remainder instances sent to the currently smallest folds (ties to
    the lowest fold index), so fold sizes also balance globally to within
    one.
    """
    labels = np.asarray(labels)
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    rng = np.random.default_rng(seed)
    fold_sizes = np.zeros(n_folds, dtype=int)
    assignment = np.full(len(labels), -1, dtype=int)
    for cls in sorted(np.unique(labels).tolist()):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        if len(idx) < n_folds:
            raise ValueError(
                f"class {cls!r} has only {len(idx)} instances for {n_folds} "
                f"folds; use fewer folds")
        base, extra = divmod(len(idx), n_folds)
        order = np.lexsort((np.arange(n_folds), fold_sizes))
        bonus = set(order[:extra].tolist())
        start = 0
        for fold in range(n_folds):
            take = base + (1 if fold in bonus else 0)
            assignment[idx[start:start + take]] = fold
            fold_sizes[fold] += take
            start += take
    return assignment


def cross_validate(instances: Sequence[LabeledInstance], n_folds=10, lam=1.0,
                   seed=0, binary=True, n_features=None) -> CvReport:
    """Stratified k-fold evaluation of the logistic classifier."""
    instances = list(instances)
    if len({inst.message_id for inst in instances}) != len(instances):
        raise ValueError("instances carry duplicate message ids")
    labels = np.array([inst.label for inst in instances])
    if n_features is None:
        n_features = 1 + max((max(inst.features.counts, default=0)
                              for inst in instances), default=0)
    X = feature_matrix([inst.features for inst in instances], n_features,
                       binary=binary)
    assignment = stratified_folds(labels, n_folds, seed)
    folds = []
    for fold in range(n_folds):
        test = assignment == fold
        fit = train_logreg(X[~test], labels[~test], lam=lam)
        predictions = (X[test] @ fit.weights + fit.bias >= 0.0).astype(int)
        folds.append(f_score(labels[test], predictions))
    return CvReport(folds, n_folds, lam, seed, binary)


def load_labels(path) -> dict[str, int]:
    """Read message labels (TSV: message id, 0 or 1)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read label file {path}: {exc}") from exc
    labels: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(fields)}")
        message_id = fields[0].strip()
        if not message_id:
            raise DataError(f"{path}:{lineno}: empty message id")
        if message_id in labels:
            raise DataError(f"{path}:{lineno}: duplicate message id {message_id!r}")
        if fields[1].strip() not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: label must be 0 or 1, "
                            f"got {fields[1].strip()!r}")
        labels[message_id] = int(fields[1])
    return labels


def build_instances(vectors: Sequence[FeatureVector],
                    labels: dict[str, int]) -> list[LabeledInstance]:
    """Join feature vectors with labels; unlabeled messages are skipped
    with a warning, labels without features are an error."""
    by_id = {vec.message_id: vec for vec in vectors}
    missing = sorted(set(labels) - set(by_id))
    if missing:
        shown = ", ".join(missing[:5])
        raise DataError(f"{len(missing)} labeled message(s) have no feature "
                        f"vector: {shown}")
    instances = []
    skipped = 0
    for vec in vectors:
        if vec.message_id in labels:
            instances.append(LabeledInstance(vec.message_id, vec,
                                             labels[vec.message_id]))
        else:
            skipped += 1
    if skipped:
        logger.warning("skipped %d unlabeled message(s)", skipped)
    return instances


def save_report(report: CvReport, path) -> None:
    """One TSV row per fold (precision, recall, f1), then a mean row."""
    lines = ["fold\tprecision\trecall\tf1"]
    for i, fold in enumerate(report.folds):
        lines.append(f"{i}\t{fold.precision!r}\t{fold.recall!r}\t{fold.f1!r}")
    lines.append(f"mean\t{report.mean_precision!r}\t{report.mean_recall!r}"
                 f"\t{report.mean_f1!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_report_json(report: CvReport, path, config_echo=None) -> None:
    payload = {
        "folds": [{"precision": f.precision, "recall": f.recall, "f1": f.f1}
                  for f in report.folds],
        "mean_precision": report.mean_precision,
        "mean_recall": report.mean_recall,
        "mean_f1": report.mean_f1,
        "n_folds": report.n_folds,
        "lambda": report.lam,
        "seed": report.seed,
        "binary": report.binary,
    }
    if config_echo is not None:
        payload["config"] = config_echo
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
