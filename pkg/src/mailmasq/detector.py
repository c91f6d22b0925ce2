"""Bag-of-words email classifiers and their evaluation harness.

The feature space is a document-term matrix over the training vocabulary
(test-only words are dropped).  Three classifiers are implemented directly —
multinomial Naive Bayes with Laplace smoothing, logistic regression by
full-batch gradient descent, and a linear SVM by deterministic Pegasos-style
subgradient descent — because their exact, reproducible arithmetic is part of
the contract: identical inputs must yield identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .numerics import sigmoid

POSITIVE_DEFAULT = "legitimate"


@dataclass
class DocTermMatrix:
    """Word-count features over a lexicographically ordered training vocabulary."""

    tokens: list[str]
    counts: np.ndarray  # [docs, vocab] int64
    labels: list[str]

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))


def featurize(
    train_docs: list[list[str]],
    train_labels: list[str],
    test_docs: list[list[str]],
) -> tuple[DocTermMatrix, np.ndarray]:
    """Count-vectorize: vocabulary from the training docs only (sorted), test
    docs projected onto it with unseen words dropped."""
    if not train_docs:
        raise InputError("featurize needs a non-empty training set")
    if len(train_docs) != len(train_labels):
        raise InputError(
            f"{len(train_docs)} training docs vs {len(train_labels)} labels"
        )
    tokens = sorted({t for doc in train_docs for t in doc})
    index = {t: j for j, t in enumerate(tokens)}

    def rows(docs: list[list[str]]) -> np.ndarray:
        out = np.zeros((len(docs), len(tokens)), dtype=np.int64)
        for i, doc in enumerate(docs):
            for t in doc:
                j = index.get(t)
                if j is not None:
                    out[i, j] += 1
        return out

    return DocTermMatrix(tokens, rows(train_docs), list(train_labels)), rows(test_docs)


def _two_classes(labels: list[str]) -> list[str]:
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise InputError(f"need exactly two classes in the training set, got {classes}")
    return classes


@dataclass
class NbModel:
    classes: list[str]
    log_priors: np.ndarray  # [2]
    log_likelihoods: np.ndarray  # [2, vocab]
    alpha: float
    positive_class: str


def train_nb(dtm: DocTermMatrix, alpha: float = 1.0, positive_class: str = POSITIVE_DEFAULT) -> NbModel:
    """Multinomial Naive Bayes with Laplace smoothing, all in log space."""
    if alpha <= 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    classes = _two_classes(dtm.labels)
    y = np.asarray([classes.index(lab) for lab in dtm.labels])
    n_docs, n_vocab = dtm.counts.shape
    log_priors = np.empty(2)
    log_lik = np.empty((2, n_vocab))
    for k in range(2):
        class_counts = dtm.counts[y == k].sum(axis=0).astype(np.float64)
        total = class_counts.sum()
        log_lik[k] = np.log(class_counts + alpha) - np.log(total + alpha * n_vocab)
        log_priors[k] = np.log((y == k).sum() / n_docs)
    return NbModel(classes, log_priors, log_lik, alpha, positive_class)


def predict_nb(model: NbModel, counts: np.ndarray) -> tuple[str, dict[str, float]]:
    """Argmax of class log-posteriors; an exact tie goes to the positive class."""
    counts = np.asarray(counts, dtype=np.float64)
    scores = model.log_priors + model.log_likelihoods @ counts
    posteriors = dict(zip(model.classes, (float(s) for s in scores)))
    if scores[0] == scores[1]:
        return model.positive_class, posteriors
    return model.classes[int(np.argmax(scores))], posteriors


@dataclass
class LrModel:
    weights: np.ndarray
    bias: float
    lam: float
    classes: list[str]
    positive_class: str
    loss_trace: list[float] = field(default_factory=list)


def lr_loss_and_grad(
    x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float
) -> tuple[float, np.ndarray, float]:
    """Mean negative log-likelihood with an L2 penalty on the weights (the
    bias is unregularized), plus its exact gradient."""
    z = x @ w + b
    p = sigmoid(z)
    n = x.shape[0]
    # stable NLL: log(1+exp(-|z|)) + max(z,0) - z*y
    nll = float(np.mean(np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - z * y))
    loss = nll + 0.5 * lam * float(w @ w)
    resid = (p - y) / n
    return loss, x.T @ resid + lam * w, float(resid.sum())


def train_lr(
    dtm: DocTermMatrix,
    lam: float = 1e-4,
    lr: float = 0.1,
    iters: int = 500,
    positive_class: str = POSITIVE_DEFAULT,
) -> LrModel:
    """Full-batch gradient descent from zero initialization — deterministic."""
    if iters < 1:
        raise InputError(f"iters must be >= 1, got {iters}")
    classes = _two_classes(dtm.labels)
    if positive_class not in classes:
        raise InputError(f"positive class {positive_class!r} not in {classes}")
    y = np.asarray([1.0 if lab == positive_class else 0.0 for lab in dtm.labels])
    x = dtm.counts.astype(np.float64)
    w = np.zeros(x.shape[1])
    b = 0.0
    trace = []
    for _ in range(iters):
        loss, gw, gb = lr_loss_and_grad(x, y, w, b, lam)
        trace.append(loss)
        w -= lr * gw
        b -= lr * gb
    return LrModel(w, b, lam, classes, positive_class, trace)


def predict_lr(model: LrModel, counts: np.ndarray) -> tuple[str, float]:
    """Positive class iff the predicted probability is >= 0.5."""
    counts = np.asarray(counts, dtype=np.float64)
    prob = float(sigmoid(np.asarray([counts @ model.weights + model.bias]))[0])
    negative = next(c for c in model.classes if c != model.positive_class)
    return (model.positive_class if prob >= 0.5 else negative), prob


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    lam: float
    classes: list[str]
    positive_class: str


def train_svm(
    dtm: DocTermMatrix,
    lam: float = 1e-2,
    epochs: int = 100,
    positive_class: str = POSITIVE_DEFAULT,
) -> SvmModel:
    """Linear SVM by subgradient descent on the L2-regularized hinge loss.

    Examples are visited in their fixed dataset order with step size 1/(lam*t)
    — no random sampling, so training is exactly reproducible.
    """
    if epochs < 1:
        raise InputError(f"epochs must be >= 1, got {epochs}")
    classes = _two_classes(dtm.labels)
    if positive_class not in classes:
        raise InputError(f"positive class {positive_class!r} not in {classes}")
    y = np.asarray([1.0 if lab == positive_class else -1.0 for lab in dtm.labels])
    x = dtm.counts.astype(np.float64)
    w = np.zeros(x.shape[1])
    b = 0.0
    t = 0
    for _ in range(epochs):
        for i in range(x.shape[0]):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (x[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * x[i]
                b += eta * y[i]
    return SvmModel(w, b, lam, classes, positive_class)


def predict_svm(model: SvmModel, counts: np.ndarray) -> tuple[str, float]:
    """Sign of the margin decides; a margin of exactly 0 goes positive."""
    counts = np.asarray(counts, dtype=np.float64)
    margin = float(counts @ model.weights + model.bias)
    negative = next(c for c in model.classes if c != model.positive_class)
    return (model.positive_class if margin >= 0.0 else negative), margin


@dataclass
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    positive_class: str
    flags: list[str] = field(default_factory=list)


def evaluate(predictions: list[str], truths: list[str], positive_class: str) -> EvalReport:
    """Confusion counts and accuracy/precision/recall/F1 for the positive
    class.  A zero denominator makes the affected metric 0 and adds a flag."""
    if len(predictions) != len(truths):
        raise InputError(f"{len(predictions)} predictions vs {len(truths)} truths")
    tp = fp = tn = fn = 0
    for pred, truth in zip(predictions, truths):
        pred_pos = pred == positive_class
        truth_pos = truth == positive_class
        if pred_pos and truth_pos:
            tp += 1
        elif pred_pos:
            fp += 1
        elif truth_pos:
            fn += 1
        else:
            tn += 1
    flags = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            flags.append(f"{name}_zero_denominator")
            return 0.0
        return num / den

    accuracy = ratio(tp + tn, tp + fp + tn + fn, "accuracy")
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    if precision + recall == 0.0:
        flags.append("f1_zero_denominator")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return EvalReport(tp, fp, tn, fn, accuracy, precision, recall, f1, positive_class, flags)


@dataclass
class DetectorParams:
    alpha: float = 1.0
    lr_lam: float = 1e-4
    lr_rate: float = 0.1
    lr_iters: int = 500
    svm_lam: float = 1e-2
    svm_epochs: int = 100


def run_detection_experiment(
    train_legit: list[list[str]],
    train_phish: list[list[str]],
    test_legit: list[list[str]],
    test_generated: list[list[str]],
    positive_class: str = POSITIVE_DEFAULT,
    hp: DetectorParams | None = None,
) -> dict[str, EvalReport]:
    """Train all three classifiers on legitimate-vs-phishing and score them on
    held-out legitimate emails plus generated ones (ground truth: phishing).

    Returns reports keyed "svm", "nb", "lr".
    """
    if not train_legit or not train_phish:
        raise InputError("both training classes must be non-empty")
    if not test_legit and not test_generated:
        raise InputError("the test set is empty")
    hp = hp or DetectorParams()
    train_docs = list(train_legit) + list(train_phish)
    train_labels = ["legitimate"] * len(train_legit) + ["phishing"] * len(train_phish)
    test_docs = list(test_legit) + list(test_generated)
    truths = ["legitimate"] * len(test_legit) + ["phishing"] * len(test_generated)
    dtm, test_counts = featurize(train_docs, train_labels, test_docs)

    nb = train_nb(dtm, hp.alpha, positive_class)
    lr = train_lr(dtm, hp.lr_lam, hp.lr_rate, hp.lr_iters, positive_class)
    svm = train_svm(dtm, hp.svm_lam, hp.svm_epochs, positive_class)

    preds = {
        "svm": [predict_svm(svm, row)[0] for row in test_counts],
        "nb": [predict_nb(nb, row)[0] for row in test_counts],
        "lr": [predict_lr(lr, row)[0] for row in test_counts],
    }
    return {name: evaluate(p, truths, positive_class) for name, p in preds.items()}
