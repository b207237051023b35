"""Personalised settled-vs-wandering classifier trained on probe labels.

The model is a bagged ensemble of weighted-Gini decision trees. Training
is single threaded and fully determined by ``(training set, seed)``.
"""
from __future__ import annotations

import enum
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import (BadFeatureVector, DegenerateFeatures, EmptyEvaluation,
                     InsufficientLabels, LayerViolation, ParseError)
from .fast import FEATURE_NAMES, FastFeatureVector
from .somatic import FEATURE_STREAMS

log = logging.getLogger(__name__)

MAGIC = "CUELAB-MODEL-v1"
MIN_PER_CLASS = 30
LABEL_WINDOW_MS = 2000


class ProbeResponse(str, enum.Enum):
    SETTLED = "settled"
    WANDERING = "wandering"
    UNCLEAR = "unclear"


@dataclass(frozen=True)
class ProbeLabel:
    t_ms: int
    response: ProbeResponse
    # self-reported wandering duration bucket, only used in probe-only sessions
    duration_bucket: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "response", ProbeResponse(self.response))


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray  # 1 = wandering, 0 = settled
    session_ids: tuple[str, ...] = ()
    feature_names: tuple[str, ...] = FEATURE_NAMES
    unclear_dropped: int = 0
    flagged_dropped: int = 0
    min_per_class: int = MIN_PER_CLASS

    def __post_init__(self):
        names = tuple(self.feature_names)
        if names != FEATURE_NAMES:
            for name in names:
                if name in FEATURE_STREAMS:
                    raise LayerViolation(FEATURE_STREAMS[name],
                                         f"feature {name!r} is a slow-path feature")
            raise LayerViolation("unknown", f"feature set {names} is not the Layer-1 set")
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(FEATURE_NAMES))
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y lengths differ")
        if not np.all(np.isfinite(self.X)):
            raise BadFeatureVector("training rows must come from quality-flagged windows")
        counts = self.class_counts()
        if min(counts) < self.min_per_class:
            raise InsufficientLabels(
                f"need {self.min_per_class} rows per class, have settled={counts[0]} "
                f"wandering={counts[1]}")

    def class_counts(self) -> tuple[int, int]:
        n1 = int(self.y.sum())
        return len(self.y) - n1, n1

    def __len__(self) -> int:
        return len(self.y)


def label_rows(probes: Iterable[ProbeLabel], features: Sequence[FastFeatureVector],
               label_window_ms: int = LABEL_WINDOW_MS):
    """Pair each decisive probe with the windows ending in ``[t - label_window_ms, t]``.

    Returns ``(rows, labels, unclear, flagged)``.
    """
    ends = np.array([f.t_ms for f in features], dtype=np.int64)
    rows, labels = [], []
    unclear = flagged = 0
    for probe in probes:
        if probe.response is ProbeResponse.UNCLEAR:
            unclear += 1
            continue
        lo = np.searchsorted(ends, probe.t_ms - label_window_ms, side="left")
        hi = np.searchsorted(ends, probe.t_ms, side="right")
        if hi <= lo:
            log.warning("probe at t=%d has no feature windows in its label window",
                        probe.t_ms)
            continue
        for fv in features[lo:hi]:
            if not fv.quality_flag:
                flagged += 1
                continue
            rows.append(fv.as_array())
            labels.append(1 if probe.response is ProbeResponse.WANDERING else 0)
    return rows, labels, unclear, flagged


def build_training_set(probes: Iterable[ProbeLabel], features: Sequence[FastFeatureVector],
                       label_window_ms: int = LABEL_WINDOW_MS,
                       min_per_class: int = MIN_PER_CLASS,
                       session_id: str = "session") -> TrainingSet:
    return build_training_set_multi({session_id: (list(probes), list(features))},
                                    label_window_ms, min_per_class)


def build_training_set_multi(sessions: Mapping[str, tuple[Sequence[ProbeLabel],
                                                          Sequence[FastFeatureVector]]],
                             label_window_ms: int = LABEL_WINDOW_MS,
                             min_per_class: int = MIN_PER_CLASS) -> TrainingSet:
    rows, labels = [], []
    unclear = flagged = 0
    for probes, features in sessions.values():
        r, l, u, f = label_rows(probes, features, label_window_ms)
        rows += r
        labels += l
        unclear += u
        flagged += f
    X = np.array(rows, dtype=float).reshape(-1, len(FEATURE_NAMES))
    return TrainingSet(X, np.array(labels, dtype=np.int64), tuple(sessions),
                       unclear_dropped=unclear, flagged_dropped=flagged,
                       min_per_class=min_per_class)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # weighted probability of wandering at each node

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return self.value[node]
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            child = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, child, node)

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Tree":
        return cls(np.array(d["feature"], dtype=np.int64),
                   np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.int64),
                   np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=float))


def _grow_tree(X, y, mult, active, mtry, w0, w1, max_depth, min_leaf, rng) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        c1 = int((mult[idx] * y[idx]).sum())
        c0 = int(mult[idx].sum()) - c1
        a, b = w0 * c0, w1 * c1
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(b / (a + b))
        return len(feature) - 1, a, b

    root, a, b = new_node(np.flatnonzero(mult > 0))
    stack = [(root, np.flatnonzero(mult > 0), 0, a, b)]
    while stack:
        node, idx, depth, a, b = stack.pop()
        if depth >= max_depth or a == 0 or b == 0 or idx.size < 2 * min_leaf:
            continue
        feats = rng.choice(active, size=mtry, replace=False)
        f, t, score = kernels.best_split(X, y, mult, idx, feats, w0, w1, min_leaf)
        parent = 2.0 * a * b / (a + b)
        if f < 0 or not score < parent - 1e-12:
            continue
        go_left = X[idx, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        lnode, la, lb = new_node(li)
        rnode, ra, rb = new_node(ri)
        feature[node], threshold[node] = int(f), float(t)
        left[node], right[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1, ra, rb))
        stack.append((lnode, li, depth + 1, la, lb))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value, dtype=float))


@dataclass
class WanderingModel:
    trees: list
    feature_means: np.ndarray
    class_weights: tuple[float, float]
    active_features: tuple[int, ...]
    user_id: str = "user"
    n_trees: int = 100
    max_depth: int = 8
    seed: int = 0
    cv_accuracy: float = math.nan
    n_rows: int = 0
    meta: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, len(FEATURE_NAMES))
        X = np.where(np.isfinite(X), X, self.feature_means)
        if not self.trees:
            return np.zeros(X.shape[0])
        return np.mean([t.apply(X) for t in self.trees], axis=0)

    # persistence

    def dumps(self) -> str:
        header = {
            "user_id": self.user_id,
            "feature_names": list(FEATURE_NAMES),
            "feature_means": self.feature_means.tolist(),
            "class_weights": list(self.class_weights),
            "active_features": list(self.active_features),
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "seed": self.seed,
            "cv_accuracy": None if math.isnan(self.cv_accuracy) else self.cv_accuracy,
            "n_rows": self.n_rows,
            "meta": self.meta,
        }
        out = io.StringIO()
        out.write(MAGIC + "\n")
        out.write(json.dumps(header, sort_keys=True) + "\n")
        for tree in self.trees:
            out.write(json.dumps(tree.to_json(), sort_keys=True, separators=(",", ":")) + "\n")
        return out.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "WanderingModel":
        lines = text.splitlines()
        if not lines or lines[0] != MAGIC:
            raise ParseError(f"missing {MAGIC} header", 1)
        try:
            header = json.loads(lines[1])
            trees = [Tree.from_json(json.loads(line)) for line in lines[2:] if line]
        except (IndexError, json.JSONDecodeError, KeyError) as exc:
            raise ParseError(f"malformed model file: {exc}") from exc
        if tuple(header["feature_names"]) != FEATURE_NAMES:
            raise LayerViolation("unknown", "model was trained on a non-Layer-1 feature set")
        cv = header["cv_accuracy"]
        return cls(trees, np.array(header["feature_means"], dtype=float),
                   tuple(header["class_weights"]), tuple(header["active_features"]),
                   header["user_id"], header["n_trees"], header["max_depth"],
                   header["seed"], math.nan if cv is None else cv, header["n_rows"],
                   header.get("meta", {}))

    @classmethod
    def load(cls, path) -> "WanderingModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _fit_forest(X, y, seed, n_trees, max_depth, min_leaf=1):
    n, d = X.shape
    active = [j for j in range(d) if np.ptp(X[:, j]) > 0]
    if not active:
        raise DegenerateFeatures("every feature column is constant")
    if len(active) < d:
        dropped = [FEATURE_NAMES[j] for j in range(d) if j not in active]
        log.warning("dropping constant feature columns %s", dropped)
    n1 = int(y.sum())
    n0 = n - n1
    w0, w1 = n / (2.0 * n0), n / (2.0 * n1)
    mtry = max(1, int(math.sqrt(len(active))))
    ss = np.random.SeedSequence(seed)
    trees = []
    for child in ss.spawn(n_trees):
        rng = np.random.default_rng(child)
        mult = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.int64)
        trees.append(_grow_tree(X, y, mult, np.array(active), mtry, w0, w1,
                                max_depth, min_leaf, rng))
    return trees, (w0, w1), tuple(active)


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per row; each class is shuffled and dealt round-robin."""
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        rng.shuffle(members)
        folds[members] = np.arange(members.size) % k
    return folds


def cross_val_accuracy(X, y, seed: int, folds: int = 5, n_trees: int = 100,
                       max_depth: int = 8) -> float:
    fold_of = stratified_folds(y, folds, seed)
    correct = 0
    for k in range(folds):
        test = fold_of == k
        trees, _, _ = _fit_forest(X[~test], y[~test], seed + 1 + k, n_trees, max_depth)
        model = WanderingModel(trees, X[~test].mean(axis=0), (1.0, 1.0), ())
        pred = model.predict_proba(X[test]) >= 0.5
        correct += int(np.sum(pred == (y[test] == 1)))
    return correct / len(y)


def train(ts: TrainingSet, seed: int, n_trees: int = 100, max_depth: int = 8,
          cv_folds: int = 5, user_id: str = "user") -> WanderingModel:
    """Fit the ensemble and attach a stratified k-fold CV accuracy estimate."""
    counts = ts.class_counts()
    if min(counts) == 0:
        raise InsufficientLabels("training set lacks one of the classes")
    trees, weights, active = _fit_forest(ts.X, ts.y, seed, n_trees, max_depth)
    cv = (cross_val_accuracy(ts.X, ts.y, seed, cv_folds, n_trees, max_depth)
          if cv_folds >= 2 else math.nan)
    return WanderingModel(trees, ts.X.mean(axis=0), weights, active, user_id,
                          n_trees, max_depth, seed, cv, len(ts),
                          {"sessions": list(ts.session_ids),
                           "unclear_dropped": ts.unclear_dropped})


def predict(model: WanderingModel, fv: FastFeatureVector) -> float:
    if not fv.quality_flag:
        raise BadFeatureVector(f"window ending at {fv.t_ms} is quality-flagged")
    return float(model.predict_proba(fv.as_array())[0])


@dataclass(frozen=True)
class HoldoutMetrics:
    accuracy: float
    sensitivity: float
    specificity: float


def confusion_rates(y_true: Sequence[int], y_pred: Sequence[int]) -> HoldoutMetrics:
    t = np.asarray(y_true, dtype=bool)
    p = np.asarray(y_pred, dtype=bool)
    if t.size == 0:
        raise EmptyEvaluation("no rows to evaluate")
    tp = int(np.sum(t & p))
    tn = int(np.sum(~t & ~p))
    pos, neg = int(t.sum()), int((~t).sum())
    return HoldoutMetrics((tp + tn) / t.size,
                          tp / pos if pos else math.nan,
                          tn / neg if neg else math.nan)


def evaluate_holdout(model: WanderingModel, labeled_rows) -> HoldoutMetrics:
    """Accuracy, sensitivity (wandering recall) and specificity at p >= 0.5.

    ``labeled_rows`` is a :class:`TrainingSet` or pairs of
    ``(FastFeatureVector, label)`` with label "wandering"/"settled" or 1/0.
    """
    if isinstance(labeled_rows, TrainingSet):
        X, y = labeled_rows.X, labeled_rows.y
    else:
        pairs = list(labeled_rows)
        if not pairs:
            raise EmptyEvaluation("no rows to evaluate")
        X = np.array([fv.as_array() for fv, _ in pairs])
        y = np.array([1 if lab in (1, "wandering", ProbeResponse.WANDERING) else 0
                      for _, lab in pairs])
    if len(y) == 0:
        raise EmptyEvaluation("no rows to evaluate")
    return confusion_rates(y, model.predict_proba(X) >= 0.5)
