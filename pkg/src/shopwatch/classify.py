"""Pose classification: kNN and a multiclass averaged perceptron, with
k-fold cross-validation and keep-the-better-one model selection.

Class indices follow the order of PoseLabel. Tie rules are fixed so every
prediction is deterministic:

* kNN neighbor selection orders by (distance, training index) so equal
  distances at the k-th rank resolve to the lower index.
* kNN vote ties resolve to the tied class with the smallest mean neighbor
  distance, then to the lowest class index.
* Linear argmax ties resolve to the lowest class index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .model import FEATURE_DIM, POSE_LABELS, FeatureVector, PoseLabel, SchemaError

DEFAULT_KNN_K = 5
DEFAULT_EPOCHS = 10
KNN_K_SWEEP = (1, 3, 5, 11)


class ModelError(ValueError):
    pass


class TrainingError(ValueError):
    pass


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    features: FeatureVector
    label: PoseLabel

    def to_dict(self) -> dict:
        return {"features": self.features.to_dict(), "label": self.label.value}

    @classmethod
    def from_dict(cls, obj: dict) -> "LabeledSample":
        if "features" not in obj or not isinstance(obj["features"], dict):
            raise SchemaError("features", "missing or not an object")
        return cls(
            features=FeatureVector.from_dict(obj["features"]),
            label=PoseLabel.parse(obj.get("label"), "label"),
        )


@dataclass(frozen=True, eq=False)
class KnnModel:
    """Lazy learner: the retained training matrix plus the neighbor count."""

    k: int
    train_values: np.ndarray  # (n, FEATURE_DIM)
    train_labels: tuple[PoseLabel, ...]

    kind = "KNN"

    def __post_init__(self):
        n = len(self.train_labels)
        if n == 0:
            raise ModelError("empty training set")
        if not 1 <= self.k <= n:
            raise ModelError(f"k must be in [1, {n}], got {self.k}")
        if self.train_values.shape != (n, FEATURE_DIM):
            raise ModelError(f"training matrix must be ({n}, {FEATURE_DIM})")


@dataclass(frozen=True, eq=False)
class LinearModel:
    """One weight row plus bias per pose class."""

    weights: np.ndarray  # (len(POSE_LABELS), FEATURE_DIM)
    biases: np.ndarray  # (len(POSE_LABELS),)

    kind = "Linear"

    def __post_init__(self):
        n_classes = len(POSE_LABELS)
        if self.weights.shape != (n_classes, FEATURE_DIM):
            raise ModelError(f"weights must be ({n_classes}, {FEATURE_DIM})")
        if self.biases.shape != (n_classes,):
            raise ModelError(f"biases must be ({n_classes},)")


TrainedModel = Union[KnnModel, LinearModel]


def _query_vector(query: Union[FeatureVector, Sequence[float], np.ndarray]) -> np.ndarray:
    values = query.values if isinstance(query, FeatureVector) else query
    x = np.asarray(values, dtype=float)
    if x.shape != (FEATURE_DIM,):
        raise ModelError(f"query must have {FEATURE_DIM} values, got shape {x.shape}")
    return x


def _vote(neighbor_labels: Sequence[int], neighbor_dists: np.ndarray) -> int:
    """Majority vote over class indices with the fixed tie rules."""
    counts = np.bincount(neighbor_labels, minlength=len(POSE_LABELS))
    top = counts.max()
    tied = [c for c in range(len(POSE_LABELS)) if counts[c] == top]
    if len(tied) == 1:
        return tied[0]
    means = {}
    for c in tied:
        member_dists = [d for lbl, d in zip(neighbor_labels, neighbor_dists) if lbl == c]
        means[c] = sum(member_dists) / len(member_dists)
    best = min(means.values())
    return min(c for c in tied if means[c] == best)


def knn_predict(model: KnnModel, query: Union[FeatureVector, Sequence[float]]) -> PoseLabel:
    """Label of the majority among the k nearest training samples (Euclidean)."""
    x = _query_vector(query)
    dists = np.sqrt(((model.train_values - x) ** 2).sum(axis=1))
    order = np.argsort(dists, kind="stable")[: model.k]
    labels = [model.train_labels[i].index for i in order]
    return POSE_LABELS[_vote(labels, dists[order])]


def _cross_distances(queries: np.ndarray, train: np.ndarray) -> np.ndarray:
    return np.sqrt(
        ((queries[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
    )


def _knn_predict_batch(model: KnnModel, queries: np.ndarray) -> list[PoseLabel]:
    dists = _cross_distances(queries, model.train_values)
    label_idx = np.array([lbl.index for lbl in model.train_labels])
    out = []
    for row in dists:
        order = np.argsort(row, kind="stable")[: model.k]
        out.append(POSE_LABELS[_vote(label_idx[order].tolist(), row[order])])
    return out


def _design_matrix(data: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([s.features.values for s in data], dtype=float)
    y = np.array([s.label.index for s in data], dtype=int)
    return X, y


def linear_train(
    data: Sequence[LabeledSample],
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
) -> LinearModel:
    """Train a multiclass averaged perceptron.

    The pass order is a single seeded shuffle reused every epoch, so training
    is a pure function of (data order, epochs, seed).
    """
    if not data:
        raise TrainingError("training data is empty")
    present = {s.label for s in data}
    missing = [lbl.value for lbl in POSE_LABELS if lbl not in present]
    if missing:
        raise TrainingError(f"no samples for class(es): {', '.join(missing)}")
    X, y = _design_matrix(data)
    n_classes = len(POSE_LABELS)
    order = np.random.default_rng(seed).permutation(len(data))

    w = np.zeros((n_classes, FEATURE_DIM))
    b = np.zeros(n_classes)
    acc_w = np.zeros_like(w)  # weighted update cache for averaging
    acc_b = np.zeros_like(b)
    step = 1
    for _ in range(epochs):
        for i in order:
            scores = w @ X[i] + b
            pred = int(np.argmax(scores))  # argmax takes the lowest index on ties
            truth = int(y[i])
            if pred != truth:
                w[truth] += X[i]
                b[truth] += 1.0
                w[pred] -= X[i]
                b[pred] -= 1.0
                acc_w[truth] += step * X[i]
                acc_b[truth] += step
                acc_w[pred] -= step * X[i]
                acc_b[pred] -= step
            step += 1
    return LinearModel(weights=w - acc_w / step, biases=b - acc_b / step)


def linear_predict(model: LinearModel, query: Union[FeatureVector, Sequence[float]]) -> PoseLabel:
    """Argmax of per-class scores w_c . x + b_c; ties go to the lowest class index."""
    x = _query_vector(query)
    scores = model.weights @ x + model.biases
    return POSE_LABELS[int(np.argmax(scores))]


def predict(model: TrainedModel, query: Union[FeatureVector, Sequence[float]]) -> PoseLabel:
    if isinstance(model, KnnModel):
        return knn_predict(model, query)
    return linear_predict(model, query)


@dataclass(frozen=True)
class ModelCvResult:
    kind: str
    fold_accuracies: tuple[float, ...]
    fold_sizes: tuple[int, ...]
    params: dict = field(default_factory=dict)

    @property
    def mean_accuracy(self) -> float:
        total = sum(self.fold_sizes)
        return sum(a * n for a, n in zip(self.fold_accuracies, self.fold_sizes)) / total


@dataclass(frozen=True)
class CvReport:
    fold_count: int
    seed: int
    knn: ModelCvResult
    linear: ModelCvResult
    knn_sweep: dict  # k -> mean accuracy across folds
    selected_kind: str

    @property
    def fold_sizes(self) -> tuple[int, ...]:
        return self.knn.fold_sizes

    def per_fold_best(self) -> tuple[float, ...]:
        """Per-fold accuracy of whichever model was better on that fold."""
        return tuple(
            max(a, b) for a, b in zip(self.knn.fold_accuracies, self.linear.fold_accuracies)
        )

    def to_dict(self) -> dict:
        return {
            "fold_count": self.fold_count,
            "seed": self.seed,
            "knn": {
                "fold_accuracies": list(self.knn.fold_accuracies),
                "mean_accuracy": self.knn.mean_accuracy,
                "params": self.knn.params,
            },
            "linear": {
                "fold_accuracies": list(self.linear.fold_accuracies),
                "mean_accuracy": self.linear.mean_accuracy,
                "params": self.linear.params,
            },
            "knn_sweep": {str(k): v for k, v in self.knn_sweep.items()},
            "fold_sizes": list(self.fold_sizes),
            "selected_kind": self.selected_kind,
        }


def partition_folds(n: int, fold_count: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle, then contiguous folds whose sizes differ by at most one."""
    if fold_count < 2:
        raise PartitionError(f"fold_count must be >= 2, got {fold_count}")
    if n < fold_count:
        raise PartitionError(f"need at least {fold_count} samples, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, fold_count)
    folds = []
    start = 0
    for f in range(fold_count):
        size = base + (1 if f < extra else 0)
        folds.append(perm[start : start + size])
        start += size
    return folds


def kfold_cv(
    data: Sequence[LabeledSample],
    fold_count: int = 10,
    seed: int = 0,
    knn_k_values: Iterable[int] = KNN_K_SWEEP,
    epochs: int = DEFAULT_EPOCHS,
) -> CvReport:
    """Cross-validate both model kinds on the same folds.

    kNN is swept over ``knn_k_values`` and reported at the best-mean k; the
    linear model trains per fold with the given epochs and seed.
    """
    folds = partition_folds(len(data), fold_count, seed)
    X, _ = _design_matrix(data)
    labels = [s.label for s in data]
    k_values = [k for k in knn_k_values]

    knn_fold_acc: dict[int, list[float]] = {k: [] for k in k_values}
    linear_fold_acc: list[float] = []
    fold_sizes: list[int] = []

    for test_idx in folds:
        test_set = set(int(i) for i in test_idx)
        train_idx = np.array([i for i in range(len(data)) if i not in test_set])
        fold_sizes.append(len(test_idx))
        queries = X[test_idx]
        truth = [labels[int(i)] for i in test_idx]

        # One distance matrix per fold feeds the whole k sweep.
        dists = _cross_distances(queries, X[train_idx])
        orders = np.argsort(dists, axis=1, kind="stable")
        label_idx = np.array([labels[int(i)].index for i in train_idx])
        for k in k_values:
            if k > len(train_idx):
                raise PartitionError(f"k={k} exceeds training fold size {len(train_idx)}")
            correct = 0
            for row, order, t in zip(dists, orders, truth):
                top = order[:k]
                pred = POSE_LABELS[_vote(label_idx[top].tolist(), row[top])]
                correct += pred is t
            knn_fold_acc[k].append(correct / len(truth))

        train_samples = [data[int(i)] for i in train_idx]
        lin = linear_train(train_samples, epochs=epochs, seed=seed)
        lin_preds = [linear_predict(lin, q) for q in queries]
        linear_fold_acc.append(sum(p is t for p, t in zip(lin_preds, truth)) / len(truth))

    sizes = tuple(fold_sizes)
    total = sum(sizes)
    sweep = {
        k: sum(a * n for a, n in zip(accs, sizes)) / total for k, accs in knn_fold_acc.items()
    }
    best_k = min(k for k in k_values if sweep[k] == max(sweep.values()))
    knn_result = ModelCvResult(
        kind="KNN",
        fold_accuracies=tuple(knn_fold_acc[best_k]),
        fold_sizes=sizes,
        params={"k": best_k},
    )
    linear_result = ModelCvResult(
        kind="Linear",
        fold_accuracies=tuple(linear_fold_acc),
        fold_sizes=sizes,
        params={"epochs": epochs, "seed": seed},
    )
    selected = "Linear" if linear_result.mean_accuracy > knn_result.mean_accuracy else "KNN"
    return CvReport(
        fold_count=fold_count,
        seed=seed,
        knn=knn_result,
        linear=linear_result,
        knn_sweep=sweep,
        selected_kind=selected,
    )


def select_better(report: CvReport) -> str:
    """Kind with the higher mean CV accuracy; an exact tie keeps KNN."""
    return "Linear" if report.linear.mean_accuracy > report.knn.mean_accuracy else "KNN"


def train_selected(
    data: Sequence[LabeledSample], report: CvReport, epochs: int = DEFAULT_EPOCHS
) -> TrainedModel:
    """Fit the CV-selected kind on the full dataset."""
    if report.selected_kind == "Linear":
        return linear_train(data, epochs=epochs, seed=report.seed)
    X, _ = _design_matrix(data)
    return KnnModel(
        k=report.knn.params.get("k", DEFAULT_KNN_K),
        train_values=X,
        train_labels=tuple(s.label for s in data),
    )


def model_to_dict(model: TrainedModel, metadata: dict | None = None) -> dict:
    if isinstance(model, KnnModel):
        parameters = {
            "k": model.k,
            "train_values": model.train_values.tolist(),
            "train_labels": [lbl.value for lbl in model.train_labels],
        }
    else:
        parameters = {
            "weights": model.weights.tolist(),
            "biases": model.biases.tolist(),
        }
    return {"kind": model.kind, "parameters": parameters, "metadata": metadata or {}}


def model_from_dict(obj: dict) -> TrainedModel:
    kind = obj.get("kind")
    params = obj.get("parameters")
    if not isinstance(params, dict):
        raise ModelError("parameters: missing or not an object")
    try:
        if kind == "KNN":
            labels = tuple(PoseLabel.parse(v, "train_labels") for v in params["train_labels"])
            return KnnModel(
                k=int(params["k"]),
                train_values=np.asarray(params["train_values"], dtype=float),
                train_labels=labels,
            )
        if kind == "Linear":
            return LinearModel(
                weights=np.asarray(params["weights"], dtype=float),
                biases=np.asarray(params["biases"], dtype=float),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed {kind} parameters: {exc}") from exc
    raise ModelError(f"unknown model kind {kind!r}")


def save_model(model: TrainedModel, path: str | Path, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, metadata)))


def load_model(path: str | Path) -> TrainedModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc.msg}") from exc
    return model_from_dict(obj)


def load_dataset(path: str | Path) -> list[LabeledSample]:
    """Read newline-delimited JSON LabeledSamples."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(LabeledSample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, SchemaError) as exc:
                raise ModelError(f"dataset line {line_number}: {exc}") from exc
    return samples


def save_dataset(samples: Iterable[LabeledSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_dict()) + "\n")
