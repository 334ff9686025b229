import numpy as np
import pytest

from reference import knn_label_reference
from shopwatch.classify import (
    CvReport,
    KnnModel,
    LinearModel,
    ModelCvResult,
    ModelError,
    PartitionError,
    TrainingError,
    LabeledSample,
    kfold_cv,
    knn_predict,
    linear_predict,
    linear_train,
    load_model,
    model_from_dict,
    model_to_dict,
    partition_folds,
    save_model,
    select_better,
    train_selected,
)
from shopwatch.model import FEATURE_DIM, POSE_LABELS, FeatureVector, PoseLabel


def vec(*coords) -> np.ndarray:
    out = np.zeros(FEATURE_DIM)
    out[: len(coords)] = coords
    return out


def feature(*coords, ts=0) -> FeatureVector:
    return FeatureVector(values=tuple(vec(*coords)), source_frame=f"f{ts}", timestamp=ts)


def sample(label: PoseLabel, *coords) -> LabeledSample:
    return LabeledSample(features=feature(*coords), label=label)


def knn_from(points, labels, k) -> KnnModel:
    return KnnModel(
        k=k,
        train_values=np.array([vec(*p) for p in points]),
        train_labels=tuple(labels),
    )


A, B, C, D = POSE_LABELS


def test_k1_exact_training_point():
    model = knn_from([(0, 0), (5, 5)], [A, B], k=1)
    assert knn_predict(model, feature(5, 5)) is B


def test_three_nearest_majority():
    model = knn_from([(0, 0), (0, 1), (1, 0), (10, 10)], [A, A, A, B], k=3)
    assert knn_predict(model, feature(0.1, 0.1)) is A


def test_knn_matches_exhaustive_reference():
    rng = np.random.default_rng(404)
    n = 200
    points = rng.normal(0, 1, size=(n, FEATURE_DIM))
    labels = [POSE_LABELS[int(i)] for i in rng.integers(0, 4, size=n)]
    for k in (1, 3, 5, 11):
        model = KnnModel(k=k, train_values=points, train_labels=tuple(labels))
        for _ in range(40):
            q = rng.normal(0, 1, size=FEATURE_DIM)
            mine = knn_predict(model, q)
            ref = knn_label_reference(points.tolist(), [l.index for l in labels], k, q.tolist())
            assert mine.index == ref


def test_knn_duplicate_distance_tie_uses_lower_index():
    # two training points at the same spot with different labels; k=1 must pick index 0
    model = knn_from([(1, 1), (1, 1)], [C, A], k=1)
    assert knn_predict(model, feature(1, 1)) is C


def test_knn_vote_tie_smallest_mean_distance():
    # k=2: one A at distance 1, one B at distance 2 -> tie on count, A closer
    model = knn_from([(1, 0), (-2, 0)], [A, B], k=2)
    assert knn_predict(model, feature(0, 0)) is A


def test_knn_empty_training_set_rejected():
    with pytest.raises(ModelError):
        KnnModel(k=1, train_values=np.zeros((0, FEATURE_DIM)), train_labels=())


def test_knn_k_bounds():
    with pytest.raises(ModelError):
        knn_from([(0, 0)], [A], k=2)


def separable_data():
    data = []
    for lbl, x in ((A, 10.0), (B, -10.0)):
        for d in (-0.5, 0.0, 0.5):
            data.append(sample(lbl, x + d))
    data.append(sample(C, 0.0, 10.0))
    data.append(sample(D, 0.0, -10.0))
    return data


def test_linear_separable_training_points_correct():
    data = separable_data()
    model = linear_train(data, epochs=10, seed=1)
    for s in data:
        assert linear_predict(model, s.features) is s.label


def test_linear_training_deterministic():
    data = separable_data()
    m1 = linear_train(data, epochs=10, seed=3)
    m2 = linear_train(data, epochs=10, seed=3)
    assert np.array_equal(m1.weights, m2.weights)
    assert np.array_equal(m1.biases, m2.biases)


def test_linear_missing_class_rejected():
    data = [sample(A, 1.0), sample(B, -1.0)]
    with pytest.raises(TrainingError):
        linear_train(data)


def test_linear_zero_model_predicts_first_class():
    model = LinearModel(weights=np.zeros((4, FEATURE_DIM)), biases=np.zeros(4))
    assert linear_predict(model, feature(3.0, -2.0)) is POSE_LABELS[0]


def test_linear_argmax_consistency():
    rng = np.random.default_rng(77)
    model = LinearModel(weights=rng.normal(size=(4, FEATURE_DIM)), biases=rng.normal(size=4))
    for _ in range(50):
        q = rng.normal(size=FEATURE_DIM)
        label = linear_predict(model, q)
        scores = model.weights @ q + model.biases
        assert scores[label.index] >= scores.max() - 1e-12


def test_partition_1103_into_10():
    folds = partition_folds(1103, 10, seed=7)
    sizes = sorted(len(f) for f in folds)
    assert sizes == [110] * 7 + [111] * 3
    flat = np.concatenate(folds)
    assert len(set(flat.tolist())) == 1103
    assert set(flat.tolist()) == set(range(1103))


def test_partition_deterministic_and_seed_sensitive():
    a = partition_folds(100, 7, seed=5)
    b = partition_folds(100, 7, seed=5)
    c = partition_folds(100, 7, seed=6)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))


def test_partition_too_few_samples():
    with pytest.raises(PartitionError):
        partition_folds(5, 10, seed=0)
    with pytest.raises(PartitionError):
        partition_folds(10, 1, seed=0)


def clustered_data(n_per_class=30, spread=0.05, seed=11):
    rng = np.random.default_rng(seed)
    centers = {A: (0, 0), B: (50, 0), C: (0, 50), D: (50, 50)}
    data = []
    for lbl, (cx, cy) in centers.items():
        for _ in range(n_per_class):
            data.append(sample(lbl, cx + rng.normal(0, spread), cy + rng.normal(0, spread)))
    rng.shuffle(data)
    return data


def test_cv_perfectly_separated_knn_is_perfect():
    report = kfold_cv(clustered_data(), fold_count=10, seed=2)
    assert report.knn.mean_accuracy == 1.0


def test_cv_mean_is_sample_weighted():
    report = kfold_cv(clustered_data(spread=30.0, seed=3), fold_count=7, seed=3)
    for result in (report.knn, report.linear):
        total = sum(result.fold_sizes)
        expected = sum(a * n for a, n in zip(result.fold_accuracies, result.fold_sizes)) / total
        assert abs(result.mean_accuracy - expected) < 1e-12
        assert all(0.0 <= a <= 1.0 for a in result.fold_accuracies)


def test_cv_deterministic_per_seed():
    a = kfold_cv(clustered_data(), fold_count=5, seed=9)
    b = kfold_cv(clustered_data(), fold_count=5, seed=9)
    assert a.to_dict() == b.to_dict()


def report_with(knn_mean, linear_mean) -> CvReport:
    knn = ModelCvResult("KNN", (knn_mean,), (10,), {"k": 5})
    linear = ModelCvResult("Linear", (linear_mean,), (10,), {})
    return CvReport(2, 0, knn, linear, {5: knn_mean}, "")


def test_select_better_prefers_higher_mean():
    assert select_better(report_with(0.80, 0.70)) == "KNN"
    assert select_better(report_with(0.70, 0.80)) == "Linear"


def test_select_better_tie_goes_to_knn():
    assert select_better(report_with(0.75, 0.75)) == "KNN"


def test_per_fold_best_view():
    knn = ModelCvResult("KNN", (0.9, 0.5), (10, 10), {"k": 1})
    linear = ModelCvResult("Linear", (0.6, 0.8), (10, 10), {})
    report = CvReport(2, 0, knn, linear, {}, "KNN")
    assert report.per_fold_best() == (0.9, 0.8)


def test_model_save_load_round_trip(tmp_path):
    data = separable_data()
    linear = linear_train(data, epochs=5, seed=1)
    path = tmp_path / "linear.json"
    save_model(linear, path, metadata={"seed": 1})
    loaded = load_model(path)
    assert isinstance(loaded, LinearModel)
    assert np.allclose(loaded.weights, linear.weights)

    knn = knn_from([(0, 0), (1, 1)], [A, B], k=1)
    path2 = tmp_path / "knn.json"
    save_model(knn, path2)
    loaded2 = load_model(path2)
    assert isinstance(loaded2, KnnModel)
    assert knn_predict(loaded2, feature(0.9, 0.9)) is B


def test_model_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ModelError):
        load_model(path)
    with pytest.raises(ModelError):
        model_from_dict({"kind": "KNN", "parameters": {"k": 1}})
    with pytest.raises(ModelError):
        model_from_dict({"kind": "Forest", "parameters": {}})


def test_train_selected_follows_report():
    data = clustered_data()
    report = kfold_cv(data, fold_count=5, seed=1)
    model = train_selected(data, report)
    assert model.kind == report.selected_kind
