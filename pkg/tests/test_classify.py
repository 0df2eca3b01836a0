import numpy as np
import pytest

from mfv3d.classify import (SHAPES, LabeledDataset, MlpModel, TrainConfig, evaluate,
                            evaluate_features, generate_synthetic_dataset, init_mlp,
                            load_modelnet, loss_and_grads, metrics_from_predictions, predict,
                            sample_shape, train_classifier, train_mlp)
from mfv3d.encoder import encode_3dmfv, finalize_normalization
from mfv3d.errors import DivergenceError, ShapeError
from mfv3d.gmm import build_grid_gmm


def _random_model(rng, sizes):
    ws = [rng.normal(size=(a, b)) * 0.5 for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [rng.normal(size=b) * 0.1 for b in sizes[1:]]
    return MlpModel(sizes, ws, bs)


@pytest.mark.parametrize("sizes", [(20, 8, 5), (7, 6, 4, 3), (12, 2)])
def test_mlp_gradient_check(sizes):
    rng = np.random.default_rng(sum(sizes))
    model = _random_model(rng, sizes)
    X = rng.normal(size=(9, sizes[0]))
    y = rng.integers(sizes[-1], size=9)
    _, gw, gb = loss_and_grads(model, X, y, weight_decay=1e-3)
    h = 1e-6
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                lp = loss_and_grads(model, X, y, 1e-3)[0]
                flat[i] = old - h
                lm = loss_and_grads(model, X, y, 1e-3)[0]
                flat[i] = old
                fd = (lp - lm) / (2 * h)
                assert abs(gflat[i] - fd) <= 1e-4 * max(abs(fd), 1e-3)


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(1)
    model = _random_model(rng, (6, 5, 4, 3))
    x = rng.normal(size=6)
    h = x
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = [sum(h[a] * w[a, j] for a in range(len(h))) + b[j] for j in range(w.shape[1])]
        h = np.array(z) if i == len(model.weights) - 1 else np.array([max(v, 0.0) for v in z])
    e = np.exp(h - h.max())
    np.testing.assert_allclose(predict(model, x), e / e.sum(), rtol=1e-12)


def test_predict_simplex_and_shape_error():
    rng = np.random.default_rng(2)
    model = _random_model(rng, (4, 3, 5))
    probs = predict(model, rng.normal(size=(10, 4)))
    assert probs.min() >= 0
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    with pytest.raises(ShapeError):
        predict(model, np.zeros(5))


def test_argmax_invariant_to_logit_shift():
    rng = np.random.default_rng(3)
    model = _random_model(rng, (4, 3))
    X = rng.normal(size=(20, 4))
    before = predict(model, X).argmax(axis=1)
    model.biases[-1] += 7.5
    np.testing.assert_array_equal(predict(model, X).argmax(axis=1), before)


def test_initial_loss_is_log_classes():
    X = np.random.default_rng(4).normal(size=(30, 10))
    y = np.arange(30) % 5
    model = init_mlp(10, 5, (8,), seed=0)
    assert loss_and_grads(model, X, y)[0] == pytest.approx(np.log(5), rel=1e-12)


def test_train_separable_toy():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(-2, 0.5, size=(40, 3)), rng.normal(2, 0.5, size=(40, 3))])
    y = np.repeat([0, 1], 40)
    for hidden in ((), (8,)):
        model = train_mlp(X, y, 2, TrainConfig(hidden=hidden, epochs=30, learning_rate=0.05))
        assert evaluate_features(model, X, y)["accuracy"] == 1.0
        assert model.loss_history[0] == pytest.approx(np.log(2))
        assert model.loss_history[-1] < model.loss_history[0]


def test_train_deterministic():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 6))
    y = rng.integers(3, size=50)
    cfg = TrainConfig(hidden=(5,), epochs=5, seed=9)
    a, b = train_mlp(X, y, 3, cfg), train_mlp(X, y, 3, cfg)
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        np.testing.assert_array_equal(wa, wb)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reported():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 4)) * 1e150
    y = rng.integers(2, size=40)
    with pytest.raises(DivergenceError) as info:
        train_mlp(X, y, 2, TrainConfig(hidden=(4,), epochs=3, learning_rate=1e3))
    assert info.value.learning_rate == 1e3 and info.value.epoch >= 1


def test_model_save_load(tmp_path):
    rng = np.random.default_rng(8)
    model = _random_model(rng, (5, 4, 3))
    model.loss_history = [1.0, 0.5]
    model.save(tmp_path / "m")
    again = MlpModel.load(tmp_path / "m")
    assert again.sizes == model.sizes and again.loss_history == [1.0, 0.5]
    for wa, wb in zip(model.weights + model.biases, again.weights + again.biases):
        np.testing.assert_array_equal(wa, wb)
    assert (tmp_path / "m.bin").stat().st_size == 8 * (5 * 4 + 4 + 4 * 3 + 3)
    with pytest.raises(ValueError):
        MlpModel((5, 4), [np.zeros((4, 5))], [np.zeros(4)])


def test_metrics():
    m = metrics_from_predictions([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert m["accuracy"] == 1.0 and m["confusion"] == [[1, 0, 0], [0, 1, 0], [0, 0, 2]]
    rng = np.random.default_rng(9)
    y = np.repeat(np.arange(4), 500)
    m = metrics_from_predictions(y, rng.integers(4, size=len(y)), 4)
    assert abs(m["accuracy"] - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / len(y))
    assert np.sum(m["confusion"], axis=1).tolist() == [500] * 4
    assert m["accuracy"] == pytest.approx(np.mean(m["per_class_accuracy"]))
    unbalanced = metrics_from_predictions([0, 0, 0, 1], [0, 0, 0, 0], 2)
    assert unbalanced["accuracy"] != np.mean(unbalanced["per_class_accuracy"])


def test_shape_samplers():
    rng = np.random.default_rng(10)
    for name in SHAPES:
        pts = sample_shape(name, 500, rng)
        assert pts.shape == (500, 3) and np.isfinite(pts).all()
    sphere = sample_shape("sphere", 1000, rng)
    r = np.linalg.norm(sphere, axis=1)
    assert np.ptp(r) < 1e-6
    with pytest.raises(ValueError):
        sample_shape("teapot", 10, rng)


def test_synthetic_dataset():
    ds = generate_synthetic_dataset(SHAPES, per_class=4, t_points=128, seed=3)
    assert len(ds) == 24 and np.bincount(ds.labels).tolist() == [4] * 6
    for pc in ds.clouds:
        assert abs(np.linalg.norm(pc, axis=1).max() - 1.0) < 1e-9
        assert np.abs(pc.mean(axis=0)).max() < 1e-9
    again = generate_synthetic_dataset(SHAPES, per_class=4, t_points=128, seed=3)
    np.testing.assert_array_equal(np.stack(ds.clouds), np.stack(again.clouds))
    test = generate_synthetic_dataset(SHAPES, per_class=4, t_points=128, seed=3, split="test")
    assert not np.array_equal(np.stack(ds.clouds), np.stack(test.clouds))
    with pytest.raises(ValueError):
        generate_synthetic_dataset(SHAPES, per_class=1)


def test_dataset_save_load(tmp_path):
    ds = generate_synthetic_dataset(("sphere", "cube"), per_class=3, t_points=64, seed=0)
    ds.save(tmp_path / "d.npz")
    again = LabeledDataset.load(tmp_path / "d.npz")
    assert again.class_names == ds.class_names and again.split == "train"
    np.testing.assert_array_equal(np.stack(again.clouds), np.stack(ds.clouds))
    with pytest.raises(ValueError):
        LabeledDataset([np.zeros((3, 3))], [2], ("a", "b"))


def test_permuting_points_keeps_prediction():
    rng = np.random.default_rng(11)
    ds = generate_synthetic_dataset(("sphere", "cube", "torus"), per_class=3, t_points=256, seed=1)
    g = build_grid_gmm(3)
    model = _random_model(rng, (20 * 27, 16, 3))
    for pc in ds.clouds:
        a = finalize_normalization(encode_3dmfv(g, pc)).matrix.ravel()
        b = finalize_normalization(encode_3dmfv(g, pc[rng.permutation(len(pc))])).matrix.ravel()
        assert predict(model, a).argmax() == predict(model, b).argmax()


def test_evaluate_end_to_end_small():
    g = build_grid_gmm(3)
    ds = generate_synthetic_dataset(("sphere", "plane"), per_class=10, t_points=256, seed=2)
    model = train_classifier(ds, g, "full", TrainConfig(hidden=(16,), epochs=20))
    m = evaluate(model, ds, g, "full")
    assert m["accuracy"] >= 0.9
    assert np.trace(m["confusion"]) / len(ds) == m["accuracy"]
    with pytest.raises(ValueError):
        evaluate(model, LabeledDataset([], [], ("a", "b")), g)


OFF_TRI = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


def test_load_modelnet_layout(tmp_path):
    for cls in ("chair", "desk"):
        d = tmp_path / cls / "train"
        d.mkdir(parents=True)
        for i in range(2):
            (d / f"{cls}_{i}.off").write_text(OFF_TRI)
    ds = load_modelnet(tmp_path, "train", n_points=50, seed=0)
    assert ds.class_names == ("chair", "desk") and len(ds) == 4
    assert all(pc.shape == (50, 3) for pc in ds.clouds)
