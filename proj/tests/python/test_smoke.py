"""End-to-end smoke tests for the python surface of the library."""

import math

import numpy as np
import pytest

import tsen


def test_exports_are_complete():
    for name in tsen.__all__:
        assert hasattr(tsen, name), name


def test_laplacian_of_a_three_node_path():
    adj = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    lap = tsen.normalized_laplacian(adj)
    s = 1.0 / math.sqrt(2.0)
    expected = np.array([[1.0, -s, 0.0], [-s, 1.0, -s], [0.0, -s, 1.0]])
    assert np.max(np.abs(lap - expected)) < 1e-15


def test_laplacian_isolated_node_row_is_identity():
    adj = np.zeros((2, 2))
    lap = tsen.normalized_laplacian(adj)
    assert np.array_equal(lap, np.eye(2))


def test_binarize_uses_a_strict_threshold():
    corr = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert np.array_equal(tsen.binarize(corr, 0.2), np.array([[0.0, 1.0], [1.0, 0.0]]))
    # Ties stay disconnected and so does the diagonal.
    assert np.array_equal(tsen.binarize(corr, 0.5), np.zeros((2, 2)))


def test_gelu_fixed_points():
    assert tsen.gelu(0.0) == 0.0
    assert abs(tsen.gelu(1.0) - 0.8413447460685429) < 1e-15
    assert abs(tsen.gelu(20.0) - 20.0) < 1e-12
    assert abs(tsen.gelu(-20.0)) < 1e-12


def test_lr_schedule_shape():
    assert tsen.lr_schedule(1.0, 1000, 1000) == pytest.approx(1.0, abs=1e-15)
    assert tsen.lr_schedule(1.0, 1000, 500) == pytest.approx(0.5, abs=1e-15)
    assert tsen.lr_schedule(1.0, 1000, 4000) == pytest.approx(0.5, abs=1e-15)
    assert tsen.lr_schedule(2.0, 0, 4) == pytest.approx(1.0, abs=1e-15)


def test_cka_self_similarity_and_rotation_invariance():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(30, 6))
    assert tsen.cka(x, x) == pytest.approx(1.0, abs=1e-6)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    assert tsen.cka(x, x @ q, kernel="linear") == pytest.approx(1.0, abs=1e-6)
    assert tsen.cka(x, x, kernel="rbf") == pytest.approx(1.0, abs=1e-6)


def test_generate_synthetic_matrices_are_correlations():
    pairs = tsen.generate_synthetic(6, 10, 0.8, 3)
    assert len(pairs) == 6
    assert [label for _, label in pairs] == [0, 1, 0, 1, 0, 1]
    for corr, _ in pairs:
        assert corr.shape == (10, 10)
        assert np.max(np.abs(corr - corr.T)) == 0.0
        assert np.max(np.abs(np.diag(corr) - 1.0)) < 1e-12
        assert np.max(np.abs(corr)) <= 1.0 + 1e-12


def test_model_forward_and_checkpoint_round_trip(tmp_path):
    pairs = tsen.generate_synthetic(2, 10, 0.8, 11)
    corr = pairs[0][0]

    model = tsen.Model(variant="TSEN", feature_dim=10, class_count=2, seed=4)
    logits = model.logits(corr)
    assert logits.shape == (1, 2)
    assert np.all(np.isfinite(logits))
    assert model.predict(corr) == int(np.argmax(logits))

    # snowball representation: raw readout + one per conv layer
    rep = model.representation(corr)
    assert rep.shape == (1, 10 + 2 * 64)

    # same seed, same weights, same logits
    twin = tsen.Model(variant="TSEN", feature_dim=10, class_count=2, seed=4)
    assert np.array_equal(twin.logits(corr), logits)

    path = str(tmp_path / "model.json")
    model.save(path)
    restored = tsen.Model.load(path)
    assert np.array_equal(restored.logits(corr), logits)
    assert restored.param_names() == model.param_names()


def test_all_variants_construct_and_predict():
    corr = tsen.generate_synthetic(2, 8, 0.9, 2)[0][0]
    for variant in ["GCN", "SBGCN", "SBGCN_FFN", "SBGCN_SA", "GCN_Trans", "TSEN"]:
        model = tsen.Model(
            variant=variant, feature_dim=8, class_count=2, seed=1, hidden_dim=16
        )
        assert model.predict(corr) in (0, 1)
