"""Smoke tests for the Python bindings."""

import math

import numpy as np
import pytest

import sgr


def test_knn_graph_two_nodes():
    g = sgr.knn_graph(np.array([[1.0, 0.0], [0.0, 1.0]]), k=1)
    assert g.n == 2
    assert g.edges().tolist() == [[0, 1]]
    assert g.degrees == [1, 1]
    assert g.has_edge(0, 1)
    assert not g.has_edge(0, 0)


def test_knn_graph_rejects_bad_k():
    with pytest.raises(ValueError):
        sgr.knn_graph(np.random.default_rng(0).normal(size=(4, 3)), k=4)


def test_laplacian_spectrum_bounds():
    rng = np.random.default_rng(1)
    g = sgr.knn_graph(rng.normal(size=(10, 4)), k=3)
    lap = g.laplacian()
    assert np.allclose(lap, lap.T)
    eigenvalues = np.linalg.eigvalsh(lap)
    assert eigenvalues.min() >= -1e-9
    assert eigenvalues.max() <= 2.0 + 1e-9


def test_gcn_layer_averages_a_connected_pair():
    # Identity weight, identity activation, two mutually nearest nodes.
    g = sgr.knn_graph(np.array([[1.0, 0.0], [1.0, 1e-8]]), k=1)
    x = np.array([[2.0, 3.0], [4.0, 5.0]])
    y = sgr.gcn_layer(g, x, np.eye(2), activation="identity")
    assert y.shape == (2, 2)
    # Propagation is an average over the two connected nodes.
    assert np.allclose(y, 0.5 * (x + x[::-1]))


def test_message_passing_zero_theta():
    rng = np.random.default_rng(2)
    g = sgr.knn_graph(rng.normal(size=(5, 3)), k=2)
    out = sgr.message_passing(g, rng.normal(size=(5, 3)), np.zeros((3, 3)))
    assert np.all(out == 0.0)


def test_topk_pool_worked_example():
    g = sgr.knn_graph(np.random.default_rng(3).normal(size=(4, 2)), k=1)
    x = np.array([[0.2, 9.0], [0.5, 1.0], [-0.3, 2.0], [0.1, 0.0]])
    pooled, indices, scores, pooled_graph = sgr.topk_pool(g, x, np.array([1.0, 0.0]), k=2)
    assert indices == [0, 1]
    expected = 1.0 / (1.0 + math.exp(-0.2))
    assert scores[0] == pytest.approx(expected, abs=1e-12)
    assert pooled[0, 1] == pytest.approx(9.0 * expected, abs=1e-12)
    assert pooled_graph.n == 2


def test_graph_unpool_zero_fill_and_spread():
    g = sgr.knn_graph(np.random.default_rng(4).normal(size=(4, 3)), k=1)
    coarse = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = sgr.graph_unpool(coarse, [0, 2], g, np.eye(2))
    assert out.shape == (4, 2)


def test_gru_step_zero_parameters_halve_state():
    rng = np.random.default_rng(5)
    h_prev = rng.normal(size=(3, 4))
    zeros = np.zeros((4, 4))
    out = sgr.gru_step(rng.normal(size=(3, 4)), h_prev, zeros, zeros, zeros, zeros,
                       zeros, zeros)
    assert np.allclose(out, 0.5 * h_prev)


def test_metrics_hand_example():
    result = sgr.metrics(np.array([[45, 5], [10, 40]], dtype=np.int64))
    assert result["oa"] == pytest.approx(85.0, abs=1e-12)
    assert result["aa"] == pytest.approx(85.0, abs=1e-12)
    assert result["kappa"] == pytest.approx(70.0, abs=1e-12)


def test_synth_cube_shapes_and_determinism():
    cube1, labels1 = sgr.synth_cube(classes=3, bands=12, height=16, width=16, seed=9)
    cube2, labels2 = sgr.synth_cube(classes=3, bands=12, height=16, width=16, seed=9)
    assert cube1.shape == (12, 16, 16)
    assert labels1.shape == (16, 16)
    assert labels1.min() >= 1
    assert labels1.max() <= 3
    assert np.array_equal(cube1, cube2)
    assert np.array_equal(labels1, labels2)


def test_model_forward_and_checkpoint(tmp_path):
    model = sgr.Model(bands=16, classes=3, patch=3, features=4, knn_k=3, levels=1,
                      seed=11)
    rng = np.random.default_rng(6)
    patch = rng.random(size=(16, 3, 3), dtype=np.float32)
    logits = model.logits(patch)
    assert logits.shape == (3,)
    assert np.all(np.isfinite(logits))
    assert model.predict(patch) == int(np.argmax(logits))
    assert model.parameter_count > 0
    assert "encoder.stem" in model.parameter_names

    path = str(tmp_path / "model.ckpt")
    model.save_checkpoint(path)
    restored = sgr.Model.from_checkpoint(path, bands=16, classes=3, patch=3,
                                         features=4, knn_k=3, levels=1)
    assert np.array_equal(restored.logits(patch), logits)


def test_model_determinism_and_seeds():
    kwargs = dict(bands=16, classes=3, patch=3, features=4, knn_k=3, levels=1)
    a = sgr.Model(seed=1, **kwargs)
    b = sgr.Model(seed=1, **kwargs)
    c = sgr.Model(seed=2, **kwargs)
    patch = np.random.default_rng(7).random(size=(16, 3, 3), dtype=np.float32)
    assert np.array_equal(a.logits(patch), b.logits(patch))
    assert not np.array_equal(a.logits(patch), c.logits(patch))
    assert a.parameter_count == c.parameter_count


def test_encoder_only_model():
    model = sgr.Model(bands=16, classes=3, patch=3, features=4, knn_k=3, levels=1,
                      kind="encoder-only", seed=3)
    patch = np.random.default_rng(8).random(size=(16, 3, 3), dtype=np.float32)
    assert model.logits(patch).shape == (3,)


def test_gradcheck_tiny():
    assert sgr.gradcheck("tiny") < 1e-4
