import numpy as np
import pytest

import cello3d


def test_exp_log_round_trip():
    xi = np.array([0.1, -0.2, 0.3, 0.2, -0.1, 0.4])
    t = cello3d.exp_map(xi)
    assert t.shape == (4, 4)
    np.testing.assert_allclose(cello3d.log_map(t), xi, atol=1e-12)


def test_kl_and_mahalanobis():
    i = np.eye(6)
    assert cello3d.kl_divergence(i, i) == 0.0
    assert cello3d.kl_divergence(i, 2 * i) == pytest.approx(0.5 * (3 - 6 + 6 * np.log(2)))
    assert cello3d.mahalanobis(np.ones(6), 4 * i) == pytest.approx(np.sqrt(6) / 2)


def test_icp_recovers_cube_motion():
    reading, reference, truth = cello3d.generate_scene("cube", points=1500, seed=1)
    assert reading.shape == (1500, 3)
    r = cello3d.icp(reading, reference, cello3d.exp_map(np.full(6, 0.02)) @ truth)
    err = cello3d.log_map(np.linalg.inv(truth) @ r["transform"])
    assert r["converged"]
    assert np.linalg.norm(err) < 1e-2


def test_sampled_and_closed_form_covariances():
    reading, reference, truth = cello3d.generate_scene("cube", points=800, sigma=0.01, seed=2)
    s = cello3d.sample_covariance(reading, reference, truth, n=20, seed=3)
    assert s["covariance"].shape == (6, 6)
    assert 0 < s["n_kept"] <= 20
    c = cello3d.censi_covariance(reading, reference, truth, sigma=0.01)
    np.testing.assert_allclose(c, c.T, atol=1e-15)
    assert np.all(np.linalg.eigvalsh(c) > 0)


def test_descriptor_train_predict(tmp_path):
    reading, reference, truth = cello3d.generate_scene("hallway", points=1500, seed=4)
    d = cello3d.describe_pair(reading, reference, truth)
    assert d.shape == (704,)
    descriptors = [d, 2 * d, 3 * d]
    covariances = [k * np.eye(6) for k in (1.0, 2.0, 3.0)]
    model = cello3d.train(descriptors, covariances, max_epochs=2)
    assert len(model) == 3
    path = tmp_path / "model.txt"
    model.save(str(path))
    again = cello3d.Model.load(str(path))
    np.testing.assert_array_equal(again.predict(d), model.predict(d))


def test_pairs_and_bad_input():
    assert len(cello3d.enumerate_pairs(6)) == 14
    with pytest.raises(ValueError):
        cello3d.generate_scene("sphere")
