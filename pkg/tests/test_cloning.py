"""Cloning baseline: gradient exactness, mid-range prior, divergence guard."""

import numpy as np
import pytest

from pressfit.cloning import BcConfig, BcPolicy, TrainingDiverged, train_bc
from pressfit.geometry import NormalizationScales, action_mse
from pressfit.nets import finite_difference_grad, max_relative_error


def make_scales() -> NormalizationScales:
    lo = np.array([-0.002, -0.002, -0.004, -0.01, -0.01, -0.02])
    hi = np.array([0.002, 0.002, 0.001, 0.01, 0.01, 0.02])
    return NormalizationScales(lo=lo, hi=hi)


def test_regression_gradient_matches_finite_differences():
    cfg = BcConfig(in_dim=5, hidden=[7])
    policy = BcPolicy(cfg, make_scales(), np.random.default_rng(0))
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(6, 5))
    targets = rng.uniform(-0.5, 0.5, size=(6, 6))

    policy.loss_and_grad(feats, targets)
    analytic = policy.net.grad_flat()
    numeric = finite_difference_grad(
        lambda: float(np.mean((policy.net.forward(feats) - targets) ** 2)), policy.net
    )
    assert max_relative_error(analytic, numeric) <= 1e-6


def test_zero_network_predicts_mid_range_actions():
    cfg = BcConfig(in_dim=4, hidden=[8])
    scales = make_scales()
    policy = BcPolicy(cfg, scales, np.random.default_rng(2))
    policy.net.set_flat(np.zeros_like(policy.net.get_flat()))
    pred = policy.predict(np.random.default_rng(3).normal(size=(5, 4)))
    mid = 0.5 * (scales.lo + scales.hi)
    assert np.allclose(pred, np.tile(mid, (5, 1)), atol=1e-12)


def test_training_learns_a_linear_action_map():
    rng = np.random.default_rng(4)
    scales = make_scales()
    w = rng.normal(size=(3, 6))
    feats = rng.normal(size=(400, 3))
    span = scales.hi - scales.lo
    actions = scales.lo + span * (0.5 + 0.4 * np.tanh(feats @ w))

    cfg = BcConfig(in_dim=3, hidden=[32], lr=3e-3, steps=1500, batch_size=64)
    policy = BcPolicy(cfg, scales, np.random.default_rng(5))
    before = action_mse(policy.predict(feats), actions)
    losses = train_bc(policy, feats, actions, np.random.default_rng(6))
    after = action_mse(policy.predict(feats), actions)
    assert losses[-1] < 0.25 * losses[0]
    assert after < 0.2 * before


def test_divergence_aborts_training():
    rng = np.random.default_rng(7)
    feats = rng.normal(size=(100, 3)) * 10.0
    actions = rng.uniform(-0.002, 0.002, size=(100, 6))
    cfg = BcConfig(in_dim=3, hidden=[16], lr=50.0, steps=3000)
    policy = BcPolicy(cfg, make_scales(), np.random.default_rng(8))
    with pytest.raises(TrainingDiverged):
        train_bc(policy, feats, actions, rng)


def test_checkpoint_round_trip(tmp_path):
    cfg = BcConfig(in_dim=4, hidden=[6, 5])
    policy = BcPolicy(cfg, make_scales(), np.random.default_rng(9))
    x = np.random.default_rng(10).normal(size=(3, 4))
    policy.save(tmp_path / "bc.pfb")
    loaded = BcPolicy.load(tmp_path / "bc.pfb")
    assert np.array_equal(loaded.predict(x), policy.predict(x))
    assert np.array_equal(loaded.scales.lo, policy.scales.lo)


def test_row_count_mismatch_rejected():
    cfg = BcConfig(in_dim=3)
    policy = BcPolicy(cfg, make_scales(), np.random.default_rng(11))
    with pytest.raises(ValueError, match="row counts"):
        train_bc(policy, np.zeros((4, 3)), np.zeros((5, 6)), np.random.default_rng(12))
