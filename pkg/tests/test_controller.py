import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaligner.controller import (
    ControllerConfig,
    ControllerState,
    QualityController,
    QualityReport,
    controller_step,
    ema_update,
    modulate_weights,
    quality_scores,
)
from adaligner.errors import ConfigError, InvalidBatchError
from adaligner.losses import LossConfig

CFG = ControllerConfig()
LOSS = LossConfig()


def report(mean, var=0.0):
    return QualityReport(np.array([mean]), mean, var)


def test_quality_score_examples():
    r = quality_scores(np.eye(2))
    assert r.per_sample.tolist() == [1.0, 1.0] and r.batch_mean == 1.0
    r = quality_scores(np.full((3, 3), 0.4))
    np.testing.assert_allclose(r.per_sample, 0.0, atol=1e-15)
    S = [[0.9, 0.1, 0.2], [0.0, 0.8, 0.4], [0.3, 0.2, 0.7]]
    r = quality_scores(S)
    np.testing.assert_allclose(r.per_sample, [0.75, 0.6, 0.45], atol=1e-12)
    assert r.batch_mean == pytest.approx(0.6, abs=1e-12)
    assert r.batch_var == pytest.approx(np.var([0.75, 0.6, 0.45]))


def test_quality_scores_need_two_samples():
    with pytest.raises(InvalidBatchError):
        quality_scores([[1.0]])
    with pytest.raises(InvalidBatchError):
        quality_scores(np.ones((2, 3)))


def test_ema_examples():
    s = ControllerState(M0=0.5, sigma0_sq=1.0, theta=1.0)
    same = ema_update(s, report(1.0, 0.3), ControllerConfig(momentum=1.0))
    assert (same.M0, same.sigma0_sq) == (0.5, 1.0)
    assert ema_update(s, report(1.0), CFG).M0 == pytest.approx(0.55, abs=1e-12)


def test_ema_closed_form():
    c, init, m = 0.37, -0.8, 0.9
    s = ControllerState(M0=init, sigma0_sq=1.0, theta=1.0)
    for k in range(1, 40):
        s = ema_update(s, report(c), CFG)
        assert s.M0 == pytest.approx(c + (init - c) * m**k, abs=1e-12)


def test_controller_step_examples():
    s = ControllerState(M0=0.4, sigma0_sq=1.0, theta=1.0)
    assert controller_step(s, report(0.4), CFG).theta == 1.0
    s = ControllerState(M0=1.0, sigma0_sq=1.0, theta=1.0)
    assert controller_step(s, report(1.2), CFG).theta == pytest.approx(1.14, abs=1e-12)
    s = ControllerState(M0=-2.0, sigma0_sq=1.0, theta=1.0)
    out = controller_step(s, report(2.0), CFG)
    assert out.theta_raw == pytest.approx(3.8, abs=1e-12)
    assert out.theta == 1.9


def test_additive_rule_accumulates():
    cfg = ControllerConfig(update_rule="additive")
    s = ControllerState(M0=0.0, sigma0_sq=1.0, theta=1.2)
    assert controller_step(s, report(0.1), cfg).theta == pytest.approx(1.27)
    assert controller_step(s, report(0.1), CFG).theta == pytest.approx(1.07)


def test_weight_table():
    w = modulate_weights(1.0, CFG, LOSS)
    assert (w.beta, w.gamma, w.mu) == (0.5, 0.5, 1.0)
    w = modulate_weights(1.9, CFG, LOSS)
    assert w.beta == 0.9
    assert w.mu == pytest.approx(0.6896551724137931, abs=1e-12)
    assert w.mu == pytest.approx(0.6897, abs=1e-4)
    w = modulate_weights(0.1, CFG, LOSS)
    assert w.beta == 0.1
    assert w.mu == pytest.approx(1.8181818181818181, abs=1e-12)


def test_config_validation():
    CFG.validate()
    for bad in (dict(theta_min=-1.0), dict(theta0=2.0), dict(momentum=1.5), dict(update_rule="nope"),
                dict(beta_range=(0.9, 0.1))):
        with pytest.raises(ConfigError):
            ControllerConfig(**bad).validate()


def test_controller_order_uses_previous_mean():
    ctrl = QualityController(CFG)
    first = ctrl.observe(report(0.5))
    # theta from M0 = 0 before the update, then M0 moves to 0.05
    assert first.theta == pytest.approx(1.0 + 0.7 * 0.5)
    assert first.M0 == pytest.approx(0.05)
    second = ctrl.observe(report(0.5))
    assert second.theta == pytest.approx(1.0 + 0.7 * 0.45)


def test_pinned_controller_still_tracks_statistics():
    ctrl = QualityController(CFG, pinned=1.1)
    s = ctrl.observe(report(0.8, 0.04))
    assert s.theta == 1.1
    assert s.M0 == pytest.approx(0.08)
    assert s.sigma0_sq == pytest.approx(0.9 + 0.004)


@given(st.floats(0.1, 1.9), st.floats(0.1, 1.9))
def test_weights_monotone_in_theta(a, b):
    lo, hi = sorted((a, b))
    wl, wh = modulate_weights(lo, CFG, LOSS), modulate_weights(hi, CFG, LOSS)
    assert wl.beta <= wh.beta and wl.gamma <= wh.gamma and wl.mu >= wh.mu


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=60), st.sampled_from(["absolute", "additive"]))
def test_state_stays_bounded(margins, rule):
    cfg = ControllerConfig(update_rule=rule)
    ctrl = QualityController(cfg)
    for m in margins:
        s = ctrl.observe(report(m))
        assert cfg.theta_min <= s.theta <= cfg.theta_max
        assert -2.0 <= s.M0 <= 2.0
        w = modulate_weights(s.theta, cfg, LOSS)
        assert 0.1 <= w.beta <= 0.9 and 0.1 <= w.gamma <= 1.9 and 0.1 <= w.mu <= 1.9


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_zero_alpha_returns_theta0(mb, m0):
    cfg = ControllerConfig(alpha=0.0)
    assert controller_step(ControllerState(m0, 1.0, 1.3), report(mb), cfg).theta == cfg.theta0


@given(st.integers(2, 6).flatmap(lambda n: st.tuples(
    arrays(np.float64, (n, n), elements=st.floats(-1, 1)), st.permutations(range(n)))))
def test_quality_scores_permutation_equivariant(case):
    S, perm = case
    perm = list(perm)
    a = quality_scores(S)
    b = quality_scores(S[np.ix_(perm, perm)])
    np.testing.assert_allclose(b.per_sample, a.per_sample[perm], atol=1e-12)
    assert abs(a.batch_mean - a.per_sample.mean()) < 1e-9
    assert np.all(np.abs(a.per_sample) <= 2.0)
