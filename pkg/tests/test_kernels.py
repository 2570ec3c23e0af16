"""Both kernel backends must agree; the compiled one is optional."""
import importlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaligner import kernels
from adaligner.kernels import _reference

fast = pytest.importorskip("adaligner.kernels._fast", reason="compiled extension not built")


@pytest.fixture(params=[0, 1, 2])
def rng(request):
    return np.random.default_rng(request.param)


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.compiled_available()


def test_pure_python_env_switch(monkeypatch):
    monkeypatch.setenv("ADALIGNER_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("ADALIGNER_PURE_PYTHON")
        importlib.reload(kernels)
    assert kernels.BACKEND == "cython"


def test_softmax_rows_parity(rng):
    S = rng.standard_normal((7, 5)) * 3
    np.testing.assert_allclose(fast.softmax_rows(S, 0.379), _reference.softmax_rows(S, 0.379), atol=1e-14)


def test_clip_loss_grad_parity(rng):
    S = np.clip(rng.standard_normal((9, 9)), -1, 1)
    lf, gf = fast.clip_loss_grad(S, 0.379)
    lr, gr = _reference.clip_loss_grad(S, 0.379)
    assert lf == pytest.approx(lr, abs=1e-13)
    np.testing.assert_allclose(gf, gr, atol=1e-14)


def test_soft_loss_grad_parity(rng):
    n = 6
    S = np.clip(rng.standard_normal((n, n)), -1, 1)
    P1 = _reference.softmax_rows(rng.standard_normal((n, n)), 1.0)
    P2 = _reference.softmax_rows(rng.standard_normal((n, n)), 1.0)
    lf, gf = fast.soft_loss_grad(S, P1, P2, 0.379, 1e-12)
    lr, gr = _reference.soft_loss_grad(S, P1, P2, 0.379, 1e-12)
    assert lf == pytest.approx(lr, abs=1e-13)
    np.testing.assert_allclose(gf, gr, atol=1e-13)


def test_sampler_parity(rng):
    w = rng.random(16)
    w[3] = 0.0
    u = rng.random(16)
    assert fast.sample_without_replacement(w, 11, u).tolist() == _reference.sample_without_replacement(w, 11, u).tolist()


def test_sampler_all_zero_weights_parity():
    w = np.zeros(5)
    u = np.array([0.1, 0.5, 0.99, 0.0, 0.3])
    a = fast.sample_without_replacement(w, 3, u)
    b = _reference.sample_without_replacement(w, 3, u)
    assert a.tolist() == b.tolist()
    assert len(set(a.tolist())) == 3


def test_auc_parity(rng):
    pos = np.round(rng.random(40), 2)
    neg = np.round(rng.random(35), 2)
    assert fast.pairwise_auc(pos, neg) == _reference.pairwise_auc(pos, neg)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=12), st.lists(st.integers(0, 4), min_size=1, max_size=12))
def test_auc_parity_heavy_ties(pos, neg):
    pos, neg = np.array(pos, float), np.array(neg, float)
    assert fast.pairwise_auc(pos, neg) == _reference.pairwise_auc(pos, neg)
