"""The numba kernels and their pure-numpy fallbacks must agree exactly."""

import numpy as np
import pytest

from spiketempo import _kernels as K

pytestmark = pytest.mark.skipif(
    not K.NUMBA_AVAILABLE, reason="numba disabled or unavailable; only one path to test"
)


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    i_seq = np.ascontiguousarray(rng.normal(0.4, 0.8, size=(17, 3, 5)))
    g = np.ascontiguousarray(rng.normal(size=(17, 3, 5)))
    return i_seq, g


@pytest.mark.parametrize("hard", [True, False])
def test_lif_scan_paths_agree(data, hard):
    i_seq, _ = data
    s_a, u_a = K.lif_scan_numba(i_seq, 0.85, 0.9, -0.05, hard)
    s_b, u_b = K.lif_scan_numpy(i_seq, 0.85, 0.9, -0.05, hard)
    np.testing.assert_array_equal(s_a, s_b)
    np.testing.assert_allclose(u_a, u_b, atol=1e-14)


@pytest.mark.parametrize("hard", [True, False])
def test_lif_scan_soft_paths_agree(data, hard):
    i_seq, _ = data
    s_a, u_a = K.lif_scan_soft_numba(i_seq, 0.85, 0.9, -0.05, hard, 3.0)
    s_b, u_b = K.lif_scan_soft_numpy(i_seq, 0.85, 0.9, -0.05, hard, 3.0)
    np.testing.assert_allclose(s_a, s_b, atol=1e-14)
    np.testing.assert_allclose(u_a, u_b, atol=1e-14)


@pytest.mark.parametrize("hard", [True, False])
def test_lif_backward_paths_agree(data, hard):
    i_seq, g = data
    s, u = K.lif_scan_numpy(i_seq, 0.85, 0.9, -0.05, hard)
    a = K.lif_backward_numba(g, u, s, 0.85, 0.9, -0.05, hard, 2.0)
    b = K.lif_backward_numpy(g, u, s, 0.85, 0.9, -0.05, hard, 2.0)
    np.testing.assert_allclose(a, b, atol=1e-13)


@pytest.mark.parametrize("hard", [True, False])
def test_lif_backward_soft_paths_agree(data, hard):
    i_seq, g = data
    s, u = K.lif_scan_soft_numpy(i_seq, 0.85, 0.9, -0.05, hard, 3.0)
    a = K.lif_backward_soft_numba(g, u, s, 0.85, 0.9, -0.05, hard, 3.0)
    b = K.lif_backward_soft_numpy(g, u, s, 0.85, 0.9, -0.05, hard, 3.0)
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_leaky_paths_agree(data):
    i_seq, g = data
    np.testing.assert_allclose(
        K.leaky_scan_numba(i_seq, 0.9), K.leaky_scan_numpy(i_seq, 0.9), atol=1e-13
    )
    np.testing.assert_allclose(
        K.leaky_backward_numba(g, 0.9), K.leaky_backward_numpy(g, 0.9), atol=1e-13
    )


def test_backend_reports_active_path():
    assert K.backend() == "numba"


def test_env_flag_parsing(monkeypatch):
    monkeypatch.setenv("SPIKETEMPO_NUMBA", "0")
    assert not K._numba_requested()
    monkeypatch.setenv("SPIKETEMPO_NUMBA", "off")
    assert not K._numba_requested()
    monkeypatch.setenv("SPIKETEMPO_NUMBA", "1")
    assert K._numba_requested()
    monkeypatch.delenv("SPIKETEMPO_NUMBA")
    assert K._numba_requested()
