import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpolab import _fallback, kernels
from kpolab.classical import classical_energy, drive_coefficient
from kpolab.params import ControlParams

compiled = pytest.importorskip("kpolab._kernels")


@settings(max_examples=30, deadline=None)
@given(re=st.floats(-6, 6), im=st.floats(-6, 6), n=st.integers(1, 150))
def test_coherent_rows_agree(re, im, n):
    a = np.array([complex(re, im), 0.0, complex(im, -re)])
    x = compiled.coherent_amplitudes(a, n)
    y = _fallback.coherent_amplitudes(a, n)
    assert np.allclose(x, y, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("mu", [1, 2, 3, 4])
def test_energy_batch_agrees(mu):
    rng = np.random.default_rng(mu)
    q, p = rng.normal(size=(2, 500)) * 3
    params = ControlParams(mu, 1.3, 0.4)
    c = drive_coefficient(mu, 0.4)
    ref = classical_energy(q, p, params)
    assert np.allclose(compiled.energy_batch(q, p, mu, 1.3, c), ref, rtol=1e-13, atol=1e-12)
    assert np.allclose(_fallback.energy_batch(q, p, mu, 1.3, c), ref, rtol=1e-13, atol=1e-12)


def test_energy_batch_keeps_shape():
    q = np.zeros((3, 4))
    assert compiled.energy_batch(q, q, 2, 1.0, 0.5).shape == (3, 4)
    assert _fallback.energy_batch(q, q, 2, 1.0, 0.5).shape == (3, 4)


def test_large_amplitude_has_no_overflow():
    rows = kernels.coherent_amplitudes(np.array([30.0 + 10.0j]), 2000)
    assert np.all(np.isfinite(rows))
    assert np.linalg.norm(rows) == pytest.approx(1.0, abs=1e-10)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_long_rows_agree():
    a = np.array([30.0 + 10.0j, -12.0 + 25.0j])
    x = compiled.coherent_amplitudes(a, 3000)
    y = _fallback.coherent_amplitudes(a, 3000)
    big = np.abs(y) > 1e-200
    assert np.allclose(x[big], y[big], rtol=1e-10, atol=0)
