import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpolab import ConfigError, ControlParams, TruncationWarning
from kpolab.quantum import (build_hamiltonian, diagonalize, drive_couplings, full_spectrum, merge,
                            sector_block, sector_decompose, solve)


def no_drive_levels(n, delta):
    n = np.asarray(n, dtype=float)
    return n * n - n * (1 + delta)


def test_two_photon_four_state_matrix():
    h = build_hamiltonian(ControlParams(2, 0.0, 1.0, n_trunc=4)).toarray()
    assert np.allclose(np.diag(h), [0, 0, 2, 6])
    assert h[0, 2] == h[2, 0] == pytest.approx(-math.sqrt(2), abs=1e-15)
    assert h[1, 3] == h[3, 1] == pytest.approx(-math.sqrt(6), abs=1e-15)
    off = h - np.diag(np.diag(h))
    off[0, 2] = off[2, 0] = off[1, 3] = off[3, 1] = 0
    assert not off.any()


def test_one_photon_undriven_is_diagonal():
    h = build_hamiltonian(ControlParams(1, 3.0, 0.0, n_trunc=3)).toarray()
    assert np.array_equal(h, np.diag([0.0, -3.0, -4.0]))


@pytest.mark.parametrize("mu", [1, 2, 3, 4])
def test_zero_drive_band_vanishes(mu):
    h = build_hamiltonian(ControlParams(mu, 1.3, 0.0, n_trunc=20))
    assert not h.band.any()


def test_truncation_below_drive_order_rejected():
    with pytest.raises(ConfigError, match="n_trunc"):
        ControlParams(3, 0.0, 1.0, n_trunc=3)


def test_couplings_stay_finite_for_huge_fock_index():
    c = drive_couplings(np.array([10 ** 6 - 5]), 4, 1.0)
    assert np.isfinite(c).all()
    assert c[0] == pytest.approx(-np.prod([np.sqrt(10 ** 6 - 5 + j) for j in range(1, 5)]), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(mu=st.integers(1, 4), delta=st.floats(-10, 10), xi=st.floats(-5, 5), n=st.integers(6, 60))
def test_block_structure_and_symmetry(mu, delta, xi, n):
    h = build_hamiltonian(ControlParams(mu, delta, xi, n_trunc=n)).toarray()
    assert np.array_equal(h, h.T)
    i, j = np.indices(h.shape)
    assert not h[(i - j) % mu != 0].any()
    assert np.allclose(np.diag(h), no_drive_levels(np.arange(n), delta), rtol=1e-14, atol=1e-12)


def test_even_sector_of_two_photon_drive():
    xi, delta = 0.7, 1.9
    b = sector_block(ControlParams(2, delta, xi, n_trunc=6), 0)
    assert list(b.fock) == [0, 2, 4]
    assert np.allclose(b.diag, [0, 2 - 2 * delta, 12 - 4 * delta])
    assert np.allclose(b.offdiag, [-xi * math.sqrt(2), -xi * math.sqrt(12)])


def test_one_photon_has_single_sector_equal_to_full_matrix():
    p = ControlParams(1, 2.0, 0.8, n_trunc=12)
    (b,) = sector_decompose(p)
    full = build_hamiltonian(p).toarray()
    assert np.array_equal(np.diag(full), b.diag)
    assert np.array_equal(np.diag(full, 1), b.offdiag)


def test_three_photon_local_dims():
    blocks = sector_decompose(ControlParams(3, 0.0, 1.0, n_trunc=7))
    assert [b.residue for b in blocks] == [0, 1, 2]
    assert [b.local_dim for b in blocks] == [3, 2, 2]


@settings(max_examples=30, deadline=None)
@given(mu=st.integers(1, 4), n=st.integers(5, 80))
def test_sectors_partition_fock_space(mu, n):
    blocks = sector_decompose(ControlParams(mu, 0.0, 1.0, n_trunc=n))
    allfock = np.sort(np.concatenate([b.fock for b in blocks]))
    assert np.array_equal(allfock, np.arange(n))
    for b in blocks:
        assert b.local_dim == math.ceil((n - b.residue) / mu)


def test_undriven_block_eigenvalues_are_the_diagonal():
    b = sector_block(ControlParams(2, 1.7, 0.0, n_trunc=30), 1)
    sol = diagonalize(b)
    assert np.array_equal(np.sort(sol.energies), np.sort(b.diag))
    assert np.all(sol.sector_labels == 1)


def test_even_detuning_ground_is_twofold():
    sol = full_spectrum(ControlParams(1, 2.0, 0.0, n_trunc=60), k=3)
    assert sol.energies[0] == sol.energies[1] == -2.0
    assert sol.energies[2] > -2.0


def test_odd_detuning_ground_energy():
    sol = full_spectrum(ControlParams(1, 3.0, 0.0, n_trunc=60), k=2)
    assert sol.energies[0] == -4.0
    assert sol.energies[1] > -4.0


def test_eigenpairs_are_orthonormal_with_small_residual():
    p = ControlParams(3, 2.0, 1.1, n_trunc=90)
    sol = full_spectrum(p, vectors=True, certify_levels=False)
    v = sol.states
    assert np.allclose(v.T @ v, np.eye(p.n_trunc), atol=1e-12)
    h = build_hamiltonian(p)
    res = np.linalg.norm(h.matvec(v) - v * sol.energies, axis=0)
    assert np.all(res <= 1e-9 * np.maximum(1, np.abs(sol.energies)))
    assert np.all(np.diff(sol.energies) >= 0)


def test_merged_spectrum_matches_dense_matrix():
    p = ControlParams(4, -1.5, 0.3, n_trunc=101)
    merged = solve(p).energies
    dense = np.linalg.eigvalsh(build_hamiltonian(p).toarray())
    assert np.allclose(merged, dense, atol=1e-9)


def test_undriven_merged_spectrum_is_analytic_multiset():
    p = ControlParams(3, 4.4, 0.0, n_trunc=50)
    e = full_spectrum(p, certify_levels=False).energies
    assert np.allclose(e, np.sort(no_drive_levels(np.arange(50), 4.4)), atol=1e-12, rtol=0)


def test_ties_break_by_residue_then_local_index():
    sol = solve(ControlParams(2, 2.0, 0.0, n_trunc=10))
    # E(1) = E(2) = -2: residue 0 (n=2) precedes residue 1 (n=1)
    assert list(sol.sector_labels[:2]) == [0, 1]


@settings(max_examples=20, deadline=None)
@given(mu=st.integers(1, 4), delta=st.floats(-5, 5), xi=st.floats(0.01, 3))
def test_spectrum_invariant_under_drive_sign(mu, delta, xi):
    a = solve(ControlParams(mu, delta, xi, n_trunc=40)).energies
    b = solve(ControlParams(mu, delta, -xi, n_trunc=40)).energies
    assert np.allclose(a, b, atol=1e-9 * max(1, np.abs(a).max()))


def test_four_photon_lowest_levels_span_all_sectors():
    sol = full_spectrum(ControlParams(4, 0.0, 0.45, n_trunc=1200), k=5)
    assert set(sol.sector_labels[:4]) == {0, 1, 2, 3}
    assert sol.energies[0] < 0


def test_four_photon_quadruplet_tightens_towards_unbounded_limit():
    ratios = []
    for xi in (0.45, 0.47, 0.49):
        e = full_spectrum(ControlParams(4, 0.0, xi, n_trunc=1200), k=5).energies
        ratios.append((e[3] - e[0]) / (e[4] - e[3]))
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 0.1


def test_truncation_warning_reports_first_unconverged_index():
    p = ControlParams(2, 20.0, 5.0, n_trunc=40)
    with pytest.warns(TruncationWarning) as rec:
        sol = full_spectrum(p, k=30)
    assert sol.converged_count < 30
    assert rec[0].message.first_unconverged == sol.converged_count
    assert sol.warnings


def test_certified_spectrum_has_no_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sol = full_spectrum(ControlParams(2, 1.0, 0.5, n_trunc=200), k=10)
    assert sol.converged_count == 10
    assert len(sol.certified) == 10


def test_level_count_validated():
    with pytest.raises(ValueError):
        full_spectrum(ControlParams(2, 1.0, 0.5, n_trunc=20), k=21)


def test_threaded_sector_solve_matches_serial():
    p = ControlParams(4, 1.0, 0.2, n_trunc=200)
    a = solve(p, k=40, vectors=True)
    b = solve(p, k=40, vectors=True, workers=4)
    assert np.array_equal(a.energies, b.energies)
    assert np.array_equal(a.states, b.states)


def test_merge_respects_count():
    p = ControlParams(2, 1.0, 0.5, n_trunc=30)
    parts = [diagonalize(b, vectors=False) for b in sector_decompose(p)]
    m = merge(parts, count=7)
    assert len(m) == 7 and m.converged_count is None
