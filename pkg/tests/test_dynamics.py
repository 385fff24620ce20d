import math

import numpy as np
import pytest

from kpolab import (CoherentSpec, ConfigError, ControlParams, MCConfig, PhasePoint, QuantumState, TopologyError,
                    TruncationError, build_region_mask, coherent_state, effective_tunneling, evolve, husimi,
                    husimi_volume)
from kpolab.classical import classical_energy, find_critical_points
from kpolab.dynamics import (RegionMask, disk_mask, evolve_many, husimi_grid, initial_center, mask_truncation,
                             required_truncation, window_mask)
from kpolab.quantum import full_spectrum

REGION_III = ControlParams(2, 3.0, 1.0, n_trunc=80)


def annihilation(n):
    return np.diag(np.sqrt(np.arange(1, n)), 1)


def test_alpha_consistent_with_center():
    spec = CoherentSpec(PhasePoint(1.3, -0.4))
    assert abs(spec.alpha - complex(1.3, -0.4) / math.sqrt(2)) <= 1e-14
    back = CoherentSpec.from_alpha(spec.alpha)
    assert back.center.q == pytest.approx(1.3, abs=1e-14) and back.center.p == pytest.approx(-0.4, abs=1e-14)


def test_vacuum_amplitudes():
    psi = coherent_state(CoherentSpec(PhasePoint(0.0, 0.0)), 10)
    assert np.array_equal(psi.amplitudes, np.eye(10)[0])


def test_coherent_state_is_annihilation_eigenvector():
    alpha = 2 * np.exp(0.7j)
    psi = coherent_state(CoherentSpec.from_alpha(alpha), 100)
    v = psi.amplitudes
    assert np.linalg.norm(annihilation(100) @ v - alpha * v) <= 1e-8
    assert psi.photon_number() == pytest.approx(4.0, abs=1e-8)


def test_coherent_state_needs_enough_fock_states():
    with pytest.raises(TruncationError, match="n_trunc"):
        coherent_state(CoherentSpec.from_alpha(5.0), 30)
    assert required_truncation(25.0) > 30


def test_state_must_be_normalized():
    with pytest.raises(ValueError):
        QuantumState(np.array([1.0, 1.0]))
    assert QuantumState.normalized([1.0, 1.0]).norm == pytest.approx(1.0)


@pytest.fixture(scope="module")
def driven():
    p = ControlParams(3, 1.0, 0.4, n_trunc=60)
    return p, full_spectrum(p, vectors=True, certify_levels=False)


def test_evolution_at_zero_time_is_identity(driven):
    p, sol = driven
    psi = coherent_state(CoherentSpec.from_alpha(1.0 + 0.5j), p.n_trunc)
    assert evolve(psi, sol, 0.0) is psi
    assert np.allclose(evolve_many(psi, sol, [0.0])[:, 0], psi.amplitudes, atol=1e-12)


def test_evolution_conserves_norm_and_energy(driven):
    p, sol = driven
    psi = coherent_state(CoherentSpec.from_alpha(1.0 + 0.5j), p.n_trunc)
    e0 = psi.expectation(p)
    cols = evolve_many(psi, sol, np.linspace(0, 50, 11))
    assert np.allclose(np.linalg.norm(cols, axis=0), 1.0, atol=1e-10)
    for c in cols.T:
        assert QuantumState.normalized(c).expectation(p) == pytest.approx(e0, abs=1e-9)


def test_eigenstate_only_acquires_a_phase(driven):
    p, sol = driven
    psi = QuantumState(sol.states[:, 3].astype(complex))
    out = evolve(psi, sol, 7.3).amplitudes
    phase = np.vdot(psi.amplitudes, out)
    assert abs(phase) == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(out, phase * psi.amplitudes, atol=1e-10)


def test_evolution_needs_eigenvectors():
    p = ControlParams(2, 1.0, 0.5, n_trunc=20)
    psi = coherent_state(CoherentSpec.from_alpha(0.5), 20)
    with pytest.raises(ConfigError, match="solution"):
        evolve(psi, full_spectrum(p, k=20, certify_levels=False), 1.0)


def test_vacuum_husimi_values():
    vac = coherent_state(CoherentSpec(PhasePoint(0.0, 0.0)), 40)
    assert husimi(vac, PhasePoint(0.0, 0.0)) == pytest.approx(1 / math.pi, abs=1e-15)
    # |alpha|^2 = 2 means q^2 + p^2 = 4
    assert husimi(vac, PhasePoint(2.0, 0.0)) == pytest.approx(math.exp(-2) / math.pi, rel=1e-12)


def test_husimi_refuses_points_outside_basis():
    vac = coherent_state(CoherentSpec(PhasePoint(0.0, 0.0)), 20)
    with pytest.raises(TruncationError):
        husimi(vac, PhasePoint(8.0, 0.0))


@pytest.mark.parametrize("mu", [2, 3, 4])
def test_eigenstate_husimi_is_rotation_symmetric(mu):
    p = ControlParams(mu, 1.0, 0.3, n_trunc=80)
    sol = full_spectrum(p, vectors=True, certify_levels=False)
    rng = np.random.default_rng(mu)
    q, pp = rng.uniform(-2, 2, (2, 25))
    c, s = math.cos(2 * math.pi / mu), math.sin(2 * math.pi / mu)
    for idx in (0, 5, 11):
        psi = QuantumState(sol.states[:, idx].astype(complex))
        a = husimi_grid(psi, q, pp)
        b = husimi_grid(psi, c * q - s * pp, s * q + c * pp)
        assert np.allclose(a, b, atol=1e-9)
        assert np.all(a >= 0)


@pytest.fixture(scope="module")
def masks():
    return build_region_mask(REGION_III, "omega_in", 256), build_region_mask(REGION_III, "omega_out", 256)


def test_mask_cells_obey_energy_inequalities(masks):
    inner, outer = masks
    qa, pa = inner.axes()
    h = classical_energy(qa[:, None], pa[None, :], REGION_III)
    assert np.all(h[inner.grid] > inner.separatrix_energy)
    assert np.all(h[inner.grid] <= inner.local_max_energy)
    assert np.all(h[outer.grid] > outer.separatrix_energy)
    assert not (inner.grid & outer.grid).any()


def test_critical_points_fall_in_expected_regions(masks):
    inner, outer = masks
    for c in find_critical_points(REGION_III):
        x = c.position
        if c.kind == "local_max":
            assert inner.contains(x.q, x.p)
        if c.kind == "global_min":
            assert not inner.contains(x.q, x.p) and not outer.contains(x.q, x.p)


@pytest.mark.parametrize("params", [REGION_III, ControlParams(3, 0.5, 0.3), ControlParams(4, 1.0, 0.25)])
def test_inner_mask_is_rotation_symmetric(params):
    m = build_region_mask(params, "omega_in")
    qa, pa = m.axes()
    qq, pp = np.meshgrid(qa, pa, indexing="ij")
    th = 2 * math.pi / params.mu
    rq, rp = math.cos(th) * qq - math.sin(th) * pp, math.sin(th) * qq + math.cos(th) * pp
    assert np.mean(m.contains(rq, rp) == m.grid) >= 0.99


def test_mask_needs_separatrix_topology():
    with pytest.raises(TopologyError):
        build_region_mask(ControlParams(2, -3.0, 1.0))
    with pytest.raises(ConfigError):
        build_region_mask(REGION_III, "omega_mid")


def test_volume_over_whole_window_is_one():
    psi = coherent_state(CoherentSpec(PhasePoint(1.0, -0.5)), 140)
    v, err = husimi_volume(psi, window_mask((-7, 7, -7, 7), 64), MCConfig(100_000, seed=2))
    assert abs(v - 1) <= 3 * err
    assert err < 0.02


def test_vacuum_volume_in_disk():
    vac = coherent_state(CoherentSpec(PhasePoint(0.0, 0.0)), 60)
    v, err = husimi_volume(vac, disk_mask(3.0, resolution=512), MCConfig(100_000, seed=4))
    assert abs(v - 1) <= 1e-3 + 3 * err


def test_volume_is_additive():
    psi = coherent_state(CoherentSpec(PhasePoint(0.8, 0.3)), 110)
    base = window_mask((-6, 6, -6, 6), 64)
    left = base.grid.copy()
    left[32:] = False
    a = RegionMask("custom", base.bbox, left)
    b = RegionMask("custom", base.bbox, ~left)
    cfg = MCConfig(100_000, seed=6)
    va, ea = husimi_volume(psi, a, cfg)
    vb, eb = husimi_volume(psi, b, cfg)
    vab, eab = husimi_volume(psi, a.union(b), cfg)
    assert abs(vab - va - vb) <= 3 * math.sqrt(ea ** 2 + eb ** 2 + eab ** 2)


def test_volume_validation():
    psi = coherent_state(CoherentSpec(PhasePoint(0.0, 0.0)), 60)
    m = window_mask((-1, 1, -1, 1), 8)
    with pytest.raises(ConfigError, match="samples"):
        husimi_volume(psi, m, MCConfig(500))
    with pytest.raises(ConfigError, match="mask"):
        husimi_volume(psi, RegionMask("custom", m.bbox, np.zeros_like(m.grid)))


def test_volume_is_deterministic_under_seed():
    psi = coherent_state(CoherentSpec(PhasePoint(0.5, 0.5)), 60)
    m = disk_mask(2.0, resolution=64)
    assert husimi_volume(psi, m, MCConfig(20_000, seed=9)) == husimi_volume(psi, m, MCConfig(20_000, seed=9))


def test_initial_center_sits_just_above_separatrix(masks):
    _, outer = masks
    x = initial_center(REGION_III)
    target = outer.separatrix_energy + 0.02 * (outer.local_max_energy - outer.separatrix_energy)
    assert classical_energy(x.q, x.p, REGION_III) == pytest.approx(target, abs=1e-10)
    assert target > outer.separatrix_energy


def test_initial_state_mass_mostly_outside():
    p = ControlParams(1, 29.05, 5.0)
    mask = build_region_mask(p, "omega_out", 256)
    n = mask_truncation(mask)
    psi = coherent_state(CoherentSpec(initial_center(p)), n)
    v, err = husimi_volume(psi, mask, MCConfig(50_000, seed=1))
    assert v - 3 * err >= 0.5


def test_trace_starts_at_zero():
    p = ControlParams(1, 29.05, 5.0)
    mask = build_region_mask(p, "omega_out", 128)
    n = mask_truncation(mask)
    p = p.replace(n_trunc=n)
    spec = CoherentSpec(initial_center(p))
    tr = effective_tunneling(spec, p, mask, times=[0.0], mc_config=MCConfig(20_000))
    assert tr.effective[0] == 0.0
    tr = effective_tunneling(spec, p, mask, times=np.linspace(0, 5, 6), mc_config=MCConfig(20_000))
    assert tr.effective[0] == 0.0
    assert np.all(tr.volumes <= 1 + 3 * tr.errors + 1e-12) and np.all(tr.volumes >= 0)
    assert tr.summary["min"] == tr.t_min and tr.summary["final"] == tr.effective[-1]


def test_trace_warns_when_start_is_outside_mask():
    p = REGION_III
    inner = build_region_mask(p, "omega_in", 128)
    p = p.replace(n_trunc=max(40, mask_truncation(inner)))
    far = CoherentSpec.from_alpha(1.5)
    with pytest.warns(RuntimeWarning, match="initial Husimi mass"):
        effective_tunneling(far, p, inner, times=[0.0, 1.0], mc_config=MCConfig(5_000))


def test_trace_rejects_unsorted_times():
    with pytest.raises(ConfigError, match="times"):
        effective_tunneling(CoherentSpec(PhasePoint(0, 0)), REGION_III, disk_mask(1.0, resolution=8),
                            times=[1.0, 0.5])


def test_evolution_commutes_with_symmetry_rotation():
    mu = 3
    p = ControlParams(mu, 1.0, 0.4, n_trunc=70)
    sol = full_spectrum(p, vectors=True, certify_levels=False)
    psi = coherent_state(CoherentSpec.from_alpha(1.2 + 0.3j), p.n_trunc)
    th = 2 * math.pi / mu
    a = evolve(psi, sol, 3.0)
    b = evolve(psi.rotated(th), sol, 3.0)
    rng = np.random.default_rng(0)
    q, pp = rng.uniform(-2.5, 2.5, (2, 30))
    # Q_b(R x) = Q_a(x)
    rq, rp = math.cos(th) * q - math.sin(th) * pp, math.sin(th) * q + math.cos(th) * pp
    assert np.allclose(husimi_grid(b, rq, rp), husimi_grid(a, q, pp), atol=1e-8)
