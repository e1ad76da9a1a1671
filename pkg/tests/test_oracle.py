import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from multiworm.model import ModelParams, build_layered_lattice
from multiworm.oracle import (BasisTooLarge, FockBasis, build_spectral_model,
                              dyson_partition_terms, integrated_green, spectral_dn,
                              spectral_green, thermal_expectation, thermal_observables,
                              worm_end_correlator)


def pair():
    return build_layered_lattice(1, 2)


def test_single_site_levels():
    sm = build_spectral_model(build_layered_lattice(1, 1),
                              ModelParams(mu=0.7, J_intra=0.0, beta=1.0))
    assert sorted(sm.energies) == pytest.approx([-0.7, 0.0])


def test_two_site_hard_core_levels_by_sector():
    m = ModelParams(J_intra=1.0, mu=0.0, beta=1.0)
    assert sorted(build_spectral_model(pair(), m).energies) == pytest.approx([-1, 0, 0, 1])
    expected = {0: [0.0], 1: [-1.0, 1.0], 2: [0.0]}
    for n, levels in expected.items():
        assert sorted(build_spectral_model(pair(), m, sector=n).energies) == pytest.approx(levels)


def test_stacked_pair_ground_energy():
    g = build_layered_lattice(2, 1, pbc_intra=False)
    sm = build_spectral_model(g, ModelParams(J_intra=0.0, J_inter=0.0, V_inter=3.0, mu=0.0))
    assert sm.energies.min() == pytest.approx(-3.0)


def test_basis_guard():
    with pytest.raises(BasisTooLarge):
        FockBasis(16, 1)
    assert len(FockBasis(16, 1, 1)) == 16


def test_spectral_model_is_consistent():
    g = build_layered_lattice(2, 3)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, J_inter=0.4, V_inter=2.0, mu=0.5,
                                             beta=2.0))
    U = sm.vectors
    assert np.allclose(U.T @ U, np.eye(len(U)), atol=1e-10)
    assert np.allclose(U @ np.diag(sm.energies) @ U.T, sm.hamiltonian, atol=1e-10)
    assert np.allclose(sm.hamiltonian, sm.hamiltonian.T)
    assert sm.partition_function > 0


def test_two_site_matrix_by_hand():
    sm = build_spectral_model(pair(), ModelParams(J_intra=0.8, mu=0.3, beta=1.0))
    idx = sm.basis.index
    H = sm.hamiltonian
    assert H[idx[(1, 0)], idx[(0, 1)]] == -0.8
    assert H[idx[(1, 1)], idx[(1, 1)]] == pytest.approx(-0.6)
    assert H[idx[(0, 0)], idx[(1, 1)]] == 0.0


def test_identity_expectation():
    sm = build_spectral_model(pair(), ModelParams(beta=1.3))
    assert thermal_expectation(sm, lambda occ: 1.0) == pytest.approx(1.0, abs=1e-14)
    assert thermal_expectation(sm, np.eye(4)) == pytest.approx(1.0, abs=1e-14)


def test_single_site_filling():
    sm = build_spectral_model(build_layered_lattice(1, 1), ModelParams(mu=0.5, beta=1.0))
    assert thermal_expectation(sm, lambda occ: occ[0]) == pytest.approx(
        math.exp(0.5) / (1 + math.exp(0.5)), rel=1e-12)
    assert thermal_expectation(sm, lambda occ: occ[0]) == pytest.approx(0.62246, abs=5e-6)


def test_two_site_thermal_values_from_four_state_sum():
    sm = build_spectral_model(pair(), ModelParams(J_intra=1.0, mu=0.0, beta=1.0))
    z = 1 + 2 * math.cosh(1.0) + 1
    assert sm.partition_function == pytest.approx(z, rel=1e-12)
    assert thermal_expectation(sm, lambda occ: sum(occ)) == pytest.approx(1.0)
    assert thermal_expectation(sm, sm.hamiltonian) == pytest.approx(-2 * math.sinh(1.0) / z)


def _dense_green(sm, i, j, tau):
    H = sm.hamiltonian
    aj = sm.annihilator(j)
    adi = sm.annihilator(i).T
    left = scipy.linalg.expm(-(sm.beta - tau) * H)
    right = scipy.linalg.expm(-tau * H)
    return np.trace(left @ aj @ right @ adi) / np.trace(scipy.linalg.expm(-sm.beta * H))


@pytest.mark.parametrize("mu", [-50.0, 0.3])
def test_green_matches_dense_matrix_product(mu):
    g = build_layered_lattice(1, 3)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, mu=mu, beta=1.0))
    for i, j, tau in [(0, 0, 0.2), (0, 1, 0.5), (2, 0, 0.9)]:
        assert spectral_green(sm, i, j, tau) == pytest.approx(_dense_green(sm, i, j, tau),
                                                              rel=1e-9, abs=1e-300)
    if mu < 0:
        # one particle on the 3-ring: band energies -2, 1, 1
        t = 0.5
        local = (math.exp(2 * t) + 2 * math.exp(-t)) / 3
        hop = (math.exp(2 * t) - math.exp(-t)) / 3
        assert spectral_green(sm, 0, 0, t) == pytest.approx(math.exp(t * mu) * local, rel=1e-9)
        assert spectral_green(sm, 0, 1, t) == pytest.approx(math.exp(t * mu) * hop, rel=1e-9)


def test_green_two_level():
    sm = build_spectral_model(build_layered_lattice(1, 1),
                              ModelParams(J_intra=0.0, mu=0.4, beta=2.0))
    for tau in (0.0, 0.7, 1.9):
        assert spectral_green(sm, 0, 0, tau) == pytest.approx(
            math.exp(0.4 * tau) / (1 + math.exp(0.8)), rel=1e-12)


def test_green_equal_time_sum_rule():
    g = build_layered_lattice(2, 3)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, J_inter=1.0, V_inter=2.0, mu=0.5,
                                             beta=2.0))
    for i in (0, 4):
        n_i = thermal_expectation(sm, lambda occ: occ[i])
        assert spectral_green(sm, i, i, 0.0) == pytest.approx(1 - n_i, abs=1e-12)


def test_green_translation_covariance_and_range():
    g = build_layered_lattice(1, 5)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, mu=0.2, beta=1.5))
    for tau in (0.1, 0.8):
        ref = spectral_green(sm, 0, 2, tau)
        for s in range(1, 5):
            assert spectral_green(sm, s, (s + 2) % 5, tau) == pytest.approx(ref, rel=1e-10)
    with pytest.raises(ValueError):
        spectral_green(sm, 0, 0, 1.5)


def test_integrated_green_matches_quadrature():
    g = build_layered_lattice(2, 2)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, J_inter=0.5, V_inter=1.0, mu=0.3,
                                             beta=2.0))
    for i, j in [(0, 0), (0, 1), (1, 3)]:
        quad, _ = scipy.integrate.quad(lambda t: spectral_green(sm, i, j, t), 0.0, sm.beta,
                                       epsabs=1e-12, epsrel=1e-12)
        assert integrated_green(sm, i, j) == pytest.approx(quad, rel=1e-9)


def test_single_worm_end_correlator_is_beta_times_integrated_green():
    g = build_layered_lattice(1, 3)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, mu=0.1, beta=1.5))
    for tail, head in [(0, 0), (0, 2)]:
        assert worm_end_correlator(sm, [tail], [head]) == pytest.approx(
            sm.beta * integrated_green(sm, tail, head), rel=1e-9)


def test_two_worm_correlator_factorizes_for_decoupled_layers():
    g2 = build_layered_lattice(2, 2)
    g1 = build_layered_lattice(1, 2)
    m = ModelParams(J_intra=1.0, J_inter=0.0, V_inter=0.0, mu=0.2, beta=1.2)
    sm2 = build_spectral_model(g2, m)
    sm1 = build_spectral_model(g1, m)
    both = worm_end_correlator(sm2, [0, 2], [1, 3])
    single = worm_end_correlator(sm1, [0], [1])
    assert both == pytest.approx(single ** 2, rel=1e-9)


def test_dn_factorizes_at_zero_coupling():
    g2 = build_layered_lattice(2, 3)
    g1 = build_layered_lattice(1, 3)
    m = ModelParams(J_intra=1.0, J_inter=0.0, V_inter=0.0, mu=0.3, beta=1.5)
    sm2 = build_spectral_model(g2, m)
    sm1 = build_spectral_model(g1, m)
    for (c0, c1, a0, a1, tau) in [(0, 0, 1, 2, 0.4), (2, 1, 2, 0, 1.1)]:
        d2 = spectral_dn(sm2, [c0, 3 + c1], [a0, 3 + a1], tau)
        assert d2 == pytest.approx(spectral_green(sm1, c0, a0, tau)
                                   * spectral_green(sm1, c1, a1, tau), rel=1e-9)


def test_dn_single_pair_equals_green():
    g = build_layered_lattice(1, 3)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, mu=0.3, beta=1.5))
    assert spectral_dn(sm, [0], [2], 0.6) == pytest.approx(spectral_green(sm, 0, 2, 0.6))


def test_dn_of_removal_on_nearly_empty_state():
    sm = build_spectral_model(build_layered_lattice(2, 2),
                              ModelParams(J_intra=1.0, J_inter=1.0, mu=-30.0, beta=1.0))
    A = sm.annihilator(0) @ sm.annihilator(2)
    assert abs(thermal_expectation(sm, A)) < 1e-12


def test_bound_pair_peaks_at_aligned_columns():
    g = build_layered_lattice(2, 3)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, J_inter=0.0, V_inter=6.0, mu=-1.0,
                                             beta=3.0))
    tau = 1.0
    values = {(c0, c1): spectral_dn(sm, [0, 3], [c0, 3 + c1], tau)
              for c0 in range(3) for c1 in range(3)}
    best = max(values, key=values.get)
    assert best[0] == best[1]


def test_expansion_terms_for_two_sites():
    sm = build_spectral_model(pair(), ModelParams(J_intra=1.0, mu=0.0, beta=0.5))
    terms = dyson_partition_terms(sm, 3)
    # H0 = 0: Tr e^{-beta H} = sum_n beta^n Tr(H1^n) / n!, Tr(H1^2) = 2, odd traces vanish
    assert terms[0] == pytest.approx(4.0)
    assert terms[1] == pytest.approx(0.0, abs=1e-14)
    assert terms[2] == pytest.approx(0.25, rel=1e-12)
    assert terms[3] == pytest.approx(0.0, abs=1e-14)


def test_thermal_observables_match_direct_expectations():
    g = build_layered_lattice(2, 2)
    sm = build_spectral_model(g, ModelParams(J_intra=1.0, J_inter=0.5, V_inter=1.5, mu=0.4,
                                             beta=1.3))
    obs = thermal_observables(sm)
    n = thermal_expectation(sm, lambda occ: sum(occ))
    assert obs["n_particles"] == pytest.approx(n, rel=1e-12)
    assert obs["energy"] == pytest.approx(thermal_expectation(sm, sm.hamiltonian), rel=1e-12)
    assert obs["e_diag"] + obs["e_kin"] == pytest.approx(obs["energy"], rel=1e-12)
    assert obs["filling_layer0"] + obs["filling_layer1"] == pytest.approx(2 * obs["filling"])


def test_thermal_observables_single_site():
    sm = build_spectral_model(build_layered_lattice(1, 1), ModelParams(mu=0.5, beta=1.0))
    obs = thermal_observables(sm)
    p = math.exp(0.5) / (1 + math.exp(0.5))
    assert obs["n_particles"] == pytest.approx(p, rel=1e-12)
    assert obs["e_diag"] == pytest.approx(-0.5 * p, rel=1e-12)
    assert obs["e_kin"] == pytest.approx(0.0, abs=1e-14)
