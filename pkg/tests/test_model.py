import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from multiworm.model import (LatticeError, ModelParams, build_layered_lattice,
                             check_occupation, diagonal_energy, hop_matrix_element)


def test_three_layer_ring_counts():
    g = build_layered_lattice(3, 4, True, True)
    assert g.n_sites == 12
    assert len(g.intra_bonds) == 12
    assert len(g.inter_bonds) == 12


def test_two_layer_wrap_bond_kept_once():
    g = build_layered_lattice(2, 5, True, True)
    assert len(g.inter_bonds) == 5


def test_single_layer_has_no_inter_bonds():
    g = build_layered_lattice(1, 8, True, False)
    assert len(g.intra_bonds) == 8
    assert g.inter_bonds == ()


def test_zero_sites_rejected():
    with pytest.raises(LatticeError):
        build_layered_lattice(0, 4)
    with pytest.raises(LatticeError):
        build_layered_lattice(2, 0)


@pytest.mark.parametrize("M,L,pi,pe", list(itertools.product(
    [1, 2, 3, 4], [2, 3, 5], [True, False], [True, False])))
def test_bond_structure(M, L, pi, pe):
    g = build_layered_lattice(M, L, pi, pe)
    assert g.n_sites == M * L
    for bonds in (g.intra_bonds, g.inter_bonds):
        keys = [tuple(sorted(b)) for b in bonds]
        assert len(keys) == len(set(keys))
        assert all(a != b for a, b in bonds)
        deg = [0] * g.n_sites
        for a, b in bonds:
            deg[a] += 1
            deg[b] += 1
        assert max(deg + [0]) <= 2
    for a, b in g.intra_bonds:
        assert g.layer_of(a) == g.layer_of(b)
    for a, b in g.inter_bonds:
        assert g.position_of(a) == g.position_of(b)


def test_site_index_bijection():
    g = build_layered_lattice(3, 7)
    seen = set()
    for layer in range(3):
        for pos in range(7):
            s = g.site(layer, pos)
            assert g.layer_of(s) == layer and g.position_of(s) == pos
            seen.add(s)
    assert seen == set(range(21))


def test_min_image_distances():
    g = build_layered_lattice(3, 10)
    assert g.column_distance(0, 9) == 1
    assert g.column_distance(0, 5) == 5
    assert g.column_displacement(0, 9) == -1
    assert g.column_displacement(9, 0) == 1
    assert g.column_displacement(0, 5) == -5
    assert g.layer_distance(0, 20) == 1
    assert g.distance(g.site(0, 0), g.site(2, 8)) == 3
    open_g = build_layered_lattice(1, 10, pbc_intra=False)
    assert open_g.column_distance(0, 9) == 9


def test_model_param_validation():
    with pytest.raises(LatticeError):
        ModelParams(beta=0.0)
    with pytest.raises(LatticeError):
        ModelParams(n_max=0)
    with pytest.raises(LatticeError):
        ModelParams(J_intra=-1.0)
    with pytest.raises(LatticeError):
        ModelParams(J_inter=-0.1)


def test_vacuum_energy_zero():
    g = build_layered_lattice(2, 4)
    assert diagonal_energy([0] * 8, ModelParams(V_inter=3, mu=1), g) == 0.0


def test_stacked_pair_energy():
    g = build_layered_lattice(2, 3)
    occ = [1, 0, 0, 1, 0, 0]
    assert diagonal_energy(occ, ModelParams(V_inter=3, mu=1, U_onsite=0), g) == -5.0


def test_onsite_repulsion():
    g = build_layered_lattice(1, 1)
    assert diagonal_energy([2], ModelParams(U_onsite=4, mu=0, n_max=2), g) == 8.0


def test_per_layer_chemical_potential():
    g = build_layered_lattice(2, 2)
    p = ModelParams(mu=(1.0, 2.0))
    assert diagonal_energy([1, 0, 0, 1], p, g) == -3.0


def test_occupation_out_of_range():
    g = build_layered_lattice(1, 2)
    with pytest.raises(LatticeError):
        check_occupation([2, 0], ModelParams(n_max=1), g)
    with pytest.raises(LatticeError):
        check_occupation([1], ModelParams(), g)


def test_hard_core_hop():
    g = build_layered_lattice(1, 2)
    p = ModelParams(J_intra=1.0)
    assert hop_matrix_element([1, 0], [0, 1], (0, 1), p, g) == -1.0


def test_soft_core_hop():
    g = build_layered_lattice(1, 2)
    p = ModelParams(J_intra=1.0, n_max=3)
    assert hop_matrix_element([2, 1], [1, 2], (0, 1), p, g) == -2.0


def test_hop_into_occupied_hard_core_site():
    g = build_layered_lattice(1, 2)
    p = ModelParams(J_intra=1.0)
    assert hop_matrix_element([2, 0], [1, 1], (0, 1), p, g) == 0.0


def test_hop_uses_inter_amplitude():
    g = build_layered_lattice(2, 2)
    p = ModelParams(J_intra=1.0, J_inter=0.25)
    assert hop_matrix_element([1, 0, 0, 0], [0, 0, 1, 0], (0, 2), p, g) == -0.25


occ_strategy = st.lists(st.integers(0, 1), min_size=8, max_size=8)


@given(occ_strategy, st.integers(0, 3))
@settings(max_examples=200, deadline=None)
def test_energy_invariant_under_cyclic_shift(occ, shift):
    g = build_layered_lattice(2, 4)
    p = ModelParams(V_inter=1.7, mu=(0.3, -0.4), U_onsite=0.0)
    shifted = [0] * 8
    for s, n in enumerate(occ):
        layer, pos = divmod(s, 4)
        shifted[layer * 4 + (pos + shift) % 4] = n
    assert math.isclose(diagonal_energy(occ, p, g), diagonal_energy(shifted, p, g),
                        abs_tol=1e-12)


@given(st.lists(st.integers(0, 2), min_size=6, max_size=6), st.integers(0, 5),
       st.integers(0, 5))
@settings(max_examples=300, deadline=None)
def test_hop_hermitian_and_hard_core_values(occ, i, j):
    g = build_layered_lattice(2, 3)
    soft = ModelParams(J_intra=1.3, J_inter=0.6, n_max=2)
    if i == j:
        return
    src = list(occ)
    tgt = list(occ)
    tgt[i] += 1
    tgt[j] -= 1
    if min(tgt) < 0 or max(tgt) > 2:
        assert hop_matrix_element(tgt, src, (i, j), soft, g) == 0.0
        return
    fwd = hop_matrix_element(tgt, src, (i, j), soft, g)
    rev = hop_matrix_element(src, tgt, (j, i), soft, g)
    assert fwd == rev
    hard = ModelParams(J_intra=1.3, J_inter=0.6, n_max=1)
    if max(src) <= 1 and max(tgt) <= 1:
        assert hop_matrix_element(tgt, src, (i, j), hard, g) in (0.0, -1.3, -0.6)
