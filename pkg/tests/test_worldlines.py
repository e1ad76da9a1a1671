import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from fuzz import random_structural_op
from multiworm.model import ModelParams, build_layered_lattice
from multiworm.oracle import build_spectral_model, dyson_partition_terms
from multiworm.worldlines import (ConfigurationError, Kink, OccupancyViolation, RejectedMove,
                                  TimeCollision, WormEnd, Worldlines, from_record, to_record)


def chain2():
    return build_layered_lattice(1, 2)


def test_empty_configuration_is_vacuum():
    w = Worldlines(build_layered_lattice(2, 3), 2.0, 1)
    for s in range(6):
        for t in (0.0, 0.7, 1.999):
            assert w.occupation_at(s, t) == 0


def test_flat_worldline():
    w = Worldlines(chain2(), 2.0, 1, [1, 0])
    assert all(w.occupation_at(0, t) == 1 for t in (0.0, 0.3, 1.9))


def test_kink_moves_particle_off_site():
    g = chain2()
    rec = to_record(Worldlines(g, 2.0, 1, [1, 0]))
    rec["kinks"] = [[(0.5).hex(), 0, 1, 0], [(1.5).hex(), 1, 0, 0]]
    w = from_record(rec, g)
    w.validate()
    assert w.occupation_at(0, 0.2) == 1
    assert w.occupation_at(0, 0.5) == 0
    assert w.occupation_at(0, 1.0) == 0
    assert w.occupation_at(1, 1.0) == 1
    assert w.occupation_at(0, 1.5) == 1


def test_occupation_query_checks_site():
    w = Worldlines(chain2(), 1.0, 1)
    with pytest.raises(IndexError):
        w.occupation_at(5, 0.1)


def _one_worm(beta=2.0, occ=(0, 0)):
    w = Worldlines(chain2(), beta, 1, list(occ))
    w.place_worm(0, 0.2, 0.6, True)
    return w


def test_kink_onto_empty_site_is_occupancy_violation():
    w = _one_worm()
    tail, head = w.worms[0]
    # the head at 0.8 cannot leave site 0 at 0.9: site 0 is already empty there
    with pytest.raises(OccupancyViolation):
        w.insert_kink(Kink(0.9, 0, 1), head)


def test_valid_kink_before_head():
    w = _one_worm()
    head = w.worms[0][1]
    before = w.n_kinks
    w.insert_kink(Kink(0.5, 0, 1), head)
    w.validate()
    assert w.n_kinks == before + 1
    assert head.site == 1
    assert w.occupation_at(1, 0.6) == 1
    assert w.occupation_at(0, 0.6) == 0
    assert w.occupation_at(0, 0.3) == 1


def test_kink_time_collision():
    w = _one_worm()
    head = w.worms[0][1]
    with pytest.raises(TimeCollision):
        w.insert_kink(Kink(0.2, 0, 1), head)


def test_kink_direction_must_match_end():
    w = _one_worm()
    head = w.worms[0][1]
    with pytest.raises(RejectedMove):
        w.insert_kink(Kink(0.5, 1, 0), head)


@pytest.mark.parametrize("case", ["only", "first_of_many", "wrap_adjacent"])
def test_insert_then_remove_is_identity(case):
    g = build_layered_lattice(1, 3)
    w = Worldlines(g, 2.0, 1, [0, 0, 0])
    if case == "only":
        w.place_worm(0, 0.2, 0.6, True)
        end, kink = w.worms[0][1], Kink(0.5, 0, 1)
    elif case == "first_of_many":
        w.place_worm(0, 0.2, 1.2, True)
        head = w.worms[0][1]
        w.insert_kink(Kink(1.3, 0, 1), head)
        w.insert_kink(Kink(1.35, 1, 2), head)
        end, kink = w.worms[0][0], Kink(0.25, 1, 0)
    else:
        w.place_worm(0, 1.8, 0.5, True)  # wraps through beta
        end, kink = w.worms[0][1], Kink(0.05, 0, 1)
    snap = w.snapshot()
    out = w.insert_kink(kink, end)
    w.validate()
    assert w.snapshot() != snap
    w.remove_kink(out, end)
    w.validate()
    assert w.snapshot() == snap


def test_remove_missing_kink_rejected():
    w = _one_worm()
    tail, head = w.worms[0]
    with pytest.raises(RejectedMove):
        w.remove_kink(tail, head)


def test_place_worm_raises_interval():
    w = Worldlines(chain2(), 2.0, 1)
    w.place_worm_ends([(WormEnd("tail", 0, 0.3), WormEnd("head", 0, 1.1), True)])
    w.validate()
    assert w.occupation_at(0, 0.2) == 0
    assert w.occupation_at(0, 0.5) == 1
    assert w.occupation_at(0, 1.2) == 0


def test_place_raise_on_full_site_rejected():
    w = Worldlines(chain2(), 2.0, 1, [1, 0])
    with pytest.raises(OccupancyViolation):
        w.place_worm_ends([(WormEnd("tail", 0, 0.3), WormEnd("head", 0, 1.1), True)])
    assert w.in_z_sector


def test_place_lower_on_empty_site_rejected():
    w = Worldlines(chain2(), 2.0, 1)
    with pytest.raises(OccupancyViolation):
        w.place_worm(0, 0.3, 0.5, False)


def test_place_then_remove_is_identity():
    w = Worldlines(build_layered_lattice(2, 2), 2.0, 1, [1, 0, 0, 1])
    snap = w.snapshot()
    ends = [(WormEnd("tail", 1, 0.3), WormEnd("head", 1, 1.1), True),
            (WormEnd("tail", 3, 1.7), WormEnd("head", 3, 0.4), False)]
    w.place_worm_ends(ends)
    w.validate()
    w.remove_worm_ends([True, False])
    w.validate()
    assert w.snapshot() == snap


def test_place_worm_ends_is_all_or_nothing():
    w = Worldlines(chain2(), 2.0, 1, [0, 1])
    snap = w.snapshot()
    ends = [(WormEnd("tail", 0, 0.3), WormEnd("head", 0, 1.1), True),
            (WormEnd("tail", 1, 0.3), WormEnd("head", 1, 1.1), True)]
    with pytest.raises(OccupancyViolation):
        w.place_worm_ends(ends)
    assert w.snapshot() == snap


def test_vacuum_weight():
    w = Worldlines(build_layered_lattice(2, 3), 3.7, 1)
    pw = w.compute_path_weight(ModelParams(mu=0.4, V_inter=1.0, beta=3.7))
    assert pw.log_magnitude == 0.0 and pw.sign == 1 and pw.order == 0


def test_single_flat_worldline_weight():
    g = build_layered_lattice(1, 1)
    w = Worldlines(g, 1.5, 1, [1])
    pw = w.compute_path_weight(ModelParams(mu=2.0, beta=1.5))
    assert pw.log_magnitude == pytest.approx(3.0, abs=1e-14)


def _exchange_pair(t1, t2, start):
    g = chain2()
    other = 1 - start
    rec = to_record(Worldlines(g, 0.5, 1))
    rec["wrap_occupation"] = [1 if s == start else 0 for s in range(2)]
    rec["kinks"] = [[t1.hex(), start, other, 0], [t2.hex(), other, start, 0]]
    return from_record(rec, g)


def test_two_kink_exchange_weight_and_second_order_term():
    model = ModelParams(J_intra=1.0, mu=0.0, beta=0.5)
    w = _exchange_pair(0.1, 0.3, 0)
    w.validate()
    pw = w.compute_path_weight(model)
    assert pw.log_magnitude == 0.0 and pw.sign == 1 and pw.order == 2
    # every order-2 configuration has weight 1: two starting sites times the
    # ordered-time volume beta^2/2, which the expansion's second term must equal
    total = 0.0
    for start in (0, 1):
        assert _exchange_pair(0.2, 0.4, start).compute_path_weight(model).log_magnitude == 0.0
        total += model.beta ** 2 / 2
    sm = build_spectral_model(chain2(), model)
    assert dyson_partition_terms(sm, 2)[2] == pytest.approx(total, rel=1e-10)


def test_weight_additive_over_disjoint_sites():
    g = build_layered_lattice(1, 4, pbc_intra=False)
    model = ModelParams(J_intra=0.7, mu=0.3, U_onsite=0.0, beta=2.0)
    rec = to_record(Worldlines(g, 2.0, 1))
    rec["wrap_occupation"] = [1, 0, 0, 1]
    rec["kinks"] = [[(0.3).hex(), 0, 1, 0], [(1.1).hex(), 1, 0, 0],
                    [(0.5).hex(), 3, 2, 0], [(0.9).hex(), 2, 3, 0]]
    both = from_record(rec, g)
    left = dict(rec, wrap_occupation=[1, 0, 0, 0], kinks=rec["kinks"][:2])
    right = dict(rec, wrap_occupation=[0, 0, 0, 1], kinks=rec["kinks"][2:])
    lw = from_record(left, g).compute_path_weight(model).log_magnitude
    rw = from_record(right, g).compute_path_weight(model).log_magnitude
    assert both.compute_path_weight(model).log_magnitude == pytest.approx(lw + rw, abs=1e-13)


def test_validator_catches_broken_invariants():
    w = _one_worm()
    w.occ[0][0] = 0
    with pytest.raises(ConfigurationError):
        w.validate()
    w = _one_worm()
    w.n_kinks = 3
    with pytest.raises(ConfigurationError):
        w.validate()


def test_record_round_trip_is_bit_exact():
    g = build_layered_lattice(2, 3)
    w = Worldlines(g, 2.0, 2, [1, 0, 2, 0, 1, 0])
    w.place_worm(1, 0.1 + 1e-17, 0.7, True, 0)
    w.insert_kink(Kink(0.3000000000000001, 1, 0), w.worms[0][1])
    text = w.to_json()
    back = from_record(json.loads(text), g)
    assert back.snapshot() == w.snapshot()
    assert back.to_json() == text


def test_record_version_checked():
    g = chain2()
    rec = to_record(Worldlines(g, 1.0, 1))
    rec["version"] = 99
    with pytest.raises(ValueError):
        from_record(rec, g)


# ------------------------------------------------------------- fuzzing
@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_random_operations_keep_invariants(seed):
    rnd = random.Random(seed)
    g = build_layered_lattice(2, 3)
    w = Worldlines(g, 2.0, 2, [rnd.randrange(3) for _ in range(6)])
    types = []
    for _ in range(150):
        before = w.snapshot()
        if not random_structural_op(w, types, rnd):
            assert w.snapshot() == before
        w.validate()
    pw = w.compute_path_weight(ModelParams(J_intra=1, J_inter=0.5, n_max=2, beta=2.0))
    assert pw.sign == 1
