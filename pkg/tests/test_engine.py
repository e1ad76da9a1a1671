import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2

from microsystem import GRID, BETA, audit_setup, enumerate_states
from multiworm.engine import (ANY_SPECIES, MOVE_NAMES, ChainState, SamplerError, UpdateParams,
                              propose_annihilate_worms, propose_create_worms, tether_log,
                              tether_weight)
from multiworm.kernel import KernelChain
from multiworm.model import ModelParams, build_layered_lattice
from multiworm.worldlines import WormEnd

INF = math.inf


# ------------------------------------------------------------------ tether
def test_tether_two_heads_one_apart():
    g = build_layered_lattice(1, 6)
    assert tether_log([(0, 0.3), (1, 0.3)], [], g, 4.0, 2.0, INF) == -0.5


def test_tether_uses_periodic_time_and_layer_distance():
    g = build_layered_lattice(2, 6)
    heads = [(0, 0.1), (g.site(1, 2), 3.9)]
    # distance 2 + 1 layer, time gap 0.2 around the circle
    assert tether_log(heads, [], g, 4.0, 3.0, 0.5) == pytest.approx(-(1.0 + 0.4))


def test_tether_ignores_head_tail_pairs():
    g = build_layered_lattice(1, 6)
    assert tether_log([(0, 0.0)], [(3, 1.0)], g, 4.0, 1.0, 1.0) == 0.0


def test_tether_disabled_by_infinite_lengths():
    g = build_layered_lattice(1, 6)
    ends = [WormEnd("head", 0, 0.1), WormEnd("head", 3, 1.5), WormEnd("tail", 2, 0.0),
            WormEnd("tail", 5, 2.0)]
    p = UpdateParams(xi_space=INF, xi_time=INF, worm_spec=((ANY_SPECIES, 2),))
    assert tether_weight(ends, p, g, 4.0).w == 1.0


# ---------------------------------------------------------------- proposals
def _propose(state):
    kind = state.choose_move()
    return {"create": state.propose_create, "annihilate": state.propose_annihilate,
            "shift": state.propose_shift, "kink": state.propose_kink}[kind]()


def _accepted_create(state, tries=10000):
    for _ in range(tries):
        prop = propose_create_worms(state)
        if prop is not None:
            prop.apply()
            return
    raise AssertionError("no valid create proposal")


def test_create_three_distinguishable_worms():
    g = build_layered_lattice(3, 5)
    m = ModelParams(J_intra=1.0, J_inter=0.0, mu=0.2, beta=3.0)
    p = UpdateParams(worm_spec=((0, 1), (1, 1), (2, 1)))
    state = ChainState(g, m, p, seed=4)
    _accepted_create(state)
    w = state.worldlines
    w.validate()
    ends = w.end_events()
    assert len(ends) == 6
    for layer, (tail, head) in enumerate(w.worms):
        assert g.layer_of(tail.site) == layer and g.layer_of(head.site) == layer
        assert tail.species == head.species == layer
    assert state.log_tether == pytest.approx(state.current_tether())


def test_create_on_empty_lattice_only_raises():
    g = build_layered_lattice(2, 4)
    m = ModelParams(J_intra=1.0, J_inter=1.0, mu=0.0, beta=2.0)
    state = ChainState(g, m, UpdateParams(worm_spec=((ANY_SPECIES, 2),)), seed=9)
    record = state.checkpoint()
    seen = 0
    for _ in range(300):
        prop = propose_create_worms(state)
        if prop is None:
            continue
        prop.apply()
        for tail, head in state.worldlines.worms:
            assert state.worldlines.occupation_at(tail.site, tail.time) == 1
        seen += 1
        rng_state = state.rng.bit_generator.state
        state.restore(record)
        state.rng.bit_generator.state = rng_state
    assert seen > 10


def test_sector_guards():
    g = build_layered_lattice(1, 3)
    state = ChainState(g, ModelParams(beta=1.0), UpdateParams(), seed=0)
    with pytest.raises(SamplerError):
        propose_annihilate_worms(state)
    _accepted_create(state)
    with pytest.raises(SamplerError):
        propose_create_worms(state)


def test_layer_locked_worms_need_decoupled_layers():
    g = build_layered_lattice(2, 3)
    with pytest.raises(ValueError):
        ChainState(g, ModelParams(J_inter=0.5), UpdateParams(worm_spec=((0, 1),)))
    with pytest.raises(ValueError):
        ChainState(g, ModelParams(J_inter=0.0), UpdateParams(worm_spec=((2, 1),)))


def test_update_params_validation():
    with pytest.raises(ValueError):
        UpdateParams(update_weights={"worm": 0.5, "shift": 0.4})
    with pytest.raises(ValueError):
        UpdateParams(update_weights={"worm": 0.0, "shift": 0.5, "kink": 0.5})
    with pytest.raises(ValueError):
        UpdateParams(gamma=0.0)


def _rich_setup(grid=GRID):
    g = build_layered_lattice(2, 3)
    m = ModelParams(J_intra=1.0, J_inter=0.6, V_inter=1.0, U_onsite=0.5, n_max=2,
                    mu=(0.3, -0.2), beta=BETA)
    p = UpdateParams(gamma=0.7, xi_space=2.0, xi_time=1.0, max_shift_window=BETA,
                     worm_spec=((ANY_SPECIES, 2),), time_grid=grid)
    return g, m, p


@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 300))
@settings(max_examples=40, deadline=None)
def test_forward_reverse_ratios_cancel(seed, burn):
    g, m, p = _rich_setup()
    state = ChainState(g, m, p, seed=seed)
    for _ in range(burn):
        state.step()
    x_key = state.worldlines.state_key()
    prop = None
    for _ in range(200):
        prop = _propose(state)
        if prop is not None and prop.kind != "annihilate":
            break
        prop = None
    if prop is None:
        return
    prop.apply()
    if state.worldlines.state_key() == x_key:
        return
    y_rec = state.checkpoint()
    for attempt in range(20000):
        state.restore(y_rec)
        state.rng = np.random.Generator(np.random.PCG64([seed, attempt]))
        back = _propose(state)
        if back is None:
            continue
        back.apply()
        if state.worldlines.state_key() == x_key:
            assert prop.log_ratio + back.log_ratio == pytest.approx(0.0, abs=1e-9)
            return
    pytest.fail(f"no reverse found for {prop.kind}")


@pytest.mark.parametrize("setup", ["rich", "continuous", "layer_locked"])
def test_incremental_weights_match_recomputation(setup):
    if setup == "rich":
        g, m, p = _rich_setup()
    elif setup == "continuous":
        g, m, _ = _rich_setup()
        p = UpdateParams(gamma=1.3, xi_time=0.7, worm_spec=((ANY_SPECIES, 2),))
    else:
        g = build_layered_lattice(3, 3)
        m = ModelParams(J_intra=1.0, J_inter=0.0, V_inter=1.5, mu=0.4, beta=2.5)
        p = UpdateParams(worm_spec=((0, 1), (1, 1), (2, 1)))
    p = dataclasses.replace(p, debug=True)
    state = ChainState(g, m, p, seed=11)
    for _ in range(4000):
        state.step()
    state.worldlines.validate()
    assert sum(state.accepts.values()) > 200


@pytest.fixture(scope="module")
def audit_reference():
    g, m = audit_setup()
    refs = {}
    for gamma in (1.0, 0.6):
        table = enumerate_states(g, m, gamma=gamma)
        keys = list(table)
        lw = np.array([table[k] for k in keys])
        prob = np.exp(lw - lw.max())
        refs[gamma] = (keys, prob / prob.sum())
    return refs


@pytest.mark.parametrize("seed,gamma", [(1, 1.0), (2, 1.0), (3, 0.6)])
def test_stationary_distribution_chi_square(audit_reference, seed, gamma):
    g, m = audit_setup()
    keys, prob = audit_reference[gamma]
    index = {k: i for i, k in enumerate(keys)}
    chain = KernelChain(g, m, UpdateParams(time_grid=GRID, max_kinks=2, gamma=gamma,
                                           max_shift_window=BETA), seed=seed)
    chain.run_steps(2000)
    n, thin = 12000, 200
    counts = np.zeros(len(keys))
    for _ in range(n):
        chain.run_steps(thin)
        counts[index[chain.worldlines.state_key()]] += 1
    expected = prob * n
    big = expected >= 5
    obs = np.append(counts[big], counts[~big].sum())
    exp = np.append(expected[big], expected[~big].sum())
    stat = ((obs - exp) ** 2 / exp).sum()
    p_value = chi2.sf(stat, len(obs) - 1)
    assert p_value > 0.01, (stat, len(obs) - 1)


# ------------------------------------------------------------ bookkeeping
def test_same_seed_same_trajectory():
    g, m, p = _rich_setup(grid=None)
    a = ChainState(g, m, p, seed=5)
    b = ChainState(g, m, p, seed=5)
    a.run_sweeps(20)
    b.run_sweeps(20)
    assert json.dumps(a.checkpoint(), sort_keys=True) == json.dumps(b.checkpoint(), sort_keys=True)
    c = ChainState(g, m, p, seed=6)
    c.run_sweeps(20)
    assert c.worldlines.snapshot() != a.worldlines.snapshot()


def test_zero_sweeps_changes_nothing():
    g, m, p = _rich_setup(grid=None)
    state = ChainState(g, m, p, seed=5)
    state.run_sweeps(3)
    before = json.dumps(state.checkpoint(), sort_keys=True)
    state.run_sweeps(0)
    assert len(state.sample(0)) == 0
    assert json.dumps(state.checkpoint(), sort_keys=True) == before


def test_counters_are_consistent():
    g, m, p = _rich_setup(grid=None)
    state = ChainState(g, m, p, seed=8)
    state.run_sweeps(10)
    assert sum(state.attempts.values()) == state.step_counter == 10 * state.steps_per_sweep
    for k in MOVE_NAMES:
        assert 0 <= state.accepts[k] <= state.attempts[k]
    assert all(0.0 <= r <= 1.0 for r in state.acceptance_rates().values())


def test_checkpoint_resume_is_bit_exact():
    g, m, p = _rich_setup(grid=None)
    a = ChainState(g, m, p, seed=21)
    a.run_sweeps(5)
    rec = json.loads(json.dumps(a.checkpoint()))
    a.run_sweeps(7)
    b = ChainState(g, m, p, seed=0)
    b.restore(rec)
    b.run_sweeps(7)
    assert b.checkpoint() == a.checkpoint()
    assert b.log_tether == a.log_tether


def test_checkpoint_format_checked():
    g, m, p = _rich_setup(grid=None)
    state = ChainState(g, m, p, seed=1)
    rec = state.checkpoint()
    with pytest.raises(ValueError):
        state.restore(dict(rec, version=2))
    with pytest.raises(ValueError):
        state.restore(dict(rec, format="other"))


def test_sample_rows_follow_sector():
    g, m, p = _rich_setup(grid=None)
    state = ChainState(g, m, p, seed=3)
    chunk = state.sample(200)
    assert len(chunk) == 200
    g_rows = chunk.sector == 1
    assert g_rows.any() and (~g_rows).any()
    assert (chunk.end_sites[~g_rows] == -1).all()
    assert (chunk.end_sites[g_rows] >= 0).all()
    assert (chunk.layer_counts.sum(axis=1) == chunk.n_particles).all()


# ----------------------------------------------------------- compiled kernel
def _assert_same_trajectory(g, m, p, seed, blocks=40, block=50):
    a = ChainState(g, m, p, seed=seed)
    b = KernelChain(g, m, p, seed=seed)
    for _ in range(blocks):
        for _ in range(block):
            a.step()
        b.run_steps(block)
        assert a.worldlines.snapshot() == b.worldlines.snapshot()
        assert a.attempts == b.attempts and a.accepts == b.accepts
        assert a.rng.bit_generator.state == b.rng.bit_generator.state
    assert a.log_tether == pytest.approx(b.log_tether, abs=1e-12)


KERNEL_CASES = {
    "one_any_worm": (build_layered_lattice(2, 3),
                     ModelParams(J_intra=1, J_inter=1, V_inter=2, mu=0.5, beta=2.0),
                     UpdateParams()),
    "two_any_worms": (build_layered_lattice(2, 3),
                      ModelParams(J_intra=1, J_inter=1, V_inter=2, mu=0.5, beta=2.0),
                      UpdateParams(gamma=0.5, worm_spec=((ANY_SPECIES, 2),))),
    "locked_species": (build_layered_lattice(3, 4),
                       ModelParams(J_intra=1, J_inter=0, V_inter=1.5, mu=0.3, beta=3.0,
                                   n_max=2, U_onsite=0.7),
                       UpdateParams(worm_spec=((0, 1), (1, 1), (2, 1)))),
    "grid": (build_layered_lattice(1, 2), ModelParams(mu=0.3, beta=2.0),
             UpdateParams(time_grid=8, max_kinks=2)),
}


@pytest.mark.parametrize("case", sorted(KERNEL_CASES))
def test_kernel_matches_reference_engine(case):
    g, m, p = KERNEL_CASES[case]
    _assert_same_trajectory(g, m, p, seed=len(case))


def test_kernel_sample_matches_reference_rows():
    g, m, p = KERNEL_CASES["two_any_worms"]
    a = ChainState(g, m, p, seed=2).sample(60)
    b = KernelChain(g, m, p, seed=2).sample(60)
    assert a.identical(b)


def test_kernel_rejects_debug_mode():
    g, m, p = KERNEL_CASES["grid"]
    with pytest.raises(ValueError):
        KernelChain(g, m, UpdateParams(debug=True), seed=0).run_steps(1)
