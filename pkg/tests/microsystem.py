"""Brute-force enumeration of the discrete-time audit system.

Two sites joined by one bond, hard-core bosons, at most two kinks, zero or one
worm, all event times on a grid of ``G`` points.  On the grid the chain's
stationary probability of a configuration is W * w * dt**(number of time
variables), because proposal densities are reported as p / dt.
"""
import itertools
import math

from multiworm.model import ModelParams, build_layered_lattice
from multiworm.worldlines import ConfigurationError, from_record

GRID = 8
BETA = 2.0


def audit_setup(mu=0.3, J=1.0):
    graph = build_layered_lattice(1, 2)
    model = ModelParams(J_intra=J, mu=mu, n_max=1, beta=BETA)
    return graph, model


def _kink_sets(max_kinks):
    for order in range(max_kinks + 1):
        for ts in itertools.combinations(range(GRID), order):
            for dirs in itertools.product(((0, 1), (1, 0)), repeat=order):
                yield list(zip(ts, dirs))


def enumerate_states(graph, model, max_kinks=2, species=-1, gamma=1.0):
    """Map state_key -> log stationary weight for every valid configuration."""
    dt = BETA / GRID
    out = {}
    worm_choices = [None] + [(ts, tt, hs, ht) for ts in range(2) for tt in range(GRID)
                             for hs in range(2) for ht in range(GRID)]
    for kinks in _kink_sets(max_kinks):
        used = set()
        for t, _ in kinks:
            used.add((0, t))
            used.add((1, t))
        for worm in worm_choices:
            if worm is not None:
                ts, tt, hs, ht = worm
                if (ts, tt) in used or (hs, ht) in used or (ts, tt) == (hs, ht):
                    continue
            for wrap_occ in itertools.product((0, 1), repeat=2):
                rec = {
                    "format": "multiworm-worldlines", "version": 1, "n_sites": 2,
                    "beta": BETA.hex(), "n_max": 1, "wrap_occupation": list(wrap_occ),
                    "kinks": [[(t * dt).hex(), a, b, species] for t, (a, b) in kinks],
                    "worms": [] if worm is None else
                    [[species, worm[0], (worm[1] * dt).hex(), worm[2], (worm[3] * dt).hex()]],
                }
                w = from_record(rec, graph)
                try:
                    w.validate()
                except ConfigurationError:
                    continue
                pw = w.compute_path_weight(model, gamma)
                if pw.log_magnitude == -math.inf:
                    continue
                n_times = len(kinks) + (2 if worm is not None else 0)
                out[w.state_key()] = pw.log_magnitude + n_times * math.log(dt)
    return out
