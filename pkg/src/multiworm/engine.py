"""Metropolis-Hastings sampler over Z (no worms) and G (worm_spec worms) sectors.

Every random decision draws ``rng.random()`` in a fixed order, and integer
choices are ``int(u * n)``; the compiled kernel in :mod:`multiworm.kernel`
consumes the stream identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .model import LatticeGraph, ModelParams
from .records import MeasurementChunk
from .timeaxis import TimeAxis, signed_offset
from .worldlines import (HEAD, JUMP, KINK_IN, KINK_OUT, Event, WormEnd,
                         Worldlines, arc_length, from_record, to_record, wrap)

ANY_SPECIES = -1
UPDATE_KINDS = ("worm", "shift", "kink")
MOVE_NAMES = ("create", "annihilate", "shift", "kink_insert", "kink_remove")
CHECKPOINT_FORMAT = "multiworm-chain"
CHECKPOINT_VERSION = 1
_LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class UpdateParams:
    """Sampler settings.

    ``worm_spec`` lists ``(species, count)``; species ``ANY_SPECIES`` worms may
    visit every site, species ``a >= 0`` worms are locked to layer ``a``.
    ``None`` for ``xi_time`` / ``max_shift_window`` means 2/J and beta/4.
    """
    gamma: float = 1.0
    xi_space: float = 2.0
    xi_time: Optional[float] = None
    max_shift_window: Optional[float] = None
    update_weights: Mapping[str, float] = field(
        default_factory=lambda: {"worm": 0.2, "shift": 0.4, "kink": 0.4})
    worm_spec: Tuple[Tuple[int, int], ...] = ((ANY_SPECIES, 1),)
    worm_length: float = 1.0
    steps_per_sweep: Optional[int] = None
    time_grid: Optional[int] = None
    max_kinks: Optional[int] = None
    debug: bool = False

    def __post_init__(self):
        object.__setattr__(self, "worm_spec",
                           tuple((int(a), int(n)) for a, n in self.worm_spec))
        object.__setattr__(self, "update_weights", dict(self.update_weights))
        if set(self.update_weights) - set(UPDATE_KINDS):
            raise ValueError(f"unknown update kinds {set(self.update_weights) - set(UPDATE_KINDS)}")
        if any(p < 0 for p in self.update_weights.values()):
            raise ValueError("update weights must be non-negative")
        total = sum(self.update_weights.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"update weights sum to {total}, not 1")
        if self.update_weights.get("worm", 0.0) <= 0.0:
            raise ValueError("the worm update needs a positive weight")
        if any(n < 0 for _, n in self.worm_spec):
            raise ValueError("worm counts must be non-negative")
        if self.gamma <= 0 or self.xi_space <= 0 or self.worm_length <= 0:
            raise ValueError("gamma, xi_space and worm_length must be positive")
        if self.xi_time is not None and self.xi_time <= 0:
            raise ValueError("xi_time must be positive")
        if self.max_shift_window is not None and self.max_shift_window <= 0:
            raise ValueError("max_shift_window must be positive")

    @property
    def n_worms(self) -> int:
        return sum(n for _, n in self.worm_spec)

    def species_list(self) -> List[int]:
        out = []
        for a, n in self.worm_spec:
            out.extend([a] * n)
        return out

    def resolved(self, model: ModelParams) -> "UpdateParams":
        """Copy with the beta/J dependent defaults filled in."""
        j = max(model.J_intra, model.J_inter)
        xi_t = self.xi_time if self.xi_time is not None else (2.0 / j if j > 0 else math.inf)
        win = self.max_shift_window if self.max_shift_window is not None else model.beta / 4
        return replace(self, xi_time=xi_t, max_shift_window=win)


# ---------------------------------------------------------------- tether
@dataclass(frozen=True)
class TetherWeight:
    log_w: float

    @property
    def w(self) -> float:
        return math.exp(self.log_w)


def _pair_penalty(ends, graph, beta, xi, xi_t):
    total = 0.0
    for a in range(len(ends)):
        sa, ta = ends[a]
        for b in range(a + 1, len(ends)):
            sb, tb = ends[b]
            if xi != math.inf:
                total += graph.distance(sa, sb) / xi
            if xi_t != math.inf:
                dt = abs(ta - tb)
                total += min(dt, beta - dt) / xi_t
    return total


def tether_log(heads, tails, graph: LatticeGraph, beta: float, xi: float, xi_t: float) -> float:
    """log w for (site, time) lists of heads and tails."""
    return -(_pair_penalty(heads, graph, beta, xi, xi_t)
             + _pair_penalty(tails, graph, beta, xi, xi_t))


def tether_weight(ends: Sequence[WormEnd], params: UpdateParams, graph: LatticeGraph,
                  beta: float) -> TetherWeight:
    """Proximity weight coupling heads with heads and tails with tails."""
    xi_t = params.xi_time if params.xi_time is not None else 2.0
    heads = [(e.site, e.time) for e in ends if e.kind == "head"]
    tails = [(e.site, e.time) for e in ends if e.kind == "tail"]
    return TetherWeight(tether_log(heads, tails, graph, beta, params.xi_space, xi_t))


def arc_overlap(a0: float, la: float, b0: float, lb: float, beta: float) -> float:
    """Length of the intersection of arcs [a0, a0+la) and [b0, b0+lb) on the circle."""
    total = 0.0
    for shift in (-beta, 0.0, beta):
        lo = max(a0, b0 + shift)
        hi = min(a0 + la, b0 + shift + lb)
        if hi > lo:
            total += hi - lo
    return total


# -------------------------------------------------------------- proposals
class Proposal:
    """A candidate move: log target ratio, log proposal densities, and an apply hook."""
    __slots__ = ("kind", "log_weight_ratio", "log_tether_ratio", "log_q_fwd",
                 "log_q_rev", "apply")

    def __init__(self, kind, log_weight_ratio, log_tether_ratio, log_q_fwd, log_q_rev, apply):
        self.kind = kind
        self.log_weight_ratio = log_weight_ratio
        self.log_tether_ratio = log_tether_ratio
        self.log_q_fwd = log_q_fwd
        self.log_q_rev = log_q_rev
        self.apply = apply

    @property
    def log_ratio(self) -> float:
        return self.log_weight_ratio + self.log_tether_ratio + self.log_q_rev - self.log_q_fwd


class SamplerError(RuntimeError):
    pass


class ChainState:
    """One Markov chain: worldlines, RNG stream, counters and cached tables."""

    def __init__(self, graph: LatticeGraph, model: ModelParams, params: UpdateParams,
                 seed=0, rng: Optional[np.random.Generator] = None,
                 occupation: Optional[Sequence[int]] = None):
        self.graph = graph
        self.model = model
        self.params = params.resolved(model)
        self.rng = rng if rng is not None else np.random.Generator(np.random.PCG64(seed))
        self.worldlines = Worldlines(graph, model.beta, model.n_max, occupation)
        self.step_counter = 0
        self.attempts = {k: 0 for k in MOVE_NAMES}
        self.accepts = {k: 0 for k in MOVE_NAMES}
        self.log_tether = 0.0
        self._setup_tables()
        self._debug_logw = None

    # ---------------------------------------------------------------- setup
    def _setup_tables(self):
        g, m, p = self.graph, self.model, self.params
        beta = m.beta
        self.beta = beta
        self.axis = TimeAxis(beta, p.time_grid)
        self.energy = m.onsite_table(g).tolist()
        self.V = float(m.V_inter)
        self.vertical = g.vertical
        self.log_gamma2 = 2.0 * math.log(p.gamma)
        self.species = p.species_list()
        self.n_worms = len(self.species)
        self.log_label_factor = sum(2.0 * math.lgamma(n + 1) for _, n in p.worm_spec)
        w = p.update_weights
        self.p_worm = w.get("worm", 0.0)
        self.log_p_worm = math.log(self.p_worm)
        self.cum_g = [self.p_worm, self.p_worm + w.get("shift", 0.0)]
        L, M = g.sites_per_layer, g.n_layers
        self.allowed_sites = {}
        self.allowed_nbrs = {}
        for a in set(self.species) | {ANY_SPECIES}:
            if a == ANY_SPECIES:
                sites = list(range(g.n_sites))
            else:
                if not 0 <= a < M:
                    raise ValueError(f"species {a} is not a layer of a {M}-layer lattice")
                if m.J_inter != 0.0:
                    raise ValueError("layer-locked worms need J_inter = 0")
                sites = list(range(a * L, (a + 1) * L))
            self.allowed_sites[a] = sites
            nb = []
            for s in range(g.n_sites):
                lst = []
                for t, inter in g.neighbors[s]:
                    if a != ANY_SPECIES and inter:
                        continue
                    amp = m.J_inter if inter else m.J_intra
                    if amp > 0.0:
                        lst.append((t, amp))
                nb.append(lst)
            self.allowed_nbrs[a] = nb
        # column proposal for worms after the anchor
        xi = p.xi_space
        self.col_logp = []
        self.col_cum = []
        for c0 in range(L):
            ws = [math.exp(-g.column_distance(c0, c) / xi) if xi != math.inf else 1.0
                  for c in range(L)]
            z = sum(ws)
            self.col_logp.append([math.log(x / z) for x in ws])
            cum, acc = [], 0.0
            for x in ws:
                acc += x / z
                cum.append(acc)
            self.col_cum.append(cum)
        self.log_M = math.log(M)
        self.window = p.max_shift_window
        if p.steps_per_sweep is not None:
            self.steps_per_sweep = int(p.steps_per_sweep)
        else:
            j = max(m.J_intra, m.J_inter)
            self.steps_per_sweep = max(1, math.ceil(g.n_sites * beta * (j if j > 0 else 1.0)))

    # -------------------------------------------------------------- helpers
    @property
    def sector(self) -> str:
        return "Z" if self.worldlines.in_z_sector else "G"

    def _pick(self, n: int) -> int:
        k = int(self.rng.random() * n)
        return k if k < n else n - 1

    def _pick_cum(self, cum) -> int:
        u = self.rng.random()
        for k, c in enumerate(cum):
            if u < c:
                return k
        return len(cum) - 1

    def _vsum(self, site: int, t0: float, length: float) -> float:
        w = self.worldlines
        return sum(w.occupation_integral(b, t0, length) for b in self.vertical[site])

    def _end_lists(self, moved: Optional[Event] = None, site=None, time=None):
        heads, tails = [], []
        for tail, head in self.worldlines.worms:
            for e, bucket in ((tail, tails), (head, heads)):
                if e is moved:
                    bucket.append((site, time))
                else:
                    bucket.append((e.site, e.time))
        return heads, tails

    def _tether(self, heads, tails) -> float:
        p = self.params
        return tether_log(heads, tails, self.graph, self.beta, p.xi_space, p.xi_time)

    def current_tether(self) -> float:
        if self.worldlines.in_z_sector:
            return 0.0
        return self._tether(*self._end_lists())

    # ----------------------------------------------------------- create/remove
    def _worm_geometry_delta(self, worms, present: bool) -> Optional[float]:
        """log weight change of adding all ``worms`` to the worm-free state.

        ``worms`` holds (site, start, length, delta).  When ``present`` the worms
        are currently drawn and their own contributions are removed from the
        vertical integrals first.
        """
        w = self.worldlines
        E = self.energy
        V = self.V
        beta = self.beta
        total = 0.0
        for k, (s, a0, ell, d) in enumerate(worms):
            n = w.occupation_at(s, a0) - (d if present else 0)
            nn = n + d
            if nn < 0 or nn > self.model.n_max:
                return None
            total -= (E[s][nn] - E[s][n]) * ell
            total += self.log_gamma2 + math.log(nn if d > 0 else n)
            if V:
                acc = 0.0
                for b in self.vertical[s]:
                    acc += w.occupation_integral(b, a0, ell)
                    for k2, (s2, b0, l2, d2) in enumerate(worms):
                        if s2 != b:
                            continue
                        if present:
                            acc -= d2 * arc_overlap(a0, ell, b0, l2, beta)
                        if k2 < k:
                            acc += d2 * arc_overlap(a0, ell, b0, l2, beta)
                total += V * d * acc
        return total

    def propose_create(self) -> Optional[Proposal]:
        self._move = "create"
        w = self.worldlines
        g = self.graph
        axis = self.axis
        p = self.params
        L = g.sites_per_layer
        lq = 0.0
        worms = []  # (site, start, length, delta)
        col0 = 0
        t0 = 0.0
        for k, a in enumerate(self.species):
            if k == 0:
                sites = self.allowed_sites[a]
                s = sites[self._pick(len(sites))]
                t0 = axis.uniform_time(self.rng)
                lq += -math.log(len(sites)) + axis.log_uniform_density
                col0 = s % L
                start = t0
            else:
                col = self._pick_cum(self.col_cum[col0])
                lq += self.col_logp[col0][col]
                if a == ANY_SPECIES:
                    layer = self._pick(g.n_layers)
                    lq -= self.log_M
                else:
                    layer = a
                s = layer * L + col
                eps, l_eps = axis.offset(self.rng, p.xi_time)
                lq += l_eps
                start = self._shifted(t0, eps)
            drawn = axis.length(self.rng, p.worm_length)
            raise_ = self.rng.random() < 0.5
            lq += _LOG_HALF
            if drawn is None:
                return None
            ell, l_len = drawn
            lq += l_len
            worms.append((s, start, ell, 1 if raise_ else -1))
        # geometry checks: free arcs, no collisions among new ends
        for k, (s, a0, ell, d) in enumerate(worms):
            a1 = wrap(a0 + ell, self.beta)
            if a1 == a0 or w.has_event_at(s, a0) or w.has_event_at(s, a1) \
                    or not w._free(s, a0, a1):
                return None
            for s2, b0, l2, _ in worms[:k]:
                if s2 == s and (arc_overlap(a0, ell, b0, l2, self.beta) > 0.0
                                or a0 == b0 or a1 == wrap(b0 + l2, self.beta)
                                or a0 == wrap(b0 + l2, self.beta) or a1 == b0):
                    return None
        dlog = self._worm_geometry_delta(worms, present=False)
        if dlog is None:
            return None
        heads, tails = [], []
        for s, a0, ell, d in worms:
            a1 = wrap(a0 + ell, self.beta)
            if d > 0:
                tails.append((s, a0))
                heads.append((s, a1))
            else:
                heads.append((s, a0))
                tails.append((s, a1))
        log_tether = self._tether(heads, tails)
        log_q_rev = self.log_p_worm + self.n_worms * _LOG_HALF

        def apply():
            for (s, a0, ell, d), a in zip(worms, self.species):
                w.place_worm(s, a0, ell, d > 0, a)
            self.log_tether = log_tether

        return Proposal("create", dlog - self.log_label_factor, log_tether, lq, log_q_rev, apply)

    def _shifted(self, t0: float, eps: float) -> float:
        axis = self.axis
        if axis.grid is None:
            return wrap(t0 + eps, self.beta)
        return axis.at(axis.index(t0) + int(round(eps / axis.dt)))

    def propose_annihilate(self) -> Optional[Proposal]:
        self._move = "annihilate"
        w = self.worldlines
        g = self.graph
        axis = self.axis
        p = self.params
        L = g.sites_per_layer
        types = [self.rng.random() < 0.5 for _ in range(self.n_worms)]
        worms = []
        lq = 0.0
        t0 = 0.0
        col0 = 0
        for k, ((tail, head), raise_, a) in enumerate(zip(w.worms, types, self.species)):
            if not w.worm_removable(k, raise_):
                return None
            first, second = (tail, head) if raise_ else (head, tail)
            s = tail.site
            start = first.time
            ell = arc_length(first.time, second.time, self.beta)
            if k == 0:
                sites = self.allowed_sites[a]
                lq += -math.log(len(sites)) + axis.log_uniform_density
                t0 = start
                col0 = s % L
            else:
                if a != ANY_SPECIES and s // L != a:
                    return None
                lq += self.col_logp[col0][s % L]
                if a == ANY_SPECIES:
                    lq -= self.log_M
                lq += axis.offset_log_density(signed_offset(start, t0, self.beta), p.xi_time)
            lq += axis.length_log_density(ell, p.worm_length) + _LOG_HALF
            worms.append((s, start, ell, 1 if raise_ else -1))
        dlog = self._worm_geometry_delta(worms, present=True)
        if dlog is None:
            return None
        log_q_fwd = self.log_p_worm + self.n_worms * _LOG_HALF

        def apply():
            w.remove_worm_ends(types)
            self.log_tether = 0.0

        return Proposal("annihilate", -(dlog - self.log_label_factor), -self.log_tether,
                        log_q_fwd, lq, apply)

    # ------------------------------------------------------------------ shift
    def propose_shift(self, which_end: Optional[int] = None) -> Optional[Proposal]:
        self._move = "shift"
        w = self.worldlines
        ends = w.end_events()
        if which_end is None:
            which_end = self._pick(len(ends))
        e = ends[which_end]
        s, t = e.site, e.time
        prev = w.prev_event(s, t)
        nxt = w.next_event(s, t)
        if prev is e or nxt is e:
            raise SamplerError("worm end alone on its site")
        half = 0.5 * self.window
        lo = max(-arc_length(prev.time, t, self.beta), -half)
        hi = min(arc_length(t, nxt.time, self.beta), half)
        drawn = self.axis.window(self.rng, t, lo, hi)
        if drawn is None:
            return None
        t_new, u, lq_fwd = drawn
        if t_new == t:
            return Proposal("shift", 0.0, 0.0, lq_fwd, lq_fwd, lambda: None)
        if w.has_event_at(s, t_new):
            return None
        if prev is not nxt and not (arc_length(prev.time, t_new, self.beta)
                                    < arc_length(prev.time, nxt.time, self.beta)):
            return None
        lo_r = max(-arc_length(prev.time, t_new, self.beta), -half)
        hi_r = min(arc_length(t_new, nxt.time, self.beta), half)
        lq_rev = self.axis.window_log_density(lo_r, hi_r)
        if u > 0:
            a0, ell = t, u
            n_old = w.occupation_at(s, t)
            d = -JUMP[e.kind]
        else:
            a0, ell = t_new, -u
            n_old = w.occupation_before(s, t)
            d = JUMP[e.kind]
        n_new = n_old + d
        if n_new < 0 or n_new > self.model.n_max:
            return None
        dlog = 0.0
        if ell > 0.0:
            E = self.energy[s]
            dlog = -(E[n_new] - E[n_old]) * ell
            if self.V:
                dlog += self.V * d * self._vsum(s, a0, ell)
        log_tether = self._tether(*self._end_lists(e, s, t_new))

        def apply():
            w.shift_end(e, t_new)
            self.log_tether = log_tether

        return Proposal("shift", dlog, log_tether - self.log_tether, lq_fwd, lq_rev, apply)

    # ------------------------------------------------------------------ kinks
    def _hop_log_weight(self, kind, before, i, j, n_i, n_j, ell, vi, vj, amp):
        """log weight change of moving the end on ``i`` to ``j`` through a new kink.

        ``n_i``, ``n_j`` are the arc occupations and ``vi``, ``vj`` the summed
        vertical-neighbour integrals over the arc, all before the move.
        Returns None for a forbidden occupation.
        """
        jump = JUMP[kind]
        d_i = jump if before else -jump
        d_j = -d_i
        ni2, nj2 = n_i + d_i, n_j + d_j
        nmax = self.model.n_max
        if ni2 < 0 or ni2 > nmax or nj2 < 0 or nj2 > nmax:
            return None
        Ei, Ej = self.energy[i], self.energy[j]
        dlog = -(Ei[ni2] - Ei[n_i] + Ej[nj2] - Ej[n_j]) * ell
        if self.V:
            corr = d_i * ell if i in self.vertical[j] else 0.0
            dlog += self.V * (d_i * vi + d_j * (vj + corr))
        # old end factor on i, new end factor on j
        if kind == HEAD:
            old_end = n_i if before else n_i - jump
            new_end = nj2 if before else n_j
            src_n, dst_n = n_i, n_j
            d_src, d_dst = d_i, d_j
        else:
            old_end = n_i + jump if before else n_i
            new_end = n_j if before else nj2
            src_n, dst_n = n_j, n_i
            d_src, d_dst = d_j, d_i
        if before:
            nb_src, na_dst = src_n, dst_n + d_dst
        else:
            nb_src, na_dst = src_n + d_src, dst_n
        if old_end <= 0 or new_end <= 0 or nb_src <= 0 or na_dst <= 0:
            return None
        dlog += math.log(amp) + 0.5 * (math.log(nb_src) + math.log(na_dst)
                                       + math.log(new_end) - math.log(old_end))
        return dlog

    def propose_kink(self, which_end: Optional[int] = None) -> Optional[Proposal]:
        w = self.worldlines
        ends = w.end_events()
        if which_end is None:
            which_end = self._pick(len(ends))
        e = ends[which_end]
        insert = self.rng.random() < 0.5
        before = self.rng.random() < 0.5
        self._move = "kink_insert" if insert else "kink_remove"
        if insert:
            return self._propose_kink_insert(e, before)
        return self._propose_kink_remove(e, before)

    def _propose_kink_insert(self, e: Event, before: bool) -> Optional[Proposal]:
        w = self.worldlines
        beta = self.beta
        i, t = e.site, e.time
        nbrs = self.allowed_nbrs[e.species][i]
        z = len(nbrs)
        if z == 0:
            return None
        j, amp = nbrs[self._pick(z)]
        mk = self.params.max_kinks
        if mk is not None and w.n_kinks >= mk:
            return None
        if w.has_event_at(j, t):
            return None
        W = self.window
        if before:
            pi = w.prev_event(i, t)
            pj = w.prev_event(j, t)
            lo = max(-arc_length(pi.time, t, beta),
                     -arc_length(pj.time, t, beta) if pj is not None else -beta, -W)
            drawn = self.axis.window(self.rng, t, lo, 0.0)
        else:
            ni_ = w.next_event(i, t)
            nj_ = w.next_event(j, t)
            hi = min(arc_length(t, ni_.time, beta),
                     arc_length(t, nj_.time, beta) if nj_ is not None else beta, W)
            drawn = self.axis.window(self.rng, t, 0.0, hi)
        if drawn is None:
            return None
        tk, u, lq_win = drawn
        if tk == t or w.has_event_at(i, tk) or w.has_event_at(j, tk):
            return None
        if before:
            if not (w._free(i, tk, t) and w._free(j, tk, t)):
                return None
        elif not (w._free(i, t, tk) and w._free(j, t, tk)):
            return None
        ell = -u if before else u
        a0 = tk if before else t
        n_i = w.occupation_before(i, t) if before else w.occupation_at(i, t)
        n_j = w.occupation_at(j, a0)
        vi = self._vsum(i, a0, ell) if self.V else 0.0
        vj = self._vsum(j, a0, ell) if self.V else 0.0
        dlog = self._hop_log_weight(e.kind, before, i, j, n_i, n_j, ell, vi, vj, amp)
        if dlog is None:
            return None
        log_tether = self._tether(*self._end_lists(e, j, t))
        species = e.species

        def apply():
            w.hop_end(e, j, tk, before, species)
            self.log_tether = log_tether

        return Proposal("kink_insert", dlog, log_tether - self.log_tether,
                        lq_win - math.log(z), 0.0, apply)

    def _propose_kink_remove(self, e: Event, before: bool) -> Optional[Proposal]:
        w = self.worldlines
        beta = self.beta
        s, t = e.site, e.time
        cand = w.prev_event(s, t) if before else w.next_event(s, t)
        want = KINK_IN if e.kind == HEAD else KINK_OUT
        if cand is None or cand is e or cand.kind != want:
            return None
        partner = cand.partner
        r = partner.site
        tk = cand.time
        nbrs = self.allowed_nbrs[e.species][r]
        amp = 0.0
        for site, a in nbrs:
            if site == s:
                amp = a
                break
        if amp == 0.0:
            return None
        ell = arc_length(tk, t, beta) if before else arc_length(t, tk, beta)
        W = self.window
        if not ell < W:
            return None
        if w.has_event_at(r, t):
            return None
        if before:
            if not w._free(r, tk, t):
                return None
            pr = w.prev_event(r, tk)
            ps = w.prev_event(s, tk)
            lo = max(-arc_length(pr.time, t, beta) if pr is not partner else -beta,
                     -arc_length(ps.time, t, beta) if ps is not e else -beta, -W)
            lq_win = self.axis.window_log_density(lo, 0.0)
            a0 = tk
        else:
            if not w._free(r, t, tk):
                return None
            nr = w.next_event(r, tk)
            ns = w.next_event(s, tk)
            hi = min(arc_length(t, nr.time, beta) if nr is not partner else beta,
                     arc_length(t, ns.time, beta) if ns is not e else beta, W)
            lq_win = self.axis.window_log_density(0.0, hi)
            a0 = t
        jump = JUMP[e.kind]
        d_r = jump if before else -jump
        d_s = -d_r
        n_r = w.occupation_at(r, a0) - d_r
        n_s = w.occupation_at(s, a0) - d_s
        vr = vs = 0.0
        if self.V:
            vr = self._vsum(r, a0, ell) - (d_s * ell if s in self.vertical[r] else 0.0)
            vs = self._vsum(s, a0, ell) - (d_r * ell if r in self.vertical[s] else 0.0)
        dlog = self._hop_log_weight(e.kind, before, r, s, n_r, n_s, ell, vr, vs, amp)
        if dlog is None:
            return None
        log_tether = self._tether(*self._end_lists(e, r, t))
        out = cand if cand.kind == KINK_OUT else partner
        z = len(nbrs)

        def apply():
            w.unhop_end(out, e, before)
            self.log_tether = log_tether

        return Proposal("kink_remove", -dlog, log_tether - self.log_tether,
                        0.0, lq_win - math.log(z), apply)

    # ------------------------------------------------------------------- step
    def choose_move(self) -> str:
        if self.worldlines.in_z_sector:
            return "create"
        u = self.rng.random()
        if u < self.cum_g[0]:
            return "annihilate"
        if u < self.cum_g[1]:
            return "shift"
        return "kink"

    def step(self) -> bool:
        kind = self.choose_move()
        if kind == "create":
            prop = self.propose_create()
        elif kind == "annihilate":
            prop = self.propose_annihilate()
        elif kind == "shift":
            prop = self.propose_shift()
        else:
            prop = self.propose_kink()
        self.step_counter += 1
        self.attempts[self._move] += 1
        if prop is None:
            return False
        lr = prop.log_ratio
        if lr < 0.0 and not self.rng.random() < math.exp(lr):
            return False
        if self.params.debug:
            self._check_incremental(prop)
        else:
            prop.apply()
        self.accepts[prop.kind] += 1
        return True

    def _check_incremental(self, prop: Proposal) -> None:
        w = self.worldlines
        before = w.compute_path_weight(self.model, self.params.gamma).log_magnitude
        prop.apply()
        after = w.compute_path_weight(self.model, self.params.gamma).log_magnitude
        w.validate()
        expect = prop.log_weight_ratio
        if prop.kind == "create":
            expect += self.log_label_factor
        elif prop.kind == "annihilate":
            expect -= self.log_label_factor
        if abs((after - before) - expect) > 1e-10 * max(1.0, abs(after)):
            raise SamplerError(
                f"{prop.kind}: incremental dlogW {expect!r} != recomputed {after - before!r}")
        if abs(self.log_tether - self.current_tether()) > 1e-10:
            raise SamplerError(f"{prop.kind}: cached tether weight is stale")
        n = len(w.worms)
        if n not in (0, self.n_worms):
            raise SamplerError(f"worm count {n} outside the two sectors")

    def run_sweeps(self, n_sweeps: int,
                   measure_hook: Optional[Callable[["ChainState", str], None]] = None) -> None:
        steps = self.steps_per_sweep
        for _ in range(n_sweeps):
            for _ in range(steps):
                self.step()
            if measure_hook is not None:
                measure_hook(self, self.sector)

    def measure_into(self, chunk: MeasurementChunk, row: int) -> None:
        w = self.worldlines
        g = self.graph
        L = g.sites_per_layer
        in_g = not w.in_z_sector
        chunk.sector[row] = 1 if in_g else 0
        total = 0
        for s in range(g.n_sites):
            n = w.occupation_at(s, 0.0)
            total += n
            chunk.layer_counts[row, s // L] += n
        chunk.n_particles[row] = total
        chunk.e_diag[row] = w.diagonal_action(self.model) / self.beta
        chunk.n_kinks[row] = w.n_kinks
        if in_g:
            for k, e in enumerate(w.end_events()):
                chunk.end_sites[row, k] = e.site
                chunk.end_times[row, k] = e.time
            chunk.log_w[row] = self.log_tether

    def sample(self, n_sweeps: int, every: int = 1) -> MeasurementChunk:
        """Return one measurement row after each block of ``every`` sweeps."""
        chunk = MeasurementChunk.empty(n_sweeps, self.graph.n_layers, self.n_worms)
        steps = self.steps_per_sweep * every
        for r in range(n_sweeps):
            for _ in range(steps):
                self.step()
            self.measure_into(chunk, r)
        return chunk

    # ----------------------------------------------------------- checkpoints
    def acceptance_rates(self) -> Dict[str, float]:
        return {k: (self.accepts[k] / self.attempts[k] if self.attempts[k] else 0.0)
                for k in MOVE_NAMES}

    def checkpoint(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "worldlines": to_record(self.worldlines),
            "rng": self.rng.bit_generator.state,
            "step_counter": self.step_counter,
            "attempts": dict(self.attempts),
            "accepts": dict(self.accepts),
            "log_tether": float(self.log_tether).hex(),
        }

    def restore(self, record: dict) -> None:
        if record.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a chain checkpoint: {record.get('format')!r}")
        if record.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {record.get('version')!r}")
        self.worldlines = from_record(record["worldlines"], self.graph)
        self.rng.bit_generator.state = record["rng"]
        self.step_counter = int(record["step_counter"])
        self.attempts = {k: int(record["attempts"][k]) for k in MOVE_NAMES}
        self.accepts = {k: int(record["accepts"][k]) for k in MOVE_NAMES}
        # the cached value, not a recomputation: resumed streams must match bit for bit
        self.log_tether = float.fromhex(record["log_tether"])


# ------------------------------------------------------ functional interface
def propose_create_worms(state: ChainState, params: UpdateParams = None):
    if not state.worldlines.in_z_sector:
        raise SamplerError("create needs the Z sector")
    return state.propose_create()


def propose_annihilate_worms(state: ChainState):
    if state.worldlines.in_z_sector:
        raise SamplerError("annihilate needs the G sector")
    return state.propose_annihilate()


def propose_shift_time(state: ChainState, which_end: Optional[int] = None):
    if state.worldlines.in_z_sector:
        raise SamplerError("shift needs the G sector")
    return state.propose_shift(which_end)


def propose_kink_move(state: ChainState, which_end: Optional[int] = None):
    if state.worldlines.in_z_sector:
        raise SamplerError("kink moves need the G sector")
    return state.propose_kink(which_end)


def metropolis_step(state: ChainState) -> bool:
    return state.step()


def run_sweeps(state: ChainState, n_sweeps: int, measure_hook=None) -> ChainState:
    state.run_sweeps(n_sweeps, measure_hook)
    return state
