"""Continuous imaginary-time worldline configurations.

Each site keeps a time-sorted list of events (kink halves and worm ends) and
the occupation of the segment that starts at each event.  The segment that
wraps through tau = beta carries the occupation after the last event, so the
occupation before the first event is ``occ[-1]``; a site without events stores
its occupation in ``flat``.

A kink is a pair of linked events at the same time: an outgoing half on the
site that loses the particle (jump -1) and an incoming half on the site that
gains it (jump +1).  A worm head is an annihilation (jump -1), a worm tail a
creation (jump +1).

Every mutation touches an arc of imaginary time that holds no events other
than the ones being added, removed or moved.  The occupation just outside
that arc is unchanged, so occupations inside it are re-derived from the event
jumps (``_reflow``).
"""
from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

from .model import LatticeGraph, ModelParams

KINK_OUT = 0
KINK_IN = 1
HEAD = 2
TAIL = 3

JUMP = (-1, 1, -1, 1)
KIND_NAMES = ("kink_out", "kink_in", "head", "tail")

FORMAT_NAME = "multiworm-worldlines"
FORMAT_VERSION = 1


class RejectedMove(Exception):
    """A requested modification is not allowed; the configuration is unchanged."""


class OccupancyViolation(RejectedMove):
    pass


class TimeCollision(RejectedMove):
    """Two events would share a (site, time) pair."""


class ConfigurationError(RuntimeError):
    """A configuration invariant is broken."""


class Event:
    """One discontinuity on one site.

    ``partner`` links the two halves of a kink; ``worm`` is the worm label of
    a worm end.
    """
    __slots__ = ("time", "site", "kind", "partner", "worm", "species")

    def __init__(self, time, site, kind, partner=None, worm=-1, species=0):
        self.time = time
        self.site = site
        self.kind = kind
        self.partner = partner
        self.worm = worm
        self.species = species

    @property
    def jump(self) -> int:
        return JUMP[self.kind]

    @property
    def is_end(self) -> bool:
        return self.kind >= HEAD

    def __repr__(self):
        extra = f" <->{self.partner.site}" if self.partner is not None else ""
        return f"Event({KIND_NAMES[self.kind]}, site={self.site}, t={self.time!r}{extra})"


@dataclass(frozen=True)
class Kink:
    time: float
    from_site: int
    to_site: int
    species: int = 0


@dataclass(frozen=True)
class WormEnd:
    kind: str  # "head" (annihilation) or "tail" (creation)
    site: int
    time: float
    species: int = 0


@dataclass(frozen=True)
class PathWeight:
    log_magnitude: float
    sign: int
    order: int

    @property
    def value(self) -> float:
        return self.sign * math.exp(self.log_magnitude)


def wrap(t: float, beta: float) -> float:
    t = t % beta
    if t >= beta:
        t = 0.0
    return t


def arc_length(t_from: float, t_to: float, beta: float) -> float:
    """Forward distance from ``t_from`` to ``t_to`` on the circle, in [0, beta)."""
    d = t_to - t_from
    if d < 0:
        d += beta
    return d


class Worldlines:
    """Mutable worldline configuration owned by one Markov chain."""

    def __init__(self, graph: LatticeGraph, beta: float, n_max: int,
                 occupation: Optional[Sequence[int]] = None):
        self.graph = graph
        self.beta = float(beta)
        self.n_max = int(n_max)
        ns = graph.n_sites
        self.times: List[List[float]] = [[] for _ in range(ns)]
        self.events: List[List[Event]] = [[] for _ in range(ns)]
        self.occ: List[List[int]] = [[] for _ in range(ns)]
        if occupation is None:
            occupation = [0] * ns
        if len(occupation) != ns:
            raise ValueError("occupation length does not match lattice")
        for n in occupation:
            if n < 0 or n > n_max:
                raise OccupancyViolation(f"occupation {n} outside [0, {n_max}]")
        self.flat: List[int] = [int(n) for n in occupation]
        # worm label -> [tail event, head event]
        self.worms: List[List[Event]] = []
        self.n_kinks = 0

    # ------------------------------------------------------------------ queries
    @property
    def n_sites(self) -> int:
        return self.graph.n_sites

    @property
    def in_z_sector(self) -> bool:
        return not self.worms

    def _check_site(self, site: int) -> None:
        if not 0 <= site < self.graph.n_sites:
            raise IndexError(f"site {site} outside lattice of {self.graph.n_sites} sites")

    def occupation_at(self, site: int, time: float) -> int:
        """Occupation of the segment just after ``time``."""
        self._check_site(site)
        occ = self.occ[site]
        if not occ:
            return self.flat[site]
        return occ[bisect_right(self.times[site], time) - 1]

    def occupation_before(self, site: int, time: float) -> int:
        """Occupation of the segment just before ``time``."""
        occ = self.occ[site]
        if not occ:
            return self.flat[site]
        return occ[bisect_left(self.times[site], time) - 1]

    def occupation_vector(self, time: float) -> List[int]:
        return [self.occupation_at(s, time) for s in range(self.n_sites)]

    def particle_number(self, time: float = 0.0) -> int:
        return sum(self.occupation_at(s, time) for s in range(self.n_sites))

    def n_events(self, site: int) -> int:
        return len(self.times[site])

    def prev_event(self, site: int, time: float) -> Optional[Event]:
        """Closest event strictly before ``time``, going backwards around the circle."""
        ev = self.events[site]
        if not ev:
            return None
        return ev[bisect_left(self.times[site], time) - 1]

    def next_event(self, site: int, time: float) -> Optional[Event]:
        """Closest event strictly after ``time``, going forward around the circle."""
        ev = self.events[site]
        if not ev:
            return None
        k = bisect_right(self.times[site], time)
        return ev[k if k < len(ev) else 0]

    def has_event_at(self, site: int, time: float) -> bool:
        ts = self.times[site]
        k = bisect_left(ts, time)
        return k < len(ts) and ts[k] == time

    def events_in(self, site: int, t_from: float, length: float) -> int:
        """Number of events in the open arc (t_from, t_from + length)."""
        ts = self.times[site]
        if not ts or length <= 0:
            return 0
        t_to = t_from + length
        if t_to <= self.beta:
            return bisect_left(ts, t_to) - bisect_right(ts, t_from)
        return (len(ts) - bisect_right(ts, t_from)) + bisect_left(ts, t_to - self.beta)

    def events_between(self, site: int, t_a: float, t_b: float) -> int:
        """Number of events strictly inside the forward arc from ``t_a`` to ``t_b``.

        Works on the stored times directly, so endpoints that coincide with
        events are never counted.  ``t_a == t_b`` means the whole circle.
        """
        ts = self.times[site]
        if not ts:
            return 0
        if t_a < t_b:
            return bisect_left(ts, t_b) - bisect_right(ts, t_a)
        if t_a > t_b:
            return (len(ts) - bisect_right(ts, t_a)) + bisect_left(ts, t_b)
        return len(ts) - (1 if self.has_event_at(site, t_a) else 0)

    def occupation_integral(self, site: int, t_from: float, length: float) -> float:
        """Integral of the occupation of ``site`` over [t_from, t_from + length)."""
        ts = self.times[site]
        if not ts:
            return self.flat[site] * length
        occ = self.occ[site]
        beta = self.beta
        nev = len(ts)
        k = bisect_right(ts, t_from)
        n = occ[k - 1]
        t = t_from
        t_end = t_from + length
        total = 0.0
        for m in range(nev):
            idx = k + m
            tn = ts[idx] if idx < nev else ts[idx - nev] + beta
            if tn >= t_end:
                break
            total += n * (tn - t)
            t = tn
            n = occ[idx if idx < nev else idx - nev]
        return total + n * (t_end - t)

    def segments(self, site: int) -> List[Tuple[float, float, int]]:
        """(start, end, occupation) pieces covering [0, beta)."""
        ts = self.times[site]
        if not ts:
            return [(0.0, self.beta, self.flat[site])]
        occ = self.occ[site]
        out = []
        if ts[0] > 0.0:
            out.append((0.0, ts[0], occ[-1]))
        for k in range(len(ts)):
            end = ts[k + 1] if k + 1 < len(ts) else self.beta
            if end > ts[k]:
                out.append((ts[k], end, occ[k]))
        return out

    def iter_events(self) -> Iterator[Event]:
        for evs in self.events:
            yield from evs

    def kinks(self) -> List[Kink]:
        return [Kink(e.time, e.site, e.partner.site, e.species)
                for e in self.iter_events() if e.kind == KINK_OUT]

    def kink_handles(self) -> List[Event]:
        return [e for e in self.iter_events() if e.kind == KINK_OUT]

    def worm_ends(self) -> List[WormEnd]:
        out = []
        for tail, head in self.worms:
            out.append(WormEnd("tail", tail.site, tail.time, tail.species))
            out.append(WormEnd("head", head.site, head.time, head.species))
        return out

    def end_events(self) -> List[Event]:
        """Worm ends in label order: tail_0, head_0, tail_1, head_1, ..."""
        out = []
        for pair in self.worms:
            out.extend(pair)
        return out

    # --------------------------------------------------------------- primitives
    def _insert(self, ev: Event) -> None:
        s = ev.site
        ts = self.times[s]
        k = bisect_left(ts, ev.time)
        if k < len(ts) and ts[k] == ev.time:
            raise TimeCollision(f"event already at site {s}, time {ev.time!r}")
        ts.insert(k, ev.time)
        self.events[s].insert(k, ev)
        self.occ[s].insert(k, 0)

    def _remove(self, ev: Event) -> None:
        s = ev.site
        ts = self.times[s]
        k = bisect_left(ts, ev.time)
        if k >= len(ts) or self.events[s][k] is not ev:
            raise ConfigurationError(f"{ev!r} is not stored on its site")
        del ts[k]
        del self.events[s][k]
        del self.occ[s][k]

    def _reflow(self, site: int, t_from: float, t_to: float, n_out: int) -> None:
        """Re-derive occupations of events in the closed arc [t_from, t_to].

        ``n_out`` is the occupation just before ``t_from``, which the move did
        not change.
        """
        ts = self.times[site]
        if not ts:
            self.flat[site] = n_out
            return
        evs = self.events[site]
        occ = self.occ[site]
        nev = len(ts)
        span = arc_length(t_from, t_to, self.beta)
        k = bisect_left(ts, t_from)
        n = n_out
        for m in range(nev):
            idx = (k + m) % nev
            if arc_length(t_from, ts[idx], self.beta) > span:
                break
            n += JUMP[evs[idx].kind]
            occ[idx] = n

    def _free(self, site: int, t_a: float, t_b: float) -> bool:
        return self.events_between(site, t_a, t_b) == 0

    # ------------------------------------------------------------- worm ends
    def place_worm(self, site: int, start: float, length: float, raise_: bool,
                   species: int = 0) -> int:
        """Draw (``raise_``) or erase one particle on an event-free arc of ``site``.

        raise_: tail at ``start``, head at ``start + length``, occupation +1 between.
        lower : head at ``start``, tail at ``start + length``, occupation -1 between.
        Returns the worm label.
        """
        self._check_site(site)
        if not 0.0 < length < self.beta:
            raise ValueError(f"worm length {length} outside (0, beta)")
        start = wrap(start, self.beta)
        end = wrap(start + length, self.beta)
        if start == end or self.has_event_at(site, start) or self.has_event_at(site, end):
            raise TimeCollision("worm end collides with an event")
        if not self._free(site, start, end):
            raise RejectedMove("worm arc contains events")
        n_out = self.occupation_at(site, start)
        n_in = n_out + (1 if raise_ else -1)
        if n_in < 0 or n_in > self.n_max:
            raise OccupancyViolation(
                f"worm would set site {site} to {n_in} outside [0, {self.n_max}]")
        label = len(self.worms)
        first = Event(start, site, TAIL if raise_ else HEAD, worm=label, species=species)
        second = Event(end, site, HEAD if raise_ else TAIL, worm=label, species=species)
        self._insert(first)
        self._insert(second)
        self._reflow(site, start, end, n_out)
        self.worms.append([first, second] if raise_ else [second, first])
        return label

    def worm_removable(self, label: int, raise_: bool) -> bool:
        tail, head = self.worms[label]
        if tail.site != head.site:
            return False
        first, second = (tail, head) if raise_ else (head, tail)
        return self._free(first.site, first.time, second.time)

    def remove_worm(self, label: int, raise_: bool) -> None:
        """Undo a :meth:`place_worm` of type ``raise_``.

        The last worm takes over ``label`` when an earlier label is removed.
        """
        if not self.worm_removable(label, raise_):
            raise RejectedMove(f"worm {label} cannot be erased as raise_={raise_}")
        tail, head = self.worms[label]
        first = tail if raise_ else head
        n_out = self.occupation_before(first.site, first.time)
        self._remove(tail)
        self._remove(head)
        if not self.times[first.site]:
            self.flat[first.site] = n_out
        last = self.worms.pop()
        if label < len(self.worms):
            self.worms[label] = last
            for e in last:
                e.worm = label

    def place_worm_ends(self, pairs: Sequence[Tuple[WormEnd, WormEnd, bool]]) -> List[int]:
        """Place ``(tail, head, raise_)`` worms; all or nothing."""
        labels: List[int] = []
        try:
            for tail, head, raise_ in pairs:
                if tail.site != head.site or tail.kind != "tail" or head.kind != "head":
                    raise RejectedMove("a worm needs a tail and a head on one site")
                first, second = (tail, head) if raise_ else (head, tail)
                length = arc_length(first.time, second.time, self.beta)
                labels.append(self.place_worm(tail.site, first.time, length, raise_,
                                              tail.species))
        except (RejectedMove, ValueError):
            for label, (_, _, raise_) in reversed(list(zip(labels, pairs))):
                self.remove_worm(label, raise_)
            raise
        return labels

    def remove_worm_ends(self, raise_types: Sequence[bool]) -> None:
        """Remove every worm; ``raise_types[k]`` is the type worm ``k`` was placed with."""
        if len(raise_types) != len(self.worms):
            raise ValueError("need one type per worm")
        for label in range(len(self.worms)):
            if not self.worm_removable(label, raise_types[label]):
                raise RejectedMove(f"worm {label} is not removable")
        for label in reversed(range(len(self.worms))):
            self.remove_worm(label, raise_types[label])

    def shift_end(self, end: Event, new_time: float) -> None:
        """Move a worm end in time without passing another event on its site."""
        s = end.site
        new_time = wrap(new_time, self.beta)
        if new_time == end.time:
            return
        if self.has_event_at(s, new_time):
            raise TimeCollision("shift target collides with an event")
        prev = self.prev_event(s, end.time)
        nxt = self.next_event(s, end.time)
        if prev is not end:
            room = arc_length(prev.time, nxt.time, self.beta) if prev is not nxt else self.beta
            if not arc_length(prev.time, new_time, self.beta) < room:
                raise RejectedMove("shift would pass another event")
        ts = self.times[s]
        k = bisect_left(ts, end.time)
        n_after = self.occ[s][k]
        self._remove(end)
        end.time = new_time
        self._insert(end)
        self.occ[s][bisect_left(ts, new_time)] = n_after

    # ------------------------------------------------------------------ kinks
    def kink_side(self, end: Event, other_site: int, t_kink: float) -> Optional[bool]:
        """True if a kink at ``t_kink`` fits before ``end``, False if after, else None."""
        i, te = end.site, end.time
        if self._free(i, t_kink, te) and self._free(other_site, t_kink, te):
            return True
        if self._free(i, te, t_kink) and self._free(other_site, te, t_kink):
            return False
        return None

    def insert_kink(self, kink: Kink, end: Event, before: Optional[bool] = None) -> Event:
        """Insert ``kink`` and move worm ``end`` onto the kink's other site.

        A head leaves through the kink's outgoing half, a tail through the
        incoming one.  The arc between kink and end must be free of events on
        both sites.  Returns the kink handle (its outgoing half).
        """
        i = end.site
        jump = JUMP[end.kind]
        if jump < 0 and i == kink.from_site:
            j = kink.to_site
        elif jump > 0 and i == kink.to_site:
            j = kink.from_site
        elif i in (kink.from_site, kink.to_site):
            raise RejectedMove("kink direction does not match the worm end type")
        else:
            raise RejectedMove("worm end is not on a kink site")
        self._check_site(j)
        tk = wrap(kink.time, self.beta)
        te = end.time
        if tk == te or self.has_event_at(i, tk) or self.has_event_at(j, tk) \
                or self.has_event_at(j, te):
            raise TimeCollision("kink collides with an event")
        side = self.kink_side(end, j, tk)
        if side is None or (before is not None and side != before):
            raise RejectedMove("events between kink and worm end")
        t_from = tk if side else te
        n_i = self.occupation_at(i, t_from)
        n_j = self.occupation_at(j, t_from)
        d_i = jump if side else -jump
        if not (0 <= n_i + d_i <= self.n_max and 0 <= n_j - d_i <= self.n_max):
            raise OccupancyViolation("kink would violate occupation bounds")
        return self.hop_end(end, j, tk, side, kink.species)

    def hop_end(self, end: Event, j: int, tk: float, before: bool,
                species: int = 0) -> Event:
        """Unchecked kink insertion used by the sampler after its own checks."""
        i = end.site
        te = end.time
        t_from, t_to = (tk, te) if before else (te, tk)
        n_out_i = self.occupation_before(i, t_from)
        n_out_j = self.occupation_before(j, t_from)
        src, dst = (i, j) if end.kind == HEAD else (j, i)
        out = Event(tk, src, KINK_OUT, species=species)
        inn = Event(tk, dst, KINK_IN, species=species)
        out.partner = inn
        inn.partner = out
        self._remove(end)
        end.site = j
        self._insert(out)
        self._insert(inn)
        self._insert(end)
        self._reflow(i, t_from, t_to, n_out_i)
        self._reflow(j, t_from, t_to, n_out_j)
        self.n_kinks += 1
        return out

    def remove_kink(self, out: Event, end: Event) -> None:
        """Inverse of :meth:`insert_kink`: ``end`` returns to the kink's other site."""
        if out.kind != KINK_OUT:
            raise RejectedMove("not a kink handle")
        inn = out.partner
        j = end.site
        if end.kind == HEAD and j == inn.site:
            i = out.site
        elif end.kind == TAIL and j == out.site:
            i = inn.site
        else:
            raise RejectedMove("kink does not connect to this worm end")
        if self.has_event_at(i, end.time):
            raise TimeCollision("worm end would collide on the target site")
        tk, te = out.time, end.time
        if self._free(i, tk, te) and self._free(j, tk, te):
            before = True
        elif self._free(i, te, tk) and self._free(j, te, tk):
            before = False
        else:
            raise RejectedMove("events between kink and worm end")
        self.unhop_end(out, end, before)

    def unhop_end(self, out: Event, end: Event, before: bool) -> None:
        """Unchecked kink removal."""
        inn = out.partner
        j = end.site
        i = inn.site if out.site == j else out.site
        tk, te = out.time, end.time
        t_from, t_to = (tk, te) if before else (te, tk)
        n_out_i = self.occupation_before(i, t_from)
        n_out_j = self.occupation_before(j, t_from)
        self._remove(out)
        self._remove(inn)
        self._remove(end)
        end.site = i
        self._insert(end)
        self._reflow(i, t_from, t_to, n_out_i)
        self._reflow(j, t_from, t_to, n_out_j)
        self.n_kinks -= 1

    # ----------------------------------------------------------------- weights
    def compute_path_weight(self, params: ModelParams, gamma: float = 1.0) -> PathWeight:
        """Weight density of the configuration, from scratch.

        exp(-sum over segments of E_diag * duration) times the product of
        |hopping matrix elements| over kinks and gamma * sqrt(n) over worm ends.
        """
        graph = self.graph
        table = params.onsite_table(graph)
        logw = 0.0
        for s in range(self.n_sites):
            for t0, t1, n in self.segments(s):
                logw -= table[s, n] * (t1 - t0)
        if params.V_inter:
            for a, b in graph.inter_bonds:
                logw += params.V_inter * _overlap_integral(self.segments(a), self.segments(b))
        sign = 1
        log_gamma = math.log(gamma)
        for s in range(self.n_sites):
            evs = self.events[s]
            occ = self.occ[s]
            for k, e in enumerate(evs):
                before, after = occ[k - 1], occ[k]
                if e.kind == KINK_OUT:
                    amp = params.hopping(s, e.partner.site, graph)
                    if amp == 0.0 or before <= 0:
                        return PathWeight(-math.inf, 1, self.n_kinks)
                    # (-1)^n from the expansion times (-J)^n from H1
                    sign *= 1 if amp > 0 else -1
                    logw += math.log(abs(amp)) + 0.5 * math.log(before)
                elif e.kind == KINK_IN or e.kind == TAIL:
                    if after <= 0:
                        return PathWeight(-math.inf, 1, self.n_kinks)
                    logw += 0.5 * math.log(after)
                    if e.kind == TAIL:
                        logw += log_gamma
                else:
                    if before <= 0:
                        return PathWeight(-math.inf, 1, self.n_kinks)
                    logw += 0.5 * math.log(before) + log_gamma
        return PathWeight(logw, sign, self.n_kinks)

    def diagonal_action(self, params: ModelParams) -> float:
        """Integral of the diagonal energy over [0, beta)."""
        graph = self.graph
        table = params.onsite_table(graph)
        total = 0.0
        for s in range(self.n_sites):
            for t0, t1, n in self.segments(s):
                total += table[s, n] * (t1 - t0)
        if params.V_inter:
            for a, b in graph.inter_bonds:
                total -= params.V_inter * _overlap_integral(self.segments(a),
                                                            self.segments(b))
        return float(total)

    # -------------------------------------------------------------- invariants
    def validate(self) -> None:
        """Raise ConfigurationError on any broken invariant."""
        graph = self.graph
        bonds = set(graph.intra_bonds) | set(graph.inter_bonds)
        n_out = 0
        heads = {}
        tails = {}
        for s in range(self.n_sites):
            ts, evs, occ = self.times[s], self.events[s], self.occ[s]
            if not (len(ts) == len(evs) == len(occ)):
                raise ConfigurationError(f"site {s}: list lengths differ")
            if not ts:
                if not 0 <= self.flat[s] <= self.n_max:
                    raise ConfigurationError(f"site {s}: flat occupation out of range")
                continue
            for k, e in enumerate(evs):
                if e.site != s or e.time != ts[k]:
                    raise ConfigurationError(f"site {s}: stale event {e!r}")
                if not 0.0 <= e.time < self.beta:
                    raise ConfigurationError(f"{e!r} outside [0, beta)")
                if k and ts[k] <= ts[k - 1]:
                    raise ConfigurationError(f"site {s}: events not strictly sorted")
                if not 0 <= occ[k] <= self.n_max:
                    raise ConfigurationError(f"site {s}: occupation {occ[k]} out of range")
                if occ[k] - occ[k - 1] != JUMP[e.kind]:
                    raise ConfigurationError(f"site {s}: jump mismatch at {e!r}")
                if e.kind <= KINK_IN:
                    p = e.partner
                    if p is None or p.partner is not e or p.time != e.time \
                            or p.kind == e.kind:
                        raise ConfigurationError(f"broken kink at {e!r}")
                    if (min(s, p.site), max(s, p.site)) not in bonds:
                        raise ConfigurationError(f"kink {e!r} is not on a bond")
                    if e.kind == KINK_OUT:
                        n_out += 1
                else:
                    bucket = heads if e.kind == HEAD else tails
                    bucket[e.species] = bucket.get(e.species, 0) + 1
                    if not (0 <= e.worm < len(self.worms)) or e not in self.worms[e.worm]:
                        raise ConfigurationError(f"worm end {e!r} not registered")
        if n_out != self.n_kinks:
            raise ConfigurationError(f"kink count {self.n_kinks} != stored {n_out}")
        if heads != tails:
            raise ConfigurationError(f"unbalanced worm ends: heads {heads}, tails {tails}")
        if sum(heads.values()) != len(self.worms):
            raise ConfigurationError("worm registry does not match stored ends")
        for tail, head in self.worms:
            if tail.kind != TAIL or head.kind != HEAD:
                raise ConfigurationError("worm registry holds wrong end kinds")
        if not self.worms:
            n0 = self.particle_number(0.0)
            for s in range(self.n_sites):
                for t in self.times[s]:
                    if self.particle_number(t) != n0:
                        raise ConfigurationError("particle number varies in the Z sector")

    # ---------------------------------------------------------- identity / io
    def state_key(self) -> tuple:
        """Hashable, label-free description of the configuration."""
        sites = []
        for s in range(self.n_sites):
            evs = self.events[s]
            n0 = self.occ[s][-1] if evs else self.flat[s]
            sites.append((n0, tuple(
                (e.time, e.kind, e.partner.site if e.partner is not None else -1)
                for e in evs)))
        return tuple(sites)

    def snapshot(self) -> tuple:
        """Exact state including worm labels and occupations (for equality tests)."""
        return (self.state_key(), tuple(tuple(o) for o in self.occ),
                tuple(-1 if self.times[s] else n for s, n in enumerate(self.flat)),
                tuple((t.site, t.time, h.site, h.time, t.species) for t, h in self.worms),
                self.n_kinks)

    def copy(self) -> "Worldlines":
        return from_record(to_record(self), self.graph)

    def to_json(self) -> str:
        return json.dumps(to_record(self), sort_keys=True)


def _overlap_integral(seg_a, seg_b) -> float:
    """Integral of n_a * n_b for two piecewise-constant segment lists on [0, beta)."""
    total = 0.0
    ia = ib = 0
    while ia < len(seg_a) and ib < len(seg_b):
        a0, a1, na = seg_a[ia]
        b0, b1, nb = seg_b[ib]
        lo, hi = max(a0, b0), min(a1, b1)
        if hi > lo and na and nb:
            total += na * nb * (hi - lo)
        if a1 <= b1:
            ia += 1
        else:
            ib += 1
    return total


def compute_path_weight(w: Worldlines, params: ModelParams, graph: LatticeGraph = None,
                        gamma: float = 1.0) -> PathWeight:
    return w.compute_path_weight(params, gamma)


def to_record(w: Worldlines) -> dict:
    """Self-describing, bit-exact record (floats stored as hex strings)."""
    kinks = []
    for e in w.iter_events():
        if e.kind == KINK_OUT:
            kinks.append([e.time.hex(), e.site, e.partner.site, e.species])
    kinks.sort()
    worms = [[t.species, t.site, t.time.hex(), h.site, h.time.hex()] for t, h in w.worms]
    wrap_occ = [w.occ[s][-1] if w.occ[s] else w.flat[s] for s in range(w.n_sites)]
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n_sites": w.n_sites,
        "beta": w.beta.hex(),
        "n_max": w.n_max,
        "wrap_occupation": wrap_occ,
        "kinks": kinks,
        "worms": worms,
    }


def from_record(rec: dict, graph: LatticeGraph) -> Worldlines:
    if rec.get("format") != FORMAT_NAME:
        raise ValueError(f"not a worldline record: {rec.get('format')!r}")
    if rec.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported worldline record version {rec.get('version')!r}")
    if rec["n_sites"] != graph.n_sites:
        raise ValueError("record does not match the lattice")
    w = Worldlines(graph, float.fromhex(rec["beta"]), rec["n_max"])
    for th, a, b, sp in rec["kinks"]:
        t = float.fromhex(th)
        out = Event(t, a, KINK_OUT, species=sp)
        inn = Event(t, b, KINK_IN, species=sp)
        out.partner, inn.partner = inn, out
        w._insert(out)
        w._insert(inn)
        w.n_kinks += 1
    for label, (sp, ts, tt, hs, ht) in enumerate(rec["worms"]):
        tail = Event(float.fromhex(tt), ts, TAIL, worm=label, species=sp)
        head = Event(float.fromhex(ht), hs, HEAD, worm=label, species=sp)
        w._insert(tail)
        w._insert(head)
        w.worms.append([tail, head])
    for s, n0 in enumerate(rec["wrap_occupation"]):
        if not w.times[s]:
            w.flat[s] = n0
            continue
        n = n0
        for k, e in enumerate(w.events[s]):
            n += JUMP[e.kind]
            w.occ[s][k] = n
    return w
