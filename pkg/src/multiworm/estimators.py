"""Accumulators and error analysis for measurement streams.

Diagonal observables come from Z-sector rows only.  Worm-end statistics come
from G-sector rows, each weighted by 1/w so the tether bias cancels, and are
normalized by the number of Z-sector rows.  Every accumulator keeps one data
segment per chain: continuing a chain appends to its segment, merging
different chains unions the segments, and statistics treat chains as
independent.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .model import LatticeGraph
from .records import MeasurementChunk

SUMMARY_FORMAT = "multiworm-summary"
HISTOGRAM_FORMAT = "multiworm-histogram"
STREAM_FORMAT = "multiworm-stream"
OUTPUT_VERSION = 1
MIN_BLOCKING_SAMPLES = 32


class EstimatorError(ValueError):
    pass


class NoData(EstimatorError):
    pass


class ContractViolation(EstimatorError):
    pass


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


# ------------------------------------------------------------------ blocking
@dataclass(frozen=True)
class ErrorEstimate:
    mean: float
    stderr: float
    n_samples: int
    blocks: int
    widened: bool = False

    def z_score(self, reference: float) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mean == reference else math.inf
        return (self.mean - reference) / self.stderr


def blocking_levels(samples) -> List[Tuple[int, int, float]]:
    """(block size, number of blocks, naive stderr of the mean) per halving level."""
    x = np.asarray(samples, dtype=float)
    out = []
    size = 1
    while len(x) >= 2:
        n = len(x)
        var = x.var(ddof=1)
        out.append((size, n, math.sqrt(var / n)))
        if n < 4:
            break
        m = n // 2
        x = 0.5 * (x[:2 * m:2] + x[1:2 * m:2])
        size *= 2
    return out


def blocking_errors(samples) -> ErrorEstimate:
    """Mean and autocorrelation-aware standard error by logarithmic blocking.

    The plateau level is the first block size B with B^3 > 2 n (s_B / s_1)^4
    (Lee, Kalos et al. criterion).  With fewer than 32 samples, or no level
    meeting the criterion, the largest stderr over all levels is reported and
    ``widened`` is set.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n == 0:
        raise NoData("no samples")
    mean = float(x.mean())
    if n < 2:
        return ErrorEstimate(mean, math.inf, n, n, True)
    levels = blocking_levels(x)
    s1 = levels[0][2]
    if s1 == 0.0:
        return ErrorEstimate(mean, 0.0, n, n, n < MIN_BLOCKING_SAMPLES)
    if n >= MIN_BLOCKING_SAMPLES:
        for size, nb, se in levels:
            if size ** 3 > 2.0 * n * (se / s1) ** 4 and nb >= 8:
                return ErrorEstimate(mean, se, n, nb)
    size, nb, se = max(levels, key=lambda r: r[2])
    return ErrorEstimate(mean, se, n, nb, True)


def _combine(estimates: Sequence[ErrorEstimate]) -> ErrorEstimate:
    """Pool independent segments, weighting each mean by its sample count."""
    total = sum(e.n_samples for e in estimates)
    if total == 0:
        raise NoData("no samples")
    mean = sum(e.mean * e.n_samples for e in estimates) / total
    var = sum((e.n_samples / total) ** 2 * e.stderr ** 2 for e in estimates)
    return ErrorEstimate(float(mean), math.sqrt(var), total,
                         sum(e.blocks for e in estimates),
                         any(e.widened for e in estimates))


def segmented_errors(segments: Sequence[np.ndarray]) -> ErrorEstimate:
    return _combine([blocking_errors(s) for s in segments if len(s)])


def ratio_errors(num_segments: Sequence[np.ndarray],
                 den_segments: Sequence[np.ndarray]) -> ErrorEstimate:
    """sum(num) / sum(den) with a linearized blocking error, per-segment independent."""
    pairs = [(np.asarray(a, float), np.asarray(b, float))
             for a, b in zip(num_segments, den_segments) if len(a)]
    if not pairs:
        raise NoData("no samples")
    num = sum(a.sum() for a, _ in pairs)
    den = sum(b.sum() for _, b in pairs)
    n = sum(len(a) for a, _ in pairs)
    if den == 0.0:
        raise NoData("ratio denominator is zero")
    r = num / den
    lin = _combine([blocking_errors(a - r * b) for a, b in pairs])
    mean_den = den / n
    return ErrorEstimate(float(r), lin.stderr / mean_den, n, lin.blocks, lin.widened)


# --------------------------------------------------------- diagonal estimates
_DIAG_FIELDS = ("n_particles", "e_diag", "n_kinks")


class DiagonalAccumulator:
    """Z-sector samples of particle number, per-layer filling, energies and kinks."""

    def __init__(self, n_layers: int, sites_per_layer: int, beta: float):
        self.n_layers = n_layers
        self.sites_per_layer = sites_per_layer
        self.beta = float(beta)
        self._segments: Dict[int, Dict[str, List[np.ndarray]]] = {}

    def _segment(self, chain: int) -> Dict[str, List[np.ndarray]]:
        seg = self._segments.get(chain)
        if seg is None:
            seg = {k: [] for k in _DIAG_FIELDS + ("layer_counts",)}
            self._segments[chain] = seg
        return seg

    def add_chunk(self, chunk: MeasurementChunk, chain: int = 0) -> None:
        z = chunk.z_rows()
        seg = self._segment(chain)
        for k in _DIAG_FIELDS:
            seg[k].append(np.asarray(getattr(chunk, k)[z]))
        seg["layer_counts"].append(np.asarray(chunk.layer_counts[z]))

    def record_diagonal(self, state, chain: int = 0) -> None:
        """Append one sample from a live chain; only valid in the Z sector."""
        if state.sector != "Z":
            raise ContractViolation("diagonal observables need a Z-sector configuration")
        row = MeasurementChunk.empty(1, self.n_layers, state.n_worms)
        state.measure_into(row, 0)
        self.add_chunk(row, chain)

    def column(self, name: str, chain: int) -> np.ndarray:
        parts = self._segments[chain][name]
        if not parts:
            return np.zeros((0,) if name != "layer_counts" else (0, self.n_layers))
        return np.concatenate(parts)

    @property
    def chains(self) -> List[int]:
        return sorted(self._segments)

    @property
    def n_samples(self) -> int:
        return sum(len(self.column("n_particles", c)) for c in self.chains)

    def merge(self, other: "DiagonalAccumulator") -> "DiagonalAccumulator":
        if (other.n_layers, other.sites_per_layer, other.beta) != \
                (self.n_layers, self.sites_per_layer, self.beta):
            raise EstimatorError("cannot merge accumulators of different systems")
        out = DiagonalAccumulator(self.n_layers, self.sites_per_layer, self.beta)
        for src in (self, other):
            for chain in src.chains:
                seg = out._segment(chain)
                for k, parts in src._segments[chain].items():
                    seg[k].extend(parts)
        return out

    def series(self, gate: Optional[int] = None) -> Dict[str, List[np.ndarray]]:
        """Per-chain sample arrays of every reported observable."""
        out: Dict[str, List[np.ndarray]] = {}
        L = self.sites_per_layer
        for chain in self.chains:
            n = self.column("n_particles", chain).astype(float)
            keep = np.ones(len(n), bool) if gate is None else n == gate
            e_diag = self.column("e_diag", chain)[keep]
            e_kin = -self.column("n_kinks", chain)[keep] / self.beta
            layers = self.column("layer_counts", chain)[keep]
            cols = {
                "n_particles": n[keep],
                "filling": n[keep] / (L * self.n_layers),
                "e_diag": e_diag,
                "e_kin": e_kin,
                "energy": e_diag + e_kin,
                "n_kinks": self.column("n_kinks", chain)[keep].astype(float),
            }
            for a in range(self.n_layers):
                cols[f"filling_layer{a}"] = layers[:, a] / L
            for k, v in cols.items():
                out.setdefault(k, []).append(v)
        return out

    def summary(self, gate: Optional[int] = None) -> Dict[str, ErrorEstimate]:
        """Observable -> estimate; ``gate`` keeps only samples with that particle number."""
        if self.n_samples == 0:
            raise NoData("no Z-sector samples")
        return {k: segmented_errors(v) for k, v in self.series(gate).items()}

    def dominant_particle_number(self) -> int:
        vals = np.concatenate([self.column("n_particles", c) for c in self.chains])
        if len(vals) == 0:
            raise NoData("no Z-sector samples")
        return int(np.bincount(vals).argmax())


# --------------------------------------------------------- worm-end histograms
@dataclass
class _HistSegment:
    weights: List[np.ndarray] = field(default_factory=list)
    counts: List[np.ndarray] = field(default_factory=list)
    z_counts: List[int] = field(default_factory=list)
    rows: List[int] = field(default_factory=list)
    open_weight: Optional[np.ndarray] = None
    open_count: Optional[np.ndarray] = None
    open_z: int = 0
    open_rows: int = 0


class DnHistogram:
    """Tether-reweighted counts over a binned projection of the worm ends.

    Rows are grouped into blocks of ``block_rows`` sweeps for error analysis.
    ``labels`` name the axes of ``shape``; ``meta`` records what was projected.
    """

    def __init__(self, name: str, shape: Tuple[int, ...], labels: Tuple[str, ...],
                 block_rows: int = 1000, meta: Optional[dict] = None):
        if len(shape) != len(labels):
            raise EstimatorError("one label per histogram axis")
        self.name = name
        self.shape = tuple(int(x) for x in shape)
        self.labels = tuple(labels)
        self.block_rows = int(block_rows)
        self.meta = dict(meta or {})
        self._segments: Dict[int, _HistSegment] = {}
        self._size = int(np.prod(self.shape))

    def _segment(self, chain: int) -> _HistSegment:
        seg = self._segments.get(chain)
        if seg is None:
            seg = _HistSegment()
            seg.open_weight = np.zeros(self._size)
            seg.open_count = np.zeros(self._size, dtype=np.int64)
            self._segments[chain] = seg
        return seg

    def add_rows(self, sector: np.ndarray, bins: np.ndarray, weights: np.ndarray,
                 chain: int = 0) -> None:
        """``bins[r]`` lists flat bin indices hit by row r (-1 = none)."""
        sector = np.asarray(sector)
        bins = np.asarray(bins, dtype=np.int64).reshape(len(sector), -1)
        weights = np.asarray(weights, dtype=float)
        seg = self._segment(chain)
        start = 0
        n = len(sector)
        while start < n:
            take = min(n - start, self.block_rows - seg.open_rows)
            sl = slice(start, start + take)
            g = sector[sl] == 1
            seg.open_z += int(np.count_nonzero(sector[sl] == 0))
            b = bins[sl][g]
            w = np.repeat(weights[sl][g], b.shape[1])
            b = b.ravel()
            ok = b >= 0
            np.add.at(seg.open_weight, b[ok], w[ok])
            np.add.at(seg.open_count, b[ok], 1)
            seg.open_rows += take
            start += take
            if seg.open_rows == self.block_rows:
                self._close(seg)

    @staticmethod
    def _close(seg: _HistSegment) -> None:
        seg.weights.append(seg.open_weight.copy())
        seg.counts.append(seg.open_count.copy())
        seg.z_counts.append(seg.open_z)
        seg.rows.append(seg.open_rows)
        seg.open_weight[:] = 0.0
        seg.open_count[:] = 0
        seg.open_z = 0
        seg.open_rows = 0

    def record(self, sector: int, flat_bins: Sequence[int], weight: float,
               chain: int = 0) -> None:
        self.add_rows(np.array([sector]), np.array([list(flat_bins) or [-1]]),
                      np.array([weight]), chain)

    # -- accessors
    @property
    def chains(self) -> List[int]:
        return sorted(self._segments)

    def block_arrays(self, chain: int, include_open: bool = True):
        """(weights[nb, size], counts[nb, size], z[nb]) for one chain."""
        seg = self._segments[chain]
        ws, cs, zs = list(seg.weights), list(seg.counts), list(seg.z_counts)
        if include_open and seg.open_rows:
            ws.append(seg.open_weight)
            cs.append(seg.open_count)
            zs.append(seg.open_z)
        if not ws:
            return (np.zeros((0, self._size)), np.zeros((0, self._size), np.int64),
                    np.zeros(0))
        return np.array(ws), np.array(cs), np.array(zs, dtype=float)

    def totals(self):
        """(weight[shape], count[shape], z_count) summed over all chains."""
        w = np.zeros(self._size)
        c = np.zeros(self._size, dtype=np.int64)
        z = 0.0
        for chain in self.chains:
            ws, cs, zs = self.block_arrays(chain)
            w += ws.sum(axis=0)
            c += cs.sum(axis=0)
            z += zs.sum()
        return w.reshape(self.shape), c.reshape(self.shape), z

    @property
    def z_count(self) -> float:
        return self.totals()[2]

    def values(self) -> np.ndarray:
        """Reweighted weight per bin divided by the Z-sector count."""
        w, _, z = self.totals()
        if z == 0:
            raise NoData(f"{self.name}: no Z-sector rows for normalization")
        return w / z

    def normalized(self) -> np.ndarray:
        w, _, _ = self.totals()
        total = w.sum()
        if total == 0:
            raise NoData(f"{self.name}: empty histogram")
        return w / total

    def bin_errors(self, normalize: str = "z") -> Tuple[np.ndarray, np.ndarray]:
        """Per-bin value and blocked stderr; ``normalize`` is 'z' or 'sum'."""
        nums, dens = [], []
        for chain in self.chains:
            ws, _, zs = self.block_arrays(chain)
            nums.append(ws)
            dens.append(zs if normalize == "z" else ws.sum(axis=1))
        if not nums or sum(len(d) for d in dens) == 0:
            raise NoData(f"{self.name}: empty histogram")
        val = np.zeros(self._size)
        err = np.zeros(self._size)
        for k in range(self._size):
            est = ratio_errors([n[:, k] for n in nums], dens)
            val[k], err[k] = est.mean, est.stderr
        return val.reshape(self.shape), err.reshape(self.shape)

    # -- monoid
    def merge(self, other: "DnHistogram") -> "DnHistogram":
        if (self.shape, self.labels, self.block_rows) != \
                (other.shape, other.labels, other.block_rows):
            raise EstimatorError("histograms have different layouts")
        out = DnHistogram(self.name, self.shape, self.labels, self.block_rows, self.meta)
        for src in (self, other):
            for chain in src.chains:
                s = src._segments[chain]
                prior = out._segments.get(chain)
                if prior is not None:
                    # continuation of one chain: exact only on a block boundary
                    if prior.open_rows:
                        raise EstimatorError(
                            f"chain {chain} continues after a partial block")
                    prior.weights.extend(s.weights)
                    prior.counts.extend(s.counts)
                    prior.z_counts.extend(s.z_counts)
                    prior.rows.extend(s.rows)
                    prior.open_weight = s.open_weight.copy()
                    prior.open_count = s.open_count.copy()
                    prior.open_z, prior.open_rows = s.open_z, s.open_rows
                    continue
                out._segments[chain] = _HistSegment(
                    list(s.weights), list(s.counts), list(s.z_counts), list(s.rows),
                    s.open_weight.copy(), s.open_count.copy(), s.open_z, s.open_rows)
        return out

    # -- output
    def to_csv(self) -> str:
        w, c, z = self.totals()
        buf = io.StringIO()
        buf.write(f"# {HISTOGRAM_FORMAT} v{OUTPUT_VERSION} name={self.name} "
                  f"z_count={fmt(z)}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(list(self.labels) + ["weight", "count"])
        for idx in np.ndindex(*self.shape):
            wr.writerow([*idx, fmt(w[idx]), int(c[idx])])
        return buf.getvalue()


# ------------------------------------------------------------------ projections
def end_index(worm: int, head: bool) -> int:
    """Column of a worm end in MeasurementChunk.end_sites."""
    return 2 * worm + (1 if head else 0)


def reweight(chunk: MeasurementChunk) -> np.ndarray:
    """1/w per row (1 in Z rows)."""
    return np.exp(-chunk.log_w)


def _ring_displacement(a: np.ndarray, b: np.ndarray, graph: LatticeGraph) -> np.ndarray:
    L = graph.sites_per_layer
    dx = b % L - a % L
    if graph.pbc_intra:
        dx = (dx + L // 2) % L - L // 2
    return dx


def _ring_distance(a: np.ndarray, b: np.ndarray, graph: LatticeGraph) -> np.ndarray:
    L = graph.sites_per_layer
    dx = np.abs(a % L - b % L)
    if graph.pbc_intra:
        dx = np.minimum(dx, L - dx)
    return dx


def end_site_histogram(graph: LatticeGraph, n_worms: int, block_rows: int = 1000) -> DnHistogram:
    """Full (tail_0, head_0, tail_1, head_1, ...) site tuple; small lattices only."""
    labels = tuple(f"{'head' if k % 2 else 'tail'}{k // 2}" for k in range(2 * n_worms))
    return DnHistogram("end_sites", (graph.n_sites,) * (2 * n_worms), labels, block_rows,
                       {"projection": "end_sites", "n_worms": n_worms})


def end_site_bins(chunk: MeasurementChunk, graph: LatticeGraph) -> np.ndarray:
    ns = graph.n_sites
    flat = np.zeros(len(chunk), dtype=np.int64)
    for k in range(chunk.end_sites.shape[1]):
        flat = flat * ns + np.maximum(chunk.end_sites[:, k], 0)
    flat[chunk.sector == 0] = -1
    return flat[:, None]


def separation_histogram(graph: LatticeGraph, n_worms: int, ends: str = "head",
                         block_rows: int = 1000) -> DnHistogram:
    """Min-image column distance of every same-kind end pair, one row per pair."""
    pairs = [(a, b) for a in range(n_worms) for b in range(a + 1, n_worms)]
    if not pairs:
        raise EstimatorError("pair separations need at least two worms")
    nbins = graph.sites_per_layer // 2 + 1 if graph.pbc_intra else graph.sites_per_layer
    return DnHistogram(f"{ends}_separation", (len(pairs), nbins), ("pair", "distance"),
                       block_rows, {"projection": "separation", "ends": ends,
                                    "pairs": pairs, "n_worms": n_worms})


def separation_bins(chunk: MeasurementChunk, graph: LatticeGraph,
                    hist: DnHistogram) -> np.ndarray:
    head = hist.meta["ends"] == "head"
    nbins = hist.shape[1]
    cols = []
    for p, (a, b) in enumerate(hist.meta["pairs"]):
        sa = chunk.end_sites[:, end_index(a, head)]
        sb = chunk.end_sites[:, end_index(b, head)]
        cols.append(p * nbins + _ring_distance(sa, sb, graph))
    out = np.stack(cols, axis=1)
    out[chunk.sector == 0] = -1
    return out


def displacement_histogram(graph: LatticeGraph, name: str, end_a: int, end_b: int,
                           block_rows: int = 1000) -> DnHistogram:
    """Signed min-image displacement pos(end_a) - pos(end_b) in [-L/2, L/2)."""
    L = graph.sites_per_layer
    return DnHistogram(name, (L,), ("displacement",), block_rows,
                       {"projection": "displacement", "end_a": end_a, "end_b": end_b,
                        "offset": L // 2})


def displacement_bins(chunk: MeasurementChunk, graph: LatticeGraph,
                      hist: DnHistogram) -> np.ndarray:
    a = chunk.end_sites[:, hist.meta["end_a"]]
    b = chunk.end_sites[:, hist.meta["end_b"]]
    out = _ring_displacement(b, a, graph) + hist.meta["offset"]
    out[chunk.sector == 0] = -1
    return out[:, None]


def feed_histogram(hist: DnHistogram, chunk: MeasurementChunk, graph: LatticeGraph,
                   chain: int = 0) -> None:
    proj = hist.meta.get("projection")
    if proj == "end_sites":
        bins = end_site_bins(chunk, graph)
    elif proj == "separation":
        bins = separation_bins(chunk, graph, hist)
    elif proj == "displacement":
        bins = displacement_bins(chunk, graph, hist)
    else:
        raise EstimatorError(f"unknown projection {proj!r}")
    hist.add_rows(chunk.sector, bins, reweight(chunk), chain)


def record_worm_ends(hist: DnHistogram, state, chain: int = 0) -> None:
    """Bin the worm ends of a live chain; only valid in the G sector."""
    if state.sector != "G":
        raise ContractViolation("worm ends need a G-sector configuration")
    row = MeasurementChunk.empty(1, state.graph.n_layers, state.n_worms)
    state.measure_into(row, 0)
    feed_histogram(hist, row, state.graph, chain)


def count_z_visit(hist: DnHistogram, chain: int = 0) -> None:
    hist.record(0, [-1], 1.0, chain)


# ------------------------------------------------------------------ d, f1, f2
@dataclass(frozen=True)
class DistanceResult:
    d: float
    stderr: float
    per_pair: Tuple[ErrorEstimate, ...]
    max_pair_z: float

    def exchange_symmetric(self, n_sigma: float = 3.0) -> bool:
        return self.max_pair_z <= n_sigma


def mean_end_distance(hist: DnHistogram) -> DistanceResult:
    """Average separation of same-kind end pairs, all pairs pooled.

    With more than one pair the per-pair means are also returned with the
    largest pairwise z-score, the exchange-symmetry diagnostic.
    """
    if hist.meta.get("projection") != "separation":
        raise ContractViolation("mean_end_distance needs a separation histogram")
    w, _, _ = hist.totals()
    if w.sum() == 0:
        raise NoData("empty separation histogram")
    n_pairs, nbins = hist.shape
    x = np.arange(nbins, dtype=float)
    per_pair = []
    pooled_num, pooled_den = [], []
    for chain in hist.chains:
        ws, _, _ = hist.block_arrays(chain)
        ws = ws.reshape(len(ws), n_pairs, nbins)
        pooled_num.append((ws * x).sum(axis=(1, 2)))
        pooled_den.append(ws.sum(axis=(1, 2)))
    for p in range(n_pairs):
        nums, dens = [], []
        for chain in hist.chains:
            ws, _, _ = hist.block_arrays(chain)
            ws = ws.reshape(len(ws), n_pairs, nbins)[:, p]
            nums.append(ws @ x)
            dens.append(ws.sum(axis=1))
        per_pair.append(ratio_errors(nums, dens))
    pooled = ratio_errors(pooled_num, pooled_den)
    max_z = 0.0
    for a in range(n_pairs):
        for b in range(a + 1, n_pairs):
            ea, eb = per_pair[a], per_pair[b]
            se = math.hypot(ea.stderr, eb.stderr)
            z = abs(ea.mean - eb.mean) / se if se > 0 else (0.0 if ea.mean == eb.mean else math.inf)
            max_z = max(max_z, z)
    return DistanceResult(pooled.mean, pooled.stderr, tuple(per_pair), max_z)


@dataclass(frozen=True)
class Profile:
    """Unit-normalized curve over |X| = 0..L/2 folded under X -> -X."""
    x: np.ndarray
    value: np.ndarray
    stderr: np.ndarray


def fold_profile(hist: DnHistogram) -> Profile:
    if hist.meta.get("projection") != "displacement":
        raise ContractViolation("profiles need a displacement histogram")
    L = hist.shape[0]
    off = hist.meta["offset"]
    nmax = L // 2
    nums, dens = [], []
    for chain in hist.chains:
        ws, _, _ = hist.block_arrays(chain)
        folded = np.zeros((len(ws), nmax + 1))
        for k in range(L):
            X = abs(k - off)
            if X <= nmax:
                folded[:, X] += ws[:, k]
        nums.append(folded)
        dens.append(ws.sum(axis=1))
    if sum(d.sum() for d in dens) == 0:
        raise NoData(f"{hist.name}: empty histogram")
    val = np.zeros(nmax + 1)
    err = np.zeros(nmax + 1)
    for X in range(nmax + 1):
        est = ratio_errors([n[:, X] for n in nums], dens)
        val[X], err[X] = est.mean, est.stderr
    return Profile(np.arange(nmax + 1), val, err)


def f1_f2_histograms(graph: LatticeGraph, n_worms: int, block_rows: int = 1000):
    """f1: head(layer 0) - head(layer 1); f2: tail(layer 0) - head(layer 0)."""
    if n_worms != 3:
        raise ContractViolation("f1/f2 are defined for three layer-locked worms")
    f1 = displacement_histogram(graph, "f1", end_index(0, True), end_index(1, True), block_rows)
    f2 = displacement_histogram(graph, "f2", end_index(0, False), end_index(0, True), block_rows)
    f1.meta["layers"] = (0, 1)
    f2.meta["layers"] = (0, 0)
    return f1, f2


def f1_f2_profiles(f1: DnHistogram, f2: DnHistogram) -> Tuple[Profile, Profile]:
    for h in (f1, f2):
        if "layers" not in h.meta:
            raise ContractViolation(f"{h.name}: histogram carries no layer labels")
    return fold_profile(f1), fold_profile(f2)


# ------------------------------------------------------------------ decay fits
@dataclass(frozen=True)
class DecayFit:
    preferred: str  # "exponential", "algebraic", "inconclusive" or "no-fit"
    rate: float  # exponential: f ~ exp(-rate |X|)
    rate_err: float
    exponent: float  # algebraic: f ~ |X|^-exponent
    exponent_err: float
    rss_exponential: float
    rss_algebraic: float
    n_bins: int


def _linfit(x, y, w):
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    icpt = ym - slope * xm
    resid = y - (icpt + slope * x)
    rss = float((w * resid ** 2).sum())
    dof = max(len(x) - 2, 1)
    slope_err = math.sqrt(rss / dof / sxx) if sxx > 0 else math.inf
    return slope, slope_err, rss


def fit_decay(x, y, yerr=None, x_min: float = 1.0, x_max: Optional[float] = None,
              margin: float = 0.2, min_bins: int = 6) -> DecayFit:
    """Compare f ~ exp(-a|X|) (fit in log space) with f ~ |X|^-b (log-log space).

    Bins need y > 0 and, when errors are given, relative error below 50%;
    they are weighted by (y / yerr)^2 in both fits.  A model is preferred
    when its residual sum is below (1 - margin) times the other's.
    """
    x = np.abs(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    ok = (y > 0) & (x >= x_min)
    if x_max is not None:
        ok &= x <= x_max
    if yerr is not None:
        yerr = np.asarray(yerr, dtype=float)
        ok &= yerr < 0.5 * y
    n = int(ok.sum())
    if n < min_bins:
        return DecayFit("no-fit", math.nan, math.nan, math.nan, math.nan,
                        math.nan, math.nan, n)
    xs, ys = x[ok], y[ok]
    if yerr is not None:
        rel = yerr[ok] / ys
        w = 1.0 / np.maximum(rel, 1e-300) ** 2
        if not np.all(np.isfinite(w)) or np.any(rel == 0):
            w = np.ones(n)
    else:
        w = np.ones(n)
    ly = np.log(ys)
    a, a_err, rss_e = _linfit(xs, ly, w)
    b, b_err, rss_a = _linfit(np.log(xs), ly, w)
    if rss_e < (1 - margin) * rss_a:
        pref = "exponential"
    elif rss_a < (1 - margin) * rss_e:
        pref = "algebraic"
    else:
        pref = "inconclusive"
    return DecayFit(pref, -a, a_err, -b, b_err, rss_e, rss_a, n)


# ------------------------------------------------------------------ outputs
def summary_csv(estimates: Dict[str, ErrorEstimate]) -> str:
    buf = io.StringIO()
    buf.write(f"# {SUMMARY_FORMAT} v{OUTPUT_VERSION}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["observable", "mean", "stderr", "blocks"])
    for name in sorted(estimates):
        e = estimates[name]
        wr.writerow([name, fmt(e.mean), fmt(e.stderr), e.blocks])
    return buf.getvalue()


def read_summary_csv(text: str) -> Dict[str, Tuple[float, float, int]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {SUMMARY_FORMAT} v"):
        raise EstimatorError("not a summary file")
    version = int(lines[0].split(" v")[-1])
    if version != OUTPUT_VERSION:
        raise EstimatorError(f"unsupported summary version {version}")
    out = {}
    for row in csv.DictReader(lines[1:]):
        out[row["observable"]] = (float(row["mean"]), float(row["stderr"]), int(row["blocks"]))
    return out


def stream_lines(chunk: MeasurementChunk, block_index: int) -> Iterable[str]:
    """NDJSON records (block, observable, value, weight) for each row of a chunk."""
    yield json.dumps({"format": STREAM_FORMAT, "version": OUTPUT_VERSION,
                      "block": block_index, "rows": len(chunk)})
    for r in range(len(chunk)):
        if chunk.sector[r] == 0:
            for name in ("n_particles", "e_diag", "n_kinks"):
                yield json.dumps({"block": block_index, "observable": name,
                                  "value": fmt(getattr(chunk, name)[r]), "weight": "1"})
        else:
            yield json.dumps({"block": block_index, "observable": "worm_ends",
                              "value": [int(s) for s in chunk.end_sites[r]],
                              "weight": fmt(math.exp(-chunk.log_w[r]))})
