"""Lattice geometry and Hamiltonian terms for stacked-layer Bose-Hubbard models.

Sites are numbered ``layer * sites_per_layer + position``.  The Hamiltonian is

    H = -J  sum_<ij>,layer a+_i a_j  - J' sum_<ab>,column a+_a a_b
        - V sum_<ab>,column n_a n_b + sum_i U_i n_i (n_i - 1) - sum_i mu_layer(i) n_i

with ``V`` stored as a positive magnitude (attraction between vertically
adjacent sites).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np

Bond = Tuple[int, int]


class LatticeError(ValueError):
    """Invalid lattice or model input."""


@dataclass(frozen=True)
class LatticeGraph:
    n_layers: int
    sites_per_layer: int
    intra_bonds: Tuple[Bond, ...]
    inter_bonds: Tuple[Bond, ...]
    pbc_intra: bool = True
    pbc_inter: bool = True
    # per-site tuple of (neighbour, is_inter) pairs, filled in __post_init__
    neighbors: Tuple[Tuple[Tuple[int, bool], ...], ...] = field(
        init=False, repr=False, compare=False)
    vertical: Tuple[Tuple[int, ...], ...] = field(
        init=False, repr=False, compare=False)

    def __post_init__(self):
        nbrs = [[] for _ in range(self.n_sites)]
        vert = [[] for _ in range(self.n_sites)]
        for a, b in self.intra_bonds:
            nbrs[a].append((b, False))
            nbrs[b].append((a, False))
        for a, b in self.inter_bonds:
            nbrs[a].append((b, True))
            nbrs[b].append((a, True))
            vert[a].append(b)
            vert[b].append(a)
        object.__setattr__(self, "neighbors", tuple(tuple(x) for x in nbrs))
        object.__setattr__(self, "vertical", tuple(tuple(x) for x in vert))

    @property
    def n_sites(self) -> int:
        return self.n_layers * self.sites_per_layer

    def site(self, layer: int, position: int) -> int:
        return layer * self.sites_per_layer + position

    def layer_of(self, site: int) -> int:
        return site // self.sites_per_layer

    def position_of(self, site: int) -> int:
        return site % self.sites_per_layer

    def column_distance(self, a: int, b: int) -> int:
        """Minimum-image separation along the layers."""
        L = self.sites_per_layer
        dx = abs(a % L - b % L)
        if self.pbc_intra:
            dx = min(dx, L - dx)
        return dx

    def column_displacement(self, a: int, b: int) -> int:
        """Signed minimum-image displacement ``pos(b) - pos(a)`` in [-L/2, L/2)."""
        L = self.sites_per_layer
        dx = b % L - a % L
        if self.pbc_intra:
            dx = (dx + L // 2) % L - L // 2
        return dx

    def layer_distance(self, a: int, b: int) -> int:
        M = self.n_layers
        dl = abs(a // self.sites_per_layer - b // self.sites_per_layer)
        if self.pbc_inter:
            dl = min(dl, M - dl)
        return dl

    def distance(self, a: int, b: int) -> int:
        return self.column_distance(a, b) + self.layer_distance(a, b)

    def is_inter(self, a: int, b: int) -> bool:
        return a // self.sites_per_layer != b // self.sites_per_layer


def _unique(pairs):
    seen = set()
    out = []
    for a, b in pairs:
        key = (min(a, b), max(a, b))
        if a == b or key in seen:
            continue
        seen.add(key)
        out.append(key)
    return tuple(out)


def build_layered_lattice(n_layers: int, sites_per_layer: int,
                          pbc_intra: bool = True,
                          pbc_inter: bool = True) -> LatticeGraph:
    """Stack of ``n_layers`` chains of ``sites_per_layer`` sites.

    Duplicate bonds produced by periodic wrapping of a length-2 direction are
    kept once.
    """
    if n_layers < 1 or sites_per_layer < 1:
        raise LatticeError(
            f"lattice needs at least one site, got {n_layers}x{sites_per_layer}")
    M, L = n_layers, sites_per_layer
    intra = []
    for a in range(M):
        for i in range(L - 1):
            intra.append((a * L + i, a * L + i + 1))
        if pbc_intra and L > 1:
            intra.append((a * L + L - 1, a * L))
    inter = []
    for a in range(M - 1):
        for i in range(L):
            inter.append((a * L + i, (a + 1) * L + i))
    if pbc_inter and M > 1:
        for i in range(L):
            inter.append(((M - 1) * L + i, i))
    return LatticeGraph(M, L, _unique(intra), _unique(inter),
                        bool(pbc_intra), bool(pbc_inter))


Scalar = Union[float, int]


@dataclass(frozen=True)
class ModelParams:
    """Couplings and thermodynamic parameters.

    ``mu`` may be a scalar or one value per layer; ``U_onsite`` a scalar or one
    value per site.
    """
    J_intra: float = 1.0
    J_inter: float = 0.0
    V_inter: float = 0.0
    U_onsite: Union[Scalar, Tuple[float, ...]] = 0.0
    mu: Union[Scalar, Tuple[float, ...]] = 0.0
    n_max: int = 1
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise LatticeError(f"beta must be positive, got {self.beta}")
        if self.n_max < 1:
            raise LatticeError(f"n_max must be >= 1, got {self.n_max}")
        if self.J_intra < 0 or self.J_inter < 0:
            raise LatticeError("hopping amplitudes must be non-negative")
        if not isinstance(self.mu, (int, float)):
            object.__setattr__(self, "mu", tuple(float(x) for x in self.mu))
        if not isinstance(self.U_onsite, (int, float)):
            object.__setattr__(self, "U_onsite",
                               tuple(float(x) for x in self.U_onsite))

    def mu_at(self, site: int, graph: LatticeGraph) -> float:
        if isinstance(self.mu, tuple):
            return self.mu[graph.layer_of(site)]
        return float(self.mu)

    def U_at(self, site: int) -> float:
        if isinstance(self.U_onsite, tuple):
            return self.U_onsite[site]
        return float(self.U_onsite)

    def hopping(self, a: int, b: int, graph: LatticeGraph) -> float:
        return self.J_inter if graph.is_inter(a, b) else self.J_intra

    def onsite_table(self, graph: LatticeGraph) -> np.ndarray:
        """``table[site, n]`` = U_i n(n-1) - mu_i n, the single-site energy."""
        n = np.arange(self.n_max + 1, dtype=float)
        tab = np.empty((graph.n_sites, self.n_max + 1))
        for s in range(graph.n_sites):
            tab[s] = self.U_at(s) * n * (n - 1) - self.mu_at(s, graph) * n
        return tab


def check_occupation(occ: Sequence[int], params: ModelParams,
                     graph: LatticeGraph) -> None:
    if len(occ) != graph.n_sites:
        raise LatticeError(
            f"occupation has {len(occ)} entries, lattice has {graph.n_sites}")
    for n in occ:
        if n < 0 or n > params.n_max:
            raise LatticeError(f"occupation {n} outside [0, {params.n_max}]")


def diagonal_energy(occ: Sequence[int], params: ModelParams,
                    graph: LatticeGraph) -> float:
    """Eigenvalue of the diagonal part of H on a Fock state."""
    check_occupation(occ, params, graph)
    e = 0.0
    for s, n in enumerate(occ):
        if n:
            e += params.U_at(s) * n * (n - 1) - params.mu_at(s, graph) * n
    if params.V_inter:
        for a, b in graph.inter_bonds:
            e -= params.V_inter * occ[a] * occ[b]
    return e


def hop_matrix_element(occ_target: Sequence[int], occ_source: Sequence[int],
                       bond: Bond, params: ModelParams,
                       graph: LatticeGraph) -> float:
    """<target| -J a+_i a_j |source> for ``bond = (i, j)``.

    Zero unless target is source with one particle moved from j to i.
    """
    i, j = bond
    if i == j:
        return 0.0
    ni, nj = occ_source[i], occ_source[j]
    if nj < 1 or ni + 1 > params.n_max:
        return 0.0
    if occ_target[i] != ni + 1 or occ_target[j] != nj - 1:
        return 0.0
    for s, (t, u) in enumerate(zip(occ_target, occ_source)):
        if s != i and s != j and t != u:
            return 0.0
    return -params.hopping(i, j, graph) * math.sqrt((ni + 1) * nj)
