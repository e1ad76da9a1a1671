"""Exact diagonalization of small Fock spaces: reference values for the sampler.

Imaginary-time correlators are evaluated in the eigenbasis.  Correlators whose
operators sit at independent, fully integrated times (what the worm estimators
measure) are read off a nilpotent extension of the Hamiltonian: with commuting
symbols e_k, e_k**2 = 0, the coefficient of e_1...e_m in
Tr exp(-beta (H - sum_k e_k O_k)) is the integral over m times in [0, beta) of
the time-ordered trace of O_1 ... O_m.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .model import LatticeGraph, ModelParams, diagonal_energy, hop_matrix_element

MAX_BASIS = 20000


class BasisTooLarge(ValueError):
    pass


class FockBasis:
    """Occupation vectors of a lattice, optionally restricted to N particles."""

    def __init__(self, n_sites: int, n_max: int, n_particles: Optional[int] = None):
        self.n_sites = n_sites
        self.n_max = n_max
        self.n_particles = n_particles
        size = (n_max + 1) ** n_sites
        if n_particles is None and size > MAX_BASIS:
            raise BasisTooLarge(f"Fock space has {size} states, guard is {MAX_BASIS}")
        states = []
        for occ in itertools.product(range(n_max + 1), repeat=n_sites):
            if n_particles is None or sum(occ) == n_particles:
                states.append(occ)
                if len(states) > MAX_BASIS:
                    raise BasisTooLarge(f"sector exceeds the guard of {MAX_BASIS} states")
        self.states = np.array(states, dtype=np.int64).reshape(len(states), n_sites)
        self.index: Dict[tuple, int] = {s: k for k, s in enumerate(states)}

    def __len__(self):
        return len(self.states)


def build_hamiltonian(graph: LatticeGraph, params: ModelParams, basis: FockBasis) -> np.ndarray:
    """Dense H assembled from the model's diagonal and hopping matrix elements."""
    dim = len(basis)
    H = np.zeros((dim, dim))
    bonds = list(graph.intra_bonds) + list(graph.inter_bonds)
    for k, occ in enumerate(basis.states):
        occ = tuple(int(x) for x in occ)
        H[k, k] = diagonal_energy(occ, params, graph)
        for a, b in bonds:
            for i, j in ((a, b), (b, a)):
                if occ[j] == 0 or occ[i] == params.n_max:
                    continue
                tgt = list(occ)
                tgt[i] += 1
                tgt[j] -= 1
                tgt = tuple(tgt)
                amp = hop_matrix_element(tgt, occ, (i, j), params, graph)
                if amp:
                    H[basis.index[tgt], k] += amp
    return H


@dataclass
class SpectralModel:
    graph: LatticeGraph
    params: ModelParams
    basis: FockBasis
    hamiltonian: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    beta: float

    @property
    def boltzmann(self) -> np.ndarray:
        """e^{-beta E_k} / Z."""
        x = np.exp(-self.beta * (self.energies - self.energies[0]))
        return x / x.sum()

    @property
    def log_z(self) -> float:
        e0 = self.energies[0]
        return -self.beta * e0 + math.log(np.exp(-self.beta * (self.energies - e0)).sum())

    @property
    def partition_function(self) -> float:
        return math.exp(self.log_z)

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.T @ op @ self.vectors

    def annihilator(self, site: int) -> np.ndarray:
        """Matrix of a_site in the Fock basis (needs the unrestricted basis)."""
        if self.basis.n_particles is not None:
            raise ValueError("ladder operators need the full Fock basis")
        dim = len(self.basis)
        a = np.zeros((dim, dim))
        for k, occ in enumerate(self.basis.states):
            n = int(occ[site])
            if n:
                tgt = list(int(x) for x in occ)
                tgt[site] -= 1
                a[self.basis.index[tuple(tgt)], k] = math.sqrt(n)
        return a


def build_spectral_model(graph: LatticeGraph, params: ModelParams,
                         sector: Optional[int] = None) -> SpectralModel:
    """Dense diagonalization; ``sector`` fixes the particle number."""
    basis = FockBasis(graph.n_sites, params.n_max, sector)
    H = build_hamiltonian(graph, params, basis)
    E, U = np.linalg.eigh(H)
    return SpectralModel(graph, params, basis, H, E, U, params.beta)


def thermal_expectation(sm: SpectralModel,
                        observable: Union[Callable[[np.ndarray], float], np.ndarray]) -> float:
    """Sum_k e^{-beta E_k} <k|O|k> / Z for a diagonal function of occupations or a matrix."""
    if callable(observable):
        diag = np.array([observable(occ) for occ in sm.basis.states], dtype=float)
        op_diag = np.einsum("ak,a,ak->k", sm.vectors, diag, sm.vectors)
    else:
        op_diag = np.einsum("ak,ab,bk->k", sm.vectors, np.asarray(observable), sm.vectors)
    return float(sm.boltzmann @ op_diag)


def thermal_observables(sm: SpectralModel) -> Dict[str, float]:
    """Exact values of the observables a sampler summary reports, keyed alike."""
    g, p = sm.graph, sm.params
    L = g.sites_per_layer
    states = np.asarray(sm.basis.states, dtype=float)
    diag_e = np.array([diagonal_energy(tuple(int(x) for x in occ), p, g)
                       for occ in sm.basis.states])

    def avg(values):
        return float(sm.boltzmann @ np.einsum("ak,a,ak->k", sm.vectors, values, sm.vectors))

    n = avg(states.sum(axis=1))
    e_diag = avg(diag_e)
    energy = float(sm.boltzmann @ sm.energies)
    out = {"n_particles": n, "filling": n / g.n_sites, "e_diag": e_diag,
           "e_kin": energy - e_diag, "energy": energy}
    for a in range(g.n_layers):
        out[f"filling_layer{a}"] = avg(states[:, a * L:(a + 1) * L].sum(axis=1)) / L
    return out


def _string(sm: SpectralModel, sites: Sequence[int], dagger: bool) -> np.ndarray:
    dim = len(sm.basis)
    op = np.eye(dim)
    for s in sites:
        a = sm.annihilator(s)
        op = op @ (a.T if dagger else a)
    return op


def _two_point(sm: SpectralModel, left: np.ndarray, right: np.ndarray, tau: float) -> float:
    """Tr[e^{-(beta-tau)H} left e^{-tau H} right] / Z with both operators in the eigenbasis."""
    E = sm.energies - sm.energies[0]
    wl = np.exp(-(sm.beta - tau) * E)
    wr = np.exp(-tau * E)
    z = np.exp(-sm.beta * E).sum()
    return float(np.einsum("k,kl,l,lk->", wl, left, wr, right) / z)


def spectral_green(sm: SpectralModel, i: int, j: int, tau: float) -> float:
    """<a_j(tau) a_i^+(0)>, a particle created on i and removed from j a time tau later."""
    if not 0.0 <= tau < sm.beta:
        raise ValueError(f"tau={tau} outside [0, beta)")
    aj = sm.to_eigenbasis(sm.annihilator(j))
    adi = sm.to_eigenbasis(sm.annihilator(i).T)
    return _two_point(sm, aj, adi, tau)


def spectral_dn(sm: SpectralModel, creators: Sequence[int], annihilators: Sequence[int],
                tau: float) -> float:
    """<A(annihilators; tau) A^+(creators; 0)>, equal times within each operator string."""
    if not 0.0 <= tau < sm.beta:
        raise ValueError(f"tau={tau} outside [0, beta)")
    A = sm.to_eigenbasis(_string(sm, annihilators, dagger=False))
    Ad = sm.to_eigenbasis(_string(sm, creators, dagger=True))
    return _two_point(sm, A, Ad, tau)


def integrated_green(sm: SpectralModel, i: int, j: int) -> float:
    """Integral over tau in [0, beta) of spectral_green(i, j, tau), in closed form."""
    E = sm.energies - sm.energies[0]
    aj = sm.to_eigenbasis(sm.annihilator(j))
    adi = sm.to_eigenbasis(sm.annihilator(i).T)
    beta = sm.beta
    dE = E[None, :] - E[:, None]  # E_l - E_k
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = np.where(np.abs(dE) > 1e-12,
                        -np.expm1(-beta * dE) / np.where(dE == 0, 1.0, dE), beta)
    kern = np.exp(-beta * E)[:, None] * kern
    z = np.exp(-beta * E).sum()
    return float(np.sum(kern * aj * adi.T) / z)


def integrated_correlator(sm: SpectralModel, operators: Sequence[np.ndarray]) -> float:
    """Integral over independent times in [0, beta)^m of <T O_1(t_1) ... O_m(t_m)>.

    Operators are Fock-basis matrices of bosonic (commuting under T) type.
    """
    m = len(operators)
    if m == 0:
        return 1.0
    dim = len(sm.basis)
    nalg = 1 << m
    gens = []
    for k in range(m):
        Ek = np.zeros((nalg, nalg))
        for S in range(nalg):
            if not S >> k & 1:
                Ek[S | (1 << k), S] = 1.0
        gens.append(Ek)
    e0 = sm.energies[0]
    H = sm.hamiltonian - e0 * np.eye(dim)
    big = np.kron(np.eye(nalg), H)
    for Ek, op in zip(gens, operators):
        big -= np.kron(Ek, np.asarray(op, dtype=float))
    X = scipy.linalg.expm(-sm.beta * big)
    full = nalg - 1
    block = X[full * dim:(full + 1) * dim, 0:dim]
    z = np.exp(-sm.beta * (sm.energies - e0)).sum()
    return float(np.trace(block) / z)


def worm_end_correlator(sm: SpectralModel, tails: Sequence[int], heads: Sequence[int]) -> float:
    """Fully time-integrated <T prod a_head prod a^+_tail> / Z, one time per operator."""
    ops = [sm.annihilator(s) for s in heads] + [sm.annihilator(s).T for s in tails]
    return integrated_correlator(sm, ops)


# ------------------------------------------------------------- Dyson series
def dyson_partition_terms(sm: SpectralModel, max_order: int = 3,
                          n_nodes: int = 24) -> List[float]:
    """Orders 0..max_order of Tr e^{-beta H} expanded in the off-diagonal part.

    Each term (-1)^n int_{0<t_1<...<t_n<beta} Tr[e^{-(beta-t_n)H0} H1 ... H1 e^{-t_1 H0}]
    is integrated with Gauss-Legendre nodes on nested intervals.
    """
    H = sm.hamiltonian
    d0 = np.diag(H).copy()
    H1 = H - np.diag(d0)
    beta = sm.beta
    x, wts = np.polynomial.legendre.leggauss(n_nodes)
    x = 0.5 * (x + 1.0)
    wts = 0.5 * wts
    shift = d0.min()
    d0s = d0 - shift

    def ordered(n, t_prev, vec_weight):
        # vec_weight: matrix e^{-(t_prev) H0}-propagated product so far
        if n == 0:
            return np.trace(np.exp(-(beta - t_prev) * d0s)[:, None] * vec_weight)
        total = 0.0
        span = beta - t_prev
        for xi, wi in zip(x, wts):
            t = t_prev + span * xi
            prop = np.exp(-(t - t_prev) * d0s)[:, None] * vec_weight
            total += wi * span * ordered(n - 1, t, H1 @ prop)
        return total

    terms = []
    for n in range(max_order + 1):
        val = (-1) ** n * ordered(n, 0.0, np.eye(len(d0)))
        terms.append(float(val * math.exp(-beta * shift)))
    return terms
