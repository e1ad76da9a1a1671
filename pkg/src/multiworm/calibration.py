"""Filling measurements for choosing chemical potentials.

Multi-worm runs rarely visit the Z sector on large lattices, so fillings are
measured in a companion run, by default with a single worm.  Its source
strength gamma is tuned during thermalization toward equal Z and G odds;
with N worms those odds scale as gamma^(-2N), which makes the update a
one-step estimate.  Layer-locked multimers need the full worm spec, since
single worms cannot change the number of bound chains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .config import RunConfig
from .estimators import DiagonalAccumulator, ErrorEstimate
from .runner import make_chain


@dataclass(frozen=True)
class FillingResult:
    mu: float
    gamma: float
    z_fraction: float
    filling: ErrorEstimate
    layer_fillings: Dict[str, ErrorEstimate]


def companion(cfg: RunConfig, gamma: float, single: bool = True) -> RunConfig:
    if single:
        cfg = cfg.replace("engine", worm_spec=[["any", 1]])
    cfg = cfg.replace("engine", gamma=gamma)
    return cfg.replace("output", histograms=[])


def tune_gamma(cfg: RunConfig, seed_seq: np.random.SeedSequence, rounds: int = 6,
               sweeps: int = 200, gamma: Optional[float] = None, single: bool = True):
    """Thermalize a companion chain while tuning gamma; returns (config, chain)."""
    g = cfg.engine["gamma"] if gamma is None else gamma
    cur = companion(cfg, g, single)
    n = cur.n_worms
    chain = make_chain(cur, seed_seq)
    for _ in range(rounds):
        rows = chain.sample(sweeps)
        zf = min(max(float(np.mean(rows.sector == 0)), 0.02), 0.98)
        g = g * (zf / (1.0 - zf)) ** (1.0 / (2 * n))
        nxt = companion(cfg, g, single)
        state = chain.checkpoint()
        chain = make_chain(nxt, seed_seq)
        chain.restore(state)
        cur = nxt
    return cur, chain


def measure_filling(cfg: RunConfig, seed: int = 0, sweeps: int = 2000, rounds: int = 6,
                    tune_sweeps: int = 200, gamma: Optional[float] = None,
                    single: bool = True) -> FillingResult:
    """Z-sector filling of ``cfg``'s model in a gamma-tuned companion run."""
    seq = np.random.SeedSequence(seed)
    cur, chain = tune_gamma(cfg, seq, rounds, tune_sweeps, gamma, single)
    rows = chain.sample(sweeps, cfg.schedule["measure_every"])
    m = cfg.model
    acc = DiagonalAccumulator(m["n_layers"], m["sites_per_layer"], m["beta"])
    acc.add_chunk(rows)
    s = acc.summary()
    layers = {k: v for k, v in s.items() if k.startswith("filling_layer")}
    return FillingResult(float(m["mu"]) if not isinstance(m["mu"], list) else math.nan,
                         cur.engine["gamma"], float(np.mean(rows.sector == 0)),
                         s["filling"], layers)
