"""Reduced-scale configuration grids for the layered-dipole figures.

``emit`` writes one config per (L, filling) point plus ``recipe.json`` and a
shell script running them; ``collect`` reads the finished runs back and writes
a d-versus-filling table or the f1/f2 decay fits.

Fillings are set through the chemical potential, interpolated in tables
measured with :func:`multiworm.calibration.measure_filling` at the smallest
size of each recipe (beta = L/J, gamma-tuned companion, 800 to 1500 sweeps).
Layer-locked chains change their number rarely, so the three-layer decoupled
table is coarse: its middle entry averages mu in [-3.6, -3.5].
The same mu is used at larger L, where the filling shifts by finite-size
corrections only.
"""
from __future__ import annotations

import csv
import io
import json
import shlex
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import ConfigError, resolve, to_toml
from .runner import RunError, TABLE_VERSION, _atomic_write, _table

SCALES = ("reduced", "smoke")


@dataclass(frozen=True)
class Recipe:
    n_layers: int
    J_inter: float
    V: float
    worm_spec: list
    sizes: Tuple[int, ...]
    fillings: Tuple[float, ...]
    # (mu, measured filling) pairs, increasing in mu
    mu_table: Tuple[Tuple[float, float], ...]
    histograms: Tuple[str, ...] = ("head_separation", "tail_separation")
    fits: bool = False
    therm_sweeps: int = 1000
    measure_sweeps: int = 5000

    def mu_for(self, n: float) -> float:
        mus, ns = zip(*self.mu_table)
        if not ns[0] <= n <= ns[-1]:
            raise ConfigError(f"filling {n} outside the calibrated range [{ns[0]}, {ns[-1]}]")
        return float(np.interp(n, ns, mus))


_D_FILLINGS = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35)

RECIPES: Dict[str, Recipe] = {
    "fig6a": Recipe(
        n_layers=2, J_inter=1.0, V=3.6, worm_spec=[["any", 2]], sizes=(40, 80),
        fillings=_D_FILLINGS,
        mu_table=((-3.05, 0.0118), (-3.0, 0.0835), (-2.95, 0.1305), (-2.9, 0.1698),
                  (-2.85, 0.1899), (-2.8, 0.2162), (-2.7, 0.2625), (-2.6, 0.2885),
                  (-2.5, 0.3200), (-2.4, 0.3612))),
    "fig6b": Recipe(
        n_layers=2, J_inter=1.0, V=3.0, worm_spec=[["any", 2]], sizes=(40, 80),
        fillings=_D_FILLINGS,
        mu_table=((-3.0, 0.0081), (-2.9, 0.1114), (-2.8, 0.1563), (-2.7, 0.1847),
                  (-2.6, 0.2264), (-2.5, 0.2656), (-2.4, 0.2900), (-2.3, 0.3232),
                  (-2.2, 0.3512), (-2.1, 0.3693))),
    "fig7": Recipe(
        n_layers=3, J_inter=1.0, V=1.97, worm_spec=[["any", 3]], sizes=(40, 80),
        fillings=_D_FILLINGS,
        mu_table=((-3.9, 0.0427), (-3.8, 0.0667), (-3.7, 0.1000), (-3.6, 0.1398),
                  (-3.5, 0.1620), (-3.4, 0.1901), (-3.3, 0.2143), (-3.1, 0.2687),
                  (-2.9, 0.3113), (-2.8, 0.3329), (-2.7, 0.3504))),
    # V is not fixed by the figure; 3 binds the chains well above the hopping scale.
    # Half filling sits at mu = -V by particle-hole symmetry.
    "fig8": Recipe(
        n_layers=3, J_inter=0.0, V=3.0, worm_spec=[[0, 1], [1, 1], [2, 1]], sizes=(48,),
        fillings=(0.29, 0.5),
        mu_table=((-4.0, 0.016), (-3.55, 0.236), (-3.45, 0.29), (-3.0, 0.5)),
        histograms=("f1f2",), fits=True, measure_sweeps=6000),
}

_SMOKE = dict(size=8, therm_sweeps=20, measure_sweeps=60)


def recipe(figure: str) -> Recipe:
    try:
        return RECIPES[figure]
    except KeyError:
        raise ConfigError(f"unknown figure {figure!r}; known: {', '.join(sorted(RECIPES))}")


def point_name(L: int, n: float) -> str:
    return f"L{L}_n{n:.2f}"


def point_configs(figure: str, scale: str = "reduced", seed: int = 0,
                  runs_dir: str = "runs") -> List[dict]:
    """[{name, L, n_target, mu, config}] for every point of the grid."""
    rec = recipe(figure)
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; known: {', '.join(SCALES)}")
    smoke = scale == "smoke"
    sizes = (_SMOKE["size"],) if smoke else rec.sizes
    fillings = rec.fillings[:2] if smoke else rec.fillings
    points = []
    for L in sizes:
        for n in fillings:
            mu = rec.mu_for(n)
            name = point_name(L, n)
            raw = {
                "model": dict(n_layers=rec.n_layers, sites_per_layer=L, J_inter=rec.J_inter,
                              V_inter=rec.V, mu=mu, beta=float(L)),
                "engine": dict(xi_space="inf", xi_time="inf", worm_spec=rec.worm_spec,
                               initial_filling=n),
                "schedule": dict(
                    therm_sweeps=_SMOKE["therm_sweeps"] if smoke else rec.therm_sweeps,
                    measure_sweeps=_SMOKE["measure_sweeps"] if smoke else rec.measure_sweeps,
                    seed=seed + len(points)),
                "output": dict(directory=f"{runs_dir}/{name}",
                               histograms=list(rec.histograms)),
            }
            points.append(dict(name=name, L=L, n_target=n, mu=mu, config=resolve(raw)))
    return points


def emit(figure: str, out, scale: str = "reduced", seed: int = 0) -> Path:
    """Write the config grid, ``recipe.json`` and ``run_all.sh`` under ``out``."""
    root = Path(out)
    points = point_configs(figure, scale, seed, runs_dir=str((root / "runs").resolve()))
    (root / "configs").mkdir(parents=True, exist_ok=True)
    plan = {"format": "multiworm-recipe", "version": TABLE_VERSION, "figure": figure,
            "scale": scale, "seed": seed, "points": []}
    script = ["#!/bin/sh", "set -e"]
    for p in points:
        path = root / "configs" / f"{p['name']}.toml"
        _atomic_write(path, to_toml(p["config"]))
        plan["points"].append({k: p[k] for k in ("name", "L", "n_target", "mu")})
        script.append(f"multiworm run --config {shlex.quote(str(path.resolve()))}")
    _atomic_write(root / "recipe.json", json.dumps(plan, indent=1))
    _atomic_write(root / "run_all.sh", "\n".join(script) + "\n")
    (root / "run_all.sh").chmod(0o755)
    return root


def _read_table(path: Path) -> List[Dict[str, str]]:
    lines = path.read_text().splitlines()
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def collect(figure: str, out) -> Path:
    """Assemble finished runs into ``<figure>_d_vs_n.csv`` or ``<figure>_fits.csv``."""
    rec = recipe(figure)
    root = Path(out)
    try:
        plan = json.loads((root / "recipe.json").read_text())
    except FileNotFoundError:
        raise RunError(f"{root}: no recipe.json; emit the recipe first")
    if plan["figure"] != figure:
        raise RunError(f"{root} holds recipe {plan['figure']!r}, not {figure!r}")
    missing = [p["name"] for p in plan["points"]
               if not (root / "runs" / p["name"] / "manifest.json").exists()]
    if missing:
        raise RunError(f"unfinished runs: {', '.join(missing)}")
    rows = []
    if rec.fits:
        for p in plan["points"]:
            for r in _read_table(root / "runs" / p["name"] / "fits.csv"):
                rows.append([p["L"], p["n_target"], p["mu"], r["profile"], r["preferred"],
                             float(r["rate"]), float(r["rate_err"]), float(r["exponent"]),
                             float(r["exponent_err"])])
        path = root / f"{figure}_fits.csv"
        _atomic_write(path, _table("multiworm-recipe-fits",
                                   ["L", "n", "mu", "profile", "preferred", "rate",
                                    "rate_err", "exponent", "exponent_err"], rows))
        return path
    for p in plan["points"]:
        for r in _read_table(root / "runs" / p["name"] / "distances.csv"):
            d = float(r["d"])
            rows.append([p["L"], p["n_target"], p["mu"], r["ends"], d, float(r["stderr"]),
                         d / p["L"]])
    path = root / f"{figure}_d_vs_n.csv"
    _atomic_write(path, _table("multiworm-recipe-d", ["L", "n", "mu", "ends", "d", "stderr",
                                                      "d_over_L"], rows))
    return path


def figures() -> Sequence[str]:
    return sorted(RECIPES)
