"""Comparison of finished runs against exact diagonalization."""
from __future__ import annotations

import math
from pathlib import Path

from .config import load_config
from .estimators import fmt, read_summary_csv
from .oracle import BasisTooLarge, build_spectral_model, thermal_observables
from .runner import RunError, TABLE_VERSION, _atomic_write


def ed_diff(run_dir) -> str:
    """Write ``ed_diff.csv`` (observable, mc, stderr, exact, z) and return its text."""
    root = Path(run_dir)
    cfg = load_config(root / "config.toml")
    try:
        summary = read_summary_csv((root / "summary.csv").read_text())
    except FileNotFoundError:
        raise RunError(f"{root}: no summary.csv; run with the summary format first")
    if cfg.output["gate"] is not None:
        raise RunError("ed-diff compares grand-canonical averages; the run is gated")
    try:
        sm = build_spectral_model(cfg.graph(), cfg.model_params())
    except BasisTooLarge as exc:
        raise RunError(f"system too large for exact diagonalization: {exc}")
    exact = thermal_observables(sm)
    lines = [f"# multiworm-ed-diff v{TABLE_VERSION}", "observable,mc,stderr,exact,z"]
    for name in sorted(set(summary) & set(exact)):
        mean, err, _ = summary[name]
        ref = exact[name]
        z = (mean - ref) / err if err > 0 else (0.0 if mean == ref else math.inf)
        lines.append(",".join([name, fmt(mean), fmt(err), fmt(ref), fmt(z)]))
    text = "\n".join(lines) + "\n"
    _atomic_write(root / "ed_diff.csv", text)
    return text
