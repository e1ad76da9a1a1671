"""Run orchestration: seeding, scheduling, checkpoints and output files.

Layout of a run directory::

    config.toml              resolved configuration (resume reads this)
    checkpoints/chain_K.json chain state + progress of chain K
    checkpoints/chain_K_S.npz measurement rows of segment S of chain K
    summary.csv  hist_*.csv  distances.csv  profiles.csv  fits.csv  stream.ndjson
    manifest.json            written once, after every chain finished

Outputs are derived from the stored rows alone, so a run interrupted and
resumed produces the same bytes as an uninterrupted one.
"""
from __future__ import annotations

import csv
import datetime
import io
import json
import math
import os
import platform
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_config, to_toml
from .engine import ChainState
from .estimators import (DiagonalAccumulator, NoData, fit_decay, f1_f2_histograms,
                         f1_f2_profiles, feed_histogram, fmt, end_site_histogram,
                         mean_end_distance, separation_histogram, stream_lines, summary_csv)
from .kernel import KernelChain
from .records import MeasurementChunk

PROGRESS_FORMAT = "multiworm-run-progress"
PROGRESS_VERSION = 1
MANIFEST_FORMAT = "multiworm-manifest"
MANIFEST_VERSION = 1
TABLE_VERSION = 1


class RunError(RuntimeError):
    pass


class Halted(Exception):
    """Raised after the requested number of segments; the run can be resumed."""


def chain_seed_sequences(seed: int, n_chains: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_chains)


def make_chain(cfg: RunConfig, seed_seq: np.random.SeedSequence) -> ChainState:
    cls = KernelChain if cfg.engine["backend"] == "compiled" else ChainState
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    return cls(cfg.graph(), cfg.model_params(), cfg.update_params(), rng=rng,
               occupation=cfg.initial_occupation())


def _atomic_write(path: Path, data, binary: bool = False) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb" if binary else "w", newline=None if binary else "") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _save_rows(path: Path, chunk: MeasurementChunk) -> None:
    buf = io.BytesIO()
    np.savez(buf, **{k: v for k, v in vars(chunk).items()})
    _atomic_write(path, buf.getvalue(), binary=True)


def _load_rows(path: Path) -> MeasurementChunk:
    with np.load(path) as z:
        return MeasurementChunk(**{k: z[k] for k in z.files})


class RunDirectory:
    def __init__(self, root):
        self.root = Path(root)
        self.ckpt = self.root / "checkpoints"

    def progress_path(self, chain: int) -> Path:
        return self.ckpt / f"chain_{chain}.json"

    def rows_path(self, chain: int, segment: int) -> Path:
        return self.ckpt / f"chain_{chain}_{segment:05d}.npz"

    def load_progress(self, chain: int) -> Optional[dict]:
        p = self.progress_path(chain)
        if not p.exists():
            return None
        rec = json.loads(p.read_text())
        if rec.get("format") != PROGRESS_FORMAT:
            raise RunError(f"{p}: not a run checkpoint")
        if rec.get("version") != PROGRESS_VERSION:
            raise RunError(f"{p}: checkpoint version {rec.get('version')!r} is not "
                           f"{PROGRESS_VERSION}; refusing to resume")
        return rec

    def chain_rows(self, chain: int, n_segments: int) -> MeasurementChunk:
        return MeasurementChunk.concat([_load_rows(self.rows_path(chain, s))
                                        for s in range(n_segments)])


def _segments(total: int, every: int) -> List[int]:
    if total == 0:
        return []
    step = every if every > 0 else total
    return [min(step, total - k) for k in range(0, total, step)]


def _run_chain(cfg: RunConfig, rd: RunDirectory, chain: int,
               seed_seq: np.random.SeedSequence, budget: List[Optional[int]]) -> dict:
    sched = cfg.schedule
    state = make_chain(cfg, seed_seq)
    prog = rd.load_progress(chain)
    if prog is None:
        prog = {"format": PROGRESS_FORMAT, "version": PROGRESS_VERSION, "chain": chain,
                "therm_done": 0, "measured": 0, "segments": 0, "state": None}
    else:
        state.restore(prog["state"])
    every = cfg.output["checkpoint_every"]

    def save():
        prog["state"] = state.checkpoint()
        _atomic_write(rd.progress_path(chain), json.dumps(prog, sort_keys=True))
        if budget[0] is not None:
            budget[0] -= 1
            if budget[0] <= 0:
                raise Halted(f"halted in chain {chain}")

    for n in _segments(sched["therm_sweeps"] - prog["therm_done"], every):
        state.run_sweeps(n)
        prog["therm_done"] += n
        save()
    for n in _segments(sched["measure_sweeps"] - prog["measured"], every):
        rows = state.sample(n, sched["measure_every"])
        _save_rows(rd.rows_path(chain, prog["segments"]), rows)
        prog["segments"] += 1
        prog["measured"] += n
        save()
    if prog["state"] is None:
        save()
    return {"chain": chain, "acceptance": state.acceptance_rates(),
            "steps": state.step_counter}


def execute(cfg: RunConfig, out: Optional[str] = None, halt_after: Optional[int] = None,
            resume: bool = False) -> Path:
    """Run (or continue) every chain, then write all outputs and the manifest."""
    rd = RunDirectory(out or cfg.output["directory"])
    if not resume and (rd.root / "manifest.json").exists():
        raise RunError(f"{rd.root} already holds a finished run")
    if not resume and rd.progress_path(0).exists():
        raise RunError(f"{rd.root} holds an unfinished run; use resume")
    rd.ckpt.mkdir(parents=True, exist_ok=True)
    cfg_path = rd.root / "config.toml"
    text = to_toml(cfg)
    if cfg_path.exists():
        if parse_config(cfg_path.read_text()).as_dict() != cfg.as_dict():
            raise RunError(f"{rd.root} holds a run with a different configuration")
    else:
        _atomic_write(cfg_path, text)
    started_path = rd.ckpt / "started"
    if not started_path.exists():
        _atomic_write(started_path, _now())
    seqs = chain_seed_sequences(cfg.schedule["seed"], cfg.schedule["n_chains"])
    budget = [halt_after]
    info = [_run_chain(cfg, rd, k, s, budget) for k, s in enumerate(seqs)]
    write_outputs(cfg, rd.root, {k: rd.chain_rows(k, rd.load_progress(k)["segments"])
                                 for k in range(len(seqs))})
    write_manifest(cfg, rd, seqs, info)
    return rd.root


def resume(out: str, halt_after: Optional[int] = None) -> Path:
    root = Path(out)
    if (root / "manifest.json").exists():
        raise RunError(f"{root}: run already finished")
    cfg = load_config(root / "config.toml")
    return execute(cfg, str(root), halt_after, resume=True)


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def write_manifest(cfg: RunConfig, rd: RunDirectory, seqs, info: Sequence[dict]) -> None:
    manifest = {
        "format": MANIFEST_FORMAT, "version": MANIFEST_VERSION,
        "code_version": __version__, "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg.as_dict(),
        "chains": [{"chain": d["chain"], "root_seed": cfg.schedule["seed"],
                    "spawn_key": list(s.spawn_key), "steps": d["steps"],
                    "acceptance": d["acceptance"]} for d, s in zip(info, seqs)],
        "started": (rd.ckpt / "started").read_text(),
        "finished": _now(),
        "conventions": _conventions(cfg),
    }
    _atomic_write(rd.root / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True))


def _conventions(cfg: RunConfig) -> Dict[str, str]:
    notes = {}
    m = cfg.model
    if m["J_intra"] > 0 and math.isclose(m["beta"], m["sites_per_layer"] / m["J_intra"]):
        notes["beta"] = "beta = L/J, a ground-state-targeting convention, not a quoted value"
    return notes


# ------------------------------------------------------------------ outputs
def _table(header: str, columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {header} v{TABLE_VERSION}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([fmt(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def build_histograms(cfg: RunConfig) -> Dict[str, object]:
    graph = cfg.graph()
    n = cfg.n_worms
    br = cfg.output["block_rows"]
    hists = {}
    for name in cfg.output["histograms"]:
        if name == "end_sites":
            hists[name] = end_site_histogram(graph, n, br)
        elif name in ("head_separation", "tail_separation"):
            hists[name] = separation_histogram(graph, n, name.split("_")[0], br)
        elif name == "f1f2":
            hists["f1"], hists["f2"] = f1_f2_histograms(graph, n, br)
    return hists


def write_outputs(cfg: RunConfig, root: Path, rows: Dict[int, MeasurementChunk]) -> None:
    """Every output file from per-chain row streams; chains are independent segments."""
    root = Path(root)
    formats = cfg.output["formats"]
    m = cfg.model
    graph = cfg.graph()
    if "summary" in formats:
        acc = DiagonalAccumulator(m["n_layers"], m["sites_per_layer"], m["beta"])
        for k in sorted(rows):
            acc.add_chunk(rows[k], k)
        try:
            text = summary_csv(acc.summary(cfg.output["gate"]))
        except NoData:
            text = summary_csv({})
        _atomic_write(root / "summary.csv", text)
    if "histograms" in formats:
        hists = build_histograms(cfg)
        for h in hists.values():
            for k in sorted(rows):
                feed_histogram(h, rows[k], graph, k)
            _atomic_write(root / f"hist_{h.name}.csv", h.to_csv())
        dist_rows = []
        for name in ("head_separation", "tail_separation"):
            if name in hists:
                try:
                    d = mean_end_distance(hists[name])
                except NoData:
                    continue
                dist_rows.append([name.split("_")[0], d.d, d.stderr, d.max_pair_z])
        if dist_rows:
            _atomic_write(root / "distances.csv", _table(
                "multiworm-distances", ["ends", "d", "stderr", "max_pair_z"], dist_rows))
        if "f1" in hists:
            try:
                p1, p2 = f1_f2_profiles(hists["f1"], hists["f2"])
            except NoData:
                p1 = p2 = None
            if p1 is not None:
                prof = [[int(x), a, ea, b, eb] for x, a, ea, b, eb in
                        zip(p1.x, p1.value, p1.stderr, p2.value, p2.stderr)]
                _atomic_write(root / "profiles.csv", _table(
                    "multiworm-profiles", ["X", "f1", "f1_err", "f2", "f2_err"], prof))
                fits = []
                for name, p in (("f1", p1), ("f2", p2)):
                    f = fit_decay(p.x, p.value, p.stderr)
                    fits.append([name, f.preferred, f.rate, f.rate_err, f.exponent,
                                 f.exponent_err, f.rss_exponential, f.rss_algebraic,
                                 f.n_bins])
                _atomic_write(root / "fits.csv", _table(
                    "multiworm-fits", ["profile", "preferred", "rate", "rate_err",
                                       "exponent", "exponent_err", "rss_exponential",
                                       "rss_algebraic", "n_bins"], fits))
    if "stream" in formats:
        br = cfg.output["block_rows"]
        lines = []
        block = 0
        for k in sorted(rows):
            chunk = rows[k]
            for start in range(0, len(chunk), br):
                lines.extend(stream_lines(chunk.slice(slice(start, start + br)), block))
                block += 1
        _atomic_write(root / "stream.ndjson", "".join(x + "\n" for x in lines))


def merge_runs(dirs: Sequence[str], out: str) -> Path:
    """Pool finished runs of one system as independent chains into ``out``."""
    if not dirs:
        raise RunError("nothing to merge")
    cfgs = [load_config(Path(d) / "config.toml") for d in dirs]
    base = cfgs[0]
    for d, c in zip(dirs, cfgs):
        if (c.model, c.engine) != (base.model, base.engine):
            raise RunError(f"{d}: model or engine differs from {dirs[0]}")
        if c.output["block_rows"] != base.output["block_rows"]:
            raise RunError(f"{d}: block_rows differs from {dirs[0]}")
    rows: Dict[int, MeasurementChunk] = {}
    for d, c in zip(dirs, cfgs):
        rd = RunDirectory(d)
        for k in range(c.schedule["n_chains"]):
            prog = rd.load_progress(k)
            if prog is None or prog["measured"] != c.schedule["measure_sweeps"]:
                raise RunError(f"{d}: chain {k} is unfinished")
            rows[len(rows)] = rd.chain_rows(k, prog["segments"])
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    merged = base.replace("schedule", n_chains=len(rows))
    _atomic_write(root / "config.toml", to_toml(merged))
    write_outputs(merged, root, rows)
    _atomic_write(root / "merged_from.json", json.dumps([str(d) for d in dirs], indent=1))
    return root
