"""Experiment recipes: format metrics table, AWGN curves and fiber sweeps.

Every recipe takes an :class:`ExperimentConfig`, writes CSV files (plus a
JSON sidecar with the full config) into ``cfg.out_dir`` and returns the
rows it wrote. Rows carry the seed and config hash; rerunning a config
rewrites the files byte for byte, whatever the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import air, metrics
from .config import (
    ExperimentConfig,
    FiberLinkSpec,
    PmdSpec,
    WdmSpec,
    desk_scale_link,
    desk_scale_wdm,
    paper_scale_link,
    paper_scale_wdm,
)
from .constellations import build_format
from .fiber import transmit
from .rx import genie_receive, ngmi_from_rx, reach_from_snr_trend, reach_sweep

FIBER_FORMATS = ("PM-8QAM", "5.5b4D-2A8PSK", "8D-2048PRS-T1", "8D-2048PRS-T2")
NGMI_TARGETS = (0.85, 0.965)


# ---------------------------------------------------------------------------
# Presets


def preset(kind: str, scale: str = "desk", **overrides) -> ExperimentConfig:
    """Default configuration of a recipe at desk or paper scale."""
    if scale not in ("desk", "paper"):
        raise ValueError(f"unknown scale {scale!r}")
    paper = scale == "paper"
    base = dict(kind=kind, scale=scale)
    if kind == "table1":
        base.update(formats=metrics.TABLE1_FORMATS)
    elif kind == "fig3":
        base.update(
            formats=FIBER_FORMATS,
            snr_db=tuple(float(x) for x in np.arange(6.0, 16.01, 0.5)),
            n_samples=10**6,
        )
    elif kind in ("fig4", "fig5", "fig6"):
        max_spans = 100 if paper else 20
        base.update(
            formats=FIBER_FORMATS,
            wdm=paper_scale_wdm() if paper else desk_scale_wdm(),
            link=paper_scale_link(max_spans) if paper else desk_scale_link(max_spans),
            spans=tuple(range(1, max_spans + 1)),
            seeds=(1,) if paper else (1, 2, 3),
            n_realizations=50 if paper else 3,
        )
        if kind == "fig5":
            base.update(
                spans=(max_spans,) if paper else (10,),
                pmd_ps_sqrt_km=(0.0, 0.01, 0.05, 0.1, 0.15, 0.2),
                seeds=(1,),
            )
        if kind == "fig6":
            base.update(p_ch_dbm=(-1.0, 0.0, 1.0, 2.0) if paper else (0.0, 1.0, 2.0, 3.0), seeds=(1,))
    else:
        raise ValueError(f"unknown experiment {kind!r}")
    base.update(overrides)
    return ExperimentConfig(**base)


def check_formats(names: Iterable[str]):
    for n in names:
        build_format(n)  # raises ConstellationError on unknown names


# ---------------------------------------------------------------------------
# Output helpers


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_sidecar(path: Path, cfg: ExperimentConfig, extra: Optional[dict] = None) -> Path:
    d = cfg.as_dict()
    d.pop("workers")
    d.pop("out_dir")
    doc = {"config": d, "config_hash": cfg.config_hash()}
    if extra:
        doc.update(extra)
    side = path.with_suffix(".json")
    side.write_text(json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n")
    return side


def _map(fn, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------------------
# Table of format metrics


def run_table1(cfg: ExperimentConfig, check: bool = False) -> tuple[list, list[str]]:
    check_formats(cfg.formats)
    rows = metrics.metrics_report(cfg.formats)
    h = cfg.config_hash()
    out = [
        (name, m.se, m.d_e2, m.alpha, m.beta, int(m.constant_modulus), cfg.seeds[0], h)
        for name, m in rows
    ]
    path = write_csv(
        Path(cfg.out_dir) / "table1.csv",
        ["format", "se_bits_per_4d", "d_e2", "alpha", "beta", "constant_modulus", "seed", "config_hash"],
        out,
    )
    failures = metrics.check_report(rows) if check else []
    write_sidecar(path, cfg, {"check_failures": failures})
    return rows, failures


# ---------------------------------------------------------------------------
# AWGN curves


def _awgn_point(args):
    fmt, snr, n, seed = args
    r = air.gmi_mc(fmt, snr, n, seed)
    return fmt, snr, r


def _required_point(args):
    fmt, target, n, seed = args
    return fmt, target, air.required_snr(fmt, target, n_samples=n, seed=seed)


def run_fig3(cfg: ExperimentConfig, targets: Sequence[float] = NGMI_TARGETS) -> dict:
    check_formats(cfg.formats)
    h = cfg.config_hash()
    seed = cfg.seeds[0]
    pts = [(f, s, cfg.n_samples, seed) for f in cfg.formats for s in cfg.snr_db]
    res = _map(_awgn_point, pts, cfg.workers)
    curves = {f: [] for f in cfg.formats}
    rows = []
    for fmt, snr, r in res:
        curves[fmt].append(r.ngmi)
        rows.append((fmt, snr, r.gmi, r.ngmi, r.stderr, r.n_samples, seed, h))
    out_dir = Path(cfg.out_dir)
    write_csv(out_dir / "fig3_ngmi.csv", ["format", "snr_db", "gmi", "ngmi", "stderr_estimate", "n_samples", "seed", "config_hash"], rows)

    req = _map(_required_point, [(f, t, cfg.n_samples, seed) for f in cfg.formats for t in targets], cfg.workers)
    req_map = {(f, t): s for f, t, s in req}
    ref = "8D-2048PRS-T1"
    req_rows = []
    for f, t, s in req:
        gap = req_map[(f, t)] - req_map[(ref, t)] if (ref, t) in req_map else float("nan")
        req_rows.append((f, t, s, gap, seed, h))
    path = write_csv(out_dir / "fig3_required_snr.csv", ["format", "ngmi_target", "snr_db", "gap_to_T1_db", "seed", "config_hash"], req_rows)

    crossover = None
    if "8D-2048PRS-T1" in curves and "8D-2048PRS-T2" in curves:
        try:
            crossover = air.crossover_point(cfg.snr_db, curves["8D-2048PRS-T1"], curves["8D-2048PRS-T2"])
        except ValueError:
            crossover = None
    write_sidecar(path, cfg, {"t1_t2_crossover_snr_db": crossover})
    return {"curves": curves, "required": req_map, "crossover": crossover}


# ---------------------------------------------------------------------------
# Fiber sweeps


def warn_if_paper_scale(cfg: ExperimentConfig, n_runs: int):
    if cfg.scale != "paper":
        return
    n = cfg.wdm.n_symbols * cfg.wdm.samples_per_symbol
    steps = cfg.link.steps_per_span * max(cfg.spans)
    # about 4 FFTs of 2 x n points plus the nonlinear phase per step
    seconds = n_runs * steps * n * 2.5e-7
    warnings.warn(f"paper-scale run: {n_runs} propagations, roughly {seconds / 3600:.1f} CPU hours", RuntimeWarning, stacklevel=2)


def fiber_point(args) -> list[tuple]:
    """Propagate once and measure the center channel at the requested spans.

    Returns rows ``(format, p_ch_dbm, pmd, realization, seed, spans, snr_eff_db, gmi, ngmi)``.
    """
    fmt, wdm, link, pmd_value, realization, seed, spans, pmd_section_km, dgd_std = args
    pmd = None
    if pmd_value > 0:
        pmd = PmdSpec(pmd_value, pmd_section_km, dgd_std, seed=10_000 * realization + seed)
    record = sorted(set(spans))
    link = dataclasses.replace(link, n_spans=max(record))
    rows = []

    def on_span(k, f, rec):
        if k in record:
            rx, tx = genie_receive(f, rec, k)
            m = ngmi_from_rx(rx, tx, rec.channels[rec.center_index].bits, fmt)
            rows.append((fmt, wdm.p_ch_dbm, pmd_value, realization, seed, k, m.snr_eff_db, m.gmi_bits, m.ngmi))

    # each realization also draws fresh data and noise
    transmit(wdm, link, pmd, fmt, seed + 7919 * realization, on_span)
    return rows


FIBER_HEADER = ["distance_km", "spans", "p_ch_dbm", "pmd_ps_sqrt_km", "realization", "format", "snr_eff_db", "gmi", "ngmi", "seed", "config_hash"]


def _fiber_rows(cfg: ExperimentConfig, points: list, out_name: str) -> list[tuple]:
    warn_if_paper_scale(cfg, len(points))
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    partial = out_dir / (out_name + ".partial.jsonl")
    results = []
    with open(partial, "w") as fh:
        for chunk_start in range(0, len(points), max(cfg.workers, 1)):
            chunk = points[chunk_start : chunk_start + max(cfg.workers, 1)]
            for rows in _map(fiber_point, chunk, cfg.workers):
                results.extend(rows)
                fh.write(json.dumps(rows) + "\n")
                fh.flush()
    h = cfg.config_hash()
    span_km = cfg.link.span_length_km
    order = {f: i for i, f in enumerate(cfg.formats)}
    results.sort(key=lambda r: (order[r[0]], r[1], r[2], r[3], r[4], r[5]))
    rows = [
        (k * span_km, k, p, pmd, real, fmt, snr, gmi, ngmi, seed, h)
        for fmt, p, pmd, real, seed, k, snr, gmi, ngmi in results
    ]
    path = write_csv(out_dir / (out_name + ".csv"), FIBER_HEADER, rows)
    write_sidecar(path, cfg)
    partial.unlink()
    return rows


def _points(cfg: ExperimentConfig, p_grid, pmd_grid, realizations) -> list:
    pts = []
    for fmt in cfg.formats:
        for p in p_grid:
            wdm = dataclasses.replace(cfg.wdm, p_ch_dbm=p)
            for pmd in pmd_grid:
                for real in realizations:
                    for seed in cfg.seeds:
                        pts.append((fmt, wdm, cfg.link, pmd, real, seed, cfg.spans, cfg.pmd_section_km, cfg.pmd_dgd_rel_std))
    return pts


def run_fig4(cfg: ExperimentConfig) -> list[tuple]:
    """Effective SNR versus distance at the configured launch power(s)."""
    check_formats(cfg.formats)
    pts = _points(cfg, cfg.p_ch_dbm, cfg.pmd_ps_sqrt_km[:1], (0,))
    return _fiber_rows(cfg, pts, "fig4_snr_vs_distance")


def run_fig5(cfg: ExperimentConfig) -> tuple[list[tuple], list[tuple]]:
    """Effective SNR versus PMD, averaged over random PMD realizations."""
    check_formats(cfg.formats)
    pts = []
    for pmd in cfg.pmd_ps_sqrt_km:
        reals = (0,) if pmd == 0 else tuple(range(cfg.n_realizations))
        pts += _points(cfg, cfg.p_ch_dbm[:1], (pmd,), reals)
    rows = _fiber_rows(cfg, pts, "fig5_snr_vs_pmd")
    groups: dict = {}
    for r in rows:
        groups.setdefault((r[5], r[1], r[3]), []).append(r[6])
    h = cfg.config_hash()
    order = {f: i for i, f in enumerate(cfg.formats)}
    avg = [
        (fmt, spans * cfg.link.span_length_km, pmd, len(v), float(np.mean(v)), float(np.std(v)), cfg.seeds[0], h)
        for (fmt, spans, pmd), v in sorted(groups.items(), key=lambda kv: (order[kv[0][0]], kv[0][1], kv[0][2]))
    ]
    write_csv(
        Path(cfg.out_dir) / "fig5_snr_vs_pmd_mean.csv",
        ["format", "distance_km", "pmd_ps_sqrt_km", "n_realizations", "snr_eff_db_mean", "snr_eff_db_std", "seed", "config_hash"],
        avg,
    )
    return rows, avg


def run_fig6(cfg: ExperimentConfig, ngmi_target: Optional[float] = None) -> dict:
    """NGMI versus distance at the best launch power, and the resulting reach.

    At desk scale the simulated distances end before the target NGMI is
    reached, so the reach is also estimated by extrapolating the optimal
    effective SNR with a power law in the span count and comparing it with
    the AWGN requirement of each format.
    """
    check_formats(cfg.formats)
    target = cfg.ngmi_target if ngmi_target is None else ngmi_target
    pts = _points(cfg, cfg.p_ch_dbm, cfg.pmd_ps_sqrt_km[:1], (0,))
    rows = _fiber_rows(cfg, pts, "fig6_ngmi_vs_distance")
    table = {(r[5], r[1], r[2]): r[8] for r in rows}
    reach = reach_sweep(table, target)
    best_snr: dict = {}
    for r in rows:
        key = (r[5], r[1])
        best_snr[key] = max(best_snr.get(key, -np.inf), r[6])
    h = cfg.config_hash()
    out = []
    extrapolated = {}
    for fmt in cfg.formats:
        spans = sorted(k for f, k in best_snr if f == fmt)
        snr = [best_snr[(fmt, k)] for k in spans]
        req_esn0 = air.required_snr(fmt, target, n_samples=min(cfg.n_samples, 2 * 10**5), seed=cfg.seeds[0])
        req_eff = air.es_n0_to_snr_eff_db(req_esn0)
        # fit the far half of the simulated distances, where the trend is settled
        fit_from = next(i for i, k in enumerate(spans) if 2 * k >= spans[-1])
        est = reach_from_snr_trend(spans, snr, req_eff, fit_from=fit_from) if len(spans) - fit_from >= 2 else float("nan")
        extrapolated[fmt] = est
        out.append((fmt, target, reach[fmt], est, req_eff, cfg.seeds[0], h))
    write_csv(
        Path(cfg.out_dir) / "fig6_reach.csv",
        ["format", "ngmi_target", "reach_spans_simulated", "reach_spans_extrapolated", "required_snr_eff_db", "seed", "config_hash"],
        out,
    )
    return {"rows": rows, "reach": reach, "extrapolated": extrapolated}


RECIPES = {"table1": run_table1, "fig3": run_fig3, "fig4": run_fig4, "fig5": run_fig5, "fig6": run_fig6}
