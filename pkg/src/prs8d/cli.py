"""Command-line entry point.

Subcommands: constellation, metrics, awgn-sweep, fiber-sim, evaluate,
table1, fig3, fig4, fig5, fig6. Experiment settings come from the scale
preset, then a flat YAML ``key: value`` file (``--config``), then explicit
flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import air, experiments, metrics
from .config import ExperimentConfig, FiberLinkSpec, PmdSpec, WdmSpec, desk_scale_link, desk_scale_wdm, paper_scale_link, paper_scale_wdm
from .constellations import ConstellationError, build_format, to_csv, to_json
from .fiber import dump_field, load_field, rebuild_record, record_meta, transmit
from .rx import genie_receive, ngmi_from_rx

_EXP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"wdm", "link", "kind"}
_WDM_KEYS = {f.name for f in dataclasses.fields(WdmSpec)} - {"p_ch_dbm"}
_LINK_KEYS = {f.name for f in dataclasses.fields(FiberLinkSpec)}
_TUPLE_KEYS = {"formats", "snr_db", "spans", "p_ch_dbm", "pmd_ps_sqrt_km", "seeds"}


class UsageError(Exception):
    pass


def load_config_file(path) -> dict:
    """Read a flat YAML mapping; nested sections are rejected."""
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a key/value mapping")
    for k, v in doc.items():
        if isinstance(v, dict):
            raise UsageError(f"{path}: key {k!r} is nested; use flat keys")
    return doc


def apply_overrides(cfg: ExperimentConfig, values: dict) -> ExperimentConfig:
    """Route flat keys to the experiment, WDM or link fields by name."""
    exp, wdm, link = {}, {}, {}
    for k, v in values.items():
        if k in _TUPLE_KEYS:
            exp[k] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        elif k in _EXP_KEYS:
            exp[k] = v
        elif k in _WDM_KEYS:
            wdm[k] = v
        elif k in _LINK_KEYS:
            link[k] = v
        else:
            raise UsageError(f"unknown config key {k!r}")
    if wdm:
        exp["wdm"] = dataclasses.replace(cfg.wdm, **wdm)
    if link:
        exp["link"] = dataclasses.replace(cfg.link, **link)
    try:
        return dataclasses.replace(cfg, **exp)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def build_config(kind: str, args) -> ExperimentConfig:
    cfg = experiments.preset(kind, args.scale)
    if args.config:
        cfg = apply_overrides(cfg, load_config_file(args.config))
    flags = {}
    if args.seed is not None:
        flags["seeds"] = (args.seed,)
    if args.formats:
        flags["formats"] = tuple(args.formats)
    if getattr(args, "samples", None):
        flags["n_samples"] = args.samples
    flags["out_dir"] = args.out_dir
    flags["workers"] = args.workers
    cfg = apply_overrides(cfg, flags)
    try:
        experiments.check_formats(cfg.formats)
    except ConstellationError as e:
        raise UsageError(str(e)) from e
    return cfg


def _hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:12]


def _write(text: str, out: Optional[str]):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_constellation(args) -> int:
    c = build_format(args.format)
    members = c if isinstance(c, tuple) else (c,)
    for i, m in enumerate(members):
        out = args.out
        if out and len(members) > 1:
            p = Path(out)
            out = str(p.with_name(f"{p.stem}_{m.m}b{p.suffix}"))
        text = to_json(m) if out and out.endswith(".json") else to_csv(m)
        _write(text, out)
    return 0


def cmd_metrics(args) -> int:
    names = tuple(args.formats or metrics.TABLE1_FORMATS)
    rows = metrics.metrics_report(names)
    # deterministic: seed is recorded as 0
    _write(metrics.report_csv(rows, 0, _hash({"command": "metrics", "formats": list(names)})), args.out)
    sys.stderr.write(metrics.report_text(rows) + "\n")
    return 0


def cmd_awgn_sweep(args) -> int:
    build_format(args.format)
    n = int(round((args.snr_stop - args.snr_start) / args.snr_step)) + 1
    grid = [args.snr_start + k * args.snr_step for k in range(n)]
    h = _hash({"format": args.format, "grid": grid, "samples": args.samples, "seed": args.seed})
    results = air.awgn_sweep(args.format, grid, args.samples, args.seed, workers=args.workers)
    rows = [(r.snr_db, r.gmi, r.ngmi, r.stderr, args.seed, h) for r in results]
    header = ["snr_db", "gmi", "ngmi", "stderr_estimate", "seed", "config_hash"]
    if args.out:
        experiments.write_csv(Path(args.out), header, rows)
    else:
        lines = [",".join(header)] + [",".join(experiments._fmt(v) for v in r) for r in rows]
        sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_fiber_sim(args) -> int:
    paper = args.scale == "paper"
    wdm = paper_scale_wdm() if paper else desk_scale_wdm()
    link = paper_scale_link() if paper else desk_scale_link()
    pmd_values = {}
    if args.config:
        doc = load_config_file(args.config)
        wdm_kw = {k: v for k, v in doc.items() if k in _WDM_KEYS or k == "p_ch_dbm"}
        link_kw = {k: v for k, v in doc.items() if k in _LINK_KEYS}
        pmd_values = {k: v for k, v in doc.items() if k in {f.name for f in dataclasses.fields(PmdSpec)}}
        unknown = set(doc) - set(wdm_kw) - set(link_kw) - set(pmd_values) - {"format", "seed"}
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        wdm = dataclasses.replace(wdm, **wdm_kw)
        link = dataclasses.replace(link, **link_kw)
        args.format = args.format or doc.get("format")
        if args.seed is None and "seed" in doc:
            args.seed = doc["seed"]
    if args.p_ch_dbm is not None:
        wdm = dataclasses.replace(wdm, p_ch_dbm=args.p_ch_dbm)
    if args.spans is not None:
        link = dataclasses.replace(link, n_spans=args.spans)
    if args.pmd is not None:
        pmd_values["pmd_ps_sqrt_km"] = args.pmd
    seed = 1 if args.seed is None else args.seed
    fmt = args.format or "8D-2048PRS-T2"
    build_format(fmt)
    pmd = PmdSpec(**pmd_values) if pmd_values.get("pmd_ps_sqrt_km", 0) > 0 else None
    rec, f = transmit(wdm, link, pmd, fmt, seed)
    rx, tx = genie_receive(f, rec, link.n_spans)
    m = ngmi_from_rx(rx, tx, rec.channels[rec.center_index].bits, fmt)
    sys.stderr.write(f"{fmt}: {link.n_spans} spans, SNR_eff {m.snr_eff_db:.3f} dB, NGMI {m.ngmi:.4f}\n")
    if args.dump:
        dump_field(args.dump, f, {"tx_record": record_meta(rec)})
    return 0


def cmd_evaluate(args) -> int:
    f, meta = load_field(args.dump)
    rec = rebuild_record(meta["tx_record"])
    spans = rec.spans_done
    rx, tx = genie_receive(f, rec, spans, args.channel)
    idx = rec.center_index if args.channel is None else args.channel
    m = ngmi_from_rx(rx, tx, rec.channels[idx].bits, rec.format_name)
    header = ["distance_km", "p_ch_dbm", "format", "snr_eff_db", "gmi", "ngmi", "seed", "config_hash"]
    row = (spans * rec.link.span_length_km, rec.wdm.p_ch_dbm, rec.format_name, m.snr_eff_db, m.gmi_bits, m.ngmi, rec.seed, _hash(meta["tx_record"]))
    if args.out:
        experiments.write_csv(Path(args.out), header, [row])
    else:
        sys.stdout.write(",".join(header) + "\n" + ",".join(experiments._fmt(v) for v in row) + "\n")
    return 0


def cmd_table1(args) -> int:
    cfg = build_config("table1", args)
    rows, failures = experiments.run_table1(cfg, check=args.check)
    sys.stdout.write(metrics.report_text(rows) + "\n")
    for msg in failures:
        sys.stderr.write(f"out of tolerance: {msg}\n")
    return 1 if failures else 0


def cmd_fig3(args) -> int:
    cfg = build_config("fig3", args)
    res = experiments.run_fig3(cfg)
    for (fmt, t), s in sorted(res["required"].items()):
        sys.stdout.write(f"{fmt:<16} NGMI {t:<6} {s:7.3f} dB\n")
    sys.stdout.write(f"T1/T2 crossover: {res['crossover']}\n")
    return 0


def cmd_fig4(args) -> int:
    experiments.run_fig4(build_config("fig4", args))
    return 0


def cmd_fig5(args) -> int:
    _, avg = experiments.run_fig5(build_config("fig5", args))
    for r in avg:
        sys.stdout.write(f"{r[0]:<16} PMD {r[2]:5.3f}  SNR_eff {r[4]:7.3f} dB\n")
    return 0


def cmd_fig6(args) -> int:
    res = experiments.run_fig6(build_config("fig6", args))
    for fmt in res["reach"]:
        sys.stdout.write(f"{fmt:<16} reach {res['reach'][fmt]} spans simulated, {res['extrapolated'][fmt]:.1f} extrapolated\n")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prs8d", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, formats=True):
        sp.add_argument("--config", help="flat YAML key/value file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scale", choices=("desk", "paper"), default="desk")
        sp.add_argument("--out-dir", default="results")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--check", action="store_true", help="exit nonzero on reference mismatch")
        if formats:
            sp.add_argument("--formats", nargs="+")

    sp = sub.add_parser("constellation", help="write labeled points as CSV or JSON")
    sp.add_argument("--format", required=True)
    sp.add_argument("--out", help="output file (.csv or .json); stdout when omitted")
    sp.set_defaults(fn=cmd_constellation)

    sp = sub.add_parser("metrics", help="distance and polarization metrics report")
    sp.add_argument("--formats", nargs="+")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_metrics)

    sp = sub.add_parser("awgn-sweep", help="Monte Carlo GMI over an SNR grid")
    sp.add_argument("--format", required=True)
    sp.add_argument("--snr-start", type=float, default=5.0)
    sp.add_argument("--snr-stop", type=float, default=20.0)
    sp.add_argument("--snr-step", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=10**6)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_awgn_sweep)

    sp = sub.add_parser("fiber-sim", help="propagate one WDM configuration")
    sp.add_argument("--config")
    sp.add_argument("--format")
    sp.add_argument("--scale", choices=("desk", "paper"), default="desk")
    sp.add_argument("--spans", type=int)
    sp.add_argument("--p-ch-dbm", type=float)
    sp.add_argument("--pmd", type=float, help="PMD parameter in ps/sqrt(km)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--dump", help="binary field file; a .json sidecar holds the tx record")
    sp.set_defaults(fn=cmd_fiber_sim)

    sp = sub.add_parser("evaluate", help="genie receiver on a dumped field")
    sp.add_argument("--dump", required=True)
    sp.add_argument("--channel", type=int)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_evaluate)

    for name, fn, help_ in (
        ("table1", cmd_table1, "format metrics table"),
        ("fig3", cmd_fig3, "NGMI versus SNR on the AWGN channel"),
        ("fig4", cmd_fig4, "effective SNR versus distance"),
        ("fig5", cmd_fig5, "effective SNR versus PMD"),
        ("fig6", cmd_fig6, "NGMI versus distance and reach"),
    ):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        if name == "fig3":
            sp.add_argument("--samples", type=int)
        sp.set_defaults(fn=fn)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, ConstellationError) as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"prs8d: error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
