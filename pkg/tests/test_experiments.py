import dataclasses
import warnings

import pytest

from prs8d import experiments
from prs8d.config import ExperimentConfig, FiberLinkSpec, WdmSpec

TINY_WDM = WdmSpec(n_channels=3, n_symbols=2**10, samples_per_symbol=8)
TINY_LINK = FiberLinkSpec(span_length_km=80, n_spans=2, step_km=16)


def _tiny(kind, out_dir, workers, **kw):
    base = dict(
        formats=("PM-8QAM", "8D-2048PRS-T2"),
        wdm=TINY_WDM,
        link=TINY_LINK,
        spans=(1, 2),
        seeds=(1, 2),
        n_samples=4096,
        n_realizations=2,
        out_dir=str(out_dir),
        workers=workers,
    )
    base.update(kw)
    return experiments.preset(kind, "desk", **base)


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".csv", ".json")}


@pytest.mark.parametrize(
    "kind,extra",
    [
        ("fig3", dict(snr_db=(8.0, 10.0, 12.0))),
        ("fig4", {}),
        ("fig5", dict(pmd_ps_sqrt_km=(0.0, 0.1), spans=(2,))),
        ("fig6", dict(p_ch_dbm=(0.0, 2.0))),
    ],
)
def test_outputs_independent_of_worker_count(tmp_path, kind, extra):
    for w in (1, 2):
        cfg = _tiny(kind, tmp_path / f"w{w}", w, **extra)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            experiments.RECIPES[kind](cfg)
    a, b = _files(tmp_path / "w1"), _files(tmp_path / "w2")
    assert a.keys() == b.keys() and a
    assert a == b
    assert not list((tmp_path / "w1").glob("*.partial.jsonl"))


def test_config_hash_ignores_plumbing():
    a = ExperimentConfig(workers=1, out_dir="x")
    b = ExperimentConfig(workers=4, out_dir="y")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seeds=(2,)).config_hash()


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(snr_db=())
    with pytest.raises(ValueError):
        ExperimentConfig(spans=(3, 1))
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=())


def test_presets_encode_both_scales():
    desk = experiments.preset("fig6", "desk")
    paper = experiments.preset("fig6", "paper")
    assert (desk.wdm.n_channels, desk.wdm.n_symbols, desk.link.step_km, max(desk.spans)) == (3, 2**14, 0.5, 20)
    assert (paper.wdm.n_channels, paper.link.step_km, max(paper.spans) * paper.link.span_length_km) == (11, 0.1, 8000)
    assert experiments.preset("fig5", "paper").n_realizations == 50
    assert experiments.preset("fig5", "desk").n_realizations <= 5
    with pytest.raises(ValueError):
        experiments.preset("fig9")


def test_paper_scale_warns():
    cfg = experiments.preset("fig4", "paper")
    with pytest.warns(RuntimeWarning, match="CPU hours"):
        experiments.warn_if_paper_scale(cfg, 4)


def test_fig5_mean_rows(tmp_path):
    cfg = _tiny("fig5", tmp_path, 1, pmd_ps_sqrt_km=(0.0, 0.1), spans=(2,), formats=("PM-8QAM",), seeds=(1,))
    rows, avg = experiments.run_fig5(cfg)
    assert len(rows) == 1 + 2
    assert [r[3] for r in avg] == [1, 2]
