import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prs8d import air
from prs8d.constellations import LabeledConstellation, build_2a8psk, build_8d2048prs, build_pm8qam


def test_bpsk_llr_closed_form():
    c = air.bpsk()
    assert air.bit_llrs(c, [0.0], 0.5)[0] == pytest.approx(0.0, abs=1e-12)
    assert air.bit_llrs(c, [1.0], 0.5)[0] == pytest.approx(4.0, rel=1e-12)


def test_llr_signs_at_small_noise():
    c = build_pm8qam()
    llr = air.bit_llrs(c, c.points, 1e-4)
    np.testing.assert_array_equal(llr < 0, c.labels.astype(bool))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_llr_translation_invariance(y, t):
    c = build_2a8psk("5b")
    y, t = np.array(y), np.array(t)
    moved = LabeledConstellation("moved", c.points + t, c.labels)
    np.testing.assert_allclose(air.bit_llrs(moved, y + t, 0.1), air.bit_llrs(c, y, 0.1), atol=1e-8)


def test_8d_factorized_llrs_match_brute_force():
    rng = np.random.default_rng(3)
    for kind in ("T1", "T2"):
        c = build_8d2048prs(kind)
        y = c.points[rng.integers(0, c.M, 40)] + 0.3 * rng.standard_normal((40, 8))
        np.testing.assert_allclose(air.bit_llrs(c, y, 0.09), air.bit_llrs(c, y, 0.09, brute_force=True), rtol=1e-9, atol=1e-9)


def test_max_log_agrees_on_confident_bits():
    c = build_pm8qam()
    rng = np.random.default_rng(1)
    y = c.points[rng.integers(0, 64, 200)] + 0.3 * rng.standard_normal((200, 4))
    exact = air.bit_llrs(c, y, 0.09)
    approx = air.bit_llrs(c, y, 0.09, max_log=True)
    assert np.sign(exact[np.abs(exact) > 1]).tolist() == np.sign(approx[np.abs(exact) > 1]).tolist()


def test_qpsk_gmi_at_0db():
    assert air.gmi_quadrature(air.qpsk(), 0.0) == pytest.approx(0.971, abs=0.01)
    assert air.gmi_mc(air.qpsk(), 0.0, 2 * 10**5, 1).gmi == pytest.approx(0.971, abs=0.01)


def test_bpsk_quadrature_at_10db():
    assert air.gmi_quadrature(air.bpsk(), 10.0) == pytest.approx(0.9997, abs=1e-3)


def test_8psk_saturates():
    assert 3.0 - air.gmi_quadrature(air.psk8(), 40.0) < 1e-3


def test_high_snr_ngmi():
    for c in (build_pm8qam(), build_8d2048prs("T1")):
        assert air.gmi_mc(c, 40.0, 1 << 12, 1).ngmi >= 0.999


def test_gmi_mc_reproducible_across_workers():
    c = build_2a8psk("6b")
    a = air.gmi_mc(c, 9.0, 3 * air.CHUNK + 100, 5, workers=1)
    b = air.gmi_mc(c, 9.0, 3 * air.CHUNK + 100, 5, workers=2)
    assert a.gmi == b.gmi and a.stderr == b.stderr


def test_gmi_bounds_and_seed_spread():
    c = build_pm8qam()
    r = [air.gmi_mc(c, 10.0, 1 << 15, s) for s in (1, 2, 3)]
    for x in r:
        assert 0 <= x.ngmi <= 1 and x.gmi <= x.m
    spread = max(x.gmi for x in r) - min(x.gmi for x in r)
    assert spread < 2 * 3 * r[0].stderr


def test_gmi_monotone_in_snr():
    c = build_pm8qam()
    r = [air.gmi_mc(c, s, 1 << 17, 2) for s in np.arange(8.0, 11.01, 0.5)]
    for lo, hi in zip(r, r[1:]):
        assert hi.gmi > lo.gmi - 3 * math.hypot(hi.stderr, lo.stderr)


def test_hybrid_reports_per_slot_pair():
    from prs8d.constellations import build_tdh_5p5b

    r = air.gmi_mc(build_tdh_5p5b(), 10.0, 1 << 14, 1)
    assert r.m == 11 and r.n_slots == 2
    assert r.gmi_per_4d == pytest.approx(r.gmi / 2)


def test_invalid_snr():
    with pytest.raises(ValueError):
        air.gmi_mc(air.bpsk(), float("nan"), 100)


def test_required_snr_saturation_and_errors():
    c = build_pm8qam()
    s = air.required_snr(c, 0.999, n_samples=1 << 14, bracket=(5.0, 40.0))
    assert s < 40.0
    with pytest.raises(ValueError):
        air.required_snr(c, 0.999, n_samples=1 << 12, bracket=(-5.0, 0.0))
    with pytest.raises(ValueError):
        air.required_snr(c, 1.2)


def test_required_snr_monotone_in_target():
    c = air.qpsk()
    a = air.required_snr(c, 0.8, n_samples=1 << 15)
    b = air.required_snr(c, 0.9, n_samples=1 << 15)
    assert b > a


def test_crossover_point():
    grid = [0.0, 1.0, 2.0, 3.0]
    assert air.crossover_point(grid, [0.1, 0.2, 0.5, 0.9], [0.2, 0.3, 0.4, 0.5]) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        air.crossover_point(grid, [0.1, 0.2, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4])


def test_snr_eff_conversion():
    assert air.es_n0_to_snr_eff_db(10.0) == pytest.approx(10 - 10 * math.log10(2))


def test_prs_objective_phase_invariant():
    from prs8d.constellations import build_4d64prs

    c = build_4d64prs()
    ph = np.exp(0.7j)
    z = c.complex_points() * ph
    rot = LabeledConstellation("rot", np.stack([z[:, 0].real, z[:, 0].imag, z[:, 1].real, z[:, 1].imag], 1), c.labels)
    a = air.gmi_mc(c, 11.0, 1 << 15, 4).gmi
    b = air.gmi_mc(rot, 11.0, 1 << 15, 4).gmi
    assert abs(a - b) < 3 * math.sqrt(2) * air.gmi_mc(c, 11.0, 1 << 15, 4).stderr


def test_quadrature_moments_match_sample_variance():
    c = air.qpsk()
    g, var = air.gmi_quadrature_moments(c, 2.0)
    assert g == air.gmi_quadrature(c, 2.0)
    r = air.gmi_mc(c, 2.0, 2 * 10**5, 5)
    sd = math.sqrt(var / 2e5)
    assert abs(r.gmi - g) < 4 * sd
    assert r.stderr == pytest.approx(sd, rel=0.1)
