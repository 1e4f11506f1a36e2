"""Genie-aided receiver: channel selection, linear inversion, matched filter,
phase recovery and performance metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .air import bit_losses, bit_llrs
from .config import FiberLinkSpec
from .constellations import LabeledConstellation, build_format
from .fiber import DualPolField, PmdSection, angular_frequencies, rrc_response

SNR_CEILING_DB = 60.0


@dataclass(frozen=True)
class RxMetrics:
    snr_eff_db: float
    ngmi: float
    gmi_bits: float
    n_symbols_used: int


def extract_channel(f: DualPolField, bin_shifts: Sequence[int], index: int, symbol_rate_hz: float, rolloff: float) -> DualPolField:
    """Shift channel ``index`` to baseband and keep its occupied band."""
    if not 0 <= index < len(bin_shifts):
        raise IndexError(f"channel index {index} outside the {len(bin_shifts)}-channel grid")
    spec = np.roll(np.fft.fft(f.samples, axis=1), -bin_shifts[index], axis=1)
    freq = np.fft.fftfreq(f.n, 1 / f.sample_rate_hz)
    spec[:, np.abs(freq) > (1 + rolloff) * symbol_rate_hz / 2 * (1 + 1e-9)] = 0
    return DualPolField(np.fft.ifft(spec, axis=1), f.sample_rate_hz)


def ideal_linear_compensation(
    f: DualPolField,
    link: FiberLinkSpec,
    n_spans: int,
    sections: Sequence[PmdSection] = (),
    expected_sections: Optional[int] = None,
) -> DualPolField:
    """Invert the accumulated dispersion and the given PMD sections exactly.

    ``sections`` must be the realized sections passed so far, in propagation
    order; ``expected_sections`` guards against a mismatched realization.
    """
    sections = list(sections)
    if expected_sections is not None and len(sections) != expected_sections:
        raise ValueError(f"PMD realization has {len(sections)} sections, expected {expected_sections}")
    omega = angular_frequencies(f.n, f.sample_rate_hz)
    length = link.span_length_km * n_spans
    spec = np.fft.fft(f.samples, axis=1) * np.exp(-0.5j * link.beta2_s2_per_km * omega**2 * length)
    for sec in reversed(sections):
        ph = np.exp(-0.5j * omega * sec.dgd_s)
        x, y = spec[0] * ph, spec[1] * np.conj(ph)
        rh = sec.rotation.conj().T
        spec = np.stack([rh[0, 0] * x + rh[0, 1] * y, rh[1, 0] * x + rh[1, 1] * y])
    return DualPolField(np.fft.ifft(spec, axis=1), f.sample_rate_hz)


def matched_filter_downsample(f: DualPolField, sps: int, rolloff: float, scale: float = 1.0) -> np.ndarray:
    """RRC matched filter and decimation; returns ``(n_sym, 2)`` complex symbols.

    ``scale`` is the amplitude factor applied at the transmitter (shaping
    normalization times launch amplitude), so a back-to-back link returns the
    transmitted symbols.
    """
    out = np.fft.ifft(np.fft.fft(f.samples, axis=1) * rrc_response(f.n, sps, rolloff), axis=1)
    return (out[:, ::sps] * (sps / scale)).T


def ideal_phase_compensation(rx: np.ndarray, tx: np.ndarray) -> np.ndarray:
    """Remove one data-aided phase rotation per polarization."""
    rx = np.asarray(rx, dtype=complex)
    tx = np.asarray(tx, dtype=complex)
    corr = (rx * np.conj(tx)).sum(axis=0)
    if np.any(np.abs(corr) == 0):
        raise ValueError("zero correlation between received and transmitted symbols")
    return rx * np.exp(-1j * np.angle(corr))


def _ls_scale(rx: np.ndarray, tx: np.ndarray, per_pol: bool):
    if per_pol:
        den = (np.abs(tx) ** 2).sum(axis=0)
        if np.any(den == 0):
            raise ValueError("degenerate transmitted energy")
        return (rx * np.conj(tx)).sum(axis=0) / den
    den = float((np.abs(tx) ** 2).sum())
    if den == 0:
        raise ValueError("degenerate transmitted energy")
    return complex((rx * np.conj(tx)).sum()) / den


def effective_snr(rx: np.ndarray, tx: np.ndarray, per_pol: bool = False, ceiling_db: float = SNR_CEILING_DB) -> float:
    """Signal-to-distortion ratio (dB) after a least-squares complex scaling.

    Both quantities are total energies over both polarizations of a 4D slot.
    """
    rx = np.asarray(rx, dtype=complex)
    tx = np.asarray(tx, dtype=complex)
    a = _ls_scale(rx, tx, per_pol)
    err = float((np.abs(rx - a * tx) ** 2).sum())
    sig = float((np.abs(a * tx) ** 2).sum())
    if err <= sig * 10 ** (-ceiling_db / 10):
        return ceiling_db
    return 10 * math.log10(sig / err)


def _to_points(sym: np.ndarray) -> np.ndarray:
    return np.stack([sym[:, 0].real, sym[:, 0].imag, sym[:, 1].real, sym[:, 1].imag], axis=1)


def _gmi_sum(c: LabeledConstellation, y: np.ndarray, bits: np.ndarray, noise_var: float) -> float:
    loss = 0.0
    for start in range(0, len(y), 1 << 14):
        llr = bit_llrs(c, y[start : start + (1 << 14)], noise_var)
        loss += float(bit_losses(llr, bits[start : start + (1 << 14)]).sum())
    return loss


def ngmi_from_rx(rx: np.ndarray, tx: np.ndarray, tx_bits: np.ndarray, fmt) -> RxMetrics:
    """NGMI of received slots under a circular Gaussian auxiliary channel.

    The received symbols are rescaled by the least-squares gain; the noise
    variance per real dimension follows from the effective SNR and the mean
    transmitted 4D energy. 8D formats are demapped per slot pair, the hybrid
    per member.
    """
    c = build_format(fmt) if isinstance(fmt, str) else fmt
    rx = np.asarray(rx, dtype=complex)
    tx = np.asarray(tx, dtype=complex)
    snr_db = effective_snr(rx, tx)
    a = _ls_scale(rx, tx, False)
    y = rx / a
    es = float((np.abs(tx) ** 2).sum(1).mean())
    noise_var = es / (4 * 10 ** (snr_db / 10))
    pts = _to_points(y)
    n = len(pts)
    if isinstance(c, tuple):
        c5, c6 = c
        loss = _gmi_sum(c5, pts[0::2], tx_bits[:, : c5.m], noise_var)
        loss += _gmi_sum(c6, pts[1::2], tx_bits[:, c5.m :], noise_var)
        m = c5.m + c6.m
        blocks = n // 2
    elif c.N == 8:
        loss = _gmi_sum(c, pts.reshape(-1, 8), tx_bits, noise_var)
        m = c.m
        blocks = n // 2
    else:
        loss = _gmi_sum(c, pts, tx_bits, noise_var)
        m = c.m
        blocks = n
    gmi = min(max(m - loss / blocks, 0.0), float(m))
    return RxMetrics(snr_db, gmi / m, gmi, n)


def reach_sweep(ngmi_table: dict, ngmi_target: float) -> dict:
    """Reach in spans from NGMI values keyed ``(format, spans, p_ch_dbm)``.

    For every distance the best launch power is used; the reach is the
    largest span count up to which the best NGMI never falls below the
    target (0 if the first point already misses it).
    """
    best: dict = {}
    for (fmt, spans, _p), v in ngmi_table.items():
        best.setdefault(fmt, {})
        best[fmt][spans] = max(best[fmt].get(spans, -np.inf), v)
    out = {}
    for fmt, curve in best.items():
        reach = 0
        for spans in sorted(curve):
            if curve[spans] < ngmi_target:
                break
            reach = spans
        out[fmt] = reach
    return out


def reach_from_snr_trend(spans: Sequence[int], snr_eff_db: Sequence[float], required_snr_eff_db: float, fit_from: int = 0) -> float:
    """Span count where a power-law fit of SNR_eff(spans) meets a requirement.

    Fits ``SNR_eff = A * spans**-k`` on ``spans[fit_from:]`` (least squares in
    dB versus log spans) and solves for the required SNR. Used when the
    simulated distances end before the target NGMI is reached.
    """
    s = np.asarray(spans, float)[fit_from:]
    v = np.asarray(snr_eff_db, float)[fit_from:]
    if len(s) < 2:
        raise ValueError("need at least two distances for the fit")
    slope, icpt = np.polyfit(np.log10(s), v, 1)
    if slope >= 0:
        return math.inf
    return float(10 ** ((required_snr_eff_db - icpt) / slope))


def genie_receive(f: DualPolField, rec, n_spans: int, channel: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Received and transmitted symbols of one channel after ``n_spans``.

    Applies the exact inverse of dispersion and of the PMD sections realized
    so far, selects the channel, matched-filters and removes the mean phase
    per polarization. Defaults to the center channel.
    """
    idx = rec.center_index if channel is None else channel
    n_sec = 0
    if rec.sections:
        n_sec = int(round(n_spans * rec.link.span_length_km / rec.pmd.section_km))
    comp = ideal_linear_compensation(f, rec.link, n_spans, rec.sections[:n_sec], n_sec)
    wdm = rec.wdm
    ch = extract_channel(comp, rec.bin_shifts, idx, wdm.symbol_rate_hz, wdm.rolloff)
    tx = rec.channels[idx]
    rx = matched_filter_downsample(ch, wdm.samples_per_symbol, wdm.rolloff, tx.shaping_scale * math.sqrt(rec.p_ch_w))
    return ideal_phase_compensation(rx, tx.symbols), tx.symbols
