"""Dual-polarization WDM transmission over amplified SSMF spans.

All fields live on one periodic time grid whose length is a power of two.
Field samples are in sqrt(W); frequency-domain operators use numpy's FFT
convention, so a sample spacing ``dt`` maps to angular frequencies
``2 pi fftfreq(n, dt)``.

The split-step solver integrates

    dA/dz = -alpha/2 A - j beta2/2 d2A/dt2 + j (8/9) gamma |A|^2 A

for the Jones vector ``A = (Ax, Ay)`` with symmetric steps. PMD is emulated
with fixed-length sections, each a random rotation followed by a
differential group delay.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import unitary_group

from .config import PLANCK, FiberLinkSpec, PmdSpec, WdmSpec
from .constellations import LabeledConstellation, build_format, int_to_bits

# mean of a Maxwellian DGD relative to its rms value
_MAXWELL_MEAN_OVER_RMS = math.sqrt(8 / (3 * math.pi))


class PropagationError(RuntimeError):
    pass


@dataclass
class DualPolField:
    """Jones-vector samples ``(2, n)`` at ``sample_rate_hz``."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 2 or s.shape[0] != 2:
            raise ValueError("field samples must have shape (2, n)")
        self.samples = s

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def power(self) -> float:
        """Average total power over both polarizations."""
        return float((np.abs(self.samples) ** 2).sum(0).mean())

    def energy(self) -> float:
        return float((np.abs(self.samples) ** 2).sum())

    def copy(self) -> "DualPolField":
        return DualPolField(self.samples.copy(), self.sample_rate_hz)


def angular_frequencies(n: int, sample_rate_hz: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n, 1 / sample_rate_hz)


def _require_pow2(n: int):
    if n < 2 or n & (n - 1):
        raise ValueError(f"block length {n} is not a power of two")


# ---------------------------------------------------------------------------
# Pulse shaping


def rrc_response(n: int, sps: int, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude response on the FFT grid of ``n`` samples.

    Frequencies are in units of the symbol rate; the response is 1 at DC.
    """
    f = np.abs(np.fft.fftfreq(n, 1 / sps))
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    h = np.zeros(n)
    h[f <= lo] = 1.0
    band = (f > lo) & (f < hi)
    h[band] = 0.5 * (1 + np.cos(np.pi / rolloff * (f[band] - lo)))
    return np.sqrt(h)


def rrc_shape(symbols: np.ndarray, sps: int, rolloff: float, sample_rate_hz: Optional[float] = None) -> tuple[DualPolField, float]:
    """RRC-shape a ``(n_sym, 2)`` complex symbol sequence with circular filtering.

    Returns the field normalized to unit average power and the factor the
    unnormalized matched-filter output must be divided by (see
    :func:`prs8d.rx.matched_filter_downsample`).
    """
    if sps < 2:
        raise ValueError("need at least 2 samples per symbol")
    if not 0 < rolloff <= 1:
        raise ValueError("rolloff must lie in (0, 1]")
    sym = np.asarray(symbols, dtype=complex)
    n = sym.shape[0] * sps
    _require_pow2(n)
    up = np.zeros((2, n), dtype=complex)
    up[:, ::sps] = sym.T
    out = np.fft.ifft(np.fft.fft(up, axis=1) * rrc_response(n, sps, rolloff), axis=1)
    scale = 1 / math.sqrt((np.abs(out) ** 2).sum(0).mean())
    fs = sample_rate_hz if sample_rate_hz is not None else float(sps)
    return DualPolField(out * scale, fs), scale


# ---------------------------------------------------------------------------
# WDM


def channel_bin_shift(offset_hz: float, n: int, sample_rate_hz: float) -> int:
    """Channel offset rounded to the FFT grid, so shifts stay periodic."""
    return int(round(offset_hz * n / sample_rate_hz))


def wdm_mux(channels: Sequence[DualPolField], offsets_hz: Sequence[float], p_ch_w: float, occupied_bw_hz: float) -> DualPolField:
    """Scale each channel to ``p_ch_w`` and place it at its offset.

    Offsets are applied as whole FFT-bin rotations of the spectrum.
    """
    if len(channels) != len(offsets_hz) or not channels:
        raise ValueError("need one offset per channel")
    fs = channels[0].sample_rate_hz
    n = channels[0].n
    total = np.zeros((2, n), dtype=complex)
    for ch, off in zip(channels, offsets_hz):
        if ch.n != n or ch.sample_rate_hz != fs:
            raise ValueError("channels must share the sample grid")
        if abs(off) + occupied_bw_hz / 2 > fs / 2 + 1e-6:
            raise ValueError(f"channel at {off:.3g} Hz aliases at sample rate {fs:.3g} Hz")
        spec = np.fft.fft(ch.samples * math.sqrt(p_ch_w / ch.power()), axis=1)
        total += np.roll(spec, channel_bin_shift(off, n, fs), axis=1)
    return DualPolField(np.fft.ifft(total, axis=1), fs)


# ---------------------------------------------------------------------------
# PMD


@dataclass
class PmdSection:
    rotation: np.ndarray  # 2x2 unitary
    dgd_s: float

    def jones(self, omega: np.ndarray) -> np.ndarray:
        """Frequency-domain Jones matrices, shape (len(omega), 2, 2)."""
        ph = np.exp(0.5j * omega * self.dgd_s)
        d = np.zeros((len(omega), 2, 2), dtype=complex)
        d[:, 0, 0] = ph
        d[:, 1, 1] = np.conj(ph)
        return d @ self.rotation


def mean_section_dgd_s(pmd: PmdSpec) -> float:
    """Per-section mean DGD giving link mean DGD ``pmd * sqrt(L)``."""
    rms_link_per_sqrt_km = pmd.pmd_ps_sqrt_km / _MAXWELL_MEAN_OVER_RMS
    return 1e-12 * rms_link_per_sqrt_km * math.sqrt(pmd.section_km) / math.sqrt(1 + pmd.dgd_rel_std**2)


def pmd_sections(pmd: PmdSpec, n_sections: int, seed: int) -> list[PmdSection]:
    """Random PMD sections: Haar rotation then Gaussian DGD (negatives clipped)."""
    if n_sections <= 0:
        return []
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x504D44])))
    if pmd.pmd_ps_sqrt_km == 0:
        eye = np.eye(2, dtype=complex)
        return [PmdSection(eye.copy(), 0.0) for _ in range(n_sections)]
    tau = mean_section_dgd_s(pmd)
    rots = unitary_group.rvs(2, size=max(n_sections, 2), random_state=rng)[:n_sections]
    dgd = np.maximum(rng.normal(tau, pmd.dgd_rel_std * tau, size=n_sections), 0.0)
    return [PmdSection(r, float(t)) for r, t in zip(rots, dgd)]


# v^H P_k v gives the Stokes components of metrics.stokes
_PAULI = np.array([[[1, 0], [0, -1]], [[0, 1], [1, 0]], [[0, 1j], [-1j, 0]]])


def stokes_rotation(u: np.ndarray) -> np.ndarray:
    """3x3 Stokes-space rotation of Jones matrix ``u`` (same axes as metrics.stokes).

    Accepts a stack ``(..., 2, 2)`` and returns ``(..., 3, 3)``.
    """
    u = np.asarray(u, dtype=complex)
    uh = np.conj(np.swapaxes(u, -1, -2))
    # R_ij = tr(P_i U P_j U^H) / 2
    return 0.5 * np.einsum("iab,...bc,jcd,...da->...ij", _PAULI, u, _PAULI, uh).real


def chain_dgd_s(sections: Sequence[PmdSection]) -> float:
    """DGD of a section chain from the concatenation rule of PMD vectors."""
    if not sections:
        return 0.0
    rot = stokes_rotation(np.array([s.rotation for s in sections]))
    omega_vec = np.zeros(3)
    for s, r in zip(sections, rot):
        omega_vec = r @ omega_vec
        omega_vec[0] += s.dgd_s
    return float(np.linalg.norm(omega_vec))


# ---------------------------------------------------------------------------
# Split-step propagation


@dataclass
class LinkState:
    """Propagation bookkeeping kept across spans."""

    distance_km: float = 0.0
    next_section: int = 0


def _linear_operator(omega: np.ndarray, link: FiberLinkSpec, length_km: float) -> np.ndarray:
    a = link.alpha_per_km
    return np.exp((-a / 2 + 0.5j * link.beta2_s2_per_km * omega**2) * length_km)


def _apply_pmd(spec: np.ndarray, sec: PmdSection, omega: np.ndarray) -> np.ndarray:
    r = sec.rotation
    x = r[0, 0] * spec[0] + r[0, 1] * spec[1]
    y = r[1, 0] * spec[0] + r[1, 1] * spec[1]
    ph = np.exp(0.5j * omega * sec.dgd_s)
    return np.stack([x * ph, y * np.conj(ph)])


def ssfm_span(
    f: DualPolField,
    link: FiberLinkSpec,
    sections: Optional[Sequence[PmdSection]] = None,
    section_km: float = 1.0,
    state: Optional[LinkState] = None,
    span_index: int = 0,
) -> DualPolField:
    """Propagate one span with the symmetric split-step Fourier method.

    PMD sections (if any) are applied at every multiple of ``section_km``
    along the link; ``state`` carries the position and section counter
    between spans. Dispersion is scalar in frequency, so applying a section
    anywhere in the linear sub-step of its boundary is exact.
    """
    state = state if state is not None else LinkState()
    h = link.step_km
    omega = angular_frequencies(f.n, f.sample_rate_hz)
    half = _linear_operator(omega, link, h / 2)
    full = half * half
    a = link.alpha_per_km
    h_eff = 2 * math.sinh(a * h / 2) / a if a > 0 else h
    k_nl = 8 / 9 * link.gamma_per_w_km * h_eff
    spec = np.fft.fft(f.samples, axis=1) * half
    n_steps = link.steps_per_span
    for k in range(n_steps):
        t = np.fft.ifft(spec, axis=1)
        if k_nl != 0:
            t = t * np.exp(1j * k_nl * (np.abs(t) ** 2).sum(0))
        spec = np.fft.fft(t, axis=1)
        spec = spec * (full if k < n_steps - 1 else half)
        state.distance_km += h
        if sections is not None:
            while (
                state.next_section < len(sections)
                and (state.next_section + 1) * section_km <= state.distance_km + 1e-9
            ):
                spec = _apply_pmd(spec, sections[state.next_section], omega)
                state.next_section += 1
    out = np.fft.ifft(spec, axis=1)
    if not np.all(np.isfinite(out)):
        raise PropagationError(f"non-finite field after span {span_index}")
    return DualPolField(out, f.sample_rate_hz)


def ase_psd_w_per_hz(gain_db: float, nf_db: float, center_frequency_hz: float) -> float:
    """ASE power spectral density per polarization."""
    g = 10 ** (gain_db / 10)
    n_sp = 10 ** (nf_db / 10) / 2
    return (g - 1) * PLANCK * center_frequency_hz * n_sp


def edfa(f: DualPolField, gain_db: float, nf_db: float, seed, center_frequency_hz: float = 193.41e12) -> DualPolField:
    """Amplify by ``gain_db`` and add white circular Gaussian ASE in both polarizations."""
    g = 10 ** (gain_db / 10)
    out = f.samples * math.sqrt(g)
    var = ase_psd_w_per_hz(gain_db, nf_db, center_frequency_hz) * f.sample_rate_hz
    if var > 0:
        seq = np.random.SeedSequence(list(np.atleast_1d(seed)))
        rng = np.random.Generator(np.random.Philox(seq))
        noise = rng.standard_normal((2, 2, f.n))
        out = out + math.sqrt(var / 2) * (noise[0] + 1j * noise[1])
    return DualPolField(out, f.sample_rate_hz)


# ---------------------------------------------------------------------------
# Transmitter and full system


@dataclass
class ChannelTx:
    """Transmitted data of one WDM channel."""

    bits: np.ndarray  # (n_blocks, bits per block)
    symbols: np.ndarray  # (n_symbols, 2) complex, unit energy per polarization
    shaping_scale: float


@dataclass
class TxRecord:
    format_name: str
    wdm: WdmSpec
    link: FiberLinkSpec
    pmd: Optional[PmdSpec]
    seed: int
    channels: list[ChannelTx]
    bin_shifts: list[int]
    sections: list[PmdSection] = field(default_factory=list)
    p_ch_w: float = 0.0
    spans_done: int = 0

    @property
    def center_index(self) -> int:
        return (self.wdm.n_channels - 1) // 2


def modulate(fmt, n_symbols: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random bits and the matching ``(n_symbols, 2)`` complex symbol sequence.

    8D formats take 11 bits per pair of slots; the 5.5b hybrid takes 5 bits on
    even slots and 6 bits on odd slots, packed per slot pair.
    """
    c = build_format(fmt) if isinstance(fmt, str) else fmt
    if isinstance(c, tuple):
        if n_symbols % 2:
            raise ValueError("the hybrid format needs an even number of slots")
        c5, c6 = c
        nb = n_symbols // 2
        i5 = rng.integers(0, c5.M, nb)
        i6 = rng.integers(0, c6.M, nb)
        bits = np.concatenate([c5.labels[i5], c6.labels[i6]], axis=1)
        pts = np.empty((n_symbols, 4))
        pts[0::2] = c5.points[i5]
        pts[1::2] = c6.points[i6]
    elif c.N == 8:
        if n_symbols % 2:
            raise ValueError("8D formats need an even number of slots")
        idx = rng.integers(0, c.M, n_symbols // 2)
        bits = c.labels[idx]
        pts = c.points[idx].reshape(n_symbols, 4)
    else:
        idx = rng.integers(0, c.M, n_symbols)
        bits = c.labels[idx]
        pts = c.points[idx]
    sym = np.stack([pts[:, 0] + 1j * pts[:, 1], pts[:, 2] + 1j * pts[:, 3]], axis=1)
    return bits.astype(np.uint8), sym


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *keys])))


def build_transmitter(
    fmt: str,
    wdm: WdmSpec,
    link: FiberLinkSpec,
    pmd: Optional[PmdSpec],
    seed: int,
    pmd_section_km: Optional[float] = None,
) -> tuple[TxRecord, DualPolField]:
    fs = wdm.sample_rate_hz
    channels, fields = [], []
    for k in range(wdm.n_channels):
        bits, sym = modulate(fmt, wdm.n_symbols, _stream(seed, 1, k))
        fch, scale = rrc_shape(sym, wdm.samples_per_symbol, wdm.rolloff, fs)
        channels.append(ChannelTx(bits, sym, scale))
        fields.append(fch)
    offsets = wdm.channel_offsets_hz()
    n = wdm.n_symbols * wdm.samples_per_symbol
    shifts = [channel_bin_shift(o, n, fs) for o in offsets]
    tx = wdm_mux(fields, offsets, wdm.p_ch_w, wdm.symbol_rate_hz * (1 + wdm.rolloff))
    sections: list[PmdSection] = []
    if pmd is not None and pmd.pmd_ps_sqrt_km > 0:
        total_km = link.span_length_km * link.n_spans
        sections = pmd_sections(pmd, int(round(total_km / pmd.section_km)), pmd.seed)
    rec = TxRecord(fmt, wdm, link, pmd, seed, channels, shifts, sections, wdm.p_ch_w)
    return rec, tx


def transmit(
    wdm: WdmSpec,
    link: FiberLinkSpec,
    pmd: Optional[PmdSpec],
    fmt: str,
    seed: int,
    on_span: Optional[Callable[[int, DualPolField, TxRecord], None]] = None,
    ase: bool = True,
) -> tuple[TxRecord, DualPolField]:
    """Generate, launch and propagate a WDM signal over ``link.n_spans`` spans.

    ``on_span(k, field, record)`` is called after the amplifier of every span
    ``k = 1..n_spans``, which lets one propagation serve all distances.
    """
    rec, f = build_transmitter(fmt, wdm, link, pmd, seed)
    state = LinkState()
    section_km = pmd.section_km if pmd is not None else 1.0
    for span in range(1, link.n_spans + 1):
        f = ssfm_span(f, link, rec.sections or None, section_km, state, span)
        nf = link.edfa_nf_db if ase else -np.inf
        if ase:
            f = edfa(f, link.span_loss_db, nf, [seed, 2, span], link.center_frequency_hz)
        else:
            f = DualPolField(f.samples * 10 ** (link.span_loss_db / 20), f.sample_rate_hz)
        rec.spans_done = span
        if on_span is not None:
            on_span(span, f, rec)
    return rec, f


# ---------------------------------------------------------------------------
# Binary interchange


def dump_field(path, f: DualPolField, meta: dict) -> tuple[Path, Path]:
    """Write interleaved little-endian float64 ``xRe, xIm, yRe, yIm`` plus a JSON sidecar."""
    path = Path(path)
    arr = np.empty((f.n, 4), dtype="<f8")
    arr[:, 0], arr[:, 1] = f.samples[0].real, f.samples[0].imag
    arr[:, 2], arr[:, 3] = f.samples[1].real, f.samples[1].imag
    path.write_bytes(arr.tobytes())
    side = path.with_suffix(path.suffix + ".json")
    doc = dict(meta, sample_rate_hz=f.sample_rate_hz, n_samples=f.n, layout="xRe,xIm,yRe,yIm", dtype="<f8")
    side.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path, side


def load_field(path) -> tuple[DualPolField, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    arr = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(-1, 4)
    samples = np.stack([arr[:, 0] + 1j * arr[:, 1], arr[:, 2] + 1j * arr[:, 3]])
    return DualPolField(samples, meta["sample_rate_hz"]), meta


def record_meta(rec: TxRecord) -> dict:
    """JSON-serializable description that regenerates ``rec`` exactly."""
    return {
        "format": rec.format_name,
        "seed": rec.seed,
        "spans_done": rec.spans_done,
        "wdm": dataclasses.asdict(rec.wdm),
        "link": dataclasses.asdict(rec.link),
        "pmd": None if rec.pmd is None else dataclasses.asdict(rec.pmd),
    }


def rebuild_record(meta: dict) -> TxRecord:
    """Inverse of :func:`record_meta`: rerun the seeded transmitter."""
    wdm = WdmSpec(**meta["wdm"])
    link = FiberLinkSpec(**meta["link"])
    pmd = None if meta.get("pmd") is None else PmdSpec(**meta["pmd"])
    rec, _ = build_transmitter(meta["format"], wdm, link, pmd, int(meta["seed"]))
    rec.spans_done = int(meta["spans_done"])
    return rec
