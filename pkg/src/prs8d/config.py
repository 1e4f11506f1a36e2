"""Parameter containers and presets shared by the workbench modules.

Physical quantities carry their unit in the field name. Everything is a
frozen dataclass so configs can be hashed and reused as cache keys.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

# Average energy per polarization (per complex dimension); a 4D slot carries 2.
ENERGY_PER_POL = 1.0
ENERGY_PER_4D = 2.0 * ENERGY_PER_POL

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0


@dataclass(frozen=True)
class PrsParams:
    """Ring coordinates of 4D-64PRS.

    Outer-ring points are ``±nu1±j nu3`` and ``±nu3±j nu1`` (radius R1),
    inner-ring points ``nu2(±1±j)`` (radius R2).
    """

    nu1: float
    nu2: float
    nu3: float

    def __post_init__(self):
        if self.nu1 < 0 or self.nu3 < 0 or self.nu2 <= 0:
            raise ValueError(f"invalid PRS coordinates {self}")

    @property
    def r1_sq(self) -> float:
        return self.nu1**2 + self.nu3**2

    @property
    def r2_sq(self) -> float:
        return 2.0 * self.nu2**2

    def normalized(self, energy: float = ENERGY_PER_4D) -> "PrsParams":
        k = math.sqrt(energy / (self.r1_sq + self.r2_sq))
        return PrsParams(self.nu1 * k, self.nu2 * k, self.nu3 * k)

    @classmethod
    def from_polar(cls, r1: float, theta: float, energy: float = ENERGY_PER_4D) -> "PrsParams":
        """Build from outer radius ``r1`` and the outer-point angle ``theta`` (rad)."""
        r2_sq = energy - r1**2
        if r2_sq <= 0:
            raise ValueError("outer radius leaves no energy for the inner ring")
        return cls(r1 * math.cos(theta), math.sqrt(r2_sq / 2.0), r1 * math.sin(theta))


# Coordinates for the 4D format and the T1 subset built on it. The GMI of
# 4D-64PRS near Es/N0 = 11.4 dB is flat along a ridge in (R1, theta) (see
# air.optimize_prs_params); this ridge point is within 5e-4 NGMI of the
# estimated optimum and was picked for its distance and DOP values.
PRS_4D64_DEFAULT = PrsParams.from_polar(1.235, math.radians(19.2))
# T2 keeps its own ring geometry: normalized R1*R2 = 0.87 fixes its maximum
# DOP, and 21 degrees maximizes its GMI near NGMI 0.85.
PRS_T2_DEFAULT = PrsParams.from_polar(math.sqrt(1.0 + math.sqrt(1.0 - 0.87**2)), math.radians(21.0))

# Inner/outer ring-radius ratios of the two 2A8PSK members. The 5b value
# maximizes GMI at 11.1 dB; for 6b the GMI is flat over 0.64-0.70 and 0.65 is
# used.
RING_RATIO_6B = 0.65
RING_RATIO_5B = 0.52


@dataclass(frozen=True)
class WdmSpec:
    n_channels: int = 11
    symbol_rate_hz: float = 45e9
    spacing_hz: float = 50e9
    rolloff: float = 0.1
    p_ch_dbm: float = 0.0
    n_symbols: int = 2**16
    samples_per_symbol: int = 16

    def __post_init__(self):
        if self.spacing_hz < self.symbol_rate_hz * (1 + self.rolloff) - 1e-6:
            raise ValueError("channel spacing smaller than occupied bandwidth")
        if self.n_channels < 1:
            raise ValueError("need at least one channel")
        band = (self.n_channels - 1) * self.spacing_hz + self.symbol_rate_hz * (1 + self.rolloff)
        if band > self.sample_rate_hz:
            raise ValueError(
                f"sampling rate {self.sample_rate_hz:.3g} Hz does not cover WDM band {band:.3g} Hz"
            )

    @property
    def sample_rate_hz(self) -> float:
        return self.symbol_rate_hz * self.samples_per_symbol

    @property
    def p_ch_w(self) -> float:
        return 1e-3 * 10 ** (self.p_ch_dbm / 10)

    def channel_offsets_hz(self) -> list[float]:
        mid = (self.n_channels - 1) / 2
        return [(k - mid) * self.spacing_hz for k in range(self.n_channels)]


@dataclass(frozen=True)
class FiberLinkSpec:
    span_length_km: float = 80.0
    n_spans: int = 100
    step_km: float = 0.1
    attenuation_db_per_km: float = 0.2
    dispersion_ps_nm_km: float = 17.0
    gamma_per_w_km: float = 1.3
    edfa_nf_db: float = 5.0
    center_wavelength_nm: float = 1550.0

    def __post_init__(self):
        for name in ("span_length_km", "step_km"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_spans < 0:
            raise ValueError("n_spans must be nonnegative")
        n = self.span_length_km / self.step_km
        if abs(n - round(n)) > 1e-9:
            raise ValueError("step must divide the span length")

    @property
    def steps_per_span(self) -> int:
        return int(round(self.span_length_km / self.step_km))

    @property
    def alpha_per_km(self) -> float:
        """Power attenuation coefficient in 1/km."""
        return self.attenuation_db_per_km * math.log(10) / 10

    @property
    def beta2_s2_per_km(self) -> float:
        lam = self.center_wavelength_nm * 1e-9
        d = self.dispersion_ps_nm_km * 1e-12 / 1e-9  # s/m/km
        return -d * lam**2 / (2 * math.pi * LIGHT_SPEED)

    @property
    def center_frequency_hz(self) -> float:
        return LIGHT_SPEED / (self.center_wavelength_nm * 1e-9)

    @property
    def span_loss_db(self) -> float:
        return self.attenuation_db_per_km * self.span_length_km


@dataclass(frozen=True)
class PmdSpec:
    pmd_ps_sqrt_km: float = 0.1
    section_km: float = 1.0
    dgd_rel_std: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.pmd_ps_sqrt_km < 0 or self.section_km <= 0:
            raise ValueError("invalid PMD parameters")
        if not 0 <= self.dgd_rel_std < 1:
            raise ValueError("dgd_rel_std must lie in [0, 1)")


FORMAT_NAMES = ("PM-8QAM", "4D-2A8PSK", "4D-64PRS", "8D-2048PRS-T1", "8D-2048PRS-T2", "5.5b4D-2A8PSK")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "table1"
    formats: tuple[str, ...] = ("PM-8QAM", "5.5b4D-2A8PSK", "8D-2048PRS-T1", "8D-2048PRS-T2")
    snr_db: tuple[float, ...] = tuple(x / 2 for x in range(10, 41))
    spans: tuple[int, ...] = (10, 20)
    p_ch_dbm: tuple[float, ...] = (0.0,)
    pmd_ps_sqrt_km: tuple[float, ...] = (0.0,)
    n_samples: int = 10**6
    n_realizations: int = 3
    seeds: tuple[int, ...] = (1,)
    scale: str = "desk"
    out_dir: str = "results"
    workers: int = 1
    wdm: WdmSpec = field(default_factory=WdmSpec)
    link: FiberLinkSpec = field(default_factory=FiberLinkSpec)
    pmd_section_km: float = 1.0
    pmd_dgd_rel_std: float = 0.2
    ngmi_target: float = 0.85

    def __post_init__(self):
        for name in ("snr_db", "spans", "p_ch_dbm", "pmd_ps_sqrt_km"):
            grid = getattr(self, name)
            if len(grid) == 0:
                raise ValueError(f"grid {name} is empty")
            if list(grid) != sorted(grid):
                raise ValueError(f"grid {name} must be sorted")
        if not self.seeds:
            raise ValueError("seeds must be given explicitly")
        if self.scale not in ("desk", "paper"):
            raise ValueError(f"unknown scale {self.scale!r}")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        # workers and out_dir do not change results
        d = self.as_dict()
        d.pop("workers")
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def paper_scale_link(n_spans: int = 100) -> FiberLinkSpec:
    return FiberLinkSpec(n_spans=n_spans, step_km=0.1)


def paper_scale_wdm(p_ch_dbm: float = 0.0) -> WdmSpec:
    return WdmSpec(n_channels=11, n_symbols=2**16, samples_per_symbol=16, p_ch_dbm=p_ch_dbm)


def desk_scale_link(n_spans: int = 20) -> FiberLinkSpec:
    return FiberLinkSpec(n_spans=n_spans, step_km=0.5)


def desk_scale_wdm(p_ch_dbm: float = 0.0) -> WdmSpec:
    return WdmSpec(n_channels=3, n_symbols=2**14, samples_per_symbol=8, p_ch_dbm=p_ch_dbm)
