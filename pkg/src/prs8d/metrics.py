"""Stokes-space and distance metrics of labeled constellations."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .constellations import LabeledConstellation, build_format


@dataclass(frozen=True)
class FormatMetrics:
    name: str
    d_e2: float
    alpha: float
    beta: float
    constant_modulus: bool
    se: float


def stokes(x, y) -> np.ndarray:
    """Stokes vector(s) ``(S1, S2, S3)`` of dual-polarization samples.

    ``x`` and ``y`` may be scalars or arrays of equal shape; the Stokes
    components are stacked on a new last axis. No normalization is applied.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    xy = x * np.conj(y)
    return np.stack([np.abs(x) ** 2 - np.abs(y) ** 2, 2 * xy.real, 2 * xy.imag], axis=-1)


def stokes_of_points(points: np.ndarray) -> np.ndarray:
    """Stokes vectors of real 4D points ``[Re x, Im x, Re y, Im y]``."""
    p = np.asarray(points, dtype=float)
    return stokes(p[..., 0] + 1j * p[..., 1], p[..., 2] + 1j * p[..., 3])


def dop(slot1, slot2) -> float:
    """Degree of polarization of a two-slot symbol.

    Parameters
    ----------
    slot1, slot2 : array_like
        Either real 4D vectors or complex ``(x, y)`` pairs.
    """
    s1, e1 = _slot_stokes(slot1)
    s2, e2 = _slot_stokes(slot2)
    energy = e1 + e2
    if energy <= 0:
        raise ValueError("dop of a zero-energy symbol is undefined")
    return float(min(1.0, np.linalg.norm(s1 + s2) / energy))


def _slot_stokes(slot):
    a = np.asarray(slot).ravel()
    if np.iscomplexobj(a) or len(a) == 2:
        x, y = complex(a[0]), complex(a[1])
    else:
        x, y = complex(a[0], a[1]), complex(a[2], a[3])
    return stokes(x, y), abs(x) ** 2 + abs(y) ** 2


def _pair_dop_matrix(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    sa, sb = stokes_of_points(pa), stokes_of_points(pb)
    ea, eb = (pa**2).sum(1), (pb**2).sum(1)
    num = np.linalg.norm(sa[:, None, :] + sb[None, :, :], axis=2)
    return np.minimum(num / (ea[:, None] + eb[None, :]), 1.0)


def dop_values(c: LabeledConstellation, second: Optional[LabeledConstellation] = None) -> np.ndarray:
    """DOP of every enumerated two-slot symbol.

    8D constellations use their own points. A 4D constellation is lifted to
    all ordered slot pairs, drawn from ``second`` for the second slot if given
    (used for the 5b/6b hybrid).
    """
    if c.N == 8 and second is None:
        p = c.points
        s = stokes_of_points(p[:, :4]) + stokes_of_points(p[:, 4:])
        return np.minimum(np.linalg.norm(s, axis=1) / (p**2).sum(1), 1.0)
    if c.N != 4:
        raise ValueError("dop statistics need 4D or 8D points")
    other = c if second is None else second
    return _pair_dop_matrix(c.points, other.points).ravel()


def dop_stats(c: LabeledConstellation, second: Optional[LabeledConstellation] = None) -> tuple[float, float]:
    """``(alpha, beta)``: maximum and mean DOP over the enumerated symbols."""
    v = dop_values(c, second)
    return float(v.max()), float(v.mean())


def min_squared_ed(c: LabeledConstellation, block: int = 512) -> float:
    """Exact minimum squared Euclidean distance over all point pairs."""
    p = np.asarray(c.points if isinstance(c, LabeledConstellation) else c, dtype=float)
    if len(p) < 2:
        raise ValueError("need at least two points")
    best = np.inf
    for start in range(0, len(p), block):
        d = ((p[start : start + block, None, :] - p[None, :, :]) ** 2).sum(2)
        rows = np.arange(len(d))
        d[rows, start + rows] = np.inf
        best = min(best, float(d.min()))
    return best


def is_constant_modulus(c: LabeledConstellation, tol: float = 1e-12) -> bool:
    e = c.slot_energies()
    return bool(np.ptp(e) <= tol * max(1.0, float(e.max())))


def format_metrics(c, second: Optional[LabeledConstellation] = None) -> FormatMetrics:
    """Metrics of one format; a ``(5b, 6b)`` tuple is treated as the hybrid."""
    if isinstance(c, tuple):
        c, second = c
    if second is not None:
        alpha, beta = dop_stats(c, second)
        d2 = min(min_squared_ed(c), min_squared_ed(second))
        cm = is_constant_modulus(c) and is_constant_modulus(second)
        se = (c.bits_per_4d + second.bits_per_4d) / 2
        name = f"{c.name}+{second.name}"
    else:
        alpha, beta = dop_stats(c)
        d2 = min_squared_ed(c)
        cm = is_constant_modulus(c)
        se = c.bits_per_4d
        name = c.name
    return FormatMetrics(name, d2, alpha, beta, cm, se)


TABLE1_FORMATS = ("PM-8QAM", "4D-2A8PSK", "4D-64PRS", "8D-2048PRS-T1", "8D-2048PRS-T2")

# Reference values and tolerances the report is checked against.
TABLE1_REFERENCE = {
    "PM-8QAM": (0.84, 1.00, 0.70, False, 6.0),
    "4D-2A8PSK": (0.88, 1.00, 0.65, True, 6.0),
    "4D-64PRS": (0.66, 1.00, 0.65, True, 6.0),
    "8D-2048PRS-T1": (1.15, 0.96, 0.64, True, 5.5),
    "8D-2048PRS-T2": (0.76, 0.87, 0.55, True, 5.5),
}
D2_TOL = 0.03
DOP_TOL = 0.02


def metrics_report(formats: Sequence[str] = TABLE1_FORMATS) -> list[tuple[str, FormatMetrics]]:
    return [(name, format_metrics(build_format(name))) for name in formats]


def check_report(rows) -> list[str]:
    """Names of reference values that miss their tolerance, empty when all pass."""
    failures = []
    for name, m in rows:
        if name not in TABLE1_REFERENCE:
            continue
        d2, a, b, cm, se = TABLE1_REFERENCE[name]
        if abs(m.d_e2 - d2) > D2_TOL:
            failures.append(f"{name}: d_e2 {m.d_e2:.4f} vs {d2}")
        if abs(m.alpha - a) > DOP_TOL:
            failures.append(f"{name}: alpha {m.alpha:.4f} vs {a}")
        if abs(m.beta - b) > DOP_TOL:
            failures.append(f"{name}: beta {m.beta:.4f} vs {b}")
        if m.constant_modulus != cm:
            failures.append(f"{name}: constant_modulus {m.constant_modulus}")
        if abs(m.se - se) > 1e-12:
            failures.append(f"{name}: se {m.se}")
    return failures


def report_csv(rows, seed: int = 0, config_hash: str = "") -> str:
    """CSV text of a metrics report; ``seed`` and ``config_hash`` are stamped on every row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["format", "se_bits_per_4d", "d_e2", "alpha", "beta", "constant_modulus", "seed", "config_hash"])
    for name, m in rows:
        w.writerow([
            name, f"{m.se:g}", f"{m.d_e2:.6f}", f"{m.alpha:.6f}", f"{m.beta:.6f}", int(m.constant_modulus),
            seed, config_hash,
        ])
    return buf.getvalue()


def report_text(rows) -> str:
    lines = [f"{'format':<16}{'SE':>5}{'d_E^2':>9}{'alpha':>8}{'beta':>8}  modulus"]
    for name, m in rows:
        mod = "constant" if m.constant_modulus else "not constant"
        lines.append(f"{name:<16}{m.se:>5g}{m.d_e2:>9.4f}{m.alpha:>8.4f}{m.beta:>8.4f}  {mod}")
    return "\n".join(lines) + "\n"


def as_dict(m: FormatMetrics) -> dict:
    return asdict(m)
