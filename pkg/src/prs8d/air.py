"""Bit-wise achievable rates (GMI/NGMI) over the AWGN channel.

SNR convention: ``snr = Es / N0`` with noise variance ``N0 / 2`` per real
dimension, where ``Es`` is the average symbol energy of a 1D/2D
constellation or the average energy per 4D slot (2) of 4D and 8D formats.
A 4D slot therefore sees noise variance ``1 / snr`` per real dimension, and
its effective SNR (signal over total noise energy) is ``snr / 2``.

Random numbers come from independent Philox streams keyed by
``(seed, chunk index)``, and chunk results are combined with an exactly
rounded sum, so estimates do not depend on how chunks are distributed over
workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import logsumexp

from .config import ENERGY_PER_4D, PrsParams
from .constellations import LabeledConstellation, build_4d64prs, build_format

CHUNK = 1 << 14


@dataclass(frozen=True)
class AirResult:
    snr_db: float
    gmi: float
    ngmi: float
    n_samples: int
    seed: int
    m: int
    stderr: float
    max_log: bool = False
    n_slots: int = 1

    @property
    def gmi_per_4d(self) -> float:
        """GMI in bit per 4D slot (8D formats and the hybrid span two)."""
        return self.gmi / self.n_slots


def noise_var_per_dim(snr_db: float, es: float) -> float:
    """``N0 / 2`` for symbol energy ``es`` at ``Es/N0 = snr_db``."""
    if not np.isfinite(snr_db):
        raise ValueError(f"invalid SNR {snr_db!r}")
    return es / (2 * 10 ** (snr_db / 10))


def awgn_noise_var(c: LabeledConstellation, snr_db: float) -> float:
    """Noise variance per real dimension; ``Es`` is per 4D slot for N >= 4."""
    energy = float((c.points**2).sum(1).mean())
    return noise_var_per_dim(snr_db, energy / c.n_slots if c.N >= 4 else energy)


def es_n0_to_snr_eff_db(snr_db: float, n_dims: int = 4) -> float:
    """Signal-to-total-noise ratio of a block of ``n_dims`` real dimensions."""
    return snr_db + 10 * math.log10(2 / n_dims)


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


# ---------------------------------------------------------------------------
# Log-sum-exp over label cosets


def _coset_lse(metric: np.ndarray, bit_matrix: np.ndarray, max_log: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-bit log-sums over points whose bit is 0 and 1.

    ``metric`` has shape (n, M); ``bit_matrix`` (M, m) holds 0/1 labels.
    Returns two (n, m) arrays.
    """
    zero = bit_matrix == 0
    if max_log:
        l0 = np.stack([metric[:, zero[:, k]].max(1) for k in range(zero.shape[1])], axis=1)
        l1 = np.stack([metric[:, ~zero[:, k]].max(1) for k in range(zero.shape[1])], axis=1)
        return l0, l1
    peak = metric.max(axis=1, keepdims=True)
    e = np.exp(metric - peak)
    s0 = e @ zero.astype(float)
    s1 = e @ (~zero).astype(float)
    bad = np.flatnonzero(((s0 < 1e-280) | (s1 < 1e-280)).any(axis=1))
    with np.errstate(divide="ignore"):
        l0 = np.log(s0) + peak
        l1 = np.log(s1) + peak
    if len(bad):
        # a coset underflowed: redo these rows with per-coset maxima
        sub = metric[bad]
        for k in range(zero.shape[1]):
            l0[bad, k] = logsumexp(sub[:, zero[:, k]], axis=1)
            l1[bad, k] = logsumexp(sub[:, ~zero[:, k]], axis=1)
    return l0, l1


def _llrs_flat(c: LabeledConstellation, y: np.ndarray, noise_var: float, max_log: bool) -> np.ndarray:
    p = c.points
    metric = -(((y[:, None, :] - p[None, :, :]) ** 2).sum(2)) / (2 * noise_var)
    l0, l1 = _coset_lse(metric, c.labels, max_log)
    return l0 - l1


def _slot_classes(c: LabeledConstellation) -> np.ndarray:
    """Class of every base label under the 8D parity rule (0/1)."""
    lab = c.base.labels.astype(int)
    if c.parity_type == "T1":
        return lab.sum(1) % 2
    return lab[:, 2] ^ lab[:, 5]


def _llrs_8d(c: LabeledConstellation, y: np.ndarray, noise_var: float, max_log: bool) -> np.ndarray:
    """Exact 8D LLRs without enumerating the 2048 points.

    The subset is {(i, j): class(i) != class(j)}, so the sum over slot-2
    points factorizes into one log-sum per class.
    """
    base = c.base.points
    cls = _slot_classes(c)
    l1 = -(((y[:, None, :4] - base[None]) ** 2).sum(2)) / (2 * noise_var)
    l2 = -(((y[:, None, 4:] - base[None]) ** 2).sum(2)) / (2 * noise_var)
    red = np.max if max_log else logsumexp
    f1 = np.stack([red(l1[:, cls == k], axis=1) for k in (0, 1)], axis=1)
    f2 = np.stack([red(l2[:, cls == k], axis=1) for k in (0, 1)], axis=1)
    a = l1 + f2[:, 1 - cls]
    b = l2 + f1[:, 1 - cls]
    bits = c.base.labels
    a0, a1 = _coset_lse(a, bits, max_log)
    b0, b1 = _coset_lse(b, bits[:, :5], max_log)
    return np.concatenate([a0 - a1, b0 - b1], axis=1)


def bit_llrs(c: LabeledConstellation, y, noise_var: float, max_log: bool = False, brute_force: bool = False) -> np.ndarray:
    """Bit LLRs ``log P(b=0|y) / P(b=1|y)`` for received point(s) ``y``.

    Parameters
    ----------
    c : LabeledConstellation
    y : array_like, shape (N,) or (n, N)
    noise_var : float
        Noise variance per real dimension.
    max_log : bool
        Use the max-log approximation instead of exact log-sum-exp.
    brute_force : bool
        For 8D subsets, enumerate all points instead of the factorized sums.
    """
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[1] != c.N:
        raise ValueError(f"expected {c.N}-dimensional samples")
    if c.parity_type is not None and not brute_force:
        out = _llrs_8d(c, y, noise_var, max_log)
    else:
        out = _llrs_flat(c, y, noise_var, max_log)
    return out[0] if single else out


def bit_losses(llr: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """``log2(1 + exp(-+LLR))`` by transmitted bit, shape as ``llr``."""
    sign = 1 - 2 * bits.astype(float)
    return np.logaddexp(0.0, -sign * llr) / math.log(2)


# ---------------------------------------------------------------------------
# Monte Carlo GMI


def _chunk_stats(c: LabeledConstellation, noise_var: float, seed: int, chunk: int, n: int, max_log: bool):
    rng = chunk_rng(seed, chunk)
    idx = rng.integers(0, c.M, size=n)
    noise = rng.standard_normal((n, c.N))
    y = c.points[idx] + math.sqrt(noise_var) * noise
    loss = bit_losses(bit_llrs(c, y, noise_var, max_log), c.labels[idx]).sum(1)
    return float(loss.sum()), float((loss**2).sum())


def _chunk_sizes(n_samples: int) -> list[int]:
    full, rest = divmod(n_samples, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _run_chunks(c, noise_var, seed, n_samples, max_log, workers):
    sizes = _chunk_sizes(n_samples)
    args = [(c, noise_var, seed, k, n, max_log) for k, n in enumerate(sizes)]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(workers) as ex:
            stats = list(ex.map(_chunk_stats_star, args))
    else:
        stats = [_chunk_stats(*a) for a in args]
    return math.fsum(s for s, _ in stats), math.fsum(q for _, q in stats)


def _chunk_stats_star(a):
    return _chunk_stats(*a)


def _gmi_single(c: LabeledConstellation, snr_db: float, n_samples: int, seed: int, max_log: bool, workers: int):
    nv = awgn_noise_var(c, snr_db)
    s, q = _run_chunks(c, nv, seed, n_samples, max_log, workers)
    mean = s / n_samples
    var = max(q / n_samples - mean**2, 0.0)
    gmi = c.m - mean
    return gmi, math.sqrt(var / n_samples)


FormatLike = Union[LabeledConstellation, tuple, str]


def _resolve(fmt: FormatLike):
    return build_format(fmt) if isinstance(fmt, str) else fmt


def gmi_mc(
    c: FormatLike,
    snr_db: float,
    n_samples: int = 10**6,
    seed: int = 1,
    max_log: bool = False,
    workers: int = 1,
) -> AirResult:
    """Monte Carlo GMI for uniform inputs over the AWGN channel.

    A ``(5b, 6b)`` tuple is the time-domain hybrid: both members are
    evaluated with ``n_samples`` each and the GMI is reported per slot pair,
    so NGMI = (GMI_5b + GMI_6b) / 11.
    """
    c = _resolve(c)
    if not np.isfinite(snr_db):
        raise ValueError(f"invalid SNR {snr_db!r}")
    if isinstance(c, tuple):
        parts = [_gmi_single(member, snr_db, n_samples, seed + 7919 * k, max_log, workers) for k, member in enumerate(c)]
        m = sum(member.m for member in c)
        gmi = sum(g for g, _ in parts)
        err = math.sqrt(sum(e**2 for _, e in parts))
        slots = len(c)
    else:
        gmi, err = _gmi_single(c, snr_db, n_samples, seed, max_log, workers)
        m = c.m
        slots = c.n_slots
    gmi = min(max(gmi, 0.0), float(m))
    return AirResult(float(snr_db), gmi, gmi / m, n_samples, seed, m, err, max_log, slots)


def awgn_sweep(c: FormatLike, snr_grid: Sequence[float], n_samples: int = 10**6, seed: int = 1, workers: int = 1) -> list[AirResult]:
    c = _resolve(c)
    return [gmi_mc(c, s, n_samples, seed, workers=workers) for s in snr_grid]


# ---------------------------------------------------------------------------
# Gauss-Hermite oracle


def gmi_quadrature_moments(c: LabeledConstellation, snr_db: float, n_nodes: int = 64) -> tuple[float, float]:
    """GMI and per-sample loss variance of a 1D or 2D constellation by Gauss-Hermite quadrature.

    The variance is that of the summed bit loss of one uniformly drawn
    symbol, so ``sqrt(var / n)`` is the exact standard deviation of
    :func:`gmi_mc` with ``n`` samples.
    """
    if c.N > 2:
        raise ValueError("quadrature oracle supports N <= 2 only")
    nv = awgn_noise_var(c, snr_db)
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    z = math.sqrt(2 * nv) * t
    wn = w / math.sqrt(math.pi)
    if c.N == 1:
        offsets, weights = z[:, None], wn
    else:
        offsets = np.stack(np.meshgrid(z, z, indexing="ij"), -1).reshape(-1, 2)
        weights = np.outer(wn, wn).ravel()
    m1 = m2 = 0.0
    for i in range(c.M):
        y = c.points[i] + offsets
        loss = bit_losses(bit_llrs(c, y, nv), np.broadcast_to(c.labels[i], (len(y), c.m))).sum(1)
        m1 += float(weights @ loss)
        m2 += float(weights @ loss**2)
    m1, m2 = m1 / c.M, m2 / c.M
    return c.m - m1, max(m2 - m1**2, 0.0)


def gmi_quadrature(c: LabeledConstellation, snr_db: float, n_nodes: int = 64) -> float:
    """GMI of a 1D or 2D constellation by Gauss-Hermite quadrature."""
    return gmi_quadrature_moments(c, snr_db, n_nodes)[0]


def pam_constellation(points: Sequence[complex], labels: Sequence[int], m: int, name: str) -> LabeledConstellation:
    """Small 1D/2D test constellation from complex points and integer labels."""
    pts = np.asarray(points)
    if np.all(np.imag(pts) == 0):
        arr = np.real(pts)[:, None].astype(float)
    else:
        arr = np.stack([pts.real, pts.imag], 1)
    lab = [[(v >> (m - 1 - k)) & 1 for k in range(m)] for v in labels]
    return LabeledConstellation(name, arr, lab, dims_per_4d_slot=arr.shape[1])


def bpsk() -> LabeledConstellation:
    return pam_constellation([1.0, -1.0], [0, 1], 1, "BPSK")


def qpsk() -> LabeledConstellation:
    pts = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2)
    return pam_constellation(pts, [0, 1, 3, 2], 2, "QPSK")


def psk8() -> LabeledConstellation:
    pts = np.exp(1j * np.pi / 4 * np.arange(8))
    return pam_constellation(pts, [0, 1, 3, 2, 6, 7, 5, 4], 3, "8PSK")


# ---------------------------------------------------------------------------
# Required SNR and crossovers


def required_snr(
    c: FormatLike,
    target_ngmi: float,
    tol_db: float = 0.02,
    n_samples: int = 10**6,
    seed: int = 1,
    bracket: tuple[float, float] = (-5.0, 40.0),
    workers: int = 1,
) -> float:
    """SNR (dB) at which the NGMI reaches ``target_ngmi``.

    Every evaluation reuses the same seed, so the estimated curve is smooth
    and monotone in SNR. A cheap scan on a 1 dB grid locates the crossing,
    the bracket is confirmed at full sample size and Brent's method then
    narrows it below ``tol_db``.
    """
    if not 0 < target_ngmi < 1:
        raise ValueError("target_ngmi must lie in (0, 1)")
    c = _resolve(c)
    lo, hi = bracket
    cache: dict[float, float] = {}

    def f(s, n=n_samples):
        key = (round(float(s), 12), n)
        if key not in cache:
            cache[key] = gmi_mc(c, s, n, seed, workers=workers).ngmi - target_ngmi
        return cache[key]

    n_scan = min(n_samples, 1 << 14)
    grid = [lo] + [float(v) for v in np.arange(math.floor(lo) + 1, math.ceil(hi))] + [hi]
    k = None
    for i, s in enumerate(grid):
        if f(s, n_scan) >= 0:
            k = i
            break
    if k is None or (k == 0 and f(lo, n_scan) > 0):
        raise ValueError(
            f"target NGMI {target_ngmi} not reached in [{lo}, {hi}] dB: "
            f"NGMI({lo})={f(lo, n_scan) + target_ngmi:.4f}, NGMI({hi})={f(hi, n_scan) + target_ngmi:.4f}"
        )
    ia, ib = max(k - 1, 0), k
    # the full-size estimate may sit on the other side of the scan crossing
    while ia > 0 and f(grid[ia]) > 0:
        ia -= 1
    while ib < len(grid) - 1 and f(grid[ib]) < 0:
        ib += 1
    a, b = grid[ia], grid[ib]
    fa, fb = f(a), f(b)
    if fa > 0 or fb < 0:
        raise ValueError(f"target NGMI {target_ngmi} not bracketed in [{lo}, {hi}] dB")
    if fa == 0:
        return float(a)
    if fb == 0:
        return float(b)
    return float(brentq(f, a, b, xtol=tol_db / 2, rtol=4 * np.finfo(float).eps))


def crossover_point(snr_grid: Sequence[float], ngmi_a: Sequence[float], ngmi_b: Sequence[float]) -> float:
    """SNR where ``ngmi_a - ngmi_b`` changes sign (linear interpolation)."""
    s = np.asarray(snr_grid, float)
    d = np.asarray(ngmi_a, float) - np.asarray(ngmi_b, float)
    if len(s) != len(d) or len(s) < 2:
        raise ValueError("need matching curves on a shared grid")
    sgn = np.sign(d)
    for k in range(len(s) - 1):
        if sgn[k] != 0 and sgn[k + 1] != 0 and sgn[k] != sgn[k + 1]:
            return float(s[k] - d[k] * (s[k + 1] - s[k]) / (d[k + 1] - d[k]))
    raise ValueError("curves do not cross on the grid")


# ---------------------------------------------------------------------------
# PRS coordinate optimization


def prs_from_ratios(rho3: float, rho2: float) -> PrsParams:
    """PRS coordinates from ``nu3/nu1`` and ``nu2/nu1`` normalized to energy 2."""
    return PrsParams(1.0, rho2, rho3).normalized(ENERGY_PER_4D)


def optimize_prs_params(
    target_snr_db: float,
    n_samples: int = 2 * 10**5,
    seed: int = 1,
    rho3_grid: Sequence[float] = tuple(np.linspace(0.2, 0.6, 5)),
    rho2_grid: Sequence[float] = tuple(np.linspace(0.25, 0.65, 5)),
    refine: bool = True,
) -> PrsParams:
    """Maximize the Monte Carlo GMI of 4D-64PRS over its two free ratios.

    Grid search over ``(nu3/nu1, nu2/nu1)`` followed by Nelder-Mead, all with
    the same noise realization so the objective is deterministic.
    """

    def objective(v):
        rho3, rho2 = v
        if rho3 <= 0.01 or rho3 >= 0.99 or rho2 <= 0.05:
            return 1e3
        try:
            c = build_4d64prs(prs_from_ratios(rho3, rho2))
        except ValueError:
            return 1e3
        return -gmi_mc(c, target_snr_db, n_samples, seed).gmi

    scores = [(objective((a, b)), a, b) for a in rho3_grid for b in rho2_grid]
    best = min(scores)
    _, a, b = best
    if a in (rho3_grid[0], rho3_grid[-1]) or b in (rho2_grid[0], rho2_grid[-1]):
        warnings.warn("PRS optimum lies on the grid boundary", RuntimeWarning, stacklevel=2)
    if refine:
        res = minimize(objective, [a, b], method="Nelder-Mead", options={"xatol": 1e-3, "fatol": 1e-5})
        a, b = res.x
    return prs_from_ratios(a, b)
