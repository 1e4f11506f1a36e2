"""Labeled constellations: PM-8QAM, 4D-2A8PSK, 4D-64PRS and the 8D PRS subsets.

Points are stored as real vectors. A 4D point is ``[Re x, Im x, Re y, Im y]``;
an 8D point is the concatenation of its two 4D time slots. Labels are 0/1
arrays, most significant bit first, and the bit order ``b1, b2, ...`` of a
label is its column order.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ENERGY_PER_4D, PRS_4D64_DEFAULT, PRS_T2_DEFAULT, RING_RATIO_5B, RING_RATIO_6B, PrsParams


class ConstellationError(ValueError):
    pass


def int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - k)) & 1 for k in range(width)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


@dataclass(frozen=True, eq=False)
class LabeledConstellation:
    """An immutable labeled point set.

    ``labels[i]`` is the bit label of ``points[i]``. For the 8D subsets
    ``slot_index[i]`` holds the base 4D indices of both time slots and
    ``words[i]`` the full 12-bit word (information bits plus parity bit).
    """

    name: str
    points: np.ndarray
    labels: np.ndarray
    dims_per_4d_slot: int = 4
    slot_index: Optional[np.ndarray] = None
    base: Optional["LabeledConstellation"] = None
    words: Optional[np.ndarray] = None
    parity_type: Optional[str] = None
    _lookup: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        labs = np.array(self.labels, dtype=np.uint8)
        if pts.ndim != 2 or labs.ndim != 2 or len(pts) != len(labs):
            raise ConstellationError("points and labels must be 2D arrays of equal length")
        if not np.all(np.isfinite(pts)):
            raise ConstellationError("non-finite coordinates")
        pts.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labs)
        codes = [bits_to_int(row) for row in labs]
        if len(set(codes)) != len(codes):
            raise ConstellationError(f"{self.name}: labels are not unique")
        self._lookup.update({c: i for i, c in enumerate(codes)})
        for name in ("slot_index", "words"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def M(self) -> int:
        return len(self.points)

    @property
    def m(self) -> int:
        return self.labels.shape[1]

    @property
    def N(self) -> int:
        return self.points.shape[1]

    @property
    def n_slots(self) -> int:
        return max(1, self.N // self.dims_per_4d_slot)

    @property
    def bits_per_4d(self) -> float:
        return self.m / self.n_slots

    def complex_points(self) -> np.ndarray:
        """Points as complex arrays of shape (M, N/2): x, y (and x2, y2 for 8D)."""
        return self.points[:, 0::2] + 1j * self.points[:, 1::2]

    def slot_energies(self) -> np.ndarray:
        """Per-point energy of each 4D slot, shape (M, n_slots)."""
        if self.N < 4:
            return (self.points**2).sum(axis=1, keepdims=True)
        e = self.points**2
        return e.reshape(self.M, self.n_slots, -1).sum(axis=2)

    def mean_energy_per_slot(self) -> float:
        return float(self.slot_energies().mean())

    def index_of(self, bits) -> int:
        bits = np.asarray(bits).ravel()
        if len(bits) != self.m:
            raise ConstellationError(f"expected {self.m} bits, got {len(bits)}")
        try:
            return self._lookup[bits_to_int(bits)]
        except KeyError:
            raise ConstellationError(f"label {''.join(map(str, bits))} not in constellation") from None


# ---------------------------------------------------------------------------
# PM-8QAM

_STAR_RING_RATIO = (np.sqrt(2) + np.sqrt(6)) / 2
# (angle in multiples of 45 degrees, ring) -> 3-bit label. Star-8QAM has no
# Gray labeling; this one has the highest GMI of all 8! labelings (exhaustive
# quadrature search at NGMI 0.85 and 0.965 operating points).
_STAR8_LABELS = {
    (1, 0): 0b000,
    (3, 0): 0b110,
    (5, 0): 0b101,
    (7, 0): 0b011,
    (0, 1): 0b010,
    (2, 1): 0b100,
    (4, 1): 0b111,
    (6, 1): 0b001,
}


def star_8qam(energy: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """2D star-8QAM points (complex) ordered by their 3-bit label."""
    r_in = np.sqrt(2 * energy / (1 + _STAR_RING_RATIO**2))
    pts = np.zeros(8, dtype=complex)
    for (k, ring), lab in _STAR8_LABELS.items():
        r = r_in * (_STAR_RING_RATIO if ring else 1.0)
        pts[lab] = r * np.exp(1j * np.pi / 4 * k)
    labels = np.array([int_to_bits(i, 3) for i in range(8)])
    return pts, labels


def build_pm8qam() -> LabeledConstellation:
    """Polarization-multiplexed star-8QAM, 64 points, 6 bits (x bits first)."""
    p2, _ = star_8qam(ENERGY_PER_4D / 2)
    points, labels = [], []
    for lab in range(64):
        x, y = p2[lab >> 3], p2[lab & 7]
        points.append([x.real, x.imag, y.real, y.imag])
        labels.append(int_to_bits(lab, 6))
    return LabeledConstellation("PM-8QAM", points, labels)


# ---------------------------------------------------------------------------
# 4D-64PRS
#
# One row per 6-bit label: (Re x, Im x, Re y, Im y) with a=nu1, b=nu2, c=nu3.
# b1 b2 / b4 b5 are the sign (quadrant) bits of x / y, b3 xor b6 selects which
# polarization sits on the outer ring, and b3 picks the outer point of the
# quadrant (|Re| = nu1 when 0).
_PRS_TABLE = """
000000 +a +c +b +b   000001 +b +b +a +c   000010 +a +c +b -b   000011 +b +b +a -c
000100 +a +c -b +b   000101 +b +b -a +c   000110 +a +c -b -b   000111 +b +b -a -c
001000 +b +b +c +a   001001 +c +a +b +b   001010 +b +b +c -a   001011 +c +a +b -b
001100 +b +b -c +a   001101 +c +a -b +b   001110 +b +b -c -a   001111 +c +a -b -b
010000 +a -c +b +b   010001 +b -b +a +c   010010 +a -c +b -b   010011 +b -b +a -c
010100 +a -c -b +b   010101 +b -b -a +c   010110 +a -c -b -b   010111 +b -b -a -c
011000 +b -b +c +a   011001 +c -a +b +b   011010 +b -b +c -a   011011 +c -a +b -b
011100 +b -b -c +a   011101 +c -a -b +b   011110 +b -b -c -a   011111 +c -a -b -b
100000 -a +c +b +b   100001 -b +b +a +c   100010 -a +c +b -b   100011 -b +b +a -c
100100 -a +c -b +b   100101 -b +b -a +c   100110 -a +c -b -b   100111 -b +b -a -c
101000 -b +b +c +a   101001 -c +a +b +b   101010 -b +b +c -a   101011 -c +a +b -b
101100 -b +b -c +a   101101 -c +a -b +b   101110 -b +b -c -a   101111 -c +a -b -b
110000 -a -c +b +b   110001 -b -b +a +c   110010 -a -c +b -b   110011 -b -b +a -c
110100 -a -c -b +b   110101 -b -b -a +c   110110 -a -c -b -b   110111 -b -b -a -c
111000 -b -b +c +a   111001 -c -a +b +b   111010 -b -b +c -a   111011 -c -a +b -b
111100 -b -b -c +a   111101 -c -a -b +b   111110 -b -b -c -a   111111 -c -a -b -b
"""


def _parse_prs_table() -> list[tuple[str, tuple[str, ...]]]:
    tokens = _PRS_TABLE.split()
    rows = []
    for k in range(0, len(tokens), 5):
        rows.append((tokens[k], tuple(tokens[k + 1 : k + 5])))
    return rows


PRS_LABEL_TABLE = _parse_prs_table()


def build_4d64prs(params: PrsParams = PRS_4D64_DEFAULT, name: str = "4D-64PRS") -> LabeledConstellation:
    p = params.normalized(ENERGY_PER_4D)
    if np.isclose(p.nu1, p.nu3) or np.isclose(p.nu3, 0.0) or np.isclose(p.nu1, 0.0):
        raise ConstellationError(f"PRS parameters {params} produce coincident points")
    value = {"a": p.nu1, "b": p.nu2, "c": p.nu3}
    rows = sorted(PRS_LABEL_TABLE)
    points = [[(-1 if t[0] == "-" else 1) * value[t[1]] for t in coords] for _, coords in rows]
    labels = [[int(ch) for ch in lab] for lab, _ in rows]
    pts = np.array(points)
    if len(np.unique(np.round(pts, 12), axis=0)) != 64:
        raise ConstellationError(f"PRS parameters {params} produce coincident points")
    return LabeledConstellation(name, pts, labels)


# ---------------------------------------------------------------------------
# 4D-2A8PSK

_GRAY3 = (0, 1, 3, 2, 6, 7, 5, 4)  # label of 8PSK phase index k


def build_2a8psk(variant: str = "6b", ring_ratio: Optional[float] = None) -> LabeledConstellation:
    """Two-amplitude 8PSK in both polarizations with constant 4D modulus.

    Both polarizations carry Gray-labeled 8PSK phases (3 bits each). The 6b
    member puts (x, y) on rings (r1, r2) when the six phase bits have even
    parity and (r2, r1) otherwise. The 5b member additionally requires even
    parity of the two least significant phase bits, so its last phase bit is
    implied and dropped from the label.
    """
    if variant not in ("5b", "6b"):
        raise ConstellationError(f"unknown 2A8PSK variant {variant!r}")
    if ring_ratio is None:
        ring_ratio = RING_RATIO_6B if variant == "6b" else RING_RATIO_5B
    if not 0 < ring_ratio < 1:
        raise ConstellationError("ring_ratio must lie in (0, 1)")
    r2 = np.sqrt(ENERGY_PER_4D / (1 + ring_ratio**2))
    r1 = ring_ratio * r2
    points, labels = [], []
    for word in range(64):
        b = int_to_bits(word, 6)
        if variant == "5b" and (b[2] ^ b[5]):
            continue
        px = _GRAY3.index(word >> 3)
        py = _GRAY3.index(word & 7)
        ra, rb = (r1, r2) if b.sum() % 2 == 0 else (r2, r1)
        x = ra * np.exp(1j * np.pi / 4 * px)
        y = rb * np.exp(1j * np.pi / 4 * py)
        points.append([x.real, x.imag, y.real, y.imag])
        labels.append(b if variant == "6b" else b[:5])
    return LabeledConstellation(f"{variant}4D-2A8PSK", points, labels)


def build_tdh_5p5b(ratio: str = "1:1") -> tuple[LabeledConstellation, LabeledConstellation]:
    """Time-domain hybrid of 5b and 6b 2A8PSK.

    Even-indexed slots use the 5b member, odd slots the 6b member.
    """
    if ratio != "1:1":
        raise ConstellationError("only the 1:1 hybrid is supported")
    return build_2a8psk("5b"), build_2a8psk("6b")


def tdh_slot_member(slot: int) -> int:
    """0 for the 5b member, 1 for the 6b member."""
    return slot % 2


# ---------------------------------------------------------------------------
# 8D-2048PRS


def parity_bit(kind: str, bits) -> int:
    """Parity bit b12 computed from the 11 information bits b1..b11.

    T1 protects every information bit; T2 only the bits b3, b6, b9. In both
    cases b12 is the complement of the XOR.
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if len(bits) != 11:
        raise ConstellationError("parity_bit expects 11 bits")
    if kind == "T1":
        x = int(bits.sum() % 2)
    elif kind == "T2":
        x = int(bits[2] ^ bits[5] ^ bits[8])
    else:
        raise ConstellationError(f"unknown 8D type {kind!r}")
    return 1 - x


def satisfies_parity(kind: str, word) -> bool:
    word = np.asarray(word).ravel()
    return len(word) == 12 and parity_bit(kind, word[:11]) == int(word[11])


def build_8d2048prs(kind: str, base: Optional[LabeledConstellation] = None) -> LabeledConstellation:
    """Set-partition the two-slot product of 4D-64PRS with one parity bit.

    Bits b1..b6 label the first slot and b7..b12 the second, both with the
    base labeling. Without an explicit base, T1 uses the default 4D-64PRS
    coordinates and T2 its own ring geometry.
    """
    if kind not in ("T1", "T2"):
        raise ConstellationError(f"unknown 8D type {kind!r}")
    if base is None:
        base = build_4d64prs(PRS_4D64_DEFAULT if kind == "T1" else PRS_T2_DEFAULT)
    if base.M != 64 or base.m != 6 or base.N != 4:
        raise ConstellationError("base must be a 64-point 4D constellation with 6-bit labels")
    points, labels, words, slots = [], [], [], []
    for info in range(2048):
        b = int_to_bits(info, 11)
        word = np.append(b, parity_bit(kind, b)).astype(np.uint8)
        i = base.index_of(word[:6])
        j = base.index_of(word[6:])
        points.append(np.concatenate([base.points[i], base.points[j]]))
        labels.append(b)
        words.append(word)
        slots.append((i, j))
    return LabeledConstellation(
        f"8D-2048PRS-{kind}",
        points,
        labels,
        slot_index=np.array(slots),
        base=base,
        words=np.array(words),
        parity_type=kind,
    )


# ---------------------------------------------------------------------------
# Mapping


def bits_to_symbol(c: LabeledConstellation, bits) -> np.ndarray:
    """Point for a label. For 8D subsets a full 12-bit word is also accepted."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if c.words is not None and len(bits) == 12:
        if not satisfies_parity(c.parity_type, bits):
            raise ConstellationError(f"word {''.join(map(str, bits))} not in constellation (parity violated)")
        bits = bits[:11]
    return c.points[c.index_of(bits)].copy()


def symbol_to_bits(c: LabeledConstellation, point) -> np.ndarray:
    """Exact inverse of :func:`bits_to_symbol`; no nearest-point quantization."""
    point = np.asarray(point, dtype=float).ravel()
    hit = np.flatnonzero(np.all(c.points == point, axis=1))
    if len(hit) != 1:
        raise ConstellationError("point not in constellation")
    return c.labels[hit[0]].copy()


def map_bits(c: LabeledConstellation, bits: np.ndarray) -> np.ndarray:
    """Vectorized mapping of an (n, m) bit array to symbol indices."""
    bits = np.asarray(bits, dtype=np.int64)
    weights = 1 << np.arange(c.m - 1, -1, -1)
    codes = bits @ weights
    table = np.full(1 << c.m, -1, dtype=np.int64)
    for code, idx in c._lookup.items():
        table[code] = idx
    idx = table[codes]
    if np.any(idx < 0):
        raise ConstellationError("label not in constellation")
    return idx


# ---------------------------------------------------------------------------
# Export


def to_csv(c: LabeledConstellation) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"dim_{k}" for k in range(c.N)] + ["label_bits"])
    for p, lab in zip(c.points, c.labels):
        w.writerow([repr(float(v)) for v in p] + ["".join(str(int(b)) for b in lab)])
    return buf.getvalue()


def to_json(c: LabeledConstellation) -> str:
    doc = {
        "name": c.name,
        "m": c.m,
        "N": c.N,
        "energy_norm": {"per_4d_slot": ENERGY_PER_4D, "measured": c.mean_energy_per_slot()},
        "points": c.points.tolist(),
        "labels": ["".join(str(int(b)) for b in lab) for lab in c.labels],
    }
    return json.dumps(doc, indent=1)


def from_csv(text: str, name: str = "imported") -> LabeledConstellation:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    n = len(header) - 1
    points = [[float(v) for v in r[:n]] for r in body]
    labels = [[int(ch) for ch in r[n]] for r in body]
    return LabeledConstellation(name, points, labels)


def build_format(name: str):
    """Constellation (or TDH pair) by format name."""
    builders = {
        "PM-8QAM": build_pm8qam,
        "4D-2A8PSK": lambda: build_2a8psk("6b"),
        "6b4D-2A8PSK": lambda: build_2a8psk("6b"),
        "5b4D-2A8PSK": lambda: build_2a8psk("5b"),
        "4D-64PRS": build_4d64prs,
        "8D-2048PRS-T1": lambda: build_8d2048prs("T1"),
        "8D-2048PRS-T2": lambda: build_8d2048prs("T2"),
        "5.5b4D-2A8PSK": build_tdh_5p5b,
    }
    try:
        return builders[name]()
    except KeyError:
        raise ConstellationError(f"unknown format {name!r}; known: {sorted(builders)}") from None
