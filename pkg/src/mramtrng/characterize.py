"""Find the cells whose reduced-timing failures are random, not stuck.

A campaign of N repeated reset -> reduced write -> read cycles gives each
cell a column of N readouts.  The flip count of a cell is the number of
value changes between consecutive readouts:

    flips[c] = sum_i XOR(bits[i][c], bits[i+1][c]),   i = 0 .. N-2

A cell whose failures are temporally random flips about half the time
(expected count p*(N-1), p = 1/2), while reliable and stuck cells sit at
or near zero.  Selection keeps cells with th_l <= flips <= th_u; the
lower threshold is the quality knob and is chosen per chip.

Cells also get a coarse taxonomy: persistent_correct (every readout
equals the written bit), persistent_error (every readout equals the same
wrong bit) and noise_prone (anything that varied).  On real parts the two
persistent classes together are the large invariant majority.
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .device import (
    ChipModel,
    DataPattern,
    Environment,
    MeasurementMatrix,
    TimingParams,
    WORD_WIDTH,
    measure,
)

_SEL_MAGIC = b"MRSL"
_SEL_VERSION = 1

DEFAULT_SWEEP_TW_NS = (15.0, 10.0, 5.0, 2.5)


def expected_threshold(n: int, p: float = 0.5) -> float:
    """Expected flip count of an ideal random cell over n measurements."""
    if n < 2:
        raise ValueError(f"need at least two measurements, got n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must lie in [0, 1], got {p}")
    return p * (n - 1)


def suggest_th_l(n: int) -> int:
    """A usable starting lower threshold: 60 % of the ideal expectation."""
    return round(0.6 * expected_threshold(n, 0.5))


@dataclass
class FlipCountVector:
    """Per-cell flip counts from one measurement campaign."""

    counts: np.ndarray
    n_measurements: int

    @property
    def num_cells(self) -> int:
        return self.counts.size

    @property
    def max_possible(self) -> int:
        return self.n_measurements - 1


def count_flips(matrix: MeasurementMatrix) -> FlipCountVector:
    """Consecutive-readout XOR popcount per cell."""
    if matrix.n_measurements < 2:
        raise ValueError(
            f"flip counting needs >= 2 measurements, got {matrix.n_measurements}"
        )
    flips = np.logical_xor(matrix.bits[1:], matrix.bits[:-1]).sum(axis=0)
    return FlipCountVector(counts=flips.astype(np.int64), n_measurements=matrix.n_measurements)


@dataclass(frozen=True)
class SelectionThresholds:
    """Inclusive flip-count window [th_l, th_u]; th_u defaults to N-1."""

    th_l: int
    th_u: int | None = None

    def resolve(self, n_measurements: int) -> tuple[int, int]:
        upper = self.th_u if self.th_u is not None else n_measurements - 1
        if not 1 <= self.th_l <= upper <= n_measurements - 1:
            raise ValueError(
                f"need 1 <= th_l <= th_u <= N-1; got th_l={self.th_l}, "
                f"th_u={upper}, N={n_measurements}"
            )
        return self.th_l, upper


@dataclass
class CellSelection:
    """The random-cell map of a chip at one threshold setting."""

    mask: np.ndarray
    flip_counts: np.ndarray
    n_measurements: int
    th_l: int
    th_u: int
    num_addresses: int
    word_width: int = WORD_WIDTH

    @property
    def num_randcell(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def empty(self) -> bool:
        return self.num_randcell == 0

    @property
    def address_mask(self) -> np.ndarray:
        """True for addresses containing at least one selected cell."""
        return self.mask.reshape(self.num_addresses, self.word_width).any(axis=1)

    @property
    def num_rand_addresses(self) -> int:
        return int(np.count_nonzero(self.address_mask))

    @property
    def rand_addr_fraction(self) -> float:
        """Fraction of all addresses holding at least one selected cell."""
        return self.num_rand_addresses / self.num_addresses

    @property
    def bits_per_rand_addr(self) -> float:
        """Mean selected cells per random address (nan when empty)."""
        if self.empty:
            return float("nan")
        return self.num_randcell / self.num_rand_addresses

    @property
    def cell_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def address_words(self) -> tuple[np.ndarray, np.ndarray]:
        """(addresses, 16-bit masks) for the compact on-disk form; bit j of
        a mask (MSB first) marks cell address*16+j as selected."""
        per_addr = self.mask.reshape(self.num_addresses, self.word_width)
        addrs = np.flatnonzero(per_addr.any(axis=1))
        packed = np.packbits(per_addr[addrs], axis=1)
        masks = (packed[:, 0].astype(np.uint16) << 8) | packed[:, 1]
        return addrs.astype(np.uint32), masks.astype(np.uint16)


def select_cells(fc: FlipCountVector, thresholds: SelectionThresholds) -> CellSelection:
    """Apply the flip-count window; never raises on an empty result (the
    ``empty`` flag and the CLI exit code carry that condition)."""
    th_l, th_u = thresholds.resolve(fc.n_measurements)
    if fc.num_cells % WORD_WIDTH:
        raise ValueError(
            f"selection requires full {WORD_WIDTH}-bit words, got {fc.num_cells} cells"
        )
    mask = (fc.counts >= th_l) & (fc.counts <= th_u)
    return CellSelection(
        mask=mask,
        flip_counts=fc.counts,
        n_measurements=fc.n_measurements,
        th_l=th_l,
        th_u=th_u,
        num_addresses=fc.num_cells // WORD_WIDTH,
    )


class CellClass(enum.IntEnum):
    PERSISTENT_CORRECT = 0
    PERSISTENT_ERROR = 1
    NOISE_PRONE = 2


@dataclass
class CellTaxonomy:
    """Per-cell stability classes over one campaign."""

    labels: np.ndarray
    n_measurements: int

    def count(self, cls: CellClass) -> int:
        return int(np.count_nonzero(self.labels == cls))

    def fraction(self, cls: CellClass) -> float:
        return self.count(cls) / self.labels.size

    @property
    def invariant_fraction(self) -> float:
        """Cells whose readout never changed across the campaign."""
        return self.fraction(CellClass.PERSISTENT_CORRECT) + self.fraction(
            CellClass.PERSISTENT_ERROR
        )


def classify_cells(matrix: MeasurementMatrix) -> CellTaxonomy:
    if matrix.n_measurements < 2:
        raise ValueError("classification needs >= 2 measurements")
    constant = np.all(matrix.bits == matrix.bits[0][None, :], axis=0)
    correct = matrix.bits[0] == matrix.written
    labels = np.full(matrix.num_cells, CellClass.NOISE_PRONE, dtype=np.uint8)
    labels[constant & correct] = CellClass.PERSISTENT_CORRECT
    labels[constant & ~correct] = CellClass.PERSISTENT_ERROR
    return CellTaxonomy(labels=labels, n_measurements=matrix.n_measurements)


# --- write-timing sweep ----------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    t_w_ns: float
    error_fraction: float


@dataclass
class TimingSweepResult:
    points: tuple[SweepPoint, ...]
    pattern: DataPattern
    env: Environment
    n_measurements: int

    def error_at(self, t_w_ns: float) -> float:
        for p in self.points:
            if p.t_w_ns == t_w_ns:
                return p.error_fraction
        raise KeyError(f"t_w={t_w_ns} ns not in sweep")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t_w_ns", "error_fraction"])
            for p in self.points:
                w.writerow([f"{p.t_w_ns:g}", f"{p.error_fraction:.6f}"])


def sweep_tw(
    chip: ChipModel,
    tw_list=DEFAULT_SWEEP_TW_NS,
    pattern: DataPattern | None = None,
    env: Environment | None = None,
    n: int = 50,
) -> TimingSweepResult:
    """Error fraction of an n-round campaign at each candidate pulse width."""
    if not len(tuple(tw_list)):
        raise ValueError("sweep needs at least one pulse width")
    pattern = pattern or DataPattern.solid(0x0000)
    env = env or Environment()
    points = []
    for t_w in tw_list:
        m = measure(chip, pattern, TimingParams.reduced(t_w), env, n=n)
        points.append(SweepPoint(t_w_ns=float(t_w), error_fraction=m.error_fraction()))
    return TimingSweepResult(
        points=tuple(points), pattern=pattern, env=env, n_measurements=n
    )


def choose_tw(sweep: TimingSweepResult) -> float:
    """The harvesting pulse width: maximum error rate, ties to the wider
    (gentler) pulse."""
    best = max(sweep.points, key=lambda p: (p.error_fraction, p.t_w_ns))
    return best.t_w_ns


# --- persistence -----------------------------------------------------------


def selection_to_bytes(sel: CellSelection) -> bytes:
    """The compact binary form: only addresses holding selected cells,
    with a 16-bit per-address mask."""
    addrs, masks = sel.address_words()
    parts = [
        _SEL_MAGIC,
        struct.pack(
            "<HIHHHI",
            _SEL_VERSION,
            sel.num_addresses,
            sel.word_width,
            sel.th_l,
            sel.th_u,
            sel.n_measurements,
        ),
        struct.pack("<I", len(addrs)),
    ]
    for a, m in zip(addrs, masks):
        parts.append(struct.pack("<IH", int(a), int(m)))
    return b"".join(parts)


def selection_digest(sel: CellSelection) -> str:
    """SHA-256 hex digest of the compact form; used as stream provenance."""
    import hashlib

    return hashlib.sha256(selection_to_bytes(sel)).hexdigest()


def save_selection(sel: CellSelection, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(selection_to_bytes(sel))


def load_selection(path: str | Path) -> CellSelection:
    with open(path, "rb") as fh:
        if fh.read(4) != _SEL_MAGIC:
            raise ValueError(f"{path}: not a selection file (bad magic)")
        version, num_addresses, word_width, th_l, th_u, n_meas = struct.unpack(
            "<HIHHHI", fh.read(16)
        )
        if version != _SEL_VERSION:
            raise ValueError(f"{path}: unsupported selection file version {version}")
        (n_entries,) = struct.unpack("<I", fh.read(4))
        mask = np.zeros(num_addresses * word_width, dtype=bool)
        for _ in range(n_entries):
            buf = fh.read(6)
            if len(buf) != 6:
                raise ValueError(f"{path}: truncated selection file")
            addr, bits16 = struct.unpack("<IH", buf)
            for j in range(word_width):
                if bits16 & (1 << (word_width - 1 - j)):
                    mask[addr * word_width + j] = True
    return CellSelection(
        mask=mask,
        flip_counts=np.zeros(mask.size, dtype=np.int64),  # not stored on disk
        n_measurements=n_meas,
        th_l=th_l,
        th_u=th_u,
        num_addresses=num_addresses,
        word_width=word_width,
    )


def export_selection_csv(sel: CellSelection, path: str | Path) -> None:
    """Human-readable report: one row per random address with its mask and
    the flip count of each of the 16 bits."""
    addrs, masks = sel.address_words()
    fc = sel.flip_counts.reshape(sel.num_addresses, sel.word_width)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["address", "mask_hex"] + [f"flips_bit{j}" for j in range(sel.word_width)])
        for a, m in zip(addrs, masks):
            w.writerow([int(a), f"{int(m):04x}"] + [int(v) for v in fc[a]])
