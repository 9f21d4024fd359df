"""Native core of the NIST SP 800-22 statistical test suite.

Seven tests are implemented here (frequency, block frequency, runs, longest
run of ones, cumulative sums, serial, approximate entropy) together with the
battery-level pass rules: a per-test proportion threshold and a chi-squared
uniformity check on the p-value distribution.  Sequences can also be exported
as ASCII '0'/'1' files, the input format of the reference STS distribution,
so the remaining tests of the full suite can be run externally.

All tests are deterministic pure functions of the input bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .special import erfc, igamc, normal_cdf

ALPHA = 0.01
UNIFORMITY_FLOOR = 0.0001

SUBTEST_NAMES = (
    "Frequency",
    "BlockFrequency",
    "Runs",
    "LongestRun",
    "CumulativeSumsFwd",
    "CumulativeSumsRev",
    "Serial1",
    "Serial2",
    "ApproximateEntropy",
)


@dataclass(frozen=True)
class BitSequence:
    """A non-empty ordered bit sequence under test."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.dtype != np.bool_:
            arr = arr.astype(bool)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("BitSequence needs a non-empty 1-d bit array")
        object.__setattr__(self, "bits", arr)

    @property
    def n(self) -> int:
        return int(self.bits.size)

    @classmethod
    def from_string(cls, text: str) -> "BitSequence":
        if set(text) - {"0", "1"}:
            raise ValueError("sequence string may contain only '0' and '1'")
        return cls(np.frombuffer(text.encode("ascii"), dtype=np.uint8) == ord("1"))

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class TestResult:
    """Outcome of one statistical test on one sequence."""

    name: str
    statistic: float
    p_value: float
    passed: bool
    note: str = ""


def _coerce(seq) -> np.ndarray:
    if isinstance(seq, BitSequence):
        return seq.bits
    if isinstance(seq, str):
        return BitSequence.from_string(seq).bits
    arr = np.asarray(seq).astype(bool)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("expected a non-empty 1-d bit array")
    return arr


def frequency_monobit(seq, alpha: float = ALPHA) -> TestResult:
    """Proportion of ones versus zeros over the whole sequence."""
    bits = _coerce(seq)
    n = bits.size
    s = abs(2 * int(np.count_nonzero(bits)) - n)
    p = erfc(s / math.sqrt(2.0 * n))
    return TestResult("Frequency", float(s), p, p >= alpha)


def block_frequency(seq, m_block: int = 128, alpha: float = ALPHA) -> TestResult:
    """Proportion of ones within fixed-size blocks; partial tail discarded."""
    bits = _coerce(seq)
    if m_block < 2:
        raise ValueError("m_block must be at least 2")
    n_blocks = bits.size // m_block
    if n_blocks < 1:
        raise ValueError("sequence shorter than one block")
    ones = bits[: n_blocks * m_block].reshape(n_blocks, m_block).sum(axis=1)
    chi = 4.0 * m_block * float(np.sum((ones / m_block - 0.5) ** 2))
    p = igamc(n_blocks / 2.0, chi / 2.0)
    return TestResult("BlockFrequency", chi, p, p >= alpha)


def runs(seq, alpha: float = ALPHA) -> TestResult:
    """Total number of runs, conditional on the frequency prerequisite."""
    bits = _coerce(seq)
    n = bits.size
    ones = int(np.count_nonzero(bits))
    # integer forms keep the result exactly invariant under bit complement
    if abs(2 * ones - n) >= 4.0 * math.sqrt(n):
        return TestResult("Runs", float("nan"), 0.0, False, note="frequency prerequisite failed")
    v = 1 + int(np.count_nonzero(bits[:-1] != bits[1:]))
    prod = ones * (n - ones) / (float(n) * n)
    if prod == 0.0:
        # constant sequence short enough to slip past the prerequisite
        return TestResult("Runs", float(v), 0.0, False, note="degenerate proportion")
    num = abs(v - 2.0 * n * prod)
    den = 2.0 * math.sqrt(2.0 * n) * prod
    p = erfc(num / den)
    return TestResult("Runs", float(v), p, p >= alpha)


_LONGEST_RUN_TABLES = {
    8: ([1, 2, 3, 4], (0.2148, 0.3672, 0.2305, 0.1875)),
    128: ([4, 5, 6, 7, 8, 9], (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    10_000: (
        [10, 11, 12, 13, 14, 15, 16],
        (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727),
    ),
}


def _longest_run_per_block(blocks: np.ndarray) -> np.ndarray:
    x = blocks.astype(np.int32)
    run = np.zeros(x.shape[0], dtype=np.int32)
    best = np.zeros(x.shape[0], dtype=np.int32)
    for j in range(x.shape[1]):
        run = (run + 1) * x[:, j]
        np.maximum(best, run, out=best)
    return best


def longest_run(seq, alpha: float = ALPHA) -> TestResult:
    """Longest run of ones per block against fixed category probabilities."""
    bits = _coerce(seq)
    n = bits.size
    if n < 128:
        raise ValueError("longest-run test needs at least 128 bits")
    m = 8 if n < 6272 else (128 if n < 750_000 else 10_000)
    edges, pi = _LONGEST_RUN_TABLES[m]
    k = len(pi) - 1
    n_blocks = n // m
    longest = _longest_run_per_block(bits[: n_blocks * m].reshape(n_blocks, m))
    cats = np.searchsorted(edges, longest)
    counts = np.bincount(np.minimum(cats, k), minlength=k + 1)
    expected = n_blocks * np.asarray(pi)
    chi = float(np.sum((counts - expected) ** 2 / expected))
    p = igamc(k / 2.0, chi / 2.0)
    return TestResult("LongestRun", chi, p, p >= alpha)


def cumulative_sums(seq, reverse: bool = False, alpha: float = ALPHA) -> TestResult:
    """Maximal excursion of the +-1 random walk, forward or reversed."""
    bits = _coerce(seq)
    n = bits.size
    steps = np.where(bits[::-1] if reverse else bits, 1, -1)
    z = int(np.max(np.abs(np.cumsum(steps))))
    name = "CumulativeSumsRev" if reverse else "CumulativeSumsFwd"
    if z == 0:
        return TestResult(name, 0.0, 1.0, True)
    sqn = math.sqrt(n)
    total = 1.0
    for k in range(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1):
        total -= normal_cdf((4 * k + 1) * z / sqn) - normal_cdf((4 * k - 1) * z / sqn)
    for k in range(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1):
        total += normal_cdf((4 * k + 3) * z / sqn) - normal_cdf((4 * k + 1) * z / sqn)
    p = min(1.0, max(0.0, total))
    return TestResult(name, float(z), p, p >= alpha)


def _template_counts(bits: np.ndarray, m: int) -> np.ndarray:
    n = bits.size
    ext = np.concatenate([bits, bits[: m - 1]]).astype(np.int64)
    codes = np.zeros(n, dtype=np.int64)
    for j in range(m):
        codes = (codes << 1) | ext[j : j + n]
    return np.bincount(codes, minlength=2**m)


def _psi_sq(bits: np.ndarray, m: int) -> float:
    if m == 0:
        return 0.0
    counts = _template_counts(bits, m)
    return (2**m / bits.size) * float(counts @ counts) - bits.size


def serial(seq, m: int = 8, alpha: float = ALPHA) -> tuple[TestResult, TestResult]:
    """Frequencies of overlapping m-bit templates (wrapped); two p-values."""
    bits = _coerce(seq)
    if m < 2:
        raise ValueError("serial test needs m >= 2")
    if m >= bits.size:
        raise ValueError("template length m too large for the sequence")
    psi_m = _psi_sq(bits, m)
    psi_1 = _psi_sq(bits, m - 1)
    psi_2 = _psi_sq(bits, m - 2)
    d1 = psi_m - psi_1
    d2 = psi_m - 2.0 * psi_1 + psi_2
    p1 = igamc(2 ** (m - 2), d1 / 2.0)
    p2 = igamc(2 ** (m - 3), d2 / 2.0)
    return (
        TestResult("Serial1", d1, p1, p1 >= alpha),
        TestResult("Serial2", d2, p2, p2 >= alpha),
    )


def _phi(bits: np.ndarray, m: int) -> float:
    counts = _template_counts(bits, m)
    c = counts[counts > 0] / bits.size
    return float(np.sum(c * np.log(c)))


def approximate_entropy(seq, m: int = 8, alpha: float = ALPHA) -> TestResult:
    """ApEn(m) against the ln 2 value of a perfectly random source."""
    bits = _coerce(seq)
    if m < 1:
        raise ValueError("approximate-entropy test needs m >= 1")
    if m + 1 >= bits.size:
        raise ValueError("template length m too large for the sequence")
    apen = _phi(bits, m) - _phi(bits, m + 1)
    chi = 2.0 * bits.size * (math.log(2.0) - apen)
    p = igamc(2 ** (m - 1), chi / 2.0)
    return TestResult("ApproximateEntropy", chi, p, p >= alpha)


# --- battery ---------------------------------------------------------------


def default_block_m(n: int) -> int:
    """Block size keeping the block count under 100, at least 20 bits each."""
    target = max(1, math.ceil(n / 99))
    return max(20, 1 << (target - 1).bit_length())


def default_serial_m(n: int) -> int:
    return min(8, max(2, int(math.log2(n)) - 3))


def default_apen_m(n: int) -> int:
    return min(8, max(1, int(math.log2(n)) - 6))


@dataclass(frozen=True)
class BatteryConfig:
    """Battery-level knobs; template sizes default adaptively from n."""

    alpha: float = ALPHA
    uniformity_floor: float = UNIFORMITY_FLOOR
    block_m: int | None = None
    serial_m: int | None = None
    apen_m: int | None = None

    def resolve(self, n: int) -> tuple[int, int, int]:
        return (
            self.block_m if self.block_m is not None else default_block_m(n),
            self.serial_m if self.serial_m is not None else default_serial_m(n),
            self.apen_m if self.apen_m is not None else default_apen_m(n),
        )


def run_all(seq, config: BatteryConfig = BatteryConfig()) -> tuple[TestResult, ...]:
    """All nine subtest results for one sequence, in SUBTEST_NAMES order."""
    bits = _coerce(seq)
    block_m, serial_m, apen_m = config.resolve(bits.size)
    a = config.alpha
    s1, s2 = serial(bits, serial_m, alpha=a)
    return (
        frequency_monobit(bits, alpha=a),
        block_frequency(bits, block_m, alpha=a),
        runs(bits, alpha=a),
        longest_run(bits, alpha=a),
        cumulative_sums(bits, reverse=False, alpha=a),
        cumulative_sums(bits, reverse=True, alpha=a),
        s1,
        s2,
        approximate_entropy(bits, apen_m, alpha=a),
    )


def min_pass_count(s: int, alpha: float = ALPHA) -> int:
    """Smallest number of passing sequences the proportion rule accepts."""
    if s < 1:
        raise ValueError("need at least one sequence")
    threshold = (1.0 - alpha) - 3.0 * math.sqrt(alpha * (1.0 - alpha) / s)
    return max(0, math.floor(s * threshold))


def uniformity_p_value(p_values: np.ndarray) -> float:
    """Chi-squared goodness of fit of p-values against uniform, 10 bins."""
    p = np.asarray(p_values, dtype=float)
    counts = np.bincount(np.clip((p * 10).astype(int), 0, 9), minlength=10)
    expected = p.size / 10.0
    chi = float(np.sum((counts - expected) ** 2 / expected))
    return igamc(4.5, chi / 2.0)


@dataclass(frozen=True)
class SubtestSummary:
    """One battery row: per-sequence p-values plus both pass rules."""

    name: str
    p_values: np.ndarray
    n_passed: int
    min_pass: int
    uniformity_p: float
    proportion_ok: bool = field(init=False)
    uniformity_ok: bool = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "proportion_ok", self.n_passed >= self.min_pass)
        object.__setattr__(
            self, "uniformity_ok", self.uniformity_p >= UNIFORMITY_FLOOR
        )

    @property
    def proportion_label(self) -> str:
        return f"{self.n_passed}/{self.p_values.size}"

    @property
    def ok(self) -> bool:
        return self.proportion_ok and self.uniformity_ok


@dataclass(frozen=True)
class BatterySummary:
    """Verdict over a set of equal-length sequences."""

    n_sequences: int
    sequence_length: int
    config: BatteryConfig
    subtests: tuple[SubtestSummary, ...]

    @property
    def verdict(self) -> bool:
        return all(t.ok for t in self.subtests)

    def subtest(self, name: str) -> SubtestSummary:
        for t in self.subtests:
            if t.name == name:
                return t
        raise KeyError(name)

    def report(self) -> str:
        lines = [
            f"battery: {self.n_sequences} sequences x {self.sequence_length} bits, "
            f"alpha={self.config.alpha:g}",
            f"{'test':<20} {'prop':>7} {'min':>4} {'uniformity':>11}  verdict",
        ]
        for t in self.subtests:
            lines.append(
                f"{t.name:<20} {t.proportion_label:>7} {t.min_pass:>4} "
                f"{t.uniformity_p:>11.6f}  {'pass' if t.ok else 'FAIL'}"
            )
        lines.append(f"overall: {'pass' if self.verdict else 'FAIL'}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        rows = ["test,passed,total,min_pass,uniformity_p,proportion_ok,uniformity_ok"]
        for t in self.subtests:
            rows.append(
                f"{t.name},{t.n_passed},{t.p_values.size},{t.min_pass},"
                f"{t.uniformity_p:.10g},{int(t.proportion_ok)},{int(t.uniformity_ok)}"
            )
        return "\n".join(rows) + "\n"


def run_battery(
    seqs: Sequence | Iterable, config: BatteryConfig = BatteryConfig()
) -> BatterySummary:
    """Run the nine subtests over every sequence and apply both pass rules."""
    arrays = [_coerce(s) for s in seqs]
    if not arrays:
        raise ValueError("need at least one sequence")
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("all sequences must have the same length")
    per_seq = [run_all(a, config) for a in arrays]
    subtests = []
    for idx, name in enumerate(SUBTEST_NAMES):
        p = np.array([results[idx].p_value for results in per_seq])
        passed = sum(1 for results in per_seq if results[idx].passed)
        subtests.append(
            SubtestSummary(
                name=name,
                p_values=p,
                n_passed=passed,
                min_pass=min_pass_count(len(arrays), config.alpha),
                uniformity_p=uniformity_p_value(p),
            )
        )
    return BatterySummary(
        n_sequences=len(arrays),
        sequence_length=n,
        config=config,
        subtests=tuple(subtests),
    )


# --- external suite interchange --------------------------------------------


def export_sts(seq, destination: str | Path) -> None:
    """Write the exact ASCII '0'/'1' byte stream the reference suite reads."""
    bits = _coerce(seq)
    out = np.full(bits.size, ord("0"), dtype=np.uint8)
    out[bits] = ord("1")
    Path(destination).write_bytes(out.tobytes())


def import_sts(source: str | Path) -> BitSequence:
    """Read an ASCII '0'/'1' file back into a BitSequence."""
    raw = Path(source).read_bytes()
    arr = np.frombuffer(raw, dtype=np.uint8)
    arr = arr[(arr != ord("\n")) & (arr != ord("\r")) & (arr != ord(" "))]
    if arr.size == 0:
        raise ValueError("no bits in file")
    bad = (arr != ord("0")) & (arr != ord("1"))
    if np.any(bad):
        raise ValueError("file contains characters other than '0' and '1'")
    return BitSequence(arr == ord("1"))
