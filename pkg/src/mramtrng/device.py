"""Behavioural model of a toggle-MRAM array under reduced write-pulse timing.

A chip is an array of 16-bit words.  A write is toggle-based with a
pre-read: for each target bit the controller first reads the stored bit
and issues a toggle pulse only where stored != target.  At the nominal
pulse width every toggle completes; as the pulse narrows below the
per-cell switching delay, toggles begin to fail stochastically.  The
per-write toggle success probability is

    p_ok = logistic(steepness * (t_w - tau_eff))
    tau_eff = tau + temp_tau_slope * (T_REF - T)

so a shorter pulse or a colder die raises the failure rate.  A failed
toggle usually leaves the cell in its previous state; with per-cell
probability ``metastable_frac`` the cell instead resolves to a fresh
Bernoulli(``metastable_bias``) value, which is what makes a minority of
cells noisy rather than merely stuck.

Moderate in-plane external fields are rejected by design (toggle MRAM is
field-write immune below its select threshold): any field at or below
``field_threshold_mt`` has exactly zero effect on the simulation.  Beyond
the threshold the field starts to assist switching at a fixed rate.

All stochastic write outcomes come from a counter-based generator keyed
by (chip seed, cell index, round index), so a measurement campaign is a
pure function of its arguments and can be evaluated per cell subset, in
any order, with bit-identical results.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import CounterRng, hash_words16

WORD_WIDTH = 16

# reference temperature for tau calibration and rated operating window
T_REF_C = 26.0
TEMP_MIN_C = 0.0
TEMP_MAX_C = 70.0

# above-threshold external field lowers the effective switching delay
FIELD_TAU_NS_PER_MT = 0.02

FIELD_AXES = ("+x", "-x", "+y", "-y", "+z", "-z")

_CHIP_MAGIC = b"MRTG"
_CHIP_VERSION = 1

_STREAM_TOGGLE = 0
_STREAM_META = 1
_STREAM_VALUE = 2

# pattern stripes alternate in blocks of this many addresses
STRIPE_LEN = 16


@dataclass(frozen=True)
class TimingParams:
    """Write-cycle timing in nanoseconds.

    t_wc_ns is the full write cycle, t_w_ns the write pulse width under
    test, t_wr_ns the recovery time and t_dv_ns the data-valid window.
    Only t_w_ns enters the switching model; the others are carried for
    report fidelity and sanity-checked for consistency.
    """

    t_wc_ns: float = 35.0
    t_w_ns: float = 15.0
    t_wr_ns: float = 12.0
    t_dv_ns: float = 10.0

    def __post_init__(self):
        for name in ("t_wc_ns", "t_w_ns", "t_wr_ns", "t_dv_ns"):
            v = getattr(self, name)
            if not (v > 0.0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.t_w_ns > self.t_wc_ns:
            raise ValueError(
                f"write pulse t_w={self.t_w_ns} ns cannot exceed cycle t_wc={self.t_wc_ns} ns"
            )
        if self.t_dv_ns > self.t_w_ns:
            raise ValueError(
                f"data-valid window t_dv={self.t_dv_ns} ns cannot exceed pulse t_w={self.t_w_ns} ns"
            )

    @classmethod
    def nominal(cls) -> "TimingParams":
        """Datasheet-recommended write timing (15 ns pulse)."""
        return cls()

    @classmethod
    def reduced(cls, t_w_ns: float) -> "TimingParams":
        """Nominal cycle with the write pulse narrowed to ``t_w_ns``."""
        return cls(t_w_ns=t_w_ns, t_dv_ns=min(10.0, t_w_ns))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Environment:
    """Ambient conditions for a write campaign."""

    temperature_c: float = T_REF_C
    field_mt: float = 0.0
    field_axis: str = "+z"

    def __post_init__(self):
        if not TEMP_MIN_C <= self.temperature_c <= TEMP_MAX_C:
            raise ValueError(
                f"temperature {self.temperature_c} C outside rated window "
                f"[{TEMP_MIN_C}, {TEMP_MAX_C}] C"
            )
        if self.field_mt < 0.0:
            raise ValueError(f"field magnitude must be >= 0, got {self.field_mt}")
        if self.field_axis not in FIELD_AXES:
            raise ValueError(f"field_axis must be one of {FIELD_AXES}, got {self.field_axis!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DataPattern:
    """Deterministic test data expanded per address.

    kind is one of solid / checkerboard / striped / random.  checkerboard
    alternates word_a/word_b every address, striped every STRIPE_LEN
    addresses, random derives each word from a hash of (seed, address).
    """

    kind: str = "solid"
    word_a: int = 0x0000
    word_b: int = 0xFFFF
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("solid", "checkerboard", "striped", "random"):
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        for name in ("word_a", "word_b"):
            w = getattr(self, name)
            if not 0 <= w <= 0xFFFF:
                raise ValueError(f"{name} must be a 16-bit word, got {w:#x}")

    @classmethod
    def solid(cls, word: int = 0x0000) -> "DataPattern":
        return cls(kind="solid", word_a=word)

    @classmethod
    def checkerboard(cls, word_a: int = 0xAAAA, word_b: int = 0x5555) -> "DataPattern":
        return cls(kind="checkerboard", word_a=word_a, word_b=word_b)

    @classmethod
    def striped(cls, word_a: int = 0xFF00, word_b: int = 0x00FF) -> "DataPattern":
        return cls(kind="striped", word_a=word_a, word_b=word_b)

    @classmethod
    def random(cls, seed: int = 0) -> "DataPattern":
        return cls(kind="random", seed=seed)

    def words(self, addresses: np.ndarray) -> np.ndarray:
        """16-bit target word for each address in ``addresses``."""
        addr = np.asarray(addresses, dtype=np.int64)
        if self.kind == "solid":
            return np.full(addr.shape, self.word_a, dtype=np.uint16)
        if self.kind == "checkerboard":
            return np.where(addr % 2 == 0, self.word_a, self.word_b).astype(np.uint16)
        if self.kind == "striped":
            return np.where((addr // STRIPE_LEN) % 2 == 0, self.word_a, self.word_b).astype(
                np.uint16
            )
        return hash_words16(self.seed, addr)

    def bits(self, num_addresses: int) -> np.ndarray:
        """Target bit per cell, MSB first within each word."""
        return words_to_bits(self.words(np.arange(num_addresses)))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def words_to_bits(words: np.ndarray) -> np.ndarray:
    """Expand 16-bit words to a flat bool array, MSB first (bit j of the
    word at address a lands at cell index a*16 + j, j=0 being the MSB)."""
    w = np.ascontiguousarray(words, dtype=">u2")
    return np.unpackbits(w.view(np.uint8)).astype(bool)


def bits_to_words(bits: np.ndarray) -> np.ndarray:
    """Inverse of words_to_bits."""
    b = np.asarray(bits, dtype=bool)
    if b.size % WORD_WIDTH:
        raise ValueError(f"bit count {b.size} is not a multiple of {WORD_WIDTH}")
    packed = np.packbits(b.reshape(-1, WORD_WIDTH), axis=1)
    return ((packed[:, 0].astype(np.uint16) << 8) | packed[:, 1]).astype(np.uint16)


@dataclass
class CellParams:
    """Per-cell device parameters (struct of arrays, one entry per cell)."""

    tau_ns: np.ndarray
    steepness: np.ndarray
    metastable_frac: np.ndarray
    metastable_bias: np.ndarray

    def __post_init__(self):
        n = len(self.tau_ns)
        for name in ("steepness", "metastable_frac", "metastable_bias"):
            if len(getattr(self, name)) != n:
                raise ValueError("cell parameter arrays must have equal length")
        if np.any(self.tau_ns <= 0) or np.any(self.steepness <= 0):
            raise ValueError("tau_ns and steepness must be positive")
        for name in ("metastable_frac", "metastable_bias"):
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.tau_ns)


@dataclass(frozen=True)
class EnvCoeffs:
    """Environmental response of the cell population."""

    temp_tau_slope_ns_per_c: float = 0.05
    field_threshold_mt: float = 10.0

    def __post_init__(self):
        if self.temp_tau_slope_ns_per_c < 0:
            raise ValueError("temp_tau_slope_ns_per_c must be >= 0")
        if self.field_threshold_mt <= 0:
            raise ValueError("field_threshold_mt must be > 0")


@dataclass(frozen=True)
class TauComponent:
    """One Gaussian component of the per-address switching-delay mixture."""

    weight: float
    mean_ns: float
    sigma_ns: float

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError(f"component weight must be > 0, got {self.weight}")
        if self.mean_ns <= 0:
            raise ValueError(f"component mean must be > 0, got {self.mean_ns}")
        if self.sigma_ns <= 0:
            raise ValueError(f"component sigma must be > 0, got {self.sigma_ns}")


@dataclass(frozen=True)
class MarginalAddressPopulation:
    """A small sub-population of addresses with marginal write drivers.

    All 16 bits of such a word see the same starved pulse, so under a
    reduced write window the whole word lands in the metastable regime:
    each failed toggle resolves stochastically with a near-balanced,
    word-correlated bias.  A fraction of bits per word (``dead_bit_frac``)
    are firmly pinned anyway and behave like the bulk population.
    `weight` is the fraction of addresses drawn from this population;
    zero disables it.
    """

    weight: float = 0.0
    tau_mean_ns: float = 3.6
    tau_sigma_ns: float = 0.2
    bias_alpha: float = 60.0
    bias_beta: float = 60.0
    bias_bit_sigma: float = 0.01
    dead_bit_frac: float = 0.135

    def __post_init__(self):
        if not 0.0 <= self.weight < 1.0:
            raise ValueError("marginal-address weight must lie in [0, 1)")
        if self.tau_mean_ns <= 0 or self.tau_sigma_ns <= 0:
            raise ValueError("marginal-address tau parameters must be > 0")
        if self.bias_alpha <= 0 or self.bias_beta <= 0:
            raise ValueError("marginal-address bias shapes must be > 0")
        if self.bias_bit_sigma < 0:
            raise ValueError("bias_bit_sigma must be >= 0")
        if not 0.0 <= self.dead_bit_frac <= 1.0:
            raise ValueError("dead_bit_frac must lie in [0, 1]")


@dataclass(frozen=True)
class ChipConfig:
    """Process recipe for instantiating a chip.

    The switching delay tau is sampled per address from a Gaussian mixture
    (write-driver and wordline variation are shared by the 16 bits of a
    word) plus a small per-bit jitter, truncated below by resampling; the
    logistic steepness is lognormal with the same address/bit split,
    clamped to [steepness_min, steepness_max].  An optional marginal
    address population overrides tau and the metastability parameters for
    a small fraction of whole words.
    """

    chip_id: str = "default"
    num_addresses: int = 65536
    tau_components: tuple[TauComponent, ...] = ()
    tau_bit_sigma_ns: float = 0.02
    tau_min_ns: float = 0.05
    steepness_median: float = 6.0
    steepness_addr_sigma: float = 0.2
    steepness_bit_sigma: float = 0.05
    steepness_min: float = 0.5
    steepness_max: float = 50.0
    metastable_frac: float = 0.08
    bias_alpha: float = 2.0
    bias_beta: float = 2.0
    marginal: MarginalAddressPopulation = field(default_factory=MarginalAddressPopulation)
    env: EnvCoeffs = field(default_factory=EnvCoeffs)

    def __post_init__(self):
        if self.num_addresses <= 0:
            raise ValueError("num_addresses must be > 0")
        if not self.tau_components:
            raise ValueError("tau_components must not be empty")
        total = sum(c.weight for c in self.tau_components)
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValueError(f"tau component weights must sum to 1, got {total}")
        for name in ("tau_bit_sigma_ns", "steepness_addr_sigma", "steepness_bit_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.tau_min_ns <= 0:
            raise ValueError("tau_min_ns must be > 0")
        if not 0 < self.steepness_min < self.steepness_max:
            raise ValueError("need 0 < steepness_min < steepness_max")
        if self.steepness_median <= 0:
            raise ValueError("steepness_median must be > 0")
        if not 0.0 <= self.metastable_frac <= 1.0:
            raise ValueError("metastable_frac must lie in [0, 1]")
        if self.bias_alpha <= 0 or self.bias_beta <= 0:
            raise ValueError("bias beta-distribution shapes must be > 0")

    @property
    def num_cells(self) -> int:
        return self.num_addresses * WORD_WIDTH

    def to_dict(self) -> dict:
        return {
            "chip_id": self.chip_id,
            "num_addresses": self.num_addresses,
            "tau": {
                "components": [dataclasses.asdict(c) for c in self.tau_components],
                "bit_sigma_ns": self.tau_bit_sigma_ns,
                "min_ns": self.tau_min_ns,
            },
            "steepness": {
                "median_per_ns": self.steepness_median,
                "addr_sigma": self.steepness_addr_sigma,
                "bit_sigma": self.steepness_bit_sigma,
                "min_per_ns": self.steepness_min,
                "max_per_ns": self.steepness_max,
            },
            "metastable": {
                "frac": self.metastable_frac,
                "bias_alpha": self.bias_alpha,
                "bias_beta": self.bias_beta,
            },
            "marginal_addresses": dataclasses.asdict(self.marginal),
            "env": {
                "temp_tau_slope_ns_per_c": self.env.temp_tau_slope_ns_per_c,
                "field_threshold_mt": self.env.field_threshold_mt,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChipConfig":
        try:
            tau = d["tau"]
            steep = d["steepness"]
            meta = d["metastable"]
            env = d["env"]
            marg = d.get("marginal_addresses")
            marginal = (
                MarginalAddressPopulation(**{k: float(v) for k, v in marg.items()})
                if marg is not None
                else MarginalAddressPopulation()
            )
            return cls(
                chip_id=d.get("chip_id", "default"),
                num_addresses=int(d["num_addresses"]),
                tau_components=tuple(
                    TauComponent(float(c["weight"]), float(c["mean_ns"]), float(c["sigma_ns"]))
                    for c in tau["components"]
                ),
                tau_bit_sigma_ns=float(tau["bit_sigma_ns"]),
                tau_min_ns=float(tau["min_ns"]),
                steepness_median=float(steep["median_per_ns"]),
                steepness_addr_sigma=float(steep["addr_sigma"]),
                steepness_bit_sigma=float(steep["bit_sigma"]),
                steepness_min=float(steep["min_per_ns"]),
                steepness_max=float(steep["max_per_ns"]),
                metastable_frac=float(meta["frac"]),
                bias_alpha=float(meta["bias_alpha"]),
                bias_beta=float(meta["bias_beta"]),
                marginal=marginal,
                env=EnvCoeffs(
                    temp_tau_slope_ns_per_c=float(env["temp_tau_slope_ns_per_c"]),
                    field_threshold_mt=float(env["field_threshold_mt"]),
                ),
            )
        except KeyError as exc:
            raise ValueError(f"chip config missing key: {exc}") from exc

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ChipConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def default_config() -> ChipConfig:
    """The shipped default recipe (1 Mb array), calibrated so the reduced
    write-timing error rates and random-cell yield match the commercial
    parts it imitates."""
    from importlib.resources import files

    text = files("mramtrng.data").joinpath("default_chip.json").read_text(encoding="utf-8")
    return ChipConfig.from_dict(json.loads(text))


@dataclass
class ChipModel:
    """A realized chip: sampled cell population plus stored state."""

    chip_id: str
    num_addresses: int
    word_width: int
    cells: CellParams
    stored: np.ndarray
    env_coeffs: EnvCoeffs
    seed: int

    def __post_init__(self):
        if self.word_width != WORD_WIDTH:
            raise ValueError(f"only {WORD_WIDTH}-bit words are supported")
        if len(self.cells) != self.num_addresses * self.word_width:
            raise ValueError("cell parameter arrays do not match the address count")
        if self.stored.shape != (len(self.cells),):
            raise ValueError("stored-state array does not match the cell count")
        self._rng = CounterRng(self.seed)
        self._cell_keys = None

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def cell_keys(self, cell_indices: np.ndarray | None = None) -> np.ndarray:
        """Counter-RNG base keys; the full-array keys are cached."""
        if cell_indices is None:
            if self._cell_keys is None:
                self._cell_keys = self._rng.cell_keys(np.arange(self.num_cells))
            return self._cell_keys
        return self._rng.cell_keys(cell_indices)

    @property
    def rng(self) -> CounterRng:
        return self._rng

    def save(self, path: str | Path) -> None:
        save_chip(self, path)

    @classmethod
    def load(cls, path: str | Path) -> "ChipModel":
        return load_chip(path)


def create_chip(config: ChipConfig, seed: int, chip_id: str | None = None) -> ChipModel:
    """Sample a cell population from ``config``; deterministic in (config, seed)."""
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    a_count = config.num_addresses
    m = config.num_cells

    weights = np.array([c.weight for c in config.tau_components], dtype=float)
    weights /= weights.sum()
    means = np.array([c.mean_ns for c in config.tau_components])
    sigmas = np.array([c.sigma_ns for c in config.tau_components])

    comp = gen.choice(len(weights), size=a_count, p=weights)
    tau_addr = means[comp] + sigmas[comp] * gen.standard_normal(a_count)
    tau_addr = _resample_below(
        tau_addr, config.tau_min_ns, lambda k, idx: means[comp[idx]] + sigmas[comp[idx]] * gen.standard_normal(k)
    )

    marg = config.marginal
    marg_addr = np.flatnonzero(gen.random(a_count) < marg.weight)
    if marg_addr.size:
        t = marg.tau_mean_ns + marg.tau_sigma_ns * gen.standard_normal(marg_addr.size)
        t = _resample_below(
            t, config.tau_min_ns, lambda k, idx: marg.tau_mean_ns + marg.tau_sigma_ns * gen.standard_normal(k)
        )
        tau_addr[marg_addr] = t

    tau = np.repeat(tau_addr, WORD_WIDTH) + config.tau_bit_sigma_ns * gen.standard_normal(m)
    tau_addr_rep = np.repeat(tau_addr, WORD_WIDTH)
    tau = _resample_below(
        tau, config.tau_min_ns, lambda k, idx: tau_addr_rep[idx] + config.tau_bit_sigma_ns * gen.standard_normal(k)
    )

    ln_k_addr = np.log(config.steepness_median) + config.steepness_addr_sigma * gen.standard_normal(a_count)
    ln_k = np.repeat(ln_k_addr, WORD_WIDTH) + config.steepness_bit_sigma * gen.standard_normal(m)
    steep = np.clip(np.exp(ln_k), config.steepness_min, config.steepness_max)

    bias = gen.beta(config.bias_alpha, config.bias_beta, size=m)
    mf = np.full(m, config.metastable_frac)

    if marg_addr.size:
        marg_bits = (marg_addr[:, None] * WORD_WIDTH + np.arange(WORD_WIDTH)).ravel()
        alive = gen.random(marg_bits.size) >= marg.dead_bit_frac
        bias_word = np.repeat(gen.beta(marg.bias_alpha, marg.bias_beta, size=marg_addr.size), WORD_WIDTH)
        jitter = marg.bias_bit_sigma * gen.standard_normal(marg_bits.size)
        live = marg_bits[alive]
        bias[live] = np.clip(bias_word[alive] + jitter[alive], 0.01, 0.99)
        mf[live] = 1.0

    cells = CellParams(tau_ns=tau, steepness=steep, metastable_frac=mf, metastable_bias=bias)
    return ChipModel(
        chip_id=chip_id or config.chip_id,
        num_addresses=a_count,
        word_width=WORD_WIDTH,
        cells=cells,
        stored=np.ones(m, dtype=bool),
        env_coeffs=config.env,
        seed=int(seed),
    )


def _resample_below(values: np.ndarray, lower: float, redraw, max_rounds: int = 200) -> np.ndarray:
    """Truncate a sample to values >= lower by redrawing the offenders."""
    for _ in range(max_rounds):
        bad = np.flatnonzero(values < lower)
        if bad.size == 0:
            return values
        values[bad] = redraw(bad.size, bad)
    raise RuntimeError("truncated sampling did not converge; check distribution parameters")


def tau_effective(chip: ChipModel, env: Environment, cell_indices: np.ndarray | None = None) -> np.ndarray:
    """Effective switching delay under the given environment.

    Cooling below T_REF stretches the delay; fields at or below the
    chip's rejection threshold are exactly inert, stronger fields assist.
    """
    tau = chip.cells.tau_ns if cell_indices is None else chip.cells.tau_ns[cell_indices]
    shift = chip.env_coeffs.temp_tau_slope_ns_per_c * (T_REF_C - env.temperature_c)
    out = tau + shift
    excess = env.field_mt - chip.env_coeffs.field_threshold_mt
    if excess > 0.0:
        out = out - FIELD_TAU_NS_PER_MT * excess
    return np.maximum(out, 1e-6)


def failure_probability(
    chip: ChipModel,
    timing: TimingParams,
    env: Environment,
    cell_indices: np.ndarray | None = None,
) -> np.ndarray:
    """Per-cell probability that a toggle pulse of width t_w fails."""
    k = chip.cells.steepness if cell_indices is None else chip.cells.steepness[cell_indices]
    tau_eff = tau_effective(chip, env, cell_indices)
    z = np.clip(k * (tau_eff - timing.t_w_ns), -60.0, 60.0)
    return _expit(z)


def _expit(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def reset(chip: ChipModel) -> None:
    """Solid-0xFFFF preset of the whole array (the known-good nominal write)."""
    chip.stored[:] = True


def _write_outcome(
    chip: ChipModel,
    stored: np.ndarray,
    target: np.ndarray,
    p_fail: np.ndarray,
    keys: np.ndarray,
    round_index: int,
    cell_indices: np.ndarray | None,
) -> np.ndarray:
    """Post-write bits for one toggle-write event over an arbitrary cell set.

    Pure in (seed, cell, round); does not touch chip state.
    """
    mf = chip.cells.metastable_frac
    bias = chip.cells.metastable_bias
    if cell_indices is not None:
        mf = mf[cell_indices]
        bias = bias[cell_indices]

    out = stored.copy()
    toggle = stored != target
    u_toggle = chip.rng.uniforms(keys, round_index, _STREAM_TOGGLE)
    failed = toggle & (u_toggle < p_fail)
    out[toggle & ~failed] = target[toggle & ~failed]

    idx = np.flatnonzero(failed)
    if idx.size:
        u_meta = chip.rng.uniforms(keys[idx], round_index, _STREAM_META)
        meta_idx = idx[u_meta < mf[idx]]
        if meta_idx.size:
            u_val = chip.rng.uniforms(keys[meta_idx], round_index, _STREAM_VALUE)
            out[meta_idx] = u_val < bias[meta_idx]
    return out


def write(
    chip: ChipModel,
    pattern: DataPattern,
    timing: TimingParams,
    env: Environment | None = None,
    round_index: int = 0,
) -> None:
    """One toggle-write of ``pattern`` over the whole array; mutates stored state."""
    env = env or Environment()
    target = pattern.bits(chip.num_addresses)
    p_fail = failure_probability(chip, timing, env)
    chip.stored = _write_outcome(
        chip, chip.stored, target, p_fail, chip.cell_keys(), round_index, None
    )


def read(chip: ChipModel, start: int = 0, count: int | None = None) -> np.ndarray:
    """Read back stored words for ``count`` addresses from ``start``."""
    if count is None:
        count = chip.num_addresses - start
    if start < 0 or count < 0 or start + count > chip.num_addresses:
        raise IndexError(
            f"address range [{start}, {start + count}) outside chip of {chip.num_addresses} words"
        )
    bits = chip.stored[start * WORD_WIDTH : (start + count) * WORD_WIDTH]
    return bits_to_words(bits)


@dataclass
class MeasurementMatrix:
    """n repeated reset -> reduced write -> read campaigns over one cell set.

    Row i holds the readout bits of round ``start_round + i``; ``written``
    holds the target bits the write attempted to store.  ``cell_indices``
    is None for a full-array campaign, else the measured subset.
    """

    bits: np.ndarray
    written: np.ndarray
    pattern: DataPattern
    t_w_ns: float
    env: Environment
    start_round: int = 0
    cell_indices: np.ndarray | None = None
    chip_id: str = ""

    @property
    def n_measurements(self) -> int:
        return self.bits.shape[0]

    @property
    def num_cells(self) -> int:
        return self.bits.shape[1]

    def error_fraction(self) -> float:
        """Mean fraction of readout bits that disagree with the written data."""
        return float(np.mean(self.bits != self.written[None, :]))

    def row_error_fractions(self) -> np.ndarray:
        return np.mean(self.bits != self.written[None, :], axis=1)


def measure(
    chip: ChipModel,
    pattern: DataPattern,
    timing: TimingParams,
    env: Environment | None = None,
    n: int = 50,
    start_round: int = 0,
    cell_indices: np.ndarray | None = None,
) -> MeasurementMatrix:
    """Run ``n`` independent reset -> write(pattern, t_w) -> read cycles.

    With ``cell_indices`` the campaign is evaluated only for that subset;
    the counter-based RNG guarantees the result equals the corresponding
    columns of a full-array campaign.  The chip is left in the state the
    final cycle wrote (matching what the hardware would hold afterwards).
    """
    if n < 1:
        raise ValueError(f"need at least one measurement, got n={n}")
    env = env or Environment()

    if cell_indices is None:
        target = pattern.bits(chip.num_addresses)
        keys = chip.cell_keys()
    else:
        cell_indices = np.asarray(cell_indices)
        target = pattern.bits(chip.num_addresses)[cell_indices]
        keys = chip.cell_keys(cell_indices)
    p_fail = failure_probability(chip, timing, env, cell_indices)

    reset_state = np.ones(target.size, dtype=bool)
    rows = np.empty((n, target.size), dtype=bool)
    for i in range(n):
        rows[i] = _write_outcome(
            chip, reset_state, target, p_fail, keys, start_round + i, cell_indices
        )

    if cell_indices is None:
        chip.stored = rows[-1].copy()
    else:
        chip.stored[cell_indices] = rows[-1]

    return MeasurementMatrix(
        bits=rows,
        written=target,
        pattern=pattern,
        t_w_ns=timing.t_w_ns,
        env=env,
        start_round=start_round,
        cell_indices=cell_indices,
        chip_id=chip.chip_id,
    )


# ---------------------------------------------------------------------------
# chip file format: magic 'MRTG', u16 version, then the ChipModel fields in
# declaration order, little-endian; arrays as raw f64, stored bits packed.

def save_chip(chip: ChipModel, path: str | Path) -> None:
    cid = chip.chip_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHIP_MAGIC)
        fh.write(struct.pack("<H", _CHIP_VERSION))
        fh.write(struct.pack("<H", len(cid)))
        fh.write(cid)
        fh.write(struct.pack("<IH", chip.num_addresses, chip.word_width))
        for arr in (
            chip.cells.tau_ns,
            chip.cells.steepness,
            chip.cells.metastable_frac,
            chip.cells.metastable_bias,
        ):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(np.packbits(chip.stored).tobytes())
        fh.write(
            struct.pack(
                "<dd",
                chip.env_coeffs.temp_tau_slope_ns_per_c,
                chip.env_coeffs.field_threshold_mt,
            )
        )
        fh.write(struct.pack("<Q", chip.seed))


def load_chip(path: str | Path) -> ChipModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CHIP_MAGIC:
            raise ValueError(f"{path}: not a chip file (bad magic {magic!r})")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _CHIP_VERSION:
            raise ValueError(f"{path}: unsupported chip file version {version}")
        (cid_len,) = struct.unpack("<H", fh.read(2))
        chip_id = fh.read(cid_len).decode("utf-8")
        num_addresses, word_width = struct.unpack("<IH", fh.read(6))
        m = num_addresses * word_width
        arrays = []
        for _ in range(4):
            buf = fh.read(8 * m)
            if len(buf) != 8 * m:
                raise ValueError(f"{path}: truncated chip file")
            arrays.append(np.frombuffer(buf, dtype="<f8").copy())
        packed = fh.read((m + 7) // 8)
        stored = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), count=m).astype(bool)
        slope, thresh = struct.unpack("<dd", fh.read(16))
        (seed,) = struct.unpack("<Q", fh.read(8))
    cells = CellParams(*arrays)
    return ChipModel(
        chip_id=chip_id,
        num_addresses=num_addresses,
        word_width=word_width,
        cells=cells,
        stored=stored,
        env_coeffs=EnvCoeffs(temp_tau_slope_ns_per_c=slope, field_threshold_mt=thresh),
        seed=seed,
    )
