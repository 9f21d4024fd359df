"""Raw-bit harvesting and SHA-256 conditioning.

Harvesting repeats the reduced-timing campaign and appends, per round,
the readout values of the selected cells in ascending (address, bit)
order.  The raw stream is then conditioned in fixed-size blocks: every
``b_len`` raw bits (512 by default) are hashed with SHA-256 and the
256-bit digests are concatenated.  A trailing partial block is discarded,
so

    len(conditioned) == floor(len(raw) / b_len) * d_len

Bit/byte packing is MSB first throughout: the first harvested bit is the
most significant bit of the first byte fed to the hash.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .characterize import CellSelection, selection_digest
from .device import ChipModel, DataPattern, Environment, TimingParams, measure


@dataclass(frozen=True)
class BlockParams:
    """Conditioning geometry: raw bits in, digest bits out, per block."""

    b_len: int = 512
    d_len: int = 256

    def __post_init__(self):
        if self.b_len <= 0 or self.b_len % 8:
            raise ValueError(f"b_len must be a positive multiple of 8, got {self.b_len}")
        if self.d_len != 256:
            raise ValueError(f"d_len must equal the SHA-256 digest width (256), got {self.d_len}")


@dataclass
class Bitstream:
    """A bit sequence plus the provenance needed to regenerate it."""

    bits: np.ndarray
    kind: str = "raw"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.kind not in ("raw", "conditioned"):
            raise ValueError(f"kind must be 'raw' or 'conditioned', got {self.kind!r}")
        if self.kind == "conditioned" and len(self.bits) % 256:
            raise ValueError(
                f"conditioned streams are whole digests; length {len(self.bits)} "
                "is not a multiple of 256"
            )

    def __len__(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        """MSB-first packing; a final partial byte is zero-padded."""
        return np.packbits(self.bits).tobytes()


def required_rounds(target_bits: int, num_randcell: int, block: BlockParams = BlockParams()) -> int:
    """Fewest harvest rounds whose conditioned output reaches ``target_bits``."""
    if target_bits < 1:
        raise ValueError(f"target_bits must be >= 1, got {target_bits}")
    if num_randcell < 1:
        raise ValueError(f"need at least one selected cell, got {num_randcell}")
    blocks_needed = math.ceil(target_bits / block.d_len)
    raw_needed = blocks_needed * block.b_len
    return math.ceil(raw_needed / num_randcell)


def harvest(
    chip: ChipModel,
    selection: CellSelection,
    rounds: int,
    timing: TimingParams,
    env: Environment | None = None,
    pattern: DataPattern | None = None,
    start_round: int = 0,
) -> Bitstream:
    """Collect ``rounds`` readouts of the selected cells as a raw stream.

    Evaluates the campaign only on the selected cells; by construction of
    the counter-based RNG this is bit-identical to slicing a full-array
    campaign, just much faster on a sparse selection.
    """
    if selection.empty:
        raise ValueError("cannot harvest from an empty selection")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    env = env or Environment()
    pattern = pattern or DataPattern.solid(0x0000)
    idx = selection.cell_indices
    m = measure(
        chip, pattern, timing, env, n=rounds, start_round=start_round, cell_indices=idx
    )
    prov = {
        "chip_id": chip.chip_id,
        "seed": chip.seed,
        "t_w_ns": timing.t_w_ns,
        "pattern": pattern.to_dict(),
        "env": env.to_dict(),
        "rounds": rounds,
        "start_round": start_round,
        "num_randcell": selection.num_randcell,
        "selection_sha256": selection_digest(selection),
    }
    return Bitstream(bits=m.bits.reshape(-1), kind="raw", provenance=prov)


def condition(raw: Bitstream, block: BlockParams = BlockParams()) -> Bitstream:
    """SHA-256 each full b_len-bit block; drop any trailing partial block."""
    if raw.kind != "raw":
        raise ValueError("condition() expects a raw stream")
    n_blocks = len(raw) // block.b_len
    used = raw.bits[: n_blocks * block.b_len]
    out = bytearray()
    if n_blocks:
        block_bytes = np.packbits(used).tobytes()  # b_len % 8 == 0, exact
        step = block.b_len // 8
        for i in range(n_blocks):
            out += hashlib.sha256(block_bytes[i * step : (i + 1) * step]).digest()
    bits = np.unpackbits(np.frombuffer(bytes(out), dtype=np.uint8)).astype(bool)
    prov = dict(raw.provenance)
    prov.update({"b_len": block.b_len, "d_len": block.d_len, "raw_bits": len(raw)})
    return Bitstream(bits=bits, kind="conditioned", provenance=prov)


# --- persistence -----------------------------------------------------------
# binary form: u64 little-endian bit count, then MSB-first packed bytes;
# ASCII form: '0'/'1' characters for suite-compatible input files.


def save_bitstream(bs: Bitstream, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(bs)))
        fh.write(bs.to_bytes())


def load_bitstream(path: str | Path, kind: str = "raw") -> Bitstream:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated bitstream file")
        (n_bits,) = struct.unpack("<Q", header)
        payload = fh.read()
    n_bytes = (n_bits + 7) // 8
    if len(payload) < n_bytes:
        raise ValueError(f"{path}: truncated bitstream file")
    bits = np.unpackbits(np.frombuffer(payload[:n_bytes], dtype=np.uint8), count=n_bits)
    return Bitstream(bits=bits.astype(bool), kind=kind)


def save_bitstream_ascii(bs: Bitstream, path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("".join("1" if b else "0" for b in bs.bits))
        fh.write("\n")


def load_bitstream_ascii(path: str | Path, kind: str = "raw") -> Bitstream:
    text = Path(path).read_text(encoding="ascii")
    chars = [c for c in text if not c.isspace()]
    if any(c not in "01" for c in chars):
        raise ValueError(f"{path}: ASCII bitstream must contain only '0'/'1'")
    bits = np.frombuffer("".join(chars).encode("ascii"), dtype=np.uint8) - ord("0")
    return Bitstream(bits=bits.astype(bool), kind=kind)


def save_provenance(bs: Bitstream, path: str | Path) -> None:
    """JSON sidecar with the stream's origin metadata."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"kind": bs.kind, "bits": len(bs), "provenance": bs.provenance}, fh, indent=2)
        fh.write("\n")
