"""Keyed, counter-based random streams.

Every stochastic component draws from a stream addressed by
(master_seed, run_id, agent_id, variable_tag, round). Distinct keys give
independent Philox generators, so draw order never couples agents,
variables, or rounds, and any run replays bit-identically from its seed.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = ["Tag", "StreamKey", "stream", "StreamFactory", "derive_seed"]

_STREAM_DOMAIN = b"dpcopt.stream.v1"
_SWEEP_DOMAIN = b"dpcopt.sweep.v1"


class Tag(IntEnum):
    """Variable families that consume randomness."""

    NOISE_X = 0
    NOISE_Y = 1
    NOISE_V = 2
    COMPRESS = 3
    DATA = 4
    INIT = 5


@dataclass(frozen=True)
class StreamKey:
    """Address of one random stream within a run."""

    run_id: int = 0
    agent_id: int = 0
    tag: Tag = Tag.DATA
    round_index: int = 0


def stream(master_seed: int, key: StreamKey) -> np.random.Generator:
    """Return the generator addressed by (master_seed, key).

    The 128-bit Philox key is a SHA-256 digest of the packed fields, so
    the mapping is stable across platforms and library versions.
    """
    packed = struct.pack(
        "<qqqqq",
        master_seed,
        key.run_id,
        key.agent_id,
        int(key.tag),
        key.round_index,
    )
    digest = hashlib.sha256(_STREAM_DOMAIN + packed).digest()
    philox_key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=philox_key))


@dataclass(frozen=True)
class StreamFactory:
    """Binds a master seed and run id; hands out per-key streams."""

    master_seed: int
    run_id: int = 0

    def get(self, agent_id: int, tag: Tag, round_index: int = 0) -> np.random.Generator:
        key = StreamKey(self.run_id, agent_id, tag, round_index)
        return stream(self.master_seed, key)


def derive_seed(master_seed: int, value_index: int, repeat_index: int) -> int:
    """Stable child seed for a sweep cell.

    Keyed by (value_index, repeat_index) so appending sweep values or
    repeats never perturbs existing cells.
    """
    packed = struct.pack("<qqq", master_seed, value_index, repeat_index)
    digest = hashlib.sha256(_SWEEP_DOMAIN + packed).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
