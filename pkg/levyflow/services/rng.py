"""Counter-based keyed random streams.

A stream is identified by (seed, path_index, stream_tag) and backed by numpy's
Philox counter generator, so any path can be regenerated on its own regardless of
batch order or thread count.
"""
from enum import IntEnum
import hashlib
import struct

import numpy as np


class Stream(IntEnum):
    GAUSSIAN = 0
    STABLE = 1
    SMALL_JUMPS = 2
    BIG_JUMPS = 3
    COMPOUND = 4
    PERTURBATION = 5
    PROBES = 6


def keyed_generator(seed: int, path_index: int = 0, stream: int = 0) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(sequence))


def shard_seed(master_seed: int, shard_index: int) -> int:
    """Shard seed = first 8 bytes of blake2b(master_seed ‖ shard_index), little endian."""
    digest = hashlib.blake2b(struct.pack("<QQ", int(master_seed), int(shard_index)), digest_size=8).digest()
    return struct.unpack("<Q", digest)[0]
