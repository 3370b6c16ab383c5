"""Deterministic random-stream derivation.

Every stochastic step in the toolkit draws from a generator keyed by
(run seed, epoch, sample id, stream name), so results are bit-reproducible
and independent of data-loading or worker order.
"""

from __future__ import annotations

import hashlib

import numpy as np

AUGMENT_STREAM = "augment"
DROPOUT_STREAM = "dropout"
SHUFFLE_STREAM = "shuffle"


def _key64(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def presentation_seed(run_seed: int, epoch: int, sample_id: str, stream: str) -> int:
    """64-bit seed for one (sample, epoch) presentation of one stream."""
    return _key64(f"{stream}:{run_seed}:{epoch}:{sample_id}")


def presentation_rng(run_seed: int, epoch: int, sample_id: str, stream: str = DROPOUT_STREAM) -> np.random.Generator:
    return np.random.default_rng(presentation_seed(run_seed, epoch, sample_id, stream))


def epoch_rng(run_seed: int, epoch: int, stream: str = SHUFFLE_STREAM) -> np.random.Generator:
    return np.random.default_rng(_key64(f"{stream}:{run_seed}:{epoch}"))
