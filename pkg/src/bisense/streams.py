"""Named, splittable RNG streams so serial and parallel runs draw the same numbers."""

from __future__ import annotations

import numpy as np

STREAM_TAGS = {
    "symbols_coarse": 0,
    "symbols_fine": 1,
    "phase": 2,
    "noise_coarse": 3,
    "noise_fine": 4,
}


def stream(base_seed: int, trial: int, tag: str) -> np.random.Generator:
    """Generator for one (seed, trial, purpose) triple."""
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(trial), STREAM_TAGS[tag]))
    return np.random.default_rng(seq)


def trial_streams(base_seed: int, trial: int = 0) -> dict[str, np.random.Generator]:
    return {tag: stream(base_seed, trial, tag) for tag in STREAM_TAGS}
