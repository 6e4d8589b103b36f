"""Seeded random streams.

Every consumer of randomness draws from a Philox (counter-based, 64-bit key)
generator keyed by the user seed plus a fixed per-purpose stream id, so a
single seed reproduces a whole experiment and adding draws to one purpose
never shifts the draws of another.

Stream ids:

=========  ==  ==================================================
purpose    id  used by
=========  ==  ==================================================
structure  0   random DBN graph (prior tree, intra tree, inter parents)
cpts       1   random DBN CPT rows (flat Dirichlet)
sampling   2   ancestral sampling of datasets
missing    3   MCAR missingness injection
init       4   random initial DBN for Structural EM / parameter EM
=========  ==  ==================================================
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "structure": 0,
    "cpts": 1,
    "sampling": 2,
    "missing": 3,
    "init": 4,
}


def stream(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """Return the generator for ``purpose`` under ``seed``.

    ``extra`` integers extend the spawn key, e.g. to give each grid point of a
    benchmark its own independent stream.
    """
    if purpose not in STREAMS:
        raise KeyError(f"unknown random stream {purpose!r}")
    seq = np.random.SeedSequence(
        int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(STREAMS[purpose], *extra)
    )
    return np.random.Generator(np.random.Philox(seq))
