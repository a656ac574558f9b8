"""Seed-substream plumbing.

Every stochastic routine in the package derives its generator from an integer
seed plus a fixed tag tuple, so independent pieces of one computation (columns,
rows, folds, benchmark runs) get statistically independent streams whose output
does not depend on scheduling order. Tags are small module-local integers;
collisions across modules are prevented by a per-module namespace tag.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolationError

# Namespace tags, one per consumer module. Keep stable: changing any of these
# changes every downstream stream.
NS_GAUSSIAN = 1
NS_NONPARAMETRIC = 2
NS_DIAGNOSTICS = 3
NS_SIMULATION = 4
NS_BENCHMARK = 5
NS_COVARIANCE = 6


def resolve_seed(seed, strict=False):
    """Apply the default-seed policy: None means 0 unless strict mode forbids it."""
    if seed is None:
        if strict:
            raise ContractViolationError(
                "seed is required in strict-reproducibility mode"
            )
        return 0
    return int(seed)


def substream(seed, *tags):
    """Generator for the stream identified by (seed, *tags).

    Deterministic and platform-stable for fixed numpy: the tuple feeds a
    SeedSequence, so distinct tag tuples give independent streams.
    """
    entropy = (int(seed),) + tuple(int(t) for t in tags)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed, *tags):
    """Integer sub-seed for (seed, *tags), usable to reproduce a piece in isolation."""
    entropy = (int(seed),) + tuple(int(t) for t in tags)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
