"""Deterministic seed derivation for nested and parallel work units."""

import numpy as np


def derive_seed(*parts: int) -> int:
    """Collapse an integer path (master seed, fold, bin, role, ...) into one
    child seed; stable across platforms and execution order."""
    return int(
        np.random.SeedSequence([int(p) for p in parts]).generate_state(
            1, dtype=np.uint32
        )[0]
    )
