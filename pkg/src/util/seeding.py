"""Derived seeds: every random draw is keyed by the root seed and its position."""
import numpy as np


def derive_seed(*keys: int) -> int:
    """Stable 63-bit seed from non-negative integer keys."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


def rng_for(*keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
