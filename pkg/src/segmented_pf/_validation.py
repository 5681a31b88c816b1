"""Input checks shared by the estimators and the experiment harness."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_observations(y):
    """Return observations as a finite 1-d float array.

    Accepts a flat sequence or a single-column 2-d array.
    """
    arr = check_array(y, ensure_2d=False, dtype=np.float64, input_name="y")
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"observations must be scalar per time step, got shape {arr.shape}")
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"observations must be 1-d, got shape {arr.shape}")
    return arr


def check_geometry(n_obs, n_segments):
    """Segment length ``T`` for ``n_obs = n_segments * T``."""
    if not isinstance(n_segments, numbers.Integral) or n_segments < 1:
        raise ValueError(f"n_segments must be a positive integer, got {n_segments!r}")
    if n_obs % n_segments:
        raise ValueError(f"{n_obs} observations cannot be split into {n_segments} equal segments")
    return n_obs // n_segments


def check_particle_counts(n_particles, n_segments):
    counts = np.broadcast_to(np.asarray(n_particles), (n_segments,)).astype(int)
    if (counts < 1).any():
        raise ValueError(f"particle counts must be >= 1, got {counts.tolist()}")
    return [int(k) for k in counts]


def seed_from(random_state):
    """Turn ``random_state`` into a non-negative integer master seed."""
    if random_state is None:
        return int(np.random.SeedSequence().entropy % (2**63))
    if isinstance(random_state, numbers.Integral):
        if random_state < 0:
            raise ValueError("seed must be non-negative")
        return int(random_state)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**63))
    if isinstance(random_state, np.random.RandomState):
        return int(random_state.randint(2**31))
    raise TypeError(f"cannot derive a seed from {type(random_state).__name__}")
