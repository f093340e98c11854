import numpy as np

from ..basis import SampleSet


def uniform_points(d, M, seed):
    """M i.i.d. points on [-1, 1]^d from a seeded PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.uniform(-1.0, 1.0, size=(int(M), int(d)))


def uniform_samples(d, M, seed, target=None) -> SampleSet:
    """Uniform design, evaluated through ``target`` when one is given.

    Without a target the observations are zero-filled placeholders.
    """
    pts = uniform_points(d, M, seed)
    vals = np.zeros(len(pts)) if target is None else np.asarray(target(pts), dtype=float)
    return SampleSet(pts, vals)
