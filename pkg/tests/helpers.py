"""Small builders shared by several test modules."""
import numpy as np
from scipy import linalg

from src.eigenmap import Embedding


def random_embedding(rng, size: int, n: int, weighted: bool = False) -> Embedding:
    """Gaussian point set in ℝⁿ with a uniform or random positive measure."""
    measure = rng.uniform(0.5, 1.5, size) if weighted else None
    return Embedding.from_points(rng.standard_normal((size, n)), measure)


def random_signed_permutation(rng, n: int) -> np.ndarray:
    R = np.zeros((n, n))
    R[np.arange(n), rng.permutation(n)] = rng.choice([-1.0, 1.0], size=n)
    return R


def random_weights(rng, size: int) -> np.ndarray:
    weights = rng.uniform(0.1, 1.0, size)
    return weights / weights.sum()


def small_rotation(rng, n: int, angle: float) -> np.ndarray:
    """Rotation exp(angle·S) for a random unit-norm skew S."""
    S = rng.standard_normal((n, n))
    S = S - S.T
    return linalg.expm(angle * S / np.linalg.norm(S))
