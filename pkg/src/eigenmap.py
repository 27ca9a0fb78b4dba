"""
Scale-invariant Laplace-Beltrami eigenmaps.

Row i of an embedding is (φ_1(u_i)/λ_1^{d/4}, ..., φ_n(u_i)/λ_n^{d/4}). Multi-scale
embeddings are nested column prefixes of one another. Shape coordinates can be
rebuilt from a prefix of the spectrum.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .config import get_logger
from .containers import read_container, write_container
from .exceptions import DegenerateInput, DimensionMismatch, ParseError
from .geometry import MEASURE_TOL, PointCloud
from .laplace import LBSpectrum

logger = get_logger("Eigenmap")


@dataclass(frozen=True)
class Embedding:
    """Point set P in ℝⁿ with its probability measure."""
    matrix: np.ndarray  # ℓ×n
    measure: np.ndarray  # length ℓ
    intrinsic_dim: int = 2
    source_name: str = ""

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        measure = np.asarray(self.measure, dtype=float)
        if matrix.ndim != 2:
            raise DimensionMismatch("embedding matrix must be ℓ×n")
        if measure.shape != (matrix.shape[0],):
            raise DimensionMismatch(f"measure has {measure.size} entries for {matrix.shape[0]} rows")
        if np.any(measure <= 0) or abs(measure.sum() - 1.0) > MEASURE_TOL:
            raise DegenerateInput("embedding measure must be positive and sum to 1")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "measure", measure)

    @classmethod
    def from_points(cls, matrix, measure=None, source_name: str = "") -> "Embedding":
        """Wrap raw coordinates, defaulting to the uniform measure."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix[:, None]
        if measure is None:
            measure = np.full(matrix.shape[0], 1.0 / matrix.shape[0])
        else:
            measure = np.asarray(measure, dtype=float)
            measure = measure / measure.sum()
        return cls(matrix, measure, 2, source_name)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def transformed(self, rotation: np.ndarray) -> "Embedding":
        """Copy with rows multiplied on the right by ``rotation``."""
        return Embedding(self.matrix @ np.asarray(rotation), self.measure, self.intrinsic_dim,
                         self.source_name)

    def permuted(self, permutation: np.ndarray) -> "Embedding":
        """Copy whose row ``permutation[i]`` is the current row i."""
        inverse = np.argsort(np.asarray(permutation))
        return Embedding(self.matrix[inverse], self.measure[inverse], self.intrinsic_dim,
                         self.source_name)


def embed(spectrum: LBSpectrum, shape: PointCloud, n: int) -> Embedding:
    """P[i, k] = Φ[i, k] / λ_k^{d/4} with the shape's measure attached."""
    if spectrum.size != shape.size:
        raise DimensionMismatch(f"spectrum has {spectrum.size} rows, shape has {shape.size} points")
    if n < 1 or n > spectrum.n:
        raise DimensionMismatch(f"requested n={n}, spectrum holds {spectrum.n} pairs")
    lam = spectrum.eigenvalues[:n]
    if np.any(lam <= 0):
        raise DegenerateInput("eigenmap needs strictly positive eigenvalues")
    matrix = spectrum.eigenfunctions[:, :n] / lam[None, :] ** (spectrum.intrinsic_dim / 4.0)
    return Embedding(matrix, shape.measure.copy(), spectrum.intrinsic_dim, shape.name)


def reconstruct(spectrum: LBSpectrum, shape: PointCloud, n: int) -> np.ndarray:
    """Coordinates of ``shape`` rebuilt from its first n eigenfunctions.

    X̂ = Φ Φᵀ M X where Φ holds the constant eigenfunction 1/√trace(M) and
    φ_1..φ_n. With n = ℓ - 1 the basis is complete and X̂ = X.
    """
    if spectrum.size != shape.size:
        raise DimensionMismatch(f"spectrum has {spectrum.size} rows, shape has {shape.size} points")
    if n < 0 or n > spectrum.n:
        raise DimensionMismatch(f"requested n={n}, spectrum holds {spectrum.n} pairs")
    if spectrum.mass is None:
        raise DegenerateInput("spectrum carries no mass matrix to project with")
    mass = spectrum.mass
    constant = np.full((spectrum.size, 1), 1.0 / np.sqrt(mass.sum()))
    basis = np.hstack([constant, spectrum.eigenfunctions[:, :n]])
    coefficients = basis.T @ (mass[:, None] * shape.points)
    logger.debug(f"Reconstructed {shape.name or 'shape'} from {n} eigenfunctions")
    return basis @ coefficients


def truncate(embedding: Embedding, m: int) -> Embedding:
    if m < 1 or m > embedding.n:
        raise DimensionMismatch(f"cannot truncate a {embedding.n}-dimensional embedding to {m}")
    return Embedding(embedding.matrix[:, :m], embedding.measure, embedding.intrinsic_dim,
                     embedding.source_name)


def validate_schedule(schedule: Sequence[int]) -> List[int]:
    schedule = [int(n) for n in schedule]
    if not schedule or schedule[0] < 1:
        raise DegenerateInput("schedule must start at a dimension ≥ 1")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise DegenerateInput(f"schedule {schedule} is not strictly increasing")
    return schedule


def multiscale_embed(spectrum: LBSpectrum, shape: PointCloud, schedule: Sequence[int]) -> List[Embedding]:
    """One nested truncation per scale of ``schedule``."""
    schedule = validate_schedule(schedule)
    if schedule[-1] > spectrum.n:
        raise DegenerateInput(f"schedule needs {schedule[-1]} eigenpairs, spectrum holds {spectrum.n}")
    full = embed(spectrum, shape, schedule[-1])
    levels = [truncate(full, n) for n in schedule]
    logger.debug(f"Multi-scale embedding of {shape.name or 'shape'} at dimensions {schedule}")
    return levels


def save_embedding(path: Path, embedding: Embedding) -> Path:
    meta = {"kind": "embedding", "n": embedding.n, "d": embedding.intrinsic_dim,
            "l": embedding.size, "source_name": embedding.source_name}
    return write_container(path, meta, {"P": embedding.matrix, "measure": embedding.measure})


def load_embedding(path: Path) -> Embedding:
    meta, arrays = read_container(path)
    if meta.get("kind") != "embedding":
        raise ParseError(f"{path}: container does not hold an embedding")
    return Embedding(arrays["P"], arrays["measure"], int(meta["d"]), meta.get("source_name", ""))
