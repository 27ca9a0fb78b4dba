"""
Robust (Sliced-)Wasserstein Registration

Distances between embedded point sets modulo an orthogonal ambiguity matrix R,
and the optimizers that find R together with a transport plan.

Features:
- Exact robust Wasserstein registration (Procrustes / transportation simplex alternation)
- Robust sliced-Wasserstein evaluation over seeded unit directions
- Alternating sliced registration with a Cayley-curve search on O(n)
  (nonmonotone line search with Barzilai-Borwein steps)
- Empirical registration with averaged per-direction plans
- Coarse-to-fine multi-scale driver with per-level reports
- Cold start at R = I with the product coupling; opt-in discrete
  initialization over signed permutations

Author: SpectralReg
Version: 1.0.0
"""

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse

from .config import create_solver_settings, get_logger
from .eigenmap import Embedding
from .exceptions import ConvergenceFailure, DegenerateInput, DimensionMismatch, SizeLimitExceeded
from .geometry import Correspondence, PointCloud, transfer_connectivity
from .transport import (
    SlicedPlans, TransportPlan, ot_exact, plan_energy, plan_to_map,
    sliced_couplings, squared_distances, write_correspondence, write_plan,
)

logger = get_logger("Register")

ORTHOGONALITY_TOL = 1e-10
METHODS = ("empirical", "alternating", "exact")

# L per embedding dimension used by the single-scale and multi-scale experiments
SINGLE_SCALE_DIRECTIONS = {5: 1000, 10: 1500, 20: 2000, 30: 3000, 50: 5000}
MULTISCALE_DIRECTIONS = {5: 500, 10: 800, 20: 1000, 30: 1500, 50: 3000, 80: 6000,
                         120: 10000, 150: 15000, 200: 20000}
STANDARD_SCHEDULE = (3, 5, 10, 20, 30, 50, 80, 120, 150, 200)


@dataclass(frozen=True)
class OrthogonalMatrix:
    """R ∈ O(n); reflections (det = -1) are allowed."""
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatch(f"orthogonal matrix must be square, got {entries.shape}")
        error = np.linalg.norm(entries @ entries.T - np.eye(entries.shape[0]))
        if error > ORTHOGONALITY_TOL:
            raise DegenerateInput(f"matrix is not orthogonal (‖RRᵀ - I‖ = {error:.3e})")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def identity(cls, n: int) -> "OrthogonalMatrix":
        return cls(np.eye(n))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def embedded(self, n: int) -> "OrthogonalMatrix":
        """This matrix in the top-left block of I_n."""
        if n < self.n:
            raise DimensionMismatch(f"cannot embed a {self.n}×{self.n} matrix into dimension {n}")
        block = np.eye(n)
        block[:self.n, :self.n] = self.entries
        return OrthogonalMatrix(block)


def _matrix(R: Union[OrthogonalMatrix, np.ndarray]) -> np.ndarray:
    return R.entries if isinstance(R, OrthogonalMatrix) else np.asarray(R, dtype=float)


@dataclass(frozen=True)
class DirectionSet:
    """L unit directions in ℝⁿ drawn from a seeded standard Gaussian."""
    directions: np.ndarray
    seed: int = 0

    def __post_init__(self):
        directions = np.asarray(self.directions, dtype=float)
        if directions.ndim != 2 or directions.shape[0] == 0:
            raise DegenerateInput("direction set must be a non-empty L×n array")
        if np.abs(np.linalg.norm(directions, axis=1) - 1.0).max() > 1e-12:
            raise DegenerateInput("directions must have unit norm")
        object.__setattr__(self, "directions", directions)

    @classmethod
    def generate(cls, count: int, n: int, seed: int = 0) -> "DirectionSet":
        if count < 1 or n < 1:
            raise DegenerateInput(f"need at least one direction in dimension ≥ 1, got L={count}, n={n}")
        gaussian = np.random.default_rng(seed).standard_normal((count, n))
        return cls(gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True), seed)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    def head(self, count: int) -> "DirectionSet":
        return DirectionSet(self.directions[:count], self.seed)


@dataclass
class CurvilinearConfig:
    """Tunables of the Cayley-curve search and the alternating outer loop."""
    rho: float = 1e-4  # sufficient decrease
    delta: float = 0.1  # backtracking factor
    xi: float = 0.85  # nonmonotone memory
    epsilon: float = 1e-6  # stop when ‖A‖_F ≤ epsilon
    max_inner: int = 100
    max_outer: int = 50
    tau_min: float = 1e-12
    tau_max: float = 1e3
    max_backtracks: int = 60
    rel_tol: float = 1e-10  # outer stop on relative energy decrease

    def __post_init__(self):
        if not (0 < self.rho < 1 and 0 < self.delta < 1 and 0 <= self.xi < 1 and self.epsilon > 0):
            raise DegenerateInput("invalid curvilinear search configuration")
        if self.max_inner < 1 or self.max_outer < 0:
            raise DegenerateInput("iteration caps must be positive")


@dataclass(frozen=True)
class LevelSpec:
    """One level of a coarse-to-fine schedule."""
    n: int
    directions: Optional[int] = None  # None: multi-scale default ladder
    iterations: int = 2
    method: str = "empirical"

    def __post_init__(self):
        if self.method not in METHODS:
            raise DegenerateInput(f"unknown registration method {self.method!r}")

    @property
    def direction_count(self) -> int:
        return self.directions or default_direction_count(self.n, "multiscale")


@dataclass(frozen=True)
class LevelReport:
    n: int
    directions: int
    method: str
    iterations: int
    initial_energy: float
    final_energy: float
    quality: Optional[float] = None


@dataclass(frozen=True)
class RegistrationResult:
    rotation: OrthogonalMatrix
    plan: TransportPlan
    energy_trace: Tuple[float, ...]
    correspondence: Correspondence = field(repr=False)
    scale_reports: Optional[Tuple[LevelReport, ...]] = None

    @property
    def energy(self) -> float:
        return self.energy_trace[-1]


def default_direction_count(n: int, ladder: str = "single") -> int:
    """Direction count for dimension n from the experiment tables."""
    table = SINGLE_SCALE_DIRECTIONS if ladder == "single" else MULTISCALE_DIRECTIONS
    for dim in sorted(table):
        if n <= dim:
            return table[dim]
    return table[max(table)]


def standard_schedule(method: str = "empirical", iterations: int = 2) -> List[LevelSpec]:
    return [LevelSpec(n, None, iterations, method) for n in STANDARD_SCHEDULE]


def _check_pair(P: Embedding, Q: Embedding, dirs: Optional[DirectionSet] = None) -> None:
    if P.n != Q.n:
        raise DimensionMismatch(f"embeddings have dimensions {P.n} and {Q.n}")
    if dirs is not None and dirs.n != P.n:
        raise DimensionMismatch(f"directions live in ℝ^{dirs.n}, embeddings in ℝ^{P.n}")


def _converged(previous: float, current: float, rel_tol: float) -> bool:
    return abs(previous - current) <= rel_tol * abs(previous)


# ---------------------------------------------------------------------------
# Procrustes and sliced plans
# ---------------------------------------------------------------------------

def procrustes(P: Embedding, Q: Embedding, plan: TransportPlan) -> OrthogonalMatrix:
    """argmin over O(n) of Σ σ_ij ‖p_i R − q_j‖², i.e. U Vᵀ from the SVD of Pᵀ σ Q."""
    _check_pair(P, Q)
    if plan.shape != (P.size, Q.size):
        raise DimensionMismatch(f"plan {plan.shape} does not couple {P.size} and {Q.size} points")
    cross = P.matrix.T @ np.asarray(plan.entries @ Q.matrix)
    U, _, Vt = np.linalg.svd(cross)
    return OrthogonalMatrix(U @ Vt)


def sliced_plans(P: Embedding, Q: Embedding, R, dirs: DirectionSet) -> SlicedPlans:
    """Monotone couplings of p R θ_lᵀ and q θ_lᵀ for every direction."""
    theta = dirs.directions
    xs = P.matrix @ (_matrix(R) @ theta.T)
    ys = Q.matrix @ theta.T
    return sliced_couplings(xs, P.measure, ys, Q.measure)


def _coerce_plans(plans: Union[SlicedPlans, Sequence[TransportPlan]]) -> SlicedPlans:
    if isinstance(plans, SlicedPlans):
        return plans
    plans = list(plans)
    parts = []
    for l, plan in enumerate(plans):
        coo = plan.entries.tocoo()
        parts.append((np.full(coo.nnz, l), coo.row, coo.col, coo.data))
    direction, rows, cols, weights = (np.concatenate(p) for p in zip(*parts))
    return SlicedPlans(direction, rows, cols, weights, np.zeros(len(plans)), plans[0].shape,
                       plans[0].row_marginal, plans[0].col_marginal)


class _FrozenObjective:
    """E_Θ(R) = (1/L) Σ_l Σ_ij σ_ij(θ_l) (p_i R θ_lᵀ − q_j θ_lᵀ)² at fixed plans."""

    def __init__(self, P: Embedding, Q: Embedding, dirs: DirectionSet, plans: SlicedPlans):
        self.P = P.matrix
        self.theta = dirs.directions
        self.plans = plans
        self.count = dirs.count
        self.target = (Q.matrix @ self.theta.T)[plans.cols, plans.direction]

    def _residual(self, R: np.ndarray) -> np.ndarray:
        projected = self.P @ (R @ self.theta.T)
        return projected[self.plans.rows, self.plans.direction] - self.target

    def value(self, R: np.ndarray) -> float:
        residual = self._residual(R)
        return float(np.sum(self.plans.weights * residual ** 2) / self.count)

    def value_and_gradient(self, R: np.ndarray) -> Tuple[float, np.ndarray]:
        residual = self._residual(R)
        weighted = self.plans.weights * residual
        value = float(np.sum(weighted * residual) / self.count)
        collected = sparse.csr_matrix((weighted, (self.plans.rows, self.plans.direction)),
                                      shape=(self.P.shape[0], self.count))
        gradient = (2.0 / self.count) * (self.P.T @ np.asarray(collected @ self.theta))
        return value, gradient


# ---------------------------------------------------------------------------
# Curvilinear search on O(n)
# ---------------------------------------------------------------------------

def gradient(P: Embedding, Q: Embedding, R, dirs: DirectionSet,
             plans: Union[SlicedPlans, Sequence[TransportPlan]]) -> np.ndarray:
    """Euclidean gradient H of E_Θ at R with the per-direction plans held fixed.

    H = (2/L) Σ_l Σ_ij σ_ij(θ_l) (p_i R θ_lᵀ − q_j θ_lᵀ) p_iᵀ θ_l
    """
    _check_pair(P, Q, dirs)
    return _FrozenObjective(P, Q, dirs, _coerce_plans(plans)).value_and_gradient(_matrix(R))[1]


def skew(H: np.ndarray, R) -> np.ndarray:
    R = _matrix(R)
    return H @ R.T - R @ H.T


def _cayley(R: np.ndarray, A: np.ndarray, tau: float) -> np.ndarray:
    eye = np.eye(R.shape[0])
    return np.linalg.solve(eye + 0.5 * tau * A, (eye - 0.5 * tau * A) @ R)


def cayley(R, A: np.ndarray, tau: float) -> OrthogonalMatrix:
    """Y(τ) = (I + τ/2 A)⁻¹ (I − τ/2 A) R."""
    return OrthogonalMatrix(_cayley(_matrix(R), A, tau))


def _reorthonormalize(R: np.ndarray) -> np.ndarray:
    if np.linalg.norm(R @ R.T - np.eye(R.shape[0])) <= 1e-12:
        return R
    logger.warning("Re-orthonormalizing iterate after drift from O(n)")
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def _curvilinear(objective: _FrozenObjective, R0: np.ndarray,
                 config: CurvilinearConfig) -> Tuple[np.ndarray, float, int]:
    R = R0
    energy, H = objective.value_and_gradient(R)
    A = H @ R.T - R @ H.T
    reference, weight = energy, 1.0
    tau = 1e-2 / (1.0 + np.linalg.norm(H))
    steps = 0
    for s in range(config.max_inner):
        if np.linalg.norm(A) <= config.epsilon:
            break
        slope = float(np.trace(H.T @ (-A @ R)))
        for _ in range(config.max_backtracks + 1):
            Y = _cayley(R, A, tau)
            trial = objective.value(Y)
            if trial <= reference + config.rho * tau * slope:
                break
            tau *= config.delta
        else:
            raise ConvergenceFailure(
                f"curvilinear search found no acceptable step after {config.max_backtracks} backtracks"
            )
        R_prev, A_prev = R, A
        R = _reorthonormalize(Y)
        energy, H = objective.value_and_gradient(R)
        A = H @ R.T - R @ H.T
        steps += 1

        next_weight = config.xi * weight + 1.0
        reference = (config.xi * weight * reference + energy) / next_weight
        weight = next_weight

        D = R - R_prev
        W = A @ R - A_prev @ R_prev
        dd, dw, ww = float(np.sum(D * D)), float(np.sum(D * W)), float(np.sum(W * W))
        if s % 2 == 0:
            candidate = dd / abs(dw) if dw != 0 else math.nan
        else:
            candidate = abs(dw) / ww if ww > 0 else math.nan
        if math.isfinite(candidate) and candidate > 0:
            tau = candidate
        tau = min(max(tau, config.tau_min), config.tau_max)
        logger.debug(f"curvilinear step {s}: E={energy:.12g} ‖A‖={np.linalg.norm(A):.3e} τ={tau:.3e}")
    return R, energy, steps


def curvilinear_search(P: Embedding, Q: Embedding, dirs: DirectionSet,
                       plans: Union[SlicedPlans, Sequence[TransportPlan]], R0,
                       config: Optional[CurvilinearConfig] = None) -> OrthogonalMatrix:
    """Minimize E_Θ over O(n) along Cayley curves with the plans held fixed."""
    _check_pair(P, Q, dirs)
    config = config or CurvilinearConfig()
    objective = _FrozenObjective(P, Q, dirs, _coerce_plans(plans))
    R, _, _ = _curvilinear(objective, _matrix(R0), config)
    return OrthogonalMatrix(R)


# ---------------------------------------------------------------------------
# Initialization over the sign/order ambiguity group
# ---------------------------------------------------------------------------

def signed_permutations(n: int) -> Iterable[np.ndarray]:
    """All signed permutation matrices, identity first."""
    for perm in itertools.permutations(range(n)):
        for signs in itertools.product((1.0, -1.0), repeat=n):
            R = np.zeros((n, n))
            R[np.arange(n), perm] = signs
            yield R


def sign_flips(n: int) -> Iterable[np.ndarray]:
    for signs in itertools.product((1.0, -1.0), repeat=n):
        yield np.diag(signs)


def seed_rotation(P: Embedding, Q: Embedding, dirs: DirectionSet, max_candidates: int = 4096,
                  sample: int = 32) -> OrthogonalMatrix:
    """Best signed permutation (or sign flip) by sliced energy on a few directions."""
    _check_pair(P, Q, dirs)
    n = P.n
    if math.factorial(n) * 2 ** n <= max_candidates:
        candidates = list(signed_permutations(n))
    elif 2 ** n <= max_candidates:
        candidates = list(sign_flips(n))
    else:
        return OrthogonalMatrix.identity(n)

    theta = dirs.head(min(sample, dirs.count)).directions
    targets = Q.matrix @ theta.T
    per_chunk = max(1, 4096 // theta.shape[0])
    energies = []
    for start in range(0, len(candidates), per_chunk):
        chunk = candidates[start:start + per_chunk]
        xs = np.hstack([P.matrix @ (R @ theta.T) for R in chunk])
        ys = np.tile(targets, (1, len(chunk)))
        costs = sliced_couplings(xs, P.measure, ys, Q.measure).costs
        energies.extend(costs.reshape(len(chunk), theta.shape[0]).mean(axis=1))
    best = int(np.argmin(energies))
    logger.debug(f"Seeded R from {len(candidates)} candidates: E={energies[best]:.6g} (identity {energies[0]:.6g})")
    return OrthogonalMatrix(candidates[best])


def cold_start(P: Embedding, Q: Embedding, dirs: Optional[DirectionSet] = None,
               discrete_init: bool = False) -> OrthogonalMatrix:
    """R⁰ for a run that has neither ``init_R`` nor ``init_plan``.

    The start is the product coupling σ⁰ = μ^P (μ^Q)ᵀ. Its Procrustes step uses
    Pᵀσ⁰Q = (Pᵀμ^P)(Qᵀμ^Q)ᵀ, which has rank at most one, so it is only unique for
    n = 1; R⁰ = I whenever it is not. With ``discrete_init`` the best signed
    permutation from :func:`seed_rotation` is used instead.
    """
    _check_pair(P, Q, dirs)
    if discrete_init:
        return seed_rotation(P, Q, dirs if dirs is not None else DirectionSet.generate(32, P.n, 0))
    p_mean = P.matrix.T @ P.measure
    q_mean = Q.matrix.T @ Q.measure
    cross = np.outer(p_mean, q_mean)
    spread = float(P.measure @ (P.matrix ** 2).sum(axis=1)) * float(Q.measure @ (Q.matrix ** 2).sum(axis=1))
    if np.linalg.matrix_rank(cross, tol=1e-12 * math.sqrt(spread)) < P.n:
        return OrthogonalMatrix.identity(P.n)
    U, _, Vt = np.linalg.svd(cross)
    return OrthogonalMatrix(U @ Vt)


# ---------------------------------------------------------------------------
# Registration algorithms
# ---------------------------------------------------------------------------

def rwd_register(P: Embedding, Q: Embedding, init_R=None, max_iter: int = 50,
                 init_plan: Optional[TransportPlan] = None, max_size: Optional[int] = None,
                 rel_tol: float = 1e-12, discrete_init: bool = False) -> RegistrationResult:
    """Alternate Procrustes and exact transport until the energy stalls.

    The energy trace is non-increasing; a step that would raise it is rejected.
    Without ``init_R`` or ``init_plan`` the run starts from :func:`cold_start`.
    """
    _check_pair(P, Q)
    limit = create_solver_settings().exact_limit if max_size is None else max_size
    if P.size * Q.size > limit:
        raise SizeLimitExceeded(f"exact registration on {P.size}×{Q.size} exceeds the guard of {limit} cells")

    if init_plan is not None:
        R = procrustes(P, Q, init_plan).entries
    elif init_R is not None:
        R = _matrix(init_R)
    else:
        R = cold_start(P, Q, discrete_init=discrete_init).entries

    def solve(R):
        return ot_exact(squared_distances(P.matrix @ R, Q.matrix), P.measure, Q.measure, max_size=limit)

    plan, energy = solve(R)
    trace = [energy]
    for _ in range(max_iter):
        R_next = procrustes(P, Q, plan).entries
        plan_next, energy_next = solve(R_next)
        if energy_next > energy:
            logger.debug(f"RWD step rejected ({energy_next:.12g} > {energy:.12g})")
            break
        R, plan = R_next, plan_next
        trace.append(energy_next)
        if _converged(energy, energy_next, rel_tol):
            break
        energy = energy_next
    logger.info(f"RWD registration: E={trace[-1]:.6g} after {len(trace) - 1} iterations")
    return RegistrationResult(OrthogonalMatrix(R), plan, tuple(trace), plan_to_map(plan))


def rswd_eval(P: Embedding, Q: Embedding, R, dirs: DirectionSet) -> Tuple[float, List[TransportPlan]]:
    """Direction-averaged squared 1D transport cost after mapping P by R."""
    _check_pair(P, Q, dirs)
    plans = sliced_plans(P, Q, R, dirs)
    return plans.mean_cost, plans.as_plans()


def rswd_register_alternating(P: Embedding, Q: Embedding, dirs: DirectionSet,
                              config: Optional[CurvilinearConfig] = None,
                              init_R=None, discrete_init: bool = False) -> RegistrationResult:
    """Alternate the Cayley-curve R-step with a per-direction plan refresh.

    The Cayley curve keeps det R fixed, so a reflection is only reachable from a
    start that already has det = -1 (``discrete_init`` or an explicit ``init_R``).
    """
    _check_pair(P, Q, dirs)
    config = config or CurvilinearConfig()
    R = _matrix(init_R) if init_R is not None else cold_start(P, Q, dirs, discrete_init).entries
    plans = sliced_plans(P, Q, R, dirs)
    energy = plans.mean_cost
    trace = [energy]
    for k in range(config.max_outer):
        if energy <= 0:
            break
        objective = _FrozenObjective(P, Q, dirs, plans)
        R_next, _, steps = _curvilinear(objective, R, config)
        plans_next = sliced_plans(P, Q, R_next, dirs)
        energy_next = plans_next.mean_cost
        if energy_next > energy:
            logger.debug(f"outer step {k} rejected ({energy_next:.12g} > {energy:.12g})")
            break
        R, plans = R_next, plans_next
        trace.append(energy_next)
        logger.debug(f"outer step {k}: E={energy_next:.12g} after {steps} curvilinear steps")
        if steps == 0 or _converged(energy, energy_next, config.rel_tol):
            break
        energy = energy_next
    plan = plans.average()
    logger.info(f"Sliced registration (alternating): E={trace[-1]:.6g} after {len(trace) - 1} outer steps")
    return RegistrationResult(OrthogonalMatrix(R), plan, tuple(trace), plan_to_map(plan))


def empirical_register(P: Embedding, Q: Embedding, dirs: DirectionSet, init_R=None, max_iter: int = 20,
                       init_plan: Optional[TransportPlan] = None, rel_tol: float = 1e-10,
                       discrete_init: bool = False) -> RegistrationResult:
    """Alternate Procrustes on the averaged plan with averaged per-direction plans.

    With ``init_plan`` the first step is Procrustes on that plan; otherwise the
    first step builds the plan at ``init_R``.
    """
    _check_pair(P, Q, dirs)
    if max_iter < 1:
        raise DegenerateInput("empirical registration needs at least one iteration")
    if init_plan is not None:
        R = procrustes(P, Q, init_plan).entries
    elif init_R is not None:
        R = _matrix(init_R)
    else:
        R = cold_start(P, Q, dirs, discrete_init).entries

    trace: List[float] = []
    for k in range(max_iter):
        plan = sliced_plans(P, Q, R, dirs).average()
        energy = plan_energy(P.matrix, Q.matrix, R, plan)
        trace.append(energy)
        logger.debug(f"empirical step {k}: E={energy:.12g}")
        if len(trace) > 1 and _converged(trace[-2], energy, rel_tol):
            break
        if k == max_iter - 1 or energy <= 0:
            break
        R = procrustes(P, Q, plan).entries
    logger.info(f"Sliced registration (empirical): E={trace[-1]:.6g} after {len(trace)} plan steps")
    return RegistrationResult(OrthogonalMatrix(R), plan, tuple(trace), plan_to_map(plan))


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def sliced_distance(P: Embedding, Q: Embedding, dirs: DirectionSet) -> float:
    """Plain sliced-Wasserstein distance (R fixed to the identity)."""
    _check_pair(P, Q, dirs)
    return math.sqrt(max(sliced_plans(P, Q, np.eye(P.n), dirs).mean_cost, 0.0))


def rswd_distance(P: Embedding, Q: Embedding, dirs: DirectionSet, config: Optional[CurvilinearConfig] = None,
                  init_R=None, discrete_init: bool = False) -> Tuple[float, RegistrationResult]:
    result = rswd_register_alternating(P, Q, dirs, config, init_R, discrete_init)
    return math.sqrt(max(result.energy, 0.0)), result


def rwd_distance(P: Embedding, Q: Embedding, restarts: Optional[Iterable] = None,
                 max_iter: int = 50, max_size: Optional[int] = None) -> Tuple[float, RegistrationResult]:
    """Best exact registration over a set of starting matrices (signed permutations by default)."""
    _check_pair(P, Q)
    starts = list(restarts) if restarts is not None else list(signed_permutations(P.n))
    best: Optional[RegistrationResult] = None
    for R0 in starts:
        result = rwd_register(P, Q, init_R=R0, max_iter=max_iter, max_size=max_size)
        if best is None or result.energy < best.energy:
            best = result
    return math.sqrt(max(best.energy, 0.0)), best


# ---------------------------------------------------------------------------
# Multi-scale driver
# ---------------------------------------------------------------------------

def multiscale_register(P_levels: Sequence[Embedding], Q_levels: Sequence[Embedding],
                        schedule_cfg: Sequence[LevelSpec], seed: int = 0,
                        config: Optional[CurvilinearConfig] = None,
                        source: Optional[PointCloud] = None, target: Optional[PointCloud] = None,
                        max_size: Optional[int] = None, discrete_init: bool = False) -> RegistrationResult:
    """Register level by level, warm-starting each level from the previous one.

    Level j uses directions seeded with ``seed + j``. Level 0 starts cold, from
    the signed-permutation search when ``discrete_init`` is set. Later
    levels take R from the previous level's R in the top-left block of I_{n_j}
    and, for the plan-driven methods, start with Procrustes on the previous plan.
    """
    if not (len(P_levels) == len(Q_levels) == len(schedule_cfg)) or not schedule_cfg:
        raise DegenerateInput("embedding levels and schedule must have the same non-zero length")
    for j, (P, Q, spec) in enumerate(zip(P_levels, Q_levels, schedule_cfg)):
        if P.n != spec.n or Q.n != spec.n:
            raise DegenerateInput(f"level {j} expects dimension {spec.n}, got {P.n} and {Q.n}")
        if j and spec.n <= schedule_cfg[j - 1].n:
            raise DegenerateInput("schedule dimensions must be strictly increasing")
    config = config or CurvilinearConfig()
    score = source is not None and target is not None and source.has_triangles

    reports: List[LevelReport] = []
    result: Optional[RegistrationResult] = None
    for j, (P, Q, spec) in enumerate(zip(P_levels, Q_levels, schedule_cfg)):
        dirs = DirectionSet.generate(spec.direction_count, spec.n, seed + j)
        init_R = result.rotation.embedded(spec.n) if result else None
        init_plan = result.plan if result else None
        try:
            if spec.method == "empirical":
                result = empirical_register(P, Q, dirs, init_R, spec.iterations, init_plan=init_plan,
                                            discrete_init=discrete_init)
            elif spec.method == "alternating":
                result = rswd_register_alternating(P, Q, dirs, replace(config, max_outer=spec.iterations), init_R,
                                                   discrete_init)
            else:
                result = rwd_register(P, Q, init_R, spec.iterations, init_plan=init_plan, max_size=max_size,
                                      discrete_init=discrete_init)
        except Exception as e:
            logger.error(f"Failed to register level {j} (n={spec.n}): {str(e)}")
            raise
        quality = transfer_connectivity(source, target, result.correspondence).quality if score else None
        reports.append(LevelReport(spec.n, spec.direction_count, spec.method, len(result.energy_trace),
                                   result.energy_trace[0], result.energy, quality))
        logger.info(
            f"Level {j}: n={spec.n} L={spec.direction_count} {spec.method} "
            f"E {result.energy_trace[0]:.6g} -> {result.energy:.6g}"
            + (f", quality {quality:.3f}" if quality is not None else "")
        )
    return replace(result, scale_reports=tuple(reports))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_result(result: RegistrationResult, directory: Union[str, Path]) -> Dict[str, Path]:
    """Write rotation, plan, correspondence, energy trace and level reports as CSV."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Path] = {}

    paths["rotation.csv"] = directory / "rotation.csv"
    pd.DataFrame(result.rotation.entries).to_csv(paths["rotation.csv"], index=False, header=False,
                                                 float_format="%.17g")
    triples, marginals = write_plan(result.plan, directory)
    paths[triples.name], paths[marginals.name] = triples, marginals
    paths["correspondence.csv"] = write_correspondence(result.correspondence, directory / "correspondence.csv")

    paths["energy_trace.csv"] = directory / "energy_trace.csv"
    pd.DataFrame({"iteration": np.arange(len(result.energy_trace)), "energy": result.energy_trace}).to_csv(
        paths["energy_trace.csv"], index=False, float_format="%.17g")

    if result.scale_reports:
        paths["levels.csv"] = directory / "levels.csv"
        pd.DataFrame([vars(r) for r in result.scale_reports]).to_csv(
            paths["levels.csv"], index=False, float_format="%.17g")
    return paths
