"""
Discrete Optimal Transport

Couplings between discrete probability measures under squared Euclidean cost.

Features:
- Closed-form 1D solver by sorting and prefix-sum interval intersection,
  batched over many projection directions at once
- Exact transportation simplex (northwest-corner start, stepping-stone pivots,
  Bland's rule) for small instances
- Plan algebra: soft/hard correspondences, interpolated images, energies
- CSV persistence of plans and correspondences

Author: SpectralReg
Version: 1.0.0
"""

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse

from .config import create_solver_settings, get_logger
from .exceptions import ConvergenceFailure, DegenerateInput, DimensionMismatch, ParseError, SizeLimitExceeded
from .geometry import Correspondence

logger = get_logger("Transport")

WEIGHT_TOL = 1e-12
MARGINAL_TOL = 1e-10
# largest (ℓ_X + ℓ_Y)·L block the batched 1D solver materializes at once
_BATCH_CELLS = 4_000_000


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling σ with marginals σ1 = μ^P and σᵀ1 = μ^Q."""
    entries: sparse.csr_matrix = field(repr=False)
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def __post_init__(self):
        entries = sparse.csr_matrix(self.entries)
        mu = np.asarray(self.row_marginal, dtype=float)
        nu = np.asarray(self.col_marginal, dtype=float)
        if entries.shape != (mu.size, nu.size):
            raise DimensionMismatch(f"plan shape {entries.shape} does not match marginals ({mu.size}, {nu.size})")
        if entries.nnz and entries.data.min() < 0:
            raise DegenerateInput("transport plan has negative entries")
        rows = np.asarray(entries.sum(axis=1)).ravel()
        cols = np.asarray(entries.sum(axis=0)).ravel()
        if np.abs(rows - mu).max(initial=0) > MARGINAL_TOL or np.abs(cols - nu).max(initial=0) > MARGINAL_TOL:
            raise DegenerateInput("transport plan marginals do not match")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "row_marginal", mu)
        object.__setattr__(self, "col_marginal", nu)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.entries.data))

    def cost(self, costs: np.ndarray) -> float:
        coo = self.entries.tocoo()
        return float(np.sum(coo.data * np.asarray(costs)[coo.row, coo.col]))


def _check_weights(weights, name: str) -> np.ndarray:
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.size == 0 or np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise DegenerateInput(f"{name}: weights must be finite and strictly positive")
    if abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise DegenerateInput(f"{name}: weights sum to {weights.sum()!r}, not 1")
    return weights


def product_plan(mu, nu) -> TransportPlan:
    """The independent coupling μ νᵀ (cold start)."""
    mu, nu = _check_weights(mu, "mu"), _check_weights(nu, "nu")
    return TransportPlan(sparse.csr_matrix(np.outer(mu, nu)), mu, nu)


# ---------------------------------------------------------------------------
# 1D transport
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlicedPlans:
    """Monotone couplings for L directions stored as one coordinate list.

    Entries are grouped by direction in ascending order.
    """
    direction: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    costs: np.ndarray  # per-direction transport cost
    shape: Tuple[int, int]
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @property
    def count(self) -> int:
        return self.costs.size

    @property
    def mean_cost(self) -> float:
        return float(self.costs.mean())

    def average(self) -> TransportPlan:
        """σ̄ = (1/L) Σ_l σ(θ_l)."""
        entries = sparse.csr_matrix((self.weights / self.count, (self.rows, self.cols)), shape=self.shape)
        return TransportPlan(entries, self.row_marginal, self.col_marginal)

    def as_plans(self) -> List[TransportPlan]:
        bounds = np.searchsorted(self.direction, np.arange(self.count + 1))
        plans = []
        for l in range(self.count):
            span = slice(bounds[l], bounds[l + 1])
            entries = sparse.csr_matrix((self.weights[span], (self.rows[span], self.cols[span])), shape=self.shape)
            plans.append(TransportPlan(entries, self.row_marginal, self.col_marginal))
        return plans


def _monotone_block(xs: np.ndarray, mu: np.ndarray, ys: np.ndarray, nu: np.ndarray):
    n_x, n_dirs = xs.shape
    order_x = np.argsort(xs, axis=0, kind="stable")
    order_y = np.argsort(ys, axis=0, kind="stable")
    # rounding can push an inner prefix sum past 1; clamp so the last cut is the largest
    s = np.minimum(np.cumsum(mu[order_x], axis=0), 1.0)
    h = np.minimum(np.cumsum(nu[order_y], axis=0), 1.0)
    s[-1, :] = 1.0
    h[-1, :] = 1.0

    # merge breakpoints; stable sort keeps s before h on ties (half-open intervals)
    stacked = np.vstack([s, h])
    order = np.argsort(stacked, axis=0, kind="stable")
    cuts = np.take_along_axis(stacked, order, axis=0)
    from_x = order < n_x
    rank_x = np.cumsum(from_x, axis=0) - from_x
    rank_y = np.cumsum(~from_x, axis=0) - ~from_x
    mass = np.diff(cuts, axis=0, prepend=0.0)

    keep = (mass > 0).T
    direction = np.broadcast_to(np.arange(n_dirs)[:, None], keep.shape)[keep]
    rank_x, rank_y = rank_x.T[keep], rank_y.T[keep]
    rows = order_x[rank_x, direction]
    cols = order_y[rank_y, direction]
    weights = mass.T[keep]
    residual = xs[rows, direction] - ys[cols, direction]
    costs = np.bincount(direction, weights=weights * residual ** 2, minlength=n_dirs)
    return direction, rows, cols, weights, costs


def sliced_couplings(xs: np.ndarray, mu, ys: np.ndarray, nu) -> SlicedPlans:
    """Optimal 1D couplings of the columns of ``xs`` (ℓ_X×L) and ``ys`` (ℓ_Y×L).

    Per column: sort both sides, build prefix sums s_i and h_j, and transport
    the mass of (s_{i-1}, s_i] ∩ (h_{j-1}, h_j] from sorted x_i to sorted y_j;
    the sorted plan is then un-permuted, σ[π_x(i), π_y(j)] = σ̂[i, j].
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if ys.ndim == 1:
        ys = ys[:, None]
    mu, nu = _check_weights(mu, "mu"), _check_weights(nu, "nu")
    if xs.shape[0] != mu.size or ys.shape[0] != nu.size or xs.shape[1] != ys.shape[1]:
        raise DimensionMismatch(f"projections {xs.shape}/{ys.shape} do not match weights ({mu.size}, {nu.size})")

    n_dirs = xs.shape[1]
    chunk = max(1, _BATCH_CELLS // (xs.shape[0] + ys.shape[0]))
    parts = []
    for start in range(0, n_dirs, chunk):
        stop = min(n_dirs, start + chunk)
        direction, rows, cols, weights, costs = _monotone_block(xs[:, start:stop], mu, ys[:, start:stop], nu)
        parts.append((direction + start, rows, cols, weights, costs))
    direction, rows, cols, weights, costs = (np.concatenate(p) for p in zip(*parts))
    return SlicedPlans(direction, rows, cols, weights, costs, (mu.size, nu.size), mu, nu)


def ot_1d(x, mu, y, nu) -> Tuple[TransportPlan, float]:
    """Exact 1D optimal transport under squared distance."""
    sliced = sliced_couplings(np.asarray(x, dtype=float).reshape(-1, 1), mu,
                              np.asarray(y, dtype=float).reshape(-1, 1), nu)
    return sliced.as_plans()[0], float(sliced.costs[0])


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------

def _northwest_corner(mu: np.ndarray, nu: np.ndarray) -> Dict[Tuple[int, int], float]:
    m, n = mu.size, nu.size
    supply, demand = mu.copy(), nu.copy()
    flow: Dict[Tuple[int, int], float] = {}
    i = j = 0
    while True:
        q = min(supply[i], demand[j])
        flow[(i, j)] = q
        supply[i] -= q
        demand[j] -= q
        if i == m - 1 and j == n - 1:
            return flow
        if (supply[i] <= 0 or j == n - 1) and i < m - 1:
            i += 1
        else:
            j += 1


def _potentials(costs: np.ndarray, row_adj, col_adj) -> Tuple[np.ndarray, np.ndarray]:
    m, n = costs.shape
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    queue = deque([(0, True)])
    while queue:
        node, is_row = queue.popleft()
        if is_row:
            for j in row_adj[node]:
                if np.isnan(v[j]):
                    v[j] = costs[node, j] - u[node]
                    queue.append((j, False))
        else:
            for i in col_adj[node]:
                if np.isnan(u[i]):
                    u[i] = costs[i, node] - v[node]
                    queue.append((i, True))
    return u, v


def _tree_path(row: int, col: int, row_adj, col_adj) -> List[Tuple[int, int]]:
    """Basic cells on the tree path from row node ``row`` to column node ``col``."""
    start, goal = (row, True), (col, False)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        index, is_row = node
        for other in (row_adj[index] if is_row else col_adj[index]):
            nxt = (other, not is_row)
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    cells = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        cells.append((prev[0], node[0]) if prev[1] else (node[0], prev[0]))
        node = prev
    return cells  # ordered from the column end back to the row end


def ot_exact(costs, mu, nu, max_size: Optional[int] = None) -> Tuple[TransportPlan, float]:
    """Exact optimal coupling by the transportation simplex.

    Starts from the northwest-corner basis and pivots along stepping-stone
    cycles. Entering and leaving cells are chosen by lowest index.
    """
    costs = np.asarray(costs, dtype=float)
    mu, nu = _check_weights(mu, "mu"), _check_weights(nu, "nu")
    if costs.shape != (mu.size, nu.size):
        raise DimensionMismatch(f"cost matrix {costs.shape} does not match weights ({mu.size}, {nu.size})")
    limit = create_solver_settings().exact_limit if max_size is None else max_size
    m, n = costs.shape
    if m * n > limit:
        raise SizeLimitExceeded(f"exact transport on {m}×{n} exceeds the guard of {limit} cells")

    flow = _northwest_corner(mu, nu)
    row_adj = [set() for _ in range(m)]
    col_adj = [set() for _ in range(n)]
    for i, j in flow:
        row_adj[i].add(j)
        col_adj[j].add(i)

    tol = 1e-12 * max(1.0, float(np.abs(costs).max(initial=0.0)))
    max_pivots = 100 * m * n + 1000
    pivots = 0
    while True:
        u, v = _potentials(costs, row_adj, col_adj)
        reduced = costs - u[:, None] - v[None, :]
        for i, j in flow:
            reduced[i, j] = 0.0
        candidates = np.flatnonzero(reduced.ravel() < -tol)
        if candidates.size == 0:
            break
        if pivots >= max_pivots:
            raise ConvergenceFailure(f"transportation simplex exceeded {max_pivots} pivots")
        ei, ej = divmod(int(candidates[0]), n)

        cycle = _tree_path(ei, ej, row_adj, col_adj)
        losing, gaining = cycle[0::2], cycle[1::2]
        theta = min(flow[c] for c in losing)
        leaving = min((c for c in losing if flow[c] == theta), key=lambda c: c[0] * n + c[1])
        for c in gaining:
            flow[c] += theta
        for c in losing:
            flow[c] -= theta
        del flow[leaving]
        row_adj[leaving[0]].discard(leaving[1])
        col_adj[leaving[1]].discard(leaving[0])
        flow[(ei, ej)] = theta
        row_adj[ei].add(ej)
        col_adj[ej].add(ei)
        pivots += 1

    cells = [(c, q) for c, q in sorted(flow.items()) if q > 0]
    rows = np.array([c[0] for c, _ in cells], dtype=np.int64)
    cols = np.array([c[1] for c, _ in cells], dtype=np.int64)
    values = np.array([q for _, q in cells])
    plan = TransportPlan(sparse.csr_matrix((values, (rows, cols)), shape=(m, n)), mu, nu)
    cost = float(np.sum(values * costs[rows, cols]))
    logger.debug(f"Transportation simplex {m}×{n}: {pivots} pivots, cost={cost:.12g}")
    return plan, cost


# ---------------------------------------------------------------------------
# Plan algebra
# ---------------------------------------------------------------------------

def plan_to_map(plan: TransportPlan) -> Correspondence:
    """Π = diag(1/μ^P) σ and its row argmax (ties to the lowest target index)."""
    soft = (sparse.diags(1.0 / plan.row_marginal) @ plan.entries).tocsr()
    coo = soft.tocoo()
    order = np.lexsort((coo.col, -coo.data, coo.row))
    rows = coo.row[order]
    first = np.ones(rows.size, dtype=bool)
    first[1:] = rows[1:] != rows[:-1]
    assignment = np.zeros(plan.shape[0], dtype=np.int64)
    assignment[rows[first]] = coo.col[order][first]
    return Correspondence(plan.shape[0], plan.shape[1], assignment, soft)


def interpolated_image(plan: TransportPlan, targets: np.ndarray) -> np.ndarray:
    """Row i is (1/μ_i) Σ_j σ_ij targets_j."""
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if targets.shape[0] != plan.shape[1]:
        raise DimensionMismatch(f"{targets.shape[0]} target rows for a plan with {plan.shape[1]} columns")
    return np.asarray(plan.entries @ targets) / plan.row_marginal[:, None]


def plan_energy(P: np.ndarray, Q: np.ndarray, R: np.ndarray, plan: TransportPlan) -> float:
    """E(R, σ) = Σ_ij σ_ij ‖p_i R − q_j‖²."""
    coo = plan.entries.tocoo()
    moved = np.asarray(P) @ np.asarray(R)
    diff = moved[coo.row] - np.asarray(Q)[coo.col]
    return float(np.sum(coo.data * np.einsum("ij,ij->i", diff, diff)))


def squared_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    x2 = (X ** 2).sum(axis=1)[:, None]
    y2 = (Y ** 2).sum(axis=1)[None, :]
    return np.maximum(x2 + y2 - 2.0 * X @ Y.T, 0.0)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_plan(plan: TransportPlan, directory: Union[str, Path], stem: str = "plan") -> Tuple[Path, Path]:
    """Write ``<stem>.csv`` (source, target, mass triples) and ``<stem>_marginals.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    coo = plan.entries.tocoo()
    order = np.lexsort((coo.col, coo.row))
    triples = pd.DataFrame({"source": coo.row[order], "target": coo.col[order], "mass": coo.data[order]})
    marginals = pd.DataFrame({
        "side": ["source"] * plan.shape[0] + ["target"] * plan.shape[1],
        "index": np.concatenate([np.arange(plan.shape[0]), np.arange(plan.shape[1])]),
        "mass": np.concatenate([plan.row_marginal, plan.col_marginal]),
    })
    triples_path = directory / f"{stem}.csv"
    marginals_path = directory / f"{stem}_marginals.csv"
    triples.to_csv(triples_path, index=False, float_format="%.17g")
    marginals.to_csv(marginals_path, index=False, float_format="%.17g")
    return triples_path, marginals_path


def read_plan(directory: Union[str, Path], stem: str = "plan") -> TransportPlan:
    directory = Path(directory)
    try:
        triples = pd.read_csv(directory / f"{stem}.csv")
        marginals = pd.read_csv(directory / f"{stem}_marginals.csv")
        mu = marginals.loc[marginals["side"] == "source"].sort_values("index")["mass"].to_numpy()
        nu = marginals.loc[marginals["side"] == "target"].sort_values("index")["mass"].to_numpy()
        entries = sparse.csr_matrix(
            (triples["mass"].to_numpy(), (triples["source"].to_numpy(), triples["target"].to_numpy())),
            shape=(mu.size, nu.size),
        )
    except (KeyError, ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"{directory}: unreadable plan ({e})") from e
    return TransportPlan(entries, mu, nu)


def write_correspondence(corr: Correspondence, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"source": np.arange(corr.source_size), "target": corr.assignment}).to_csv(path, index=False)
    return path


def read_correspondence(path: Union[str, Path], target_size: int) -> Correspondence:
    try:
        frame = pd.read_csv(path).sort_values("source")
        assignment = frame["target"].to_numpy(dtype=np.int64)
    except (KeyError, ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"{path}: unreadable correspondence ({e})") from e
    return Correspondence.from_assignment(assignment, target_size)
