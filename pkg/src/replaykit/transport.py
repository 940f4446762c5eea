"""Optimal transport between instruction distributions under a cosine cost.

Task similarity is the Wasserstein distance between the two tasks'
instruction distributions, with ground cost ``1 - cos(u, v)`` between
instruction embeddings. The exact solver runs the transportation simplex
to LP optimality with Bland's rule (entering cell = first negative reduced
cost in row-major order, i.e. lowest row index then lowest column index),
so plans are reproducible. The Sinkhorn solver is the entropic
approximation, with a log-domain fallback when plain scaling leaves
floating-point range.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingTable, TaskDataset
from .errors import ValidationError

logger = logging.getLogger(__name__)

MARGINAL_TOL = 1e-9
# scaling factors outside this range force the log-domain path
_SCALE_LO = 1e-300
_SCALE_HI = 1e300
_REDUCED_COST_TOL = 1e-12


def _unit(u: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        raise ValidationError("cosine distance undefined for all-zero vector")
    return u / norm


def cosine_distance(u, v) -> float:
    """Cosine distance ``1 - cos(u, v)``, clamped to [0, 2].

    Computed as half the squared chord between the normalized vectors,
    which is algebraically identical but returns exactly 0.0 when both
    arguments normalize to the same floats.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValidationError(f"vector shapes differ: {u.shape} vs {v.shape}")
    d = 0.5 * float(np.sum((_unit(u) - _unit(v)) ** 2))
    return min(2.0, max(0.0, d))


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise cosine distances between two instruction lists."""

    entries: np.ndarray
    row_keys: tuple[str, ...]
    col_keys: tuple[str, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def cost_matrix(keys_a, keys_b, emb: EmbeddingTable) -> CostMatrix:
    """Cost matrix with entry (a, b) = cosine_distance(emb(a), emb(b)).

    Key order is preserved as given (histogram insertion order at the call
    sites). Missing embeddings raise naming the offending key.
    """
    keys_a = tuple(keys_a)
    keys_b = tuple(keys_b)
    rows = np.stack([_unit(emb.lookup(k)) for k in keys_a]) if keys_a else np.zeros((0, emb.dim))
    cols = np.stack([_unit(emb.lookup(k)) for k in keys_b]) if keys_b else np.zeros((0, emb.dim))
    entries = np.zeros((len(keys_a), len(keys_b)))
    for i in range(len(keys_a)):
        entries[i, :] = 0.5 * np.sum((cols - rows[i]) ** 2, axis=1)
    np.clip(entries, 0.0, 2.0, out=entries)
    return CostMatrix(entries=entries, row_keys=keys_a, col_keys=keys_b)


@dataclass(frozen=True)
class TransportPlan:
    """An optimal coupling and its cost."""

    plan: np.ndarray
    value: float


def _validate_marginals(mu_a, mu_b, cost: CostMatrix) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(mu_a, dtype=np.float64)
    b = np.asarray(mu_b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValidationError("marginals must be 1-d")
    if cost.entries.shape != (a.size, b.size):
        raise ValidationError(
            f"cost matrix {cost.entries.shape} incompatible with marginals ({a.size}, {b.size})"
        )
    if np.any(a < 0) or np.any(b < 0):
        raise ValidationError("marginals must be nonnegative")
    if abs(a.sum() - 1.0) > MARGINAL_TOL or abs(b.sum() - 1.0) > MARGINAL_TOL:
        raise ValidationError(
            f"marginals must sum to 1 within {MARGINAL_TOL}; got {a.sum()!r} and {b.sum()!r}"
        )
    return a, b


def _northwest_basis(a: np.ndarray, b: np.ndarray) -> dict[tuple[int, int], float]:
    """Initial basic feasible solution with exactly m + n - 1 basic cells."""
    m, n = a.size, b.size
    arem = a.copy()
    brem = b.copy()
    flow: dict[tuple[int, int], float] = {}
    i = j = 0
    while True:
        x = min(arem[i], brem[j])
        flow[(i, j)] = float(x)
        arem[i] -= x
        brem[j] -= x
        if i == m - 1 and j == n - 1:
            break
        # cross out exactly one line per step; ties keep a degenerate zero cell
        if (arem[i] <= brem[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return flow


def _potentials(basis, cost: np.ndarray, m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Solve u_i + v_j = c_ij over the basis tree (row node 0 rooted at 0)."""
    adj: list[list[tuple[int, int, int]]] = [[] for _ in range(m + n)]
    for (i, j) in basis:
        adj[i].append((m + j, i, j))
        adj[m + j].append((i, i, j))
    u = np.zeros(m)
    v = np.zeros(n)
    seen = [False] * (m + n)
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for nxt, i, j in adj[node]:
            if seen[nxt]:
                continue
            seen[nxt] = True
            if nxt >= m:
                v[j] = cost[i, j] - u[i]
            else:
                u[i] = cost[i, j] - v[j]
            stack.append(nxt)
    return u, v


def _cycle_cells(basis, enter_i: int, enter_j: int, m: int) -> list[tuple[int, int]]:
    """Basis cells on the tree path from row node enter_i to column node enter_j.

    Together with the entering cell they form the pivot cycle; cells at even
    positions of the returned path carry the minus sign.
    """
    adj: dict[int, list[tuple[int, tuple[int, int]]]] = {}
    for (i, j) in basis:
        adj.setdefault(i, []).append((m + j, (i, j)))
        adj.setdefault(m + j, []).append((i, (i, j)))
    start, goal = enter_i, m + enter_j
    parent: dict[int, tuple[int, tuple[int, int]]] = {start: (-1, (-1, -1))}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nxt, cell in adj.get(node, []):
            if nxt not in parent:
                parent[nxt] = (node, cell)
                stack.append(nxt)
    path: list[tuple[int, int]] = []
    node = goal
    while node != start:
        prev, cell = parent[node]
        path.append(cell)
        node = prev
    path.reverse()
    return path


def _transport_simplex(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> np.ndarray:
    m, n = a.size, b.size
    basis = _northwest_basis(a, b)
    max_pivots = 10000 + 50 * m * n
    for _ in range(max_pivots):
        u, v = _potentials(basis, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        for cell in basis:
            reduced[cell] = 0.0
        negatives = np.argwhere(reduced < -_REDUCED_COST_TOL)
        if negatives.size == 0:
            plan = np.zeros((m, n))
            for (i, j), x in basis.items():
                plan[i, j] = x
            return plan
        enter = (int(negatives[0][0]), int(negatives[0][1]))
        path = _cycle_cells(basis, enter[0], enter[1], m)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(basis[c] for c in minus)
        leaving = min(c for c in minus if basis[c] == theta)
        for c in minus:
            basis[c] -= theta
        for c in plus:
            basis[c] += theta
        basis[enter] = theta
        del basis[leaving]
    raise ValidationError("transportation simplex exceeded pivot limit; inputs ill-conditioned")


def exact_wasserstein(mu_a, mu_b, cost: CostMatrix) -> TransportPlan:
    """Optimal plan of the discrete transportation LP.

    Zero-mass marginal entries are dropped before solving and reinserted as
    zero rows/columns of the plan.
    """
    a, b = _validate_marginals(mu_a, mu_b, cost)
    ia = np.flatnonzero(a > 0.0)
    ib = np.flatnonzero(b > 0.0)
    sub_a = a[ia] / a[ia].sum()
    sub_b = b[ib] / b[ib].sum()
    sub_cost = cost.entries[np.ix_(ia, ib)]
    sub_plan = _transport_simplex(sub_a, sub_b, sub_cost)
    plan = np.zeros_like(cost.entries)
    plan[np.ix_(ia, ib)] = sub_plan
    value = float(np.sum(plan * cost.entries))
    return TransportPlan(plan=plan, value=value)


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    converged: bool
    iterations: int
    used_log_domain: bool


def _logsumexp(mat: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(mat, axis=axis, keepdims=True)
    return mx.squeeze(axis=axis) + np.log(np.sum(np.exp(mat - mx), axis=axis))


def _sinkhorn_log(a, b, cost, epsilon, tol, max_iter):
    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        f = epsilon * (log_a - _logsumexp((g[None, :] - cost) / epsilon, axis=1))
        g = epsilon * (log_b - _logsumexp((f[:, None] - cost) / epsilon, axis=0))
        plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
        err = float(np.abs(plan.sum(axis=1) - a).sum() + np.abs(plan.sum(axis=0) - b).sum())
        if err <= tol:
            converged = True
            break
    plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
    return plan, converged, it


def sinkhorn_wasserstein(
    mu_a,
    mu_b,
    cost: CostMatrix,
    epsilon: float | None = None,
    tol: float = 1e-9,
    max_iter: int = 10000,
) -> SinkhornResult:
    """Entropic-regularized transport cost ``<plan_eps, cost>``.

    ``epsilon`` defaults to 1e-2 times the mean cost over the active
    support. Plain scaling iterations switch to the log-domain formulation
    whenever a scaling factor leaves [1e-300, 1e300] or turns non-finite.
    Non-convergence within ``max_iter`` is reported via the flag, not an
    exception.
    """
    a, b = _validate_marginals(mu_a, mu_b, cost)
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    ia = np.flatnonzero(a > 0.0)
    ib = np.flatnonzero(b > 0.0)
    sub_a = a[ia] / a[ia].sum()
    sub_b = b[ib] / b[ib].sum()
    sub_cost = cost.entries[np.ix_(ia, ib)]
    if epsilon is None:
        mean_cost = float(sub_cost.mean())
        if mean_cost == 0.0:
            # all ground costs vanish; every feasible plan is optimal
            return SinkhornResult(value=0.0, converged=True, iterations=0, used_log_domain=False)
        epsilon = 1e-2 * mean_cost
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")

    kernel = np.exp(-sub_cost / epsilon)
    use_log = bool(np.any(kernel.sum(axis=1) == 0.0) or np.any(kernel.sum(axis=0) == 0.0))
    plan = None
    converged = False
    iterations = 0
    if not use_log:
        u = np.ones(sub_a.size)
        v = np.ones(sub_b.size)
        for iterations in range(1, max_iter + 1):
            u = sub_a / (kernel @ v)
            v = sub_b / (kernel.T @ u)
            scales = (u, v)
            if any(
                not np.all(np.isfinite(s))
                or np.any(np.abs(s) > _SCALE_HI)
                or np.any((s != 0) & (np.abs(s) < _SCALE_LO))
                for s in scales
            ):
                use_log = True
                break
            row_marg = u * (kernel @ v)
            err = float(np.abs(row_marg - sub_a).sum())
            if err <= tol:
                converged = True
                break
        if not use_log:
            plan = u[:, None] * kernel * v[None, :]
    if use_log:
        plan, converged, iterations = _sinkhorn_log(
            sub_a, sub_b, sub_cost, epsilon, tol, max_iter
        )
    value = float(np.sum(plan * sub_cost))
    return SinkhornResult(
        value=value, converged=converged, iterations=iterations, used_log_domain=use_log
    )


def task_distance(
    task_a: TaskDataset,
    task_b: TaskDataset,
    emb: EmbeddingTable,
    mode: str = "real",
    method: str = "exact",
    epsilon: float | None = None,
    tol: float = 1e-9,
    max_iter: int = 10000,
) -> float:
    """Wasserstein distance between two tasks' instruction distributions.

    ``mode="real"`` uses the empirical instruction histograms as marginals;
    ``mode="uniform"`` puts 1/n on each distinct instruction. Instructions
    are ordered canonically (sorted) and the task pair is oriented
    canonically before solving, so the exact method is bitwise symmetric
    and invariant to instruction order.
    """
    if mode not in ("real", "uniform"):
        raise ValidationError(f"unknown mode {mode!r}; expected 'real' or 'uniform'")
    if method not in ("exact", "sinkhorn"):
        raise ValidationError(f"unknown method {method!r}; expected 'exact' or 'sinkhorn'")
    if task_a.size == 0 or task_b.size == 0:
        raise ValidationError("task_distance requires non-empty tasks")

    def sort_key(task: TaskDataset):
        return (task.task_id, tuple(sorted(task.histogram)))

    if sort_key(task_b) < sort_key(task_a):
        task_a, task_b = task_b, task_a

    keys_a = sorted(task_a.histogram)
    keys_b = sorted(task_b.histogram)
    if mode == "real":
        mu_a = np.array([task_a.histogram[k] for k in keys_a])
        mu_b = np.array([task_b.histogram[k] for k in keys_b])
    else:
        mu_a = np.full(len(keys_a), 1.0 / len(keys_a))
        mu_b = np.full(len(keys_b), 1.0 / len(keys_b))
    cost = cost_matrix(keys_a, keys_b, emb)
    if method == "exact":
        return exact_wasserstein(mu_a, mu_b, cost).value
    return sinkhorn_wasserstein(
        mu_a, mu_b, cost, epsilon=epsilon, tol=tol, max_iter=max_iter
    ).value
