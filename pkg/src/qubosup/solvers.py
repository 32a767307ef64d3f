"""Solvers for  optimize x^T Q x  over binary x.

Three backends ship: exhaustive enumeration (the oracle, capped at 25
variables), depth-first branch-and-bound with a per-variable optimistic
bound, and single-flip Metropolis annealing.  All report the objective of
the returned assignment recomputed against the original Q, and all handle
both senses through the duality  min over Q  ==  max over -Q.

The registry at the bottom is the seam for further backends.  Hardware
samplers (quantum annealers, QAOA-style circuit solvers) belong there once
an execution path exists; no placeholder pretends to be one in the
meantime.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

SENSES = ("maximize", "minimize")
EXHAUSTIVE_LIMIT = 25
_SYMMETRY_TOL = 1e-12
_PRUNE_SLACK = 1e-9


@dataclass(frozen=True)
class QuboProblem:
    """Symmetric coefficient matrix plus optimization sense."""

    q: np.ndarray
    sense: str = "maximize"

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"Q must be square, got shape {q.shape}")
        if q.size and np.max(np.abs(q - q.T)) > _SYMMETRY_TOL:
            raise ValueError(f"Q must be symmetric within {_SYMMETRY_TOL}")
        if self.sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {self.sense!r}")
        q.flags.writeable = False
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass
class QuboSolution:
    assignment: np.ndarray
    objective: float
    optimal: bool
    solve_time: float


@dataclass(frozen=True)
class AnnealingSchedule:
    """Geometric temperature ladder for the Metropolis solver."""

    t_initial: float = 2.0
    t_final: float = 0.01
    sweeps: int = 10_000

    def __post_init__(self) -> None:
        if self.t_initial <= 0 or self.t_final <= 0 or self.t_final > self.t_initial:
            raise ValueError(
                f"need 0 < t_final <= t_initial, got {self.t_final}, {self.t_initial}"
            )
        if self.sweeps < 1:
            raise ValueError(f"sweeps must be >= 1, got {self.sweeps}")


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "branch_and_bound"
    time_budget: float = 60.0
    seed: int | None = None
    schedule: AnnealingSchedule = field(default_factory=AnnealingSchedule)

    def __post_init__(self) -> None:
        if self.time_budget <= 0:
            raise ValueError(f"time_budget must be positive, got {self.time_budget}")


def qubo_objective(q: np.ndarray, assignment: np.ndarray) -> float:
    """Canonical objective evaluation; every solver reports through this."""
    x = np.asarray(assignment, dtype=np.float64)
    return float(x @ np.asarray(q, dtype=np.float64) @ x)


def _sense_matrix(problem: QuboProblem) -> np.ndarray:
    """Matrix whose maximization matches the problem's sense."""
    return problem.q if problem.sense == "maximize" else -problem.q


def solve_exhaustive(problem: QuboProblem) -> QuboSolution:
    """Enumerate all 2^n assignments.  Ties resolve to the lexicographically
    smallest assignment (x[0] most significant).  Refuses n > 25.
    """
    t0 = time.monotonic()
    n = problem.n
    if n > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"exhaustive enumeration capped at {EXHAUSTIVE_LIMIT} variables, got {n}"
        )
    if n == 0:
        return QuboSolution(np.zeros(0, dtype=np.uint8), 0.0, True, time.monotonic() - t0)

    qmax = _sense_matrix(problem)
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    best_val = -math.inf
    best_x: np.ndarray | None = None
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        stop = min(start + chunk, 1 << n)
        codes = np.arange(start, stop, dtype=np.uint64)
        bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.float64)
        vals = np.einsum("bi,ij,bj->b", bits, qmax, bits)
        k = int(np.argmax(vals))  # first max = lexicographically smallest here
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_x = bits[k].astype(np.uint8)
    assert best_x is not None
    # Report through the canonical evaluator so cross-solver comparisons see
    # one rounding, not two.
    objective = qubo_objective(problem.q, best_x)
    return QuboSolution(best_x, objective, True, time.monotonic() - t0)


def solve_branch_and_bound(
    problem: QuboProblem, config: SolverConfig | None = None
) -> QuboSolution:
    """Depth-first branch-and-bound.

    Variables fix in descending |diagonal| order.  At a node the bound adds
    the fixed contribution and, per free variable, max(0, best achievable
    marginal): its diagonal, its coupling into the fixed ones, and every
    positive coupling to other free variables.  Subtrees whose bound cannot
    beat the incumbent are cut.  On time-budget expiry the incumbent comes
    back with optimal=False; ties resolve to the lexicographically smallest
    assignment, matching the exhaustive oracle.
    """
    config = config or SolverConfig()
    t0 = time.monotonic()
    deadline = t0 + config.time_budget
    n = problem.n
    if n == 0:
        return QuboSolution(np.zeros(0, dtype=np.uint8), 0.0, True, time.monotonic() - t0)

    qmax = _sense_matrix(problem)
    diag_orig = np.diagonal(qmax)
    var_order = sorted(range(n), key=lambda i: (-abs(diag_orig[i]), i))
    var_order = np.array(var_order, dtype=np.int64)
    qp = qmax[np.ix_(var_order, var_order)]
    diag = np.diagonal(qp).copy()

    pos = np.maximum(qp, 0.0)
    np.fill_diagonal(pos, 0.0)
    # suffix[i, d] = sum of positive couplings from i into variables >= d
    suffix = np.zeros((n, n + 1), dtype=np.float64)
    for d in range(n - 1, -1, -1):
        suffix[:, d] = suffix[:, d + 1] + pos[:, d]

    best_x = np.zeros(n, dtype=np.uint8)  # all-zeros incumbent, objective 0
    best_cmp = qubo_objective(qmax, best_x)
    xp = np.zeros(n, dtype=np.uint8)
    coup = np.zeros((n + 1, n), dtype=np.float64)
    timed_out = False
    nodes = 0

    def assignment_original(xperm: np.ndarray) -> np.ndarray:
        x = np.zeros(n, dtype=np.uint8)
        x[var_order] = xperm
        return x

    def lex_smaller(a: np.ndarray, b: np.ndarray) -> bool:
        return a.tolist() < b.tolist()

    def dfs(d: int, val: float) -> None:
        nonlocal best_cmp, best_x, timed_out, nodes
        if timed_out:
            return
        nodes += 1
        if nodes % 2048 == 0 and time.monotonic() > deadline:
            timed_out = True
            return
        if d == n:
            x = assignment_original(xp)
            obj = qubo_objective(qmax, x)
            if obj > best_cmp or (obj == best_cmp and lex_smaller(x, best_x)):
                best_cmp = obj
                best_x = x
            return
        margins = diag[d:] + coup[d, d:] + suffix[d:, d]
        ub = val + float(np.maximum(margins, 0.0).sum())
        if ub < best_cmp - _PRUNE_SLACK:
            return
        one_first = margins[0] > 0.0
        for bit in (1, 0) if one_first else (0, 1):
            xp[d] = bit
            if bit == 1:
                coup[d + 1] = coup[d] + 2.0 * qp[d]
                dfs(d + 1, val + diag[d] + coup[d, d])
            else:
                coup[d + 1] = coup[d]
                dfs(d + 1, val)
        xp[d] = 0

    dfs(0, 0.0)
    objective = qubo_objective(problem.q, best_x)
    return QuboSolution(best_x, objective, not timed_out, time.monotonic() - t0)


def solve_annealing(problem: QuboProblem, config: SolverConfig) -> QuboSolution:
    """Single-flip Metropolis annealing over a geometric temperature ladder.

    Starts from all zeros and tracks the best assignment seen, so the result
    never scores worse than the empty selection.  Fully determined by the
    seed; optimal is always False.
    """
    if config.seed is None:
        raise ValueError("annealing requires an explicit seed")
    t0 = time.monotonic()
    n = problem.n
    if n == 0:
        return QuboSolution(np.zeros(0, dtype=np.uint8), 0.0, False, time.monotonic() - t0)

    qmax = _sense_matrix(problem)
    rng = np.random.default_rng(config.seed)
    sched = config.schedule
    sweeps = sched.sweeps
    ratio = sched.t_final / sched.t_initial

    rows = [row.tolist() for row in qmax]
    # field[i] = objective change of raising x[i] from 0 to 1 given current x
    fields = [rows[i][i] for i in range(n)]
    x = [0] * n
    cur = 0.0
    best = 0.0
    best_x = list(x)

    for k in range(sweeps):
        frac = k / (sweeps - 1) if sweeps > 1 else 1.0
        t = sched.t_initial * (ratio**frac)
        u = rng.random(n).tolist()
        for i in range(n):
            delta = fields[i] if x[i] == 0 else -fields[i]
            if delta >= 0.0 or u[i] < math.exp(delta / t):
                step = 1 - 2 * x[i]
                x[i] = 1 - x[i]
                cur += delta
                row = rows[i]
                two_step = 2.0 * step
                for j in range(n):
                    if j != i:
                        fields[j] += two_step * row[j]
                if cur > best:
                    best = cur
                    best_x = list(x)

    candidate = np.array(best_x, dtype=np.uint8)
    zeros = np.zeros(n, dtype=np.uint8)
    # Incremental bookkeeping drifts; settle against the canonical evaluator.
    if qubo_objective(qmax, candidate) < 0.0:
        candidate = zeros
    objective = qubo_objective(problem.q, candidate)
    return QuboSolution(candidate, objective, False, time.monotonic() - t0)


def _solve_annealing_entry(problem: QuboProblem, config: SolverConfig) -> QuboSolution:
    return solve_annealing(problem, config)


BACKENDS = {
    "exhaustive": lambda p, c: solve_exhaustive(p),
    "branch_and_bound": solve_branch_and_bound,
    "annealing": _solve_annealing_entry,
}


def register_backend(name: str, fn) -> None:
    """Install an additional backend under ``name``.

    The extension point for samplers this package does not ship, hardware
    ones included.  ``fn`` takes (problem, config) and returns a
    QuboSolution.
    """
    if name in BACKENDS:
        raise ValueError(f"backend {name!r} already registered")
    BACKENDS[name] = fn


def solve(problem: QuboProblem, config: SolverConfig | None = None) -> QuboSolution:
    """Dispatch to the configured backend."""
    config = config or SolverConfig()
    try:
        backend = BACKENDS[config.kind]
    except KeyError:
        raise ValueError(
            f"unknown solver kind {config.kind!r}; registered: {sorted(BACKENDS)}"
        ) from None
    return backend(problem, config)
