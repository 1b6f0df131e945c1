"""Occupancy measures: exact solve, exact forward expansion, Monte Carlo.

The occupancy ``mu(s, a)`` is the expected discounted number of visits to
``(s, a)`` during one episode. All three routes return an ``OccupancyTable``;
``tail_bound`` bounds the mass missing because of truncation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg

from .errors import (
    EnumerationInfeasibleError,
    HorizonInsufficientError,
    NonFiniteOccupancyError,
    NumericalError,
    SchemaError,
    UsageError,
)
from .mdp import FiniteMdp
from .policy import MarkovianTable, Policy, simulate

SOLVE_RESIDUAL_TOL = 1e-10
ENUM_TOL = 1e-8
INVARIANT_TOL = 1e-9
PRUNE_FLOOR = 1e-15
RADIUS_MARGIN = 1e-9
MAX_STATES = 2000


@dataclass(frozen=True, eq=False)
class OccupancyTable:
    mu: np.ndarray
    tail_bound: float = 0.0
    depth: int | None = None  # enumeration depth reached, None for other routes

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        if mu.ndim != 2:
            raise ValueError("occupancy must be a |S|x|A| matrix")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "tail_bound", float(self.tail_bound))

    @property
    def state_marginal(self) -> np.ndarray:
        return self.mu.sum(axis=1)

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    def block_mass(self, mask: np.ndarray) -> float:
        return float(self.mu[np.asarray(mask, dtype=bool)].sum())

    def to_dict(self) -> dict[str, Any]:
        return {"mu": self.mu.tolist(), "tail_bound": self.tail_bound}

    @classmethod
    def from_dict(cls, d: Any, text: str | None = None) -> "OccupancyTable":
        from ._json import line_of

        if not isinstance(d, dict) or "mu" not in d:
            raise SchemaError("occupancy document needs a 'mu' matrix", 1 if text else None)
        try:
            mu = np.array(d["mu"], dtype=np.float64)
        except (TypeError, ValueError):
            raise SchemaError("'mu' must be a numeric matrix", line_of(text, "mu")) from None
        if mu.ndim != 2:
            raise SchemaError("'mu' must be a |S|x|A| matrix", line_of(text, "mu"))
        return cls(mu, float(d.get("tail_bound", 0.0)))


def reachable_states(mdp: FiniteMdp, state_matrix: np.ndarray) -> np.ndarray:
    """Boolean mask of states reachable from the support of ``p0``."""
    reach = mdp.p0_states > 0
    frontier = reach.copy()
    adj = state_matrix > 0
    while frontier.any():
        new = adj[frontier].any(axis=0) & ~reach
        reach |= new
        frontier = new
    return reach


def spectral_radius(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def _solve_flow(mdp: FiniteMdp, P: np.ndarray, residual_tol: float, label: str) -> np.ndarray:
    """State occupancy solving ``mu = p0 + gamma * P.T @ mu`` on reachable states."""
    S = mdp.num_states
    if S > MAX_STATES:
        raise UsageError(f"dense solve limited to {MAX_STATES} states")
    reach = reachable_states(mdp, P)
    mu = np.zeros(S)
    if not reach.any():
        return mu
    idx = np.flatnonzero(reach)
    Pr = P[np.ix_(idx, idx)]
    if mdp.gamma >= 1.0:
        rho = spectral_radius(mdp.gamma * Pr)
        if rho >= 1.0 - RADIUS_MARGIN:
            raise NonFiniteOccupancyError(
                f"non-finite occupancy for {label}: spectral radius {rho:.12g} at gamma={mdp.gamma}",
                spectral_radius=rho,
            )
    A = np.eye(idx.size) - mdp.gamma * Pr.T
    b = mdp.p0_states[idx]
    try:
        lu = scipy.linalg.lu_factor(A, check_finite=True)
        x = scipy.linalg.lu_solve(lu, b)
        # one step of iterative refinement
        x = x + scipy.linalg.lu_solve(lu, b - A @ x)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"singular occupancy system for {label}: {exc}") from None
    residual = float(np.max(np.abs(b - A @ x))) if np.all(np.isfinite(x)) else float("inf")
    if residual > residual_tol * max(1.0, float(np.max(np.abs(x)))):
        raise NumericalError(f"occupancy solve residual {residual:.3g} for {label}", residual)
    scale = max(1.0, float(np.max(np.abs(x))))
    if x.min() < -1e-12 * scale:
        raise NumericalError(f"negative occupancy {x.min():.3g} for {label}", residual)
    mu[idx] = np.maximum(x, 0.0)
    return mu


def occupancy_exact_markovian(
    mdp: FiniteMdp,
    policy: MarkovianTable,
    residual_tol: float = SOLVE_RESIDUAL_TOL,
) -> OccupancyTable:
    """Occupancy of a Markovian table by a direct dense linear solve.

    Raises ``NonFiniteOccupancyError`` when ``gamma == 1`` and the policy's
    state-transition matrix (restricted to reachable states) has spectral
    radius within ``RADIUS_MARGIN`` of 1.
    """
    if not isinstance(policy, MarkovianTable):
        raise UsageError("exact solve needs a MarkovianTable; use occupancy_enumerate")
    policy.check_dimensions(mdp)
    P = mdp.state_transition_matrix(policy.probs)
    mu_s = _solve_flow(mdp, P, residual_tol, "Markovian policy")
    return OccupancyTable(mu_s[:, None] * policy.probs, 0.0)


def occupancy_enumerate(
    mdp: FiniteMdp,
    policy: Policy,
    tol: float = ENUM_TOL,
    max_depth: int = 100_000,
    prune_floor: float = PRUNE_FLOOR,
    strict: bool = True,
) -> OccupancyTable:
    """Exact forward expansion of the discounted visit sum, truncated at ``tol``.

    Histories that agree on the mixture component and current state are
    merged at each depth: every policy in the family reads nothing else, so
    the merged nodes have identical futures. Node masses under
    ``prune_floor`` are dropped and charged to ``tail_bound``.

    With ``strict=False`` an unconverged expansion is returned (with its
    tail bound) instead of raising ``HorizonInsufficientError``.
    """
    policy.check_dimensions(mdp)
    S, A = mdp.shape
    g = mdp.gamma
    pairs = policy.components()
    comps = [p for _, p in pairs]
    mass = np.array([w for w, _ in pairs])[:, None] * mdp.p0_states[None, :]
    trans = mdp.transitions
    mu = np.zeros((S, A))
    pruned_credit = 0.0
    discount = 1.0  # g ** t
    for t in range(max_depth):
        tables = np.stack([c.table_at(t, S) for c in comps])
        sa = mass[:, :, None] * tables
        mu += discount * sa.sum(axis=0)
        mass = np.einsum("csa,sat->ct", sa, trans)
        small = (mass > 0) & (mass < prune_floor)
        next_discount = discount * g
        remaining = max(max_depth - (t + 1), 1)
        weight = next_discount / (1.0 - g) if g < 1.0 else float(remaining)
        if small.any():
            pruned_credit += float(mass[small].sum()) * weight
            mass[small] = 0.0
        surviving = float(mass.sum())
        tail = surviving * weight + pruned_credit if surviving > 0 else pruned_credit
        if tail <= tol or surviving == 0.0:
            return OccupancyTable(mu, tail, depth=t)
        discount = next_discount
    if strict:
        raise HorizonInsufficientError(
            f"tail bound {tail:.3g} > tol {tol:.3g} after {max_depth} steps", tail
        )
    return OccupancyTable(mu, tail, depth=max_depth - 1)


def occupancy_monte_carlo(
    mdp: FiniteMdp,
    policy: Policy,
    episodes: int,
    seed: int,
    horizon_cap: int = 10_000,
    workers: int = 1,
) -> tuple[OccupancyTable, np.ndarray]:
    """Sample-mean estimate of the occupancy with per-entry standard errors.

    Each episode contributes ``sum_t gamma**t * 1(S_t=s, A_t=a)``. The
    ``tail_bound`` of the estimate covers episodes cut at ``horizon_cap``.
    """
    if episodes < 1:
        raise UsageError("need at least one episode")
    S, A = mdp.shape
    batch = simulate(mdp, policy, episodes, seed, horizon_cap, workers=workers)
    weights = np.power(mdp.gamma, batch.t.astype(np.float64))
    cells = S * A
    per_episode = np.zeros((episodes, cells))
    # chunk the scatter to bound memory on large runs
    chunk = max(1, 2_000_000 // cells)
    for lo in range(0, episodes, chunk):
        hi = min(episodes, lo + chunk)
        sel = (batch.episode >= lo) & (batch.episode < hi)
        idx = (batch.episode[sel] - lo) * cells + batch.s[sel] * A + batch.a[sel]
        per_episode[lo:hi] = np.bincount(idx, weights[sel], minlength=(hi - lo) * cells).reshape(
            hi - lo, cells
        )
    mean = per_episode.mean(axis=0).reshape(S, A)
    if episodes >= 2:
        stderr = (per_episode.std(axis=0, ddof=1) / math.sqrt(episodes)).reshape(S, A)
    else:
        stderr = np.full((S, A), np.inf)
    frac_cut = float(batch.truncated.mean()) if episodes else 0.0
    if frac_cut == 0.0:
        tail = 0.0
    elif mdp.gamma < 1.0:
        tail = frac_cut * mdp.gamma**horizon_cap / (1.0 - mdp.gamma)
    else:
        tail = float("inf")
    return OccupancyTable(mean, tail), stderr


def performance_from_occupancy(mdp: FiniteMdp, mu: OccupancyTable) -> float:
    """Expected discounted return as the reward-weighted occupancy."""
    return float(np.sum(mdp.reward_mean * mu.mu))


def performance_error(mdp: FiniteMdp, mu: OccupancyTable) -> float:
    """Half-width of the return interval implied by the table's truncation."""
    return mdp.reward_bound * mu.tail_bound


def conservation_residual(mdp: FiniteMdp, mu: OccupancyTable) -> tuple[np.ndarray, float]:
    """``mu(s) - p0(s) - gamma * sum_{s', a} mu(s', a) p(s | s', a)`` for each state."""
    inflow = np.einsum("sa,sat->t", mu.mu, mdp.transitions)
    residual = mu.state_marginal - mdp.p0_states - mdp.gamma * inflow
    return residual, float(np.max(np.abs(residual))) if residual.size else 0.0


@dataclass
class FinitenessEntry:
    actions: tuple
    finite: bool
    total_mass: float | None


@dataclass
class FinitenessReport:
    uniformly_finite: bool
    entries: list = field(default_factory=list)
    witness: tuple | None = None
    num_actions: int = 0

    @property
    def witness_policy(self) -> MarkovianTable | None:
        if self.witness is None:
            return None
        return MarkovianTable(np.eye(self.num_actions)[list(self.witness)])

    def to_dict(self) -> dict[str, Any]:
        return {
            "uniformly_finite": self.uniformly_finite,
            "witness": list(self.witness) if self.witness is not None else None,
            "policies": [
                {"actions": list(e.actions), "finite": e.finite, "total_mass": e.total_mass}
                for e in self.entries
            ],
        }


def finiteness_check(mdp: FiniteMdp, limit: int = 10**6) -> FinitenessReport:
    """Check every deterministic Markovian policy for a finite occupancy.

    When all are finite, every policy on this MDP has a finite occupancy, which
    is what licenses undiscounted computations.
    """
    S, A = mdp.shape
    if A**S > limit:
        raise EnumerationInfeasibleError(f"{A}^{S} deterministic policies exceed limit {limit}")
    report = FinitenessReport(True, num_actions=A)
    eye = np.eye(A)
    for actions in itertools.product(range(A), repeat=S):
        table = MarkovianTable(eye[list(actions)])
        try:
            occ = occupancy_exact_markovian(mdp, table)
            finite = bool(np.all(np.isfinite(occ.mu)))
            mass = occ.total_mass if finite else None
        except (NonFiniteOccupancyError, NumericalError):
            finite, mass = False, None
        report.entries.append(FinitenessEntry(actions, finite, mass))
        if not finite and report.uniformly_finite:
            report.uniformly_finite = False
            report.witness = actions
    return report
