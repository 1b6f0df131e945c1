"""Markovianization: the Markovian policy ``mu(s, a) / mu(s)`` and its checks.

The projected policy reproduces the state-action occupancy (and therefore the
return) of the policy it was built from. The verifiers here compare the two
occupancies, test idempotence, and check that every trajectory prefix of
the original policy stays possible under the projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from .errors import InvariantViolationError, NonFiniteOccupancyError, TreeCapExceededError, UsageError
from .mdp import FiniteMdp
from .occupancy import (
    ENUM_TOL,
    OccupancyTable,
    finiteness_check,
    occupancy_enumerate,
    occupancy_exact_markovian,
    occupancy_monte_carlo,
    performance_from_occupancy,
    reachable_states,
)
from .policy import MarkovianTable, Policy

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    pi_tilde: MarkovianTable
    null_states: tuple
    source_mass: np.ndarray


def markovianize(mu: OccupancyTable, null_rule: str | int = "uniform") -> ProjectionResult:
    """Project an occupancy table onto a Markovian policy.

    States with zero occupancy get the ``null_rule`` row: ``"uniform"`` or a
    designated action index.
    """
    table = mu.mu
    if not np.all(np.isfinite(table)):
        raise InvariantViolationError("occupancy table has non-finite entries")
    if table.min(initial=0.0) < 0:
        s = int(np.argwhere(table < 0)[0][0])
        raise InvariantViolationError(f"negative occupancy at state {s}")
    S, A = table.shape
    if null_rule == "uniform":
        fill = np.full(A, 1.0 / A)
    elif isinstance(null_rule, (int, np.integer)) and 0 <= null_rule < A:
        fill = np.eye(A)[int(null_rule)]
    else:
        raise UsageError(f"null_rule must be 'uniform' or an action index, got {null_rule!r}")
    mass = table.sum(axis=1)
    support = mass > 0
    probs = np.empty_like(table)
    probs[support] = table[support] / mass[support, None]
    # renormalise to remove rounding drift
    probs[support] /= probs[support].sum(axis=1, keepdims=True)
    probs[~support] = fill
    null_states = tuple(int(s) for s in np.flatnonzero(~support))
    return ProjectionResult(MarkovianTable(probs), null_states, mass)


# -- occupancy and performance equivalence ----------------------------------


@dataclass
class EquivalenceReport:
    method: str
    max_abs_occupancy_gap: float
    performance_gap: float
    tol: float
    tail_bound: float
    stderr: float
    passed: bool
    gap: np.ndarray = field(repr=False)
    mu_policy: np.ndarray = field(repr=False)
    mu_projected: np.ndarray = field(repr=False)
    pi_tilde: np.ndarray = field(repr=False)
    performance_policy: float = 0.0
    performance_projected: float = 0.0

    @property
    def budget(self) -> float:
        """Entrywise gap allowance: ``tol + tail_bound + 4 * stderr``."""
        return self.tol + self.tail_bound + 4.0 * self.stderr

    def summary(self, name: str = "") -> str:
        status = "PASS" if self.passed else "FAIL"
        label = f"{name} " if name else ""
        return (
            f"{status} {label}method={self.method} max_gap={self.max_abs_occupancy_gap:.3e} "
            f"perf_gap={self.performance_gap:.3e} budget={self.budget:.3e}"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "method": self.method,
            "max_abs_occupancy_gap": self.max_abs_occupancy_gap,
            "performance_gap": self.performance_gap,
            "budget": {
                "tol": self.tol,
                "tail_bound": self.tail_bound,
                "stderr": self.stderr,
                "total": self.budget,
            },
            "performance": {"policy": self.performance_policy, "projected": self.performance_projected},
            "gap": self.gap,
            "mu_policy": self.mu_policy,
            "mu_projected": self.mu_projected,
            "pi_tilde": self.pi_tilde,
        }


def require_finite(mdp: FiniteMdp) -> None:
    """Undiscounted computations are only licensed on uniformly finite MDPs."""
    if mdp.gamma >= 1.0:
        report = finiteness_check(mdp)
        if not report.uniformly_finite:
            raise NonFiniteOccupancyError(
                f"gamma=1 and deterministic policy {report.witness} has non-finite occupancy",
                policy=report.witness_policy,
            )


def policy_occupancy(
    mdp: FiniteMdp,
    policy: Policy,
    method: str = "enumerate",
    enum_tol: float = ENUM_TOL,
    max_depth: int = 100_000,
    episodes: int = 100_000,
    seed: int = 0,
    horizon_cap: int = 10_000,
    workers: int = 1,
) -> tuple[OccupancyTable, float]:
    """Occupancy of an arbitrary policy and its max standard error (0 if exact)."""
    if method == "enumerate":
        return occupancy_enumerate(mdp, policy, tol=enum_tol, max_depth=max_depth), 0.0
    if method == "monte_carlo":
        table, stderr = occupancy_monte_carlo(mdp, policy, episodes, seed, horizon_cap, workers)
        return table, float(stderr.max()) if stderr.size else 0.0
    raise UsageError(f"unknown method '{method}' (enumerate | monte_carlo)")


def verify_occupancy_equivalence(
    mdp: FiniteMdp,
    policy: Policy,
    tol: float = 1e-7,
    method: str = "enumerate",
    null_rule: str | int = "uniform",
    **occupancy_kwargs,
) -> EquivalenceReport:
    """Compare the occupancy of ``policy`` with that of its projection.

    The policy side uses ``method``; the projection side is always an exact
    solve, so the budget is driven by the policy side's error only.
    """
    require_finite(mdp)
    mu_pi, stderr = policy_occupancy(mdp, policy, method=method, **occupancy_kwargs)
    proj = markovianize(mu_pi, null_rule)
    mu_tilde = occupancy_exact_markovian(mdp, proj.pi_tilde)
    gap = np.abs(mu_pi.mu - mu_tilde.mu)
    rho_pi = performance_from_occupancy(mdp, mu_pi)
    rho_tilde = performance_from_occupancy(mdp, mu_tilde)
    report = EquivalenceReport(
        method=method,
        max_abs_occupancy_gap=float(gap.max(initial=0.0)),
        performance_gap=abs(rho_pi - rho_tilde),
        tol=tol,
        tail_bound=mu_pi.tail_bound,
        stderr=stderr,
        passed=False,
        gap=gap,
        mu_policy=mu_pi.mu,
        mu_projected=mu_tilde.mu,
        pi_tilde=proj.pi_tilde.probs,
        performance_policy=rho_pi,
        performance_projected=rho_tilde,
    )
    report.passed = bool(
        report.max_abs_occupancy_gap <= report.budget
        and report.performance_gap <= mdp.reward_bound * report.budget
    )
    return report


class IdempotenceResult(NamedTuple):
    gap: float
    passed: bool
    excluded_states: tuple


def verify_idempotence(mdp: FiniteMdp, mu: OccupancyTable, tol: float = 1e-9) -> IdempotenceResult:
    """Project, re-solve, project again; compare the two projections on the support."""
    first = markovianize(mu)
    mu_tilde = occupancy_exact_markovian(mdp, first.pi_tilde)
    second = markovianize(mu_tilde)
    support = mu_tilde.state_marginal > 0
    diff = np.abs(second.pi_tilde.probs - first.pi_tilde.probs)[support]
    gap = float(diff.max(initial=0.0))
    excluded = tuple(int(s) for s in np.flatnonzero(~support))
    return IdempotenceResult(gap, gap <= tol, excluded)


def null_rule_sensitivity(mdp: FiniteMdp, mu: OccupancyTable) -> float | None:
    """Largest change of the projected occupancy over all null-state fills.

    Returns ``None`` (and logs) when some null state is reachable under the
    projection, in which case the fill genuinely matters and is not compared.
    """
    base = markovianize(mu)
    if not base.null_states:
        return 0.0
    P = mdp.state_transition_matrix(base.pi_tilde.probs)
    reach = reachable_states(mdp, P)
    hit = [s for s in base.null_states if reach[s]]
    if hit:
        log.warning("null states %s are reachable under the projection; null-rule check skipped", hit)
        return None
    ref = occupancy_exact_markovian(mdp, base.pi_tilde).mu
    worst = 0.0
    for a in range(mdp.num_actions):
        alt = occupancy_exact_markovian(mdp, markovianize(mu, a).pi_tilde).mu
        worst = max(worst, float(np.max(np.abs(alt[reach] - ref[reach]), initial=0.0)))
    return worst


# -- trajectory absolute continuity -----------------------------------------


def prefix_probability(mdp: FiniteMdp, policy: Policy, prefix: Sequence[int]) -> float:
    """Probability of the prefix ``s0, a0, s1, a1, ...`` (may end on a state or an action)."""
    total = 0.0
    S = mdp.num_states
    for w, comp in policy.components():
        p = w * mdp.p0[prefix[0]]
        for k in range(1, len(prefix)):
            if k % 2:  # action
                t, s, a = k // 2, prefix[k - 1], prefix[k]
                p *= comp.table_at(t, S)[s, a]
            else:
                p *= mdp.kernel[prefix[k - 2], prefix[k - 1], prefix[k]]
        total += p
    return float(total)


@dataclass
class SupportReport:
    t_max: int
    prob_floor: float
    checked: int
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "t_max": self.t_max,
            "prob_floor": self.prob_floor,
            "checked_prefixes": self.checked,
            "violations": [
                {"prefix": list(p), "policy_prob": pp, "projected_prob": qp} for p, pp, qp in self.violations
            ],
        }


def trajectory_support_check(
    mdp: FiniteMdp,
    policy: Policy,
    pi_tilde: MarkovianTable,
    t_max: int = 5,
    prob_floor: float = 1e-6,
    node_cap: int = 2_000_000,
) -> SupportReport:
    """Every prefix of ``t_max`` or fewer actions that ``policy`` produces with
    probability at least ``prob_floor`` must have positive probability under
    ``pi_tilde``.

    Prefixes are expanded layer by layer as arrays. A node carries its
    probability under each mixture component, so a prefix's probability
    under the policy is the sum over components.
    """
    policy.check_dimensions(mdp)
    pi_tilde.check_dimensions(mdp)
    S, A = mdp.shape
    pairs = policy.components()
    comps = [p for _, p in pairs]
    w = np.array([x for x, _ in pairs])
    trans = mdp.transitions
    # state-terminated nodes
    state = np.flatnonzero(mdp.p0_states > 0)
    pc = w[None, :] * mdp.p0_states[state, None]
    pt = mdp.p0_states[state].copy()
    parents: list[tuple[np.ndarray, np.ndarray]] = []  # per depth: (parent node, action)
    state_parents: list[tuple[np.ndarray, np.ndarray]] = [(np.full(state.size, -1), state)]
    checked = 0
    violations = []
    for t in range(t_max):
        tables = np.stack([c.table_at(t, S) for c in comps])  # C,S,A
        act_pc = pc[:, :, None] * tables[:, state, :].transpose(1, 0, 2)  # n,C,A
        act_pt = pt[:, None] * pi_tilde.probs[state]  # n,A
        prob = act_pc.sum(axis=1)
        node, action = np.nonzero(prob >= prob_floor)
        if node.size > node_cap:
            raise TreeCapExceededError(f"{node.size} prefixes at depth {t + 1} exceed cap {node_cap}")
        checked += node.size
        bad = act_pt[node, action] <= 0
        parents.append((node, action))
        for i in np.flatnonzero(bad):
            prefix = _rebuild(state_parents, parents, t, i)
            violations.append((prefix, float(prob[node[i], action[i]]), float(act_pt[node[i], action[i]])))
        if t == t_max - 1:
            break
        s_prev = state[node]
        nxt_pc = act_pc[node, :, action][:, :, None] * trans[s_prev, action][:, None, :]  # m,C,S
        nxt_pt = act_pt[node, action][:, None] * trans[s_prev, action]  # m,S
        nprob = nxt_pc.sum(axis=1)
        m, s_next = np.nonzero(nprob >= prob_floor)
        if m.size > node_cap:
            raise TreeCapExceededError(f"{m.size} prefixes at depth {t + 1} exceed cap {node_cap}")
        state_parents.append((m, s_next))
        state = s_next
        pc = nxt_pc[m, :, s_next]
        pt = nxt_pt[m, s_next]
    return SupportReport(t_max, prob_floor, checked, violations)


def _rebuild(state_parents, parents, depth, idx) -> tuple:
    out = []
    node, action = parents[depth]
    a_idx = idx
    for t in range(depth, -1, -1):
        node, action = parents[t]
        out.append(int(action[a_idx]))
        s_idx = node[a_idx]
        sp, st = state_parents[t]
        out.append(int(st[s_idx]))
        a_idx = sp[s_idx]
    return tuple(reversed(out))
