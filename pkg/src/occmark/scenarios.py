"""Named constructions, counterexamples, random corpora and the suite runner."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .errors import NonFiniteOccupancyError, UsageError
from .mdp import FiniteMdp, validate_mdp
from .occupancy import (
    INVARIANT_TOL,
    OccupancyTable,
    conservation_residual,
    occupancy_enumerate,
    occupancy_exact_markovian,
)
from .offline import bias_experiment
from .policy import MarkovianTable, Mixture, Policy, Scripted, TimeDependentTable, make_mixture, sample_episode
from .projection import (
    markovianize,
    trajectory_support_check,
    verify_idempotence,
    verify_occupancy_equivalence,
)

log = logging.getLogger(__name__)


# -- MDP builders -------------------------------------------------------------


def loop_exit_mdp(gamma: float, loop_reward: float = 0.0, exit_reward: float = 1.0) -> FiniteMdp:
    """One state; action 0 loops back, action 1 terminates."""
    return FiniteMdp(
        num_states=1,
        num_actions=2,
        p0=[1.0, 0.0],
        kernel=[[[1.0, 0.0], [0.0, 1.0]]],
        reward_mean=[[loop_reward, exit_reward]],
        reward_bound=max(abs(loop_reward), abs(exit_reward)),
        gamma=gamma,
    )


def two_loop_mdp(gamma: float) -> FiniteMdp:
    """One state where both actions loop; episodes never end."""
    return FiniteMdp(1, 2, [1.0, 0.0], [[[1.0, 0.0], [1.0, 0.0]]], [[1.0, 0.0]], 1.0, gamma)


def chain_mdp(gamma: float = 1.0) -> FiniteMdp:
    """Two states; every action moves 0 -> 1 -> terminal."""
    kernel = [[[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]]
    return FiniteMdp(2, 2, [1.0, 0.0, 0.0], kernel, [[0.0, 1.0], [1.0, 0.0]], 1.0, gamma)


# -- scenarios ----------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    mdp: FiniteMdp
    policy: Policy
    expected: dict = field(default_factory=dict)  # "mu", "pi_tilde" as nested lists
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def scenario_loop_terminal(n: int, gamma: float) -> Scenario:
    """Loop ``n`` times then exit; expected values are the closed forms."""
    if n < 1 or not 0.0 <= gamma < 1.0:
        raise UsageError("need n >= 1 and gamma in [0, 1)")
    loops = sum(gamma**t for t in range(n))
    exit_ = gamma**n
    visits = loops + exit_
    return Scenario(
        f"loop_terminal(n={n},gamma={gamma})",
        loop_exit_mdp(gamma),
        Scripted("loop_then_exit", {"n": n}),
        expected={"mu": [[loops, exit_]], "pi_tilde": [[loops / visits, exit_ / visits]]},
        params={"n": n, "gamma": gamma},
    )


def scenario_mixture_loop_exit(gamma: float = 0.5) -> Scenario:
    policy = make_mixture(
        [Scripted("loop_then_exit", {"n": 1}), Scripted("constant", {"action": 1})], [0.5, 0.5]
    )
    mu = [0.5, 0.5 * gamma + 0.5]
    return Scenario(
        f"mixture_loop_exit(gamma={gamma})",
        loop_exit_mdp(gamma),
        policy,
        expected={"mu": [mu], "pi_tilde": [[mu[0] / sum(mu), mu[1] / sum(mu)]]},
        params={"gamma": gamma},
    )


def scenario_markovian_loop(theta: float = 0.5, gamma: float = 0.5) -> Scenario:
    denom = 1.0 - theta * gamma
    return Scenario(
        f"markovian_loop(theta={theta},gamma={gamma})",
        loop_exit_mdp(gamma),
        MarkovianTable([[theta, 1.0 - theta]]),
        expected={"mu": [[theta / denom, (1.0 - theta) / denom]], "pi_tilde": [[theta, 1.0 - theta]]},
        params={"theta": theta, "gamma": gamma},
    )


def _epoch_series_mu(gamma: float) -> list:
    # direct discounted sum over the epoch schedule, cut where gamma**t underflows 1e-18
    policy = Scripted("alternating_epochs")
    mu = [0.0, 0.0]
    t, w = 0, 1.0
    while w > 1e-18:
        mu[int(np.argmax(policy.action_vector(t)))] += w
        t, w = t + 1, w * gamma
    return [mu]


def scenario_alternating_epochs(gamma: float = 0.9) -> Scenario:
    return Scenario(
        f"alternating_epochs(gamma={gamma})",
        two_loop_mdp(gamma),
        Scripted("alternating_epochs"),
        expected={"mu": _epoch_series_mu(gamma)},
        tolerances={"expected": 1e-8},
        params={"gamma": gamma},
    )


def scenario_unmatchable_target(gamma: float = 0.9) -> Scenario:
    """Uniform first action, then loop forever; discounted so it is finite."""
    a1 = 0.5 + 0.5 * gamma / (1.0 - gamma)
    return Scenario(
        f"unmatchable_target(gamma={gamma})",
        loop_exit_mdp(gamma),
        Scripted("uniform_then", {"action": 0}),
        expected={"mu": [[a1, 0.5]], "pi_tilde": [[a1 / (a1 + 0.5), 0.5 / (a1 + 0.5)]]},
        tolerances={"expected": 1e-8},
        params={"gamma": gamma},
    )


def scenario_chain_time_dependent() -> Scenario:
    """Undiscounted but uniformly finite: exercises the gamma = 1 path."""
    tables = np.array([[[0.25, 0.75], [0.5, 0.5]], [[1.0, 0.0], [0.1, 0.9]]])
    policy = TimeDependentTable(tables, MarkovianTable([[0.5, 0.5], [0.5, 0.5]]))
    return Scenario(
        "chain_time_dependent(gamma=1)",
        chain_mdp(1.0),
        policy,
        expected={"mu": [[0.25, 0.75], [0.1, 0.9]]},
    )


SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "loop_terminal": scenario_loop_terminal,
    "mixture_loop_exit": scenario_mixture_loop_exit,
    "markovian_loop": scenario_markovian_loop,
    "alternating_epochs": scenario_alternating_epochs,
    "unmatchable_target": scenario_unmatchable_target,
    "chain_time_dependent": scenario_chain_time_dependent,
}


def build_scenario(name: str, params: dict | None = None) -> Scenario:
    if name not in SCENARIOS:
        raise UsageError(f"unknown scenario '{name}'; known: {sorted(SCENARIOS)}")
    return SCENARIOS[name](**(params or {}))


def default_scenarios() -> list[Scenario]:
    out = [scenario_loop_terminal(n, g) for n in (1, 3, 10) for g in (0.5, 0.9, 0.99)]
    out += [
        scenario_mixture_loop_exit(0.5),
        scenario_markovian_loop(0.5, 0.5),
        scenario_alternating_epochs(0.9),
        scenario_unmatchable_target(0.9),
        scenario_chain_time_dependent(),
    ]
    return out


# -- counterexamples ------------------------------------------------------------


def epoch_a1_count(T: int) -> int:
    """Number of action-0 plays in ``[0, T)`` for ``T`` a power of two, by epoch arithmetic."""
    k = T.bit_length() - 1
    return 1 + sum(2**i for i in range(0, k, 2))


def counterexample_alternating_epochs(max_T: int = 2**16, gamma_check: float = 0.9) -> dict[str, Any]:
    """Action-0 frequency along the epoch policy on the two-loop MDP at gamma = 1.

    The frequency at ``T = 2**k`` oscillates between about 2/3 (``k`` odd, an
    action-0 epoch just ended) and 1/3 (``k`` even), so the undiscounted ratio
    has no limit. At ``gamma_check < 1`` the same policy is projected normally.
    """
    if max_T < 16:
        raise UsageError("max_T must be at least 16")
    traj = sample_episode(two_loop_mdp(1.0), Scripted("alternating_epochs"), 0, horizon_cap=max_T)
    plays = np.cumsum(np.array(traj.actions) == 0)
    series = []
    k = 1
    while 2**k <= max_T:
        T = 2**k
        series.append({"T": T, "ratio": float(plays[T - 1]) / T, "epoch_ended": k - 1})
        k += 1
    tail = [p for p in series if p["T"] >= 8]
    highs = [p["ratio"] for p in tail if p["epoch_ended"] % 2 == 0]
    lows = [p["ratio"] for p in tail if p["epoch_ended"] % 2 == 1]
    limsup, liminf = min(highs), max(lows)
    check = verify_occupancy_equivalence(two_loop_mdp(gamma_check), Scripted("alternating_epochs"), tol=1e-7, enum_tol=1e-9)
    mu = check.mu_policy[0]
    return {
        "name": "alternating_epochs",
        "series": series,
        "limsup_estimate": limsup,
        "liminf_estimate": liminf,
        "oscillation": limsup - liminf,
        "holds": bool(limsup - liminf >= 0.25),
        "discounted_check": {
            "gamma": gamma_check,
            "ratio": float(mu[0] / mu.sum()),
            "equivalence_pass": check.passed,
            "max_abs_occupancy_gap": check.max_abs_occupancy_gap,
        },
    }


def _rational_markov_occupancy(theta: Fraction) -> tuple[Fraction, Fraction]:
    """Exact undiscounted occupancy of ``(theta, 1 - theta)`` on the loop/exit MDP."""
    import sympy

    # mu(s) = 1 + theta * mu(s): one-state flow equation solved over the rationals
    A = sympy.Matrix([[1 - sympy.Rational(theta)]])
    (mu_s,) = A.LUsolve(sympy.Matrix([[1]]))
    mu_s = Fraction(int(mu_s.p), int(mu_s.q))
    return mu_s * theta, mu_s * (1 - theta)


def counterexample_unmatchable(theta_grid: Sequence[float] = tuple(i / 100 for i in range(101))) -> dict[str, Any]:
    """No Markovian policy matches the undiscounted occupancy of "uniform, then loop".

    The target has ``mu(s, a2) = 1/2``. Every Markovian ``theta < 1`` gives
    ``mu(s, a2) = 1`` and ``theta = 1`` has no finite occupancy (refused).
    Values are checked with the floating solver and recomputed exactly over
    the rationals; the reported gap uses the exact values.
    """
    if not len(theta_grid):
        raise UsageError("theta grid must be nonempty")
    mdp = loop_exit_mdp(1.0)
    target = occupancy_enumerate(mdp, Scripted("uniform_then", {"action": 0}), max_depth=64, strict=False)
    target_a2 = Fraction(float(target.mu[0, 1]))
    rows = []
    gaps = []
    for theta in theta_grid:
        row: dict[str, Any] = {"theta": float(theta)}
        try:
            occ = occupancy_exact_markovian(mdp, MarkovianTable([[theta, 1.0 - theta]]))
        except NonFiniteOccupancyError as exc:
            row.update(refused=True, reason=str(exc), mu_a1=None, mu_a2=None, mu_a2_float=None)
        else:
            a1, a2 = _rational_markov_occupancy(Fraction(theta))
            row.update(
                refused=False,
                mu_a1=float(a1),
                mu_a2=float(a2),
                mu_a2_float=float(occ.mu[0, 1]),
                mu_a1_float=float(occ.mu[0, 0]),
            )
            gaps.append(abs(a2 - target_a2))
        rows.append(row)
    min_gap = min(gaps) if gaps else None
    return {
        "name": "unmatchable",
        "target": {
            "mu_a2": float(target_a2),
            "mu_a1_partial": float(target.mu[0, 0]),
            "mu_a1_depth": target.depth,
            "note": "mu(s, a1) grows without bound with the enumeration depth",
        },
        "grid": rows,
        "min_gap": float(min_gap) if min_gap is not None else None,
        "holds": bool(min_gap == Fraction(1, 2)) and any(r["refused"] for r in rows if r["theta"] == 1.0)
        if 1.0 in [float(t) for t in theta_grid]
        else bool(min_gap == Fraction(1, 2)),
    }


COUNTEREXAMPLES: dict[str, Callable[..., dict]] = {
    "alternating_epochs": counterexample_alternating_epochs,
    "unmatchable": counterexample_unmatchable,
}


# -- random corpus ------------------------------------------------------------


@dataclass(frozen=True)
class CorpusLimits:
    max_states: int = 6
    max_actions: int = 4
    gamma_min: float = 0.5
    gamma_max: float = 0.95
    max_table_horizon: int = 4
    max_components: int = 3
    termination_floor: float = 0.05
    sparsity: float = 0.3


def _random_rows(rng, shape, sparsity):
    rows = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
    det = rng.random(shape[:-1]) < sparsity
    pick = rng.integers(0, shape[-1], size=shape[:-1])
    rows[det] = np.eye(shape[-1])[pick[det]]
    return rows


def random_mdp(rng: np.random.Generator, limits: CorpusLimits = CorpusLimits()) -> FiniteMdp:
    S = int(rng.integers(1, limits.max_states + 1))
    A = int(rng.integers(2, limits.max_actions + 1))
    raw = rng.dirichlet(np.ones(S + 1), size=(S, A))
    drop = rng.random((S, A, S)) < limits.sparsity
    raw[:, :, :S][drop] = 0.0
    raw[:, :, S] += 1e-3  # keep every row normalisable
    raw /= raw.sum(axis=2, keepdims=True)
    kernel = (1.0 - limits.termination_floor) * raw
    kernel[:, :, S] += limits.termination_floor
    p0 = np.zeros(S + 1)
    p0[:S] = rng.dirichlet(np.ones(S))
    if S > 1 and rng.random() < 0.5:
        p0[int(rng.integers(S))] = 0.0
        p0[:S] /= p0[:S].sum()
    reward = rng.uniform(-1.0, 1.0, size=(S, A))
    gamma = float(rng.uniform(limits.gamma_min, limits.gamma_max))
    return FiniteMdp(S, A, p0, kernel, reward, 1.0, gamma)


def random_time_dependent(rng, S, A, limits: CorpusLimits = CorpusLimits()) -> TimeDependentTable:
    T = int(rng.integers(1, limits.max_table_horizon + 1))
    return TimeDependentTable(
        _random_rows(rng, (T, S, A), limits.sparsity),
        MarkovianTable(_random_rows(rng, (S, A), limits.sparsity)),
    )


def random_corpus(seed: int, count: int, limits: CorpusLimits = CorpusLimits()) -> list[tuple[FiniteMdp, Policy]]:
    """Reproducible (MDP, policy) pairs; item ``i`` depends only on ``(seed, i)``.

    Even items carry a time-dependent table, odd items a mixture of
    time-dependent and Markovian tables.
    """
    corpus = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        mdp = random_mdp(rng, limits)
        S, A = mdp.shape
        if i % 2 == 0:
            policy: Policy = random_time_dependent(rng, S, A, limits)
        else:
            k = int(rng.integers(2, limits.max_components + 1))
            subs: list[Policy] = []
            for j in range(k):
                if j % 2 == 0:
                    subs.append(random_time_dependent(rng, S, A, limits))
                else:
                    subs.append(MarkovianTable(_random_rows(rng, (S, A), limits.sparsity)))
            policy = make_mixture(subs, rng.dirichlet(np.ones(k)))
        corpus.append((mdp, policy))
    return corpus


# -- suite ----------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    bound: float | None = None
    detail: Any = None

    def to_dict(self) -> dict[str, Any]:
        d = {"check": self.name, "pass": self.passed, "value": self.value, "bound": self.bound}
        if self.detail is not None:
            d["detail"] = self.detail
        return d


@dataclass
class SuiteEntry:
    name: str
    kind: str
    checks: list
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        d = {"name": self.name, "kind": self.kind, "pass": self.passed, "checks": [c.to_dict() for c in self.checks]}
        if self.error:
            d["error"] = self.error
        return d


@dataclass
class SuiteReport:
    entries: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "warnings": list(self.warnings),
            "entries": [e.to_dict() for e in self.entries],
        }

    def render_text(self) -> str:
        width = max([len(e.name) for e in self.entries] + [8])
        lines = []
        for e in self.entries:
            status = "PASS" if e.passed else "FAIL"
            failing = [c.name for c in e.checks if not c.passed]
            extra = f"  failed: {', '.join(failing)}" if failing else ""
            if e.error:
                extra = f"  error: {e.error}"
            lines.append(f"{status}  {e.kind:<15} {e.name:<{width}}{extra}".rstrip())
        for w in self.warnings:
            lines.append(f"WARN  {w}")
        lines.append(f"{'PASS' if self.passed else 'FAIL'}  aggregate ({len(self.entries)} entries)")
        return "\n".join(lines) + "\n"


@dataclass
class SuiteSettings:
    tol: float = 1e-7
    enum_tol: float = 1e-9
    expected_tol: float = 1e-12
    projection_tol: float = 1e-10
    idempotence_tol: float = 1e-9
    invariant_tol: float = INVARIANT_TOL
    support_t_max: int = 5
    support_floor: float = 1e-6


def property_checks(
    mdp: FiniteMdp,
    policy: Policy,
    settings: SuiteSettings,
    expected: dict | None = None,
    expected_tol: float | None = None,
    support: bool = True,
) -> list[Check]:
    """Every finite-instance property for one (MDP, policy) pair."""
    checks: list[Check] = []
    valid = validate_mdp(mdp)
    checks.append(Check("mdp_valid", valid.ok, float(len(valid.violations)), 0.0))
    mu = occupancy_enumerate(mdp, policy, tol=settings.enum_tol)
    expected = expected or {}
    etol = settings.expected_tol if expected_tol is None else expected_tol
    if "mu" in expected:
        err = float(np.max(np.abs(mu.mu - np.asarray(expected["mu"]))))
        checks.append(Check("expected_mu", err <= etol + mu.tail_bound, err, etol + mu.tail_bound))
    proj = markovianize(mu)
    if "pi_tilde" in expected:
        err = float(np.max(np.abs(proj.pi_tilde.probs - np.asarray(expected["pi_tilde"]))))
        checks.append(Check("expected_pi_tilde", err <= etol, err, etol))
    eq = verify_occupancy_equivalence(mdp, policy, tol=settings.tol, enum_tol=settings.enum_tol)
    checks.append(Check("occupancy_equivalence", eq.max_abs_occupancy_gap <= eq.budget, eq.max_abs_occupancy_gap, eq.budget))
    perf_budget = mdp.reward_bound * eq.budget
    checks.append(Check("performance_equivalence", eq.performance_gap <= perf_budget, eq.performance_gap, perf_budget))
    idem = verify_idempotence(mdp, mu, settings.idempotence_tol)
    checks.append(Check("idempotence", idem.passed, idem.gap, settings.idempotence_tol))
    _, res_enum = conservation_residual(mdp, mu)
    bound = mu.tail_bound + settings.invariant_tol
    checks.append(Check("conservation_enumerated", res_enum <= bound, res_enum, bound))
    exact = occupancy_exact_markovian(mdp, proj.pi_tilde)
    _, res_exact = conservation_residual(mdp, exact)
    checks.append(Check("conservation_exact", res_exact <= settings.invariant_tol, res_exact, settings.invariant_tol))
    nonneg = float(min(mu.mu.min(), exact.mu.min()))
    checks.append(Check("nonnegative", nonneg >= 0.0, nonneg, 0.0))
    if support:
        sup = trajectory_support_check(mdp, policy, proj.pi_tilde, settings.support_t_max, settings.support_floor)
        checks.append(Check("support", sup.passed, float(len(sup.violations)), 0.0, {"checked_prefixes": sup.checked}))
    return checks


def _bias_checks(report) -> list[Check]:
    last = report.rows[-1]
    bound = 5.0 * last.discounted_stderr + 1e-12
    checks = [
        Check("discounted_estimator_consistent", last.discounted_gap <= bound, last.discounted_gap, bound),
        Check("third_term_zero", report.third_term_ok, report.third_term, report.third_term_budget),
    ]
    if report.asymptotic_bias is not None:
        # the undiscounted estimator converges to its own limit, not to beta_tilde
        dev = abs(last.undiscounted_gap - report.asymptotic_bias)
        tol = 5.0 * last.discounted_stderr + 0.02
        checks.append(Check("undiscounted_bias_plateau", dev <= tol, dev, tol))
    return checks


def _entry(name: str, kind: str, fn) -> SuiteEntry:
    try:
        return SuiteEntry(name, kind, fn())
    except Exception as exc:  # a crashing check is a failing entry, not a crashed suite
        log.exception("suite entry %s failed", name)
        return SuiteEntry(name, kind, [], error=f"{type(exc).__name__}: {exc}")


def default_config() -> dict[str, Any]:
    scen = [{"name": "loop_terminal", "params": {"n": n, "gamma": g}} for n in (1, 3, 10) for g in (0.5, 0.9, 0.99)]
    scen += [
        {"name": "mixture_loop_exit", "params": {"gamma": 0.5}},
        {"name": "markovian_loop", "params": {"theta": 0.5, "gamma": 0.5}},
        {"name": "alternating_epochs", "params": {"gamma": 0.9}},
        {"name": "unmatchable_target", "params": {"gamma": 0.9}},
        {"name": "chain_time_dependent"},
    ]
    return {
        "scenarios": scen,
        "corpus": {"seed": 7, "count": 20},
        "counterexamples": [{"name": "alternating_epochs"}, {"name": "unmatchable"}],
        "bias": [
            {
                "scenario": "loop_terminal",
                "params": {"n": 1, "gamma": 0.5},
                "sample_sizes": [100, 1000, 10000],
                "seed": 0,
            },
            {
                "scenario": "mixture_loop_exit",
                "params": {"gamma": 0.5},
                "sample_sizes": [100, 1000, 10000],
                "seed": 0,
            },
        ],
    }


def run_suite(config: dict[str, Any] | None = None) -> SuiteReport:
    """Run the configured scenarios, corpus sweep, counterexamples and bias experiments.

    ``None`` runs ``default_config()``. Unknown names raise ``UsageError``
    before anything is run; an empty config passes vacuously with a warning.
    """
    if config is None:
        config = default_config()
    settings = SuiteSettings(**config.get("settings", {}))
    report = SuiteReport()
    scen_specs = [s if isinstance(s, dict) else {"name": s} for s in config.get("scenarios", [])]
    cex_specs = [c if isinstance(c, dict) else {"name": c} for c in config.get("counterexamples", [])]
    bias_specs = config.get("bias", [])
    for item in scen_specs + [{"name": b["scenario"]} for b in bias_specs]:
        if item["name"] not in SCENARIOS:
            raise UsageError(f"unknown scenario '{item['name']}'")
    for item in cex_specs:
        if item["name"] not in COUNTEREXAMPLES:
            raise UsageError(f"unknown counterexample '{item['name']}'")

    for item in scen_specs:
        sc = build_scenario(item["name"], item.get("params"))
        expected = dict(sc.expected)
        expected.update(item.get("expected", {}))
        etol = item.get("expected_tol", sc.tolerances.get("expected"))
        report.entries.append(
            _entry(sc.name, "scenario", lambda sc=sc, expected=expected, etol=etol: property_checks(sc.mdp, sc.policy, settings, expected, etol))
        )

    corpus_cfg = config.get("corpus")
    if corpus_cfg:
        limits = CorpusLimits(**corpus_cfg.get("limits", {}))
        seed = int(corpus_cfg.get("seed", 0))
        support_count = int(corpus_cfg.get("support_count", corpus_cfg.get("count", 0)))
        for i, (mdp, policy) in enumerate(random_corpus(seed, int(corpus_cfg.get("count", 0)), limits)):
            report.entries.append(
                _entry(
                    f"corpus[{seed}:{i}]",
                    "corpus",
                    lambda m=mdp, p=policy, i=i: property_checks(m, p, settings, support=i < support_count),
                )
            )

    for item in cex_specs:
        params = item.get("params", {})

        def run_cex(item=item, params=params):
            findings = COUNTEREXAMPLES[item["name"]](**params)
            checks = [Check("finding_holds", findings["holds"], findings.get("oscillation", findings.get("min_gap")), None)]
            if "discounted_check" in findings:
                checks.append(Check("discounted_equivalence", findings["discounted_check"]["equivalence_pass"]))
            return checks

        report.entries.append(_entry(item["name"], "counterexample", run_cex))

    for item in bias_specs:
        sc = build_scenario(item["scenario"], item.get("params"))
        sizes = item.get("sample_sizes", [100, 1000, 10000])
        report.entries.append(
            _entry(
                f"bias:{sc.name}",
                "bias",
                lambda sc=sc, sizes=sizes, seed=item.get("seed", 0): _bias_checks(bias_experiment(sc.mdp, sc.policy, sample_sizes=sizes, seed=seed)),
            )
        )

    if not report.entries:
        report.warnings.append("empty configuration: nothing was checked")
    return report
