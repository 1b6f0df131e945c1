"""Offline datasets and behavior-policy estimators.

A dataset is stored column-wise (one array per transition field). Episodes
that start in ``s_f`` have no records but still count towards ``N``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, NamedTuple, Sequence

import numpy as np

from . import _json
from .errors import SchemaError, UsageError
from .mdp import TERMINAL, FiniteMdp
from .occupancy import (
    occupancy_enumerate,
    occupancy_exact_markovian,
    performance_from_occupancy,
)
from .policy import MarkovianTable, Policy, policy_to_dict, simulate
from .projection import markovianize, require_finite

FIELDS = ("episode", "t", "s", "a", "r", "s_next")


class TransitionRecord(NamedTuple):
    episode: int
    t: int
    s: int
    a: int
    r: float
    s_next: int  # TERMINAL for s_f


@dataclass
class TrajectoryDataset:
    num_states: int
    num_actions: int
    num_episodes: int
    episode: np.ndarray
    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.episode.size)

    def records(self) -> Iterator[TransitionRecord]:
        for row in zip(*(getattr(self, k).tolist() for k in FIELDS)):
            yield TransitionRecord(*row)

    @property
    def truncated_episodes(self) -> np.ndarray:
        """Ids of episodes whose last record does not reach ``s_f``."""
        if not len(self):
            return np.zeros(0, dtype=np.int64)
        last = np.r_[self.episode[1:] != self.episode[:-1], True]
        return self.episode[last & (self.s_next != TERMINAL)]

    def head(self, n: int) -> "TrajectoryDataset":
        """The first ``n`` episodes."""
        keep = self.episode < n
        cols = {k: getattr(self, k)[keep] for k in FIELDS}
        return TrajectoryDataset(
            self.num_states,
            self.num_actions,
            min(n, self.num_episodes),
            provenance=dict(self.provenance),
            **cols,
        )

    def concat(self, other: "TrajectoryDataset") -> "TrajectoryDataset":
        cols = {k: np.concatenate([getattr(self, k), getattr(other, k)]) for k in FIELDS}
        cols["episode"][len(self):] += self.num_episodes
        return TrajectoryDataset(
            self.num_states,
            self.num_actions,
            self.num_episodes + other.num_episodes,
            provenance={"concat": [self.provenance, other.provenance]},
            **cols,
        )

    def check(self) -> list[str]:
        """Structural invariant violations (empty when the dataset is well formed)."""
        problems = []
        ep, t = self.episode, self.t
        if len(self) == 0:
            return problems
        if np.any(np.diff(ep) < 0):
            problems.append("episodes are not contiguous")
        first = np.r_[True, ep[1:] != ep[:-1]]
        if np.any((t == 0) != first):
            problems.append("t must be 0 exactly at the first record of an episode")
        same = ~first[1:]
        if np.any(t[1:][same] != t[:-1][same] + 1):
            problems.append("t must increase by one within an episode")
        if np.any(self.s[1:][same] != self.s_next[:-1][same]):
            problems.append("s must equal the previous s_next within an episode")
        if np.any((self.s < 0) | (self.s >= self.num_states)) or np.any(
            (self.a < 0) | (self.a >= self.num_actions)
        ):
            problems.append("state or action index out of range")
        if ep.max() >= self.num_episodes or ep.min() < 0:
            problems.append("episode id outside [0, N)")
        return problems


def collect_dataset(
    mdp: FiniteMdp,
    policy: Policy,
    episodes: int,
    seed: int,
    horizon_cap: int = 10_000,
    workers: int = 1,
) -> TrajectoryDataset:
    batch = simulate(mdp, policy, episodes, seed, horizon_cap, workers=workers)
    provenance: dict[str, Any] = {
        "policy": policy_to_dict(policy),
        "seed": seed,
        "episodes": episodes,
        "horizon_cap": horizon_cap,
        "gamma": mdp.gamma,
        "truncated_episodes": int(batch.truncated.sum()),
        "warnings": [],
    }
    if batch.truncated.any():
        msg = f"{int(batch.truncated.sum())} episodes truncated at horizon {horizon_cap}; estimators are biased"
        if mdp.gamma >= 1.0:
            msg += " (gamma=1: truncated tails carry undiscounted weight)"
        provenance["warnings"].append(msg)
    return TrajectoryDataset(
        mdp.num_states,
        mdp.num_actions,
        episodes,
        batch.episode,
        batch.t,
        batch.s,
        batch.a,
        batch.r,
        batch.s_next,
        provenance,
    )


# -- JSON lines --------------------------------------------------------------


def write_jsonl(dataset: TrajectoryDataset, path: str | Path) -> None:
    header = {
        "num_states": dataset.num_states,
        "num_actions": dataset.num_actions,
        "num_episodes": dataset.num_episodes,
        "provenance": dataset.provenance,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(_json.to_plain(header)) + "\n")
        for rec in dataset.records():
            fh.write(
                json.dumps(
                    {
                        "episode": rec.episode,
                        "t": rec.t,
                        "s": rec.s,
                        "a": rec.a,
                        "r": rec.r,
                        "s_next": "terminal" if rec.s_next == TERMINAL else rec.s_next,
                    }
                )
                + "\n"
            )


def read_jsonl(path: str | Path) -> TrajectoryDataset:
    rows: list[tuple] = []
    header = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"malformed JSON: {exc.msg}", lineno) from None
            if header is None:
                if not isinstance(obj, dict) or not {"num_states", "num_actions", "num_episodes"} <= obj.keys():
                    raise SchemaError("first line must be a header with num_states, num_actions, num_episodes", lineno)
                header = obj
                continue
            try:
                nxt = obj["s_next"]
                nxt = TERMINAL if nxt == "terminal" else int(nxt)
                rows.append((int(obj["episode"]), int(obj["t"]), int(obj["s"]), int(obj["a"]), float(obj["r"]), nxt))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"bad transition record ({exc})", lineno) from None
    if header is None:
        raise SchemaError("empty dataset file (header required)", 1)
    cols = list(zip(*rows)) if rows else [()] * 6
    data = {
        k: np.array(c, dtype=np.float64 if k == "r" else np.int64) for k, c in zip(FIELDS, cols)
    }
    ds = TrajectoryDataset(
        int(header["num_states"]),
        int(header["num_actions"]),
        int(header["num_episodes"]),
        provenance=header.get("provenance", {}),
        **data,
    )
    problems = ds.check()
    if problems:
        raise SchemaError("; ".join(problems))
    return ds


# -- counts and maximum-likelihood estimates ---------------------------------


@dataclass
class Counts:
    n_sas: np.ndarray  # S x A x (S+1), last slot = termination
    n0: np.ndarray  # S
    n0_terminal: int
    reward_sum: np.ndarray  # S x A
    num_episodes: int

    @property
    def n_sa(self) -> np.ndarray:
        return self.n_sas.sum(axis=2)

    @property
    def n_s(self) -> np.ndarray:
        return self.n_sas.sum(axis=(1, 2))

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(
            self.n_sas + other.n_sas,
            self.n0 + other.n0,
            self.n0_terminal + other.n0_terminal,
            self.reward_sum + other.reward_sum,
            self.num_episodes + other.num_episodes,
        )


def compute_counts(dataset: TrajectoryDataset) -> Counts:
    S, A = dataset.num_states, dataset.num_actions
    nxt = np.where(dataset.s_next == TERMINAL, S, dataset.s_next)
    flat = (dataset.s * A + dataset.a) * (S + 1) + nxt
    n_sas = np.bincount(flat, minlength=S * A * (S + 1)).reshape(S, A, S + 1)
    starts = dataset.s[dataset.t == 0]
    n0 = np.bincount(starts, minlength=S)
    rsum = np.bincount(dataset.s * A + dataset.a, dataset.r, minlength=S * A).reshape(S, A)
    return Counts(n_sas, n0, int(dataset.num_episodes - starts.size), rsum, dataset.num_episodes)


@dataclass(frozen=True, eq=False)
class MleEstimate:
    mdp: FiniteMdp
    unobserved: np.ndarray  # S x A bool


def mle_mdp(counts: Counts, num_episodes: int | None = None, gamma: float = 1.0,
            reward_bound: float | None = None) -> MleEstimate:
    """Maximum-likelihood MDP. Unobserved pairs terminate with reward 0 and are masked."""
    N = counts.num_episodes if num_episodes is None else num_episodes
    if N < 1:
        raise UsageError("MLE MDP needs at least one episode")
    S, A, _ = counts.n_sas.shape
    n_sa = counts.n_sa
    unobserved = n_sa == 0
    kernel = np.zeros((S, A, S + 1))
    seen = ~unobserved
    kernel[seen] = counts.n_sas[seen] / n_sa[seen][:, None]
    kernel[unobserved, S] = 1.0
    reward = np.zeros((S, A))
    reward[seen] = counts.reward_sum[seen] / n_sa[seen]
    p0 = np.r_[counts.n0, counts.n0_terminal] / N
    bound = float(np.max(np.abs(reward), initial=0.0)) if reward_bound is None else reward_bound
    mdp = FiniteMdp(S, A, p0, kernel, reward, bound, gamma)
    unobserved.setflags(write=False)
    return MleEstimate(mdp, unobserved)


class BehaviorEstimate(NamedTuple):
    policy: MarkovianTable
    unobserved: np.ndarray  # per state; rows filled uniform


def _ratio_policy(num: np.ndarray, den: np.ndarray) -> BehaviorEstimate:
    S, A = num.shape
    seen = den > 0
    probs = np.full((S, A), 1.0 / A)
    probs[seen] = num[seen] / den[seen][:, None]
    return BehaviorEstimate(MarkovianTable(probs), ~seen)


def behavior_mle_undiscounted(counts: Counts) -> BehaviorEstimate:
    """Frequency ratios ``n(s, a) / n(s)``."""
    return _ratio_policy(counts.n_sa.astype(np.float64), counts.n_s.astype(np.float64))


def _grouped_fsum(keys: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    if keys.size == 0:
        return out
    order = np.argsort(keys, kind="stable")
    k, v = keys[order], values[order]
    bounds = np.flatnonzero(np.diff(k)) + 1
    for grp_keys, grp_vals in zip(np.split(k, bounds), np.split(v, bounds)):
        out[grp_keys[0]] = math.fsum(grp_vals.tolist())
    return out


def behavior_mle_discounted(dataset: TrajectoryDataset, gamma: float) -> BehaviorEstimate:
    """Discount-weighted frequencies: each record counts ``gamma ** t``.

    Sums use compensated summation. At ``gamma = 1`` every weight is exactly
    1.0, so the result equals ``behavior_mle_undiscounted`` bit for bit.
    """
    if not 0.0 <= gamma <= 1.0:
        raise UsageError("gamma must lie in [0, 1]")
    S, A = dataset.num_states, dataset.num_actions
    w = np.power(gamma, dataset.t.astype(np.float64))
    num = _grouped_fsum(dataset.s * A + dataset.a, w, S * A).reshape(S, A)
    den = _grouped_fsum(dataset.s, w, S)
    return _ratio_policy(num, den)


def discounted_ratio_stderr(dataset: TrajectoryDataset, gamma: float) -> np.ndarray:
    """Plug-in standard error of each discounted ratio, clustered by episode.

    Delta method for a ratio of sums: with per-episode weighted counts
    ``X_e(s, a)`` and ``Y_e(s)`` and ``R = sum X / sum Y``, the variance is
    ``sum_e (X_e - R Y_e)**2 / (sum_e Y_e)**2``.
    """
    S, A = dataset.num_states, dataset.num_actions
    N = max(dataset.num_episodes, 1)
    w = np.power(gamma, dataset.t.astype(np.float64))
    X = np.bincount(dataset.episode * (S * A) + dataset.s * A + dataset.a, w, minlength=N * S * A).reshape(N, S, A)
    Y = X.sum(axis=2)
    ysum = Y.sum(axis=0)
    R = np.divide(X.sum(axis=0), ysum[:, None], out=np.zeros((S, A)), where=ysum[:, None] > 0)
    resid = X - R[None] * Y[:, :, None]
    var = np.divide((resid**2).sum(axis=0), ysum[:, None] ** 2, out=np.full((S, A), np.inf), where=ysum[:, None] > 0)
    return np.sqrt(var)


# -- bias experiment ---------------------------------------------------------


@dataclass
class BiasRow:
    episodes: int
    discounted_gap: float
    undiscounted_gap: float
    discounted_stderr: float


@dataclass
class BiasReport:
    beta_tilde: np.ndarray
    undiscounted_limit: np.ndarray | None
    asymptotic_bias: float | None
    rows: list
    third_term: float
    third_term_budget: float
    seed: int

    @property
    def third_term_ok(self) -> bool:
        return self.third_term <= self.third_term_budget

    def to_dict(self) -> dict[str, Any]:
        return {
            "beta_tilde": self.beta_tilde,
            "undiscounted_limit": self.undiscounted_limit,
            "asymptotic_bias": self.asymptotic_bias,
            "seed": self.seed,
            "third_term": {"gap": self.third_term, "budget": self.third_term_budget, "pass": self.third_term_ok},
            "rows": [
                {
                    "episodes": r.episodes,
                    "discounted_gap": r.discounted_gap,
                    "undiscounted_gap": r.undiscounted_gap,
                    "discounted_stderr": r.discounted_stderr,
                }
                for r in self.rows
            ],
        }


def bias_experiment(
    mdp: FiniteMdp,
    behavior: Policy,
    gamma: float | None = None,
    sample_sizes: Sequence[int] = (100, 1_000, 10_000, 100_000),
    seed: int = 0,
    horizon_cap: int = 10_000,
    enum_tol: float = 1e-10,
) -> BiasReport:
    """Compare both behavior estimators against the projected behavior.

    Sample sizes are nested prefixes of one dataset. The third term is the
    return gap between the behavior policy and its projection.
    """
    if gamma is not None:
        mdp = mdp.replace(gamma=gamma)
    require_finite(mdp)
    mu_beta = occupancy_enumerate(mdp, behavior, tol=enum_tol)
    proj = markovianize(mu_beta)
    beta_tilde = proj.pi_tilde.probs
    support = proj.source_mass > 0
    rho_beta = performance_from_occupancy(mdp, mu_beta)
    rho_tilde = performance_from_occupancy(mdp, occupancy_exact_markovian(mdp, proj.pi_tilde))
    budget = mdp.reward_bound * (enum_tol + mu_beta.tail_bound)

    limit = bias = None
    try:
        undiscounted = occupancy_enumerate(mdp.replace(gamma=1.0), behavior, tol=enum_tol)
        limit = markovianize(undiscounted).pi_tilde.probs
        bias = float(np.max(np.abs(limit - beta_tilde)[support], initial=0.0))
    except ArithmeticError:
        pass  # no finite undiscounted limit

    data = collect_dataset(mdp, behavior, max(sample_sizes), seed, horizon_cap)
    rows = []
    for n in sample_sizes:
        part = data.head(n)
        disc = behavior_mle_discounted(part, mdp.gamma).policy.probs
        undisc = behavior_mle_undiscounted(compute_counts(part)).policy.probs
        se = discounted_ratio_stderr(part, mdp.gamma)
        diff = np.abs(disc - beta_tilde)
        worst = np.unravel_index(np.argmax(np.where(support[:, None], diff, -1.0)), diff.shape)
        rows.append(
            BiasRow(
                n,
                float(np.max(diff[support], initial=0.0)),
                float(np.max(np.abs(undisc - beta_tilde)[support], initial=0.0)),
                float(se[worst]),
            )
        )
    return BiasReport(beta_tilde, limit, bias, rows, abs(rho_tilde - rho_beta), budget, seed)
