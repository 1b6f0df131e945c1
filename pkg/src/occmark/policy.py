"""Policies as history-to-action-distribution maps, and episode rollouts.

The policy family is closed: Markovian tables, time-dependent tables,
registered scripted policies and mixtures. Every non-mixture member reads
only the timestep and the current state out of the history, so a mixture is
fully described by a weighted list of such "base" policies. Rewards are kept
in ``History`` even though no shipped family reads them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import SchemaError, UsageError
from .mdp import TERMINAL, FiniteMdp, sample_initial, sample_transition

PROB_TOL = 1e-12


def _check_rows(probs: np.ndarray, what: str) -> None:
    if probs.size and (not np.all(np.isfinite(probs)) or probs.min() < 0):
        raise UsageError(f"{what}: negative or non-finite action probability")
    dev = np.abs(probs.sum(axis=-1) - 1.0)
    if dev.size and dev.max() > PROB_TOL:
        raise UsageError(f"{what}: action distribution sums off by {dev.max():.3g}")


def _readonly(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class History:
    """``steps`` holds completed ``(s, a, r)`` triples; ``state`` is the current state."""

    state: int
    steps: Sequence = ()

    @property
    def t(self) -> int:
        return len(self.steps)

    def extend(self, a: int, r: float, next_state: int) -> "History":
        return History(next_state, tuple(self.steps) + ((self.state, a, r),))


class Policy:
    """Common surface; concrete classes are the frozen dataclasses below."""

    num_actions: int

    def components(self) -> list[tuple[float, "Policy"]]:
        """Flattened ``(weight, base_policy)`` list; a base policy is its own single component."""
        return [(1.0, self)]

    def table_at(self, t: int, num_states: int) -> np.ndarray:
        raise NotImplementedError

    def start_episode(self, rng: np.random.Generator | None = None) -> "Policy":
        """Return the policy acting during one episode (the mixture draw lives here)."""
        return self

    def check_dimensions(self, mdp: FiniteMdp) -> None:
        if self.num_actions != mdp.num_actions:
            raise UsageError(
                f"policy has {self.num_actions} actions, MDP has {mdp.num_actions}"
            )


@dataclass(frozen=True, eq=False)
class MarkovianTable(Policy):
    probs: np.ndarray

    def __post_init__(self):
        probs = _readonly(self.probs)
        if probs.ndim != 2:
            raise UsageError("Markovian table must be a |S|x|A| matrix")
        _check_rows(probs, "Markovian table")
        object.__setattr__(self, "probs", probs)

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    def table_at(self, t: int, num_states: int) -> np.ndarray:
        return self.probs

    def check_dimensions(self, mdp: FiniteMdp) -> None:
        super().check_dimensions(mdp)
        if self.num_states != mdp.num_states:
            raise UsageError(f"policy has {self.num_states} states, MDP has {mdp.num_states}")


@dataclass(frozen=True, eq=False)
class TimeDependentTable(Policy):
    """Per-timestep tables for ``t < len(tables)``, then the Markovian ``tail``."""

    tables: np.ndarray
    tail: MarkovianTable

    def __post_init__(self):
        tables = _readonly(self.tables)
        if tables.ndim != 3 or tables.shape[1:] != self.tail.probs.shape:
            raise UsageError("time-dependent tables must be T x |S| x |A| matching the tail")
        _check_rows(tables, "time-dependent table")
        object.__setattr__(self, "tables", tables)

    @property
    def num_actions(self) -> int:
        return self.tail.num_actions

    @property
    def horizon(self) -> int:
        return self.tables.shape[0]

    def table_at(self, t: int, num_states: int) -> np.ndarray:
        return self.tables[t] if t < self.horizon else self.tail.probs

    def check_dimensions(self, mdp: FiniteMdp) -> None:
        self.tail.check_dimensions(mdp)


# -- scripted policies -------------------------------------------------------

SCRIPTED: dict[str, Callable[..., int | np.ndarray]] = {}


def scripted(name: str):
    def register(fn):
        SCRIPTED[name] = fn
        return fn

    return register


@scripted("loop_then_exit")
def _loop_then_exit(t, n, loop_action=0, exit_action=1):
    """``loop_action`` for ``t < n``, then ``exit_action``."""
    return loop_action if t < n else exit_action


@scripted("constant")
def _constant(t, action):
    return action


@scripted("alternating_epochs")
def _alternating_epochs(t, even_action=0, odd_action=1):
    """Epoch ``i`` covers ``t in [2**i, 2**(i+1))``; even epochs play ``even_action``.

    ``t = 0`` lies in no epoch and is assigned ``even_action``.
    """
    if t == 0:
        return even_action
    epoch = t.bit_length() - 1
    return even_action if epoch % 2 == 0 else odd_action


@scripted("uniform_then")
def _uniform_then(t, action=0, num_actions=2):
    """Uniform over all actions at ``t = 0``, then always ``action``."""
    if t == 0:
        return np.full(num_actions, 1.0 / num_actions)
    return action


@dataclass(frozen=True, eq=False)
class Scripted(Policy):
    """A registered closed-form policy; its action law depends on ``t`` only."""

    name: str
    params: dict = field(default_factory=dict)
    num_actions: int = 2

    def __post_init__(self):
        if self.name not in SCRIPTED:
            raise UsageError(f"unknown scripted policy '{self.name}'; known: {sorted(SCRIPTED)}")
        self.action_vector(0)

    def action_vector(self, t: int) -> np.ndarray:
        params = dict(self.params)
        if self.name == "uniform_then":
            params.setdefault("num_actions", self.num_actions)
        out = SCRIPTED[self.name](t, **params)
        if isinstance(out, np.ndarray):
            return out
        if not 0 <= out < self.num_actions:
            raise UsageError(f"scripted policy '{self.name}' chose action {out} out of range")
        vec = np.zeros(self.num_actions)
        vec[out] = 1.0
        return vec

    def table_at(self, t: int, num_states: int) -> np.ndarray:
        return np.tile(self.action_vector(t), (num_states, 1))


@dataclass(frozen=True, eq=False)
class Mixture(Policy):
    """Draws one sub-policy at episode start and follows it for the whole episode."""

    policies: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "weights", _readonly(self.weights))

    @property
    def num_actions(self) -> int:
        return self.policies[0].num_actions

    def components(self) -> list[tuple[float, Policy]]:
        out = []
        for w, sub in zip(self.weights, self.policies):
            out.extend((w * cw, base) for cw, base in sub.components())
        return out

    def table_at(self, t: int, num_states: int) -> np.ndarray:
        raise UsageError("mixture queried without an episode scope; call start_episode first")

    def start_episode(self, rng: np.random.Generator | None = None) -> Policy:
        if rng is None:
            raise UsageError("mixture episode start needs a random stream")
        k = int(np.searchsorted(np.cumsum(self.weights), rng.random(), side="right"))
        return self.policies[min(k, len(self.policies) - 1)].start_episode(rng)

    def check_dimensions(self, mdp: FiniteMdp) -> None:
        for p in self.policies:
            p.check_dimensions(mdp)


def make_mixture(policies: Sequence[Policy], weights: Sequence[float]) -> Mixture:
    if not policies:
        raise UsageError("mixture needs at least one policy")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(policies),):
        raise UsageError("one weight per sub-policy required")
    if not np.all(np.isfinite(w)) or w.min() < 0:
        raise UsageError("mixture weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise UsageError("mixture weights are all zero")
    if len({p.num_actions for p in policies}) != 1:
        raise UsageError("sub-policies disagree on the number of actions")
    return Mixture(tuple(policies), w / total)


def action_distribution(policy: Policy, history: History) -> np.ndarray:
    """Action probabilities after ``history``.

    A ``Mixture`` must first be resolved with ``policy.start_episode(rng)``;
    querying it directly raises ``UsageError``.
    """
    if isinstance(policy, Mixture):
        policy.table_at(history.t, 0)
    if isinstance(policy, MarkovianTable):
        return policy.probs[history.state]
    if isinstance(policy, TimeDependentTable):
        return policy.table_at(history.t, 0)[history.state]
    if isinstance(policy, Scripted):
        return policy.action_vector(history.t)
    raise UsageError(f"unsupported policy type {type(policy).__name__}")


# -- rollouts ----------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    t: int
    s: int
    a: int
    r: float
    next: int


@dataclass(frozen=True)
class Trajectory:
    steps: tuple
    truncated: bool
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def actions(self) -> tuple:
        return tuple(st.a for st in self.steps)


def sample_episode(
    mdp: FiniteMdp,
    policy: Policy,
    rng: np.random.Generator | int,
    horizon_cap: int,
) -> Trajectory:
    """Roll out one episode; pass an int to seed a fresh per-episode stream."""
    if horizon_cap < 1:
        raise UsageError("horizon_cap must be positive")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    policy.check_dimensions(mdp)
    # one component draw per episode for every policy type, so a singleton
    # mixture consumes the stream exactly like its sub-policy
    pairs = policy.components()
    k = int(np.searchsorted(np.cumsum([w for w, _ in pairs]), rng.random(), side="right"))
    active = pairs[min(k, len(pairs) - 1)][1]
    s = sample_initial(mdp, rng)
    if s == TERMINAL:
        return Trajectory((), False, seed)
    seen: list = []  # (s, a, r) triples shared with every History view below
    steps = []
    while True:
        probs = action_distribution(active, History(s, seen))
        a = int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), len(probs) - 1))
        r, nxt = sample_transition(mdp, s, a, rng)
        steps.append(Step(len(seen), s, a, r, nxt))
        if nxt == TERMINAL:
            return Trajectory(tuple(steps), False, seed)
        if len(steps) >= horizon_cap:
            return Trajectory(tuple(steps), True, seed)
        seen.append((s, a, r))
        s = nxt


# Episodes are simulated in fixed-size blocks, each with its own stream seeded
# by (seed, block). Every draw is made for the full block width and indexed by
# the episode's row, so an episode's randomness depends only on (seed, index):
# never on the total episode count or on how blocks are spread over threads.
BLOCK = 1024


@dataclass
class EpisodeBatch:
    """Columnar transitions; ``s_next`` uses ``TERMINAL`` for ``s_f``."""

    episode: np.ndarray
    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    num_episodes: int
    component: np.ndarray  # per episode
    truncated: np.ndarray  # per episode

    @classmethod
    def concat(cls, parts: list["EpisodeBatch"]) -> "EpisodeBatch":
        cols = {
            k: np.concatenate([getattr(p, k) for p in parts])
            for k in ("episode", "t", "s", "a", "r", "s_next", "component", "truncated")
        }
        return cls(num_episodes=sum(p.num_episodes for p in parts), **cols)


def _cdf_draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _simulate_block(mdp, comps, cweights, seed, block, count, horizon_cap):
    S = mdp.num_states
    rng = np.random.default_rng([seed, block])
    start = rng.random((BLOCK, 2))[:count]
    ccdf = np.cumsum(cweights)
    comp = np.minimum(np.searchsorted(ccdf, start[:, 0], side="right"), len(comps) - 1)
    state = _cdf_draw(np.broadcast_to(mdp.p0, (count, S + 1)), start[:, 1])
    alive = np.flatnonzero(state < S)
    truncated = np.zeros(count, dtype=bool)
    cols = {k: [] for k in ("episode", "t", "s", "a", "r", "s_next")}
    t = 0
    while alive.size:
        u = rng.random((BLOCK, 3))[alive]
        s = state[alive]
        tables = np.stack([c.table_at(t, S) for c in comps])
        a = _cdf_draw(tables[comp[alive], s], u[:, 0])
        nxt = _cdf_draw(mdp.kernel[s, a], u[:, 1])
        r = mdp.reward_mean[s, a]
        if mdp.reward_noise > 0:
            r = np.clip(r + (2.0 * u[:, 2] - 1.0) * mdp.reward_noise, -mdp.reward_bound, mdp.reward_bound)
        cols["episode"].append(alive + block * BLOCK)
        cols["t"].append(np.full(alive.size, t))
        cols["s"].append(s)
        cols["a"].append(a)
        cols["r"].append(np.asarray(r, dtype=np.float64))
        cols["s_next"].append(np.where(nxt == S, TERMINAL, nxt))
        state[alive] = nxt
        t += 1
        alive = alive[nxt < S]
        if t >= horizon_cap and alive.size:
            truncated[alive] = True
            break
    if cols["episode"]:
        ep = np.concatenate(cols["episode"])
        order = np.lexsort((np.concatenate(cols["t"]), ep))
        data = {k: np.concatenate(v)[order] for k, v in cols.items()}
    else:
        data = {k: np.zeros(0, dtype=np.float64 if k == "r" else np.int64) for k in cols}
    return EpisodeBatch(num_episodes=count, component=comp, truncated=truncated, **data)


def simulate(
    mdp: FiniteMdp,
    policy: Policy,
    episodes: int,
    seed: int,
    horizon_cap: int,
    workers: int = 1,
) -> EpisodeBatch:
    """Simulate ``episodes`` independent episodes, ordered by (episode, t).

    The result is bit-identical for any ``workers`` value.
    """
    if horizon_cap < 1:
        raise UsageError("horizon_cap must be positive")
    if episodes < 0:
        raise UsageError("episodes must be nonnegative")
    policy.check_dimensions(mdp)
    pairs = policy.components()
    comps = [p for _, p in pairs]
    cweights = np.array([w for w, _ in pairs])
    nblocks = -(-episodes // BLOCK)
    jobs = [(b, min(BLOCK, episodes - b * BLOCK)) for b in range(nblocks)]

    def run(job):
        return _simulate_block(mdp, comps, cweights, seed, job[0], job[1], horizon_cap)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    if not parts:
        return _simulate_block(mdp, comps, cweights, seed, 0, 0, horizon_cap)
    return EpisodeBatch.concat(parts)


# -- JSON ------------------------------------------------------------------


def policy_to_dict(policy: Policy) -> dict[str, Any]:
    if isinstance(policy, MarkovianTable):
        return {"type": "markovian", "probs": policy.probs.tolist()}
    if isinstance(policy, TimeDependentTable):
        return {
            "type": "time_dependent",
            "tables": policy.tables.tolist(),
            "tail": policy.tail.probs.tolist(),
        }
    if isinstance(policy, Scripted):
        return {
            "type": "scripted",
            "name": policy.name,
            "params": dict(policy.params),
            "num_actions": policy.num_actions,
        }
    if isinstance(policy, Mixture):
        return {
            "type": "mixture",
            "weights": policy.weights.tolist(),
            "policies": [policy_to_dict(p) for p in policy.policies],
        }
    raise TypeError(type(policy).__name__)


def policy_from_dict(d: Any, text: str | None = None) -> Policy:
    from ._json import line_of

    if not isinstance(d, dict) or "type" not in d:
        raise SchemaError("policy must be an object with a 'type' field", line_of(text, "type") or (1 if text else None))
    kind = d["type"]
    try:
        if kind == "markovian":
            return MarkovianTable(np.array(d["probs"], dtype=np.float64))
        if kind == "time_dependent":
            return TimeDependentTable(
                np.array(d["tables"], dtype=np.float64),
                MarkovianTable(np.array(d["tail"], dtype=np.float64)),
            )
        if kind == "scripted":
            return Scripted(d["name"], dict(d.get("params", {})), int(d.get("num_actions", 2)))
        if kind == "mixture":
            subs = [policy_from_dict(p, text) for p in d["policies"]]
            return make_mixture(subs, d["weights"])
    except KeyError as exc:
        raise SchemaError(f"policy of type '{kind}' lacks field {exc}", line_of(text, "type")) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"bad {kind} policy: {exc}", line_of(text, "type")) from None
    raise SchemaError(f"unknown policy type '{kind}'", line_of(text, "type"))
