"""Finite MDPs with an explicit termination slot.

Every distribution over next states has length ``num_states + 1``; the last
slot is the probability of reaching the absorbing terminal state ``s_f``.
States are integers in ``[0, num_states)`` and ``TERMINAL`` (-1) stands for
``s_f`` wherever a state-or-terminal value is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from . import _json
from .errors import InvalidMdpError, SchemaError

TERMINAL = -1
ROW_SUM_TOL = 1e-12


def _frozen(x, shape=None) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    num_states: int
    num_actions: int
    p0: np.ndarray
    kernel: np.ndarray
    reward_mean: np.ndarray
    reward_bound: float
    gamma: float
    # half-width of the uniform noise added by the reward sampler
    reward_noise: float = field(default=0.0)

    def __post_init__(self):
        S, A = int(self.num_states), int(self.num_actions)
        if S < 1 or A < 1:
            raise ValueError("num_states and num_actions must be positive")
        object.__setattr__(self, "num_states", S)
        object.__setattr__(self, "num_actions", A)
        object.__setattr__(self, "p0", _frozen(self.p0, (S + 1,)))
        object.__setattr__(self, "kernel", _frozen(self.kernel, (S, A, S + 1)))
        object.__setattr__(self, "reward_mean", _frozen(self.reward_mean, (S, A)))
        object.__setattr__(self, "reward_bound", float(self.reward_bound))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "reward_noise", float(self.reward_noise))

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_states, self.num_actions

    @property
    def p0_states(self) -> np.ndarray:
        """Initial distribution restricted to non-terminal states."""
        return self.p0[: self.num_states]

    @property
    def transitions(self) -> np.ndarray:
        """``kernel`` without the termination slot, shape ``(S, A, S)``."""
        return self.kernel[:, :, : self.num_states]

    def replace(self, **changes) -> "FiniteMdp":
        fields = dict(
            num_states=self.num_states,
            num_actions=self.num_actions,
            p0=self.p0,
            kernel=self.kernel,
            reward_mean=self.reward_mean,
            reward_bound=self.reward_bound,
            gamma=self.gamma,
            reward_noise=self.reward_noise,
        )
        fields.update(changes)
        return FiniteMdp(**fields)

    def state_transition_matrix(self, table: np.ndarray) -> np.ndarray:
        """``P[s, s'] = sum_a table[s, a] * p(s'|s, a)``, termination dropped."""
        return np.einsum("sa,sat->st", table, self.transitions)


class ValidationReport(NamedTuple):
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check_distribution(vec, where, out, tol):
    if not np.all(np.isfinite(vec)):
        out.append((where, "non-finite probability", float("inf")))
        return
    neg = vec.min()
    if neg < 0:
        out.append((where, "negative probability", float(-neg)))
    dev = abs(float(vec.sum()) - 1.0)
    if dev > tol:
        out.append((where, "row sum", dev))


def validate_mdp(mdp: FiniteMdp, tol: float = ROW_SUM_TOL) -> ValidationReport:
    """Collect every violated tuple constraint; never raises."""
    violations: list[tuple[str, str, float]] = []
    _check_distribution(mdp.p0, "p0", violations, tol)
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            _check_distribution(mdp.kernel[s, a], f"kernel[{s}][{a}]", violations, tol)
    if not np.isfinite(mdp.reward_bound) or mdp.reward_bound < 0:
        violations.append(("reward_bound", "negative reward bound", float(-mdp.reward_bound)))
    excess = np.abs(mdp.reward_mean) - mdp.reward_bound
    if not np.all(np.isfinite(mdp.reward_mean)):
        violations.append(("reward_mean", "non-finite reward", float("inf")))
    for s, a in zip(*np.nonzero(excess > 0)):
        violations.append((f"reward_mean[{s}][{a}]", "reward bound", float(excess[s, a])))
    g = mdp.gamma
    if not (0.0 <= g <= 1.0):
        violations.append(("gamma", "gamma range", float(g - 1.0 if g > 1.0 else -g)))
    if mdp.reward_noise < 0:
        violations.append(("reward_noise", "negative noise half-width", -mdp.reward_noise))
    return ValidationReport(violations)


def _draw_slot(probs: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def _slot_to_state(mdp: FiniteMdp, idx: int) -> int:
    return TERMINAL if idx == mdp.num_states else idx


def sample_initial(mdp: FiniteMdp, rng: np.random.Generator) -> int:
    return _slot_to_state(mdp, _draw_slot(mdp.p0, rng.random()))


def sample_reward(mdp: FiniteMdp, s: int, a: int, rng: np.random.Generator) -> float:
    r = float(mdp.reward_mean[s, a])
    if mdp.reward_noise > 0:
        r += rng.uniform(-mdp.reward_noise, mdp.reward_noise)
        r = min(max(r, -mdp.reward_bound), mdp.reward_bound)
    return r


def sample_transition(mdp: FiniteMdp, s: int, a: int, rng: np.random.Generator) -> tuple[float, int]:
    """Draw ``(reward, next)``; ``next`` is ``TERMINAL`` on termination."""
    if not 0 <= s < mdp.num_states:
        raise IndexError(f"state {s} out of range [0, {mdp.num_states})")
    if not 0 <= a < mdp.num_actions:
        raise IndexError(f"action {a} out of range [0, {mdp.num_actions})")
    nxt = _slot_to_state(mdp, _draw_slot(mdp.kernel[s, a], rng.random()))
    return sample_reward(mdp, s, a, rng), nxt


# -- JSON ------------------------------------------------------------------

_MDP_KEYS = ("num_states", "num_actions", "gamma", "p0", "kernel", "reward_mean", "reward_bound")


def mdp_to_dict(mdp: FiniteMdp) -> dict[str, Any]:
    d = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "gamma": mdp.gamma,
        "p0": mdp.p0,
        "kernel": mdp.kernel,
        "reward_mean": mdp.reward_mean,
        "reward_bound": mdp.reward_bound,
    }
    if mdp.reward_noise:
        d["reward_noise"] = mdp.reward_noise
    return _json.to_plain(d)


def _numeric_array(value, key, shape, text):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(f"'{key}' must be a numeric array", _json.line_of(text, key)) from None
    if arr.shape != shape:
        raise SchemaError(
            f"'{key}' has shape {arr.shape}, expected {shape}", _json.line_of(text, key)
        )
    return arr


def mdp_from_dict(d: Any, text: str | None = None, validate: bool = True) -> FiniteMdp:
    """Build an MDP from its JSON object; ``text`` is only used to anchor errors."""
    if not isinstance(d, dict):
        raise SchemaError("MDP document must be a JSON object", 1 if text else None)
    for key in _MDP_KEYS:
        if key not in d:
            raise SchemaError(f"missing key '{key}'", 1 if text else None)
    for key in ("num_states", "num_actions"):
        if not isinstance(d[key], int) or isinstance(d[key], bool) or d[key] < 1:
            raise SchemaError(f"'{key}' must be a positive integer", _json.line_of(text, key))
    for key in ("gamma", "reward_bound"):
        if not isinstance(d[key], (int, float)) or isinstance(d[key], bool):
            raise SchemaError(f"'{key}' must be a number", _json.line_of(text, key))
    S, A = d["num_states"], d["num_actions"]
    mdp = FiniteMdp(
        num_states=S,
        num_actions=A,
        p0=_numeric_array(d["p0"], "p0", (S + 1,), text),
        kernel=_numeric_array(d["kernel"], "kernel", (S, A, S + 1), text),
        reward_mean=_numeric_array(d["reward_mean"], "reward_mean", (S, A), text),
        reward_bound=d["reward_bound"],
        gamma=d["gamma"],
        reward_noise=d.get("reward_noise", 0.0),
    )
    if validate:
        report = validate_mdp(mdp)
        if not report.ok:
            raise InvalidMdpError(report)
    return mdp


def load_mdp(path: str | Path, validate: bool = True) -> FiniteMdp:
    text = Path(path).read_text()
    return mdp_from_dict(_json.loads(text, str(path)), text=text, validate=validate)


def save_mdp(mdp: FiniteMdp, path: str | Path) -> None:
    Path(path).write_text(_json.dumps(mdp_to_dict(mdp)))
