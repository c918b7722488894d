"""The 1D depth-profile decision process the localization agent lives in.

Positions are centerline indices.  The observation at index ``i`` is the
normalized depth window ``depths[i-k .. i+k]`` (edge-replicated, divided by
the profile maximum).  The two actions move one index forward (toward the
chamber) or backward (toward the tip), clamped at the ends.  The reward for
a transition ``(i, a, i')`` with target ``p`` and band ``tau``::

    +2  if |p - i| <= tau        (checked first, action-independent)
    +1  if |p - i'| < |p - i|
    -1  otherwise

Training episodes stop on arrival inside the band (or at the step cap).
Test episodes have no target: they stop when the agent starts shuttling in
place -- the last position equals the one two moves ago, or any position has
been entered three times -- and report the most-visited index of the final
six positions.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

from .centerline import Centerline
from .errors import BadInputError

__all__ = [
    "Action",
    "EnvConfig",
    "WorldState",
    "Transition",
    "DepthWorld",
    "EpisodeResult",
    "observe",
    "step",
    "run_episode",
    "save_trajectory_jsonl",
    "load_trajectory_jsonl",
]


class Action(IntEnum):
    """Index 0/1 matches the policy network's output order."""

    FORWARD = 0
    BACKWARD = 1

    @property
    def delta(self) -> int:
        return 1 if self is Action.FORWARD else -1


@dataclass(frozen=True)
class EnvConfig:
    """k is the half-window (state length 2k+1), tau the convergence band in
    indices, max_steps the episode cap (default 2T), target_index the
    training target p (unused at test time)."""

    k: int = 25
    tau: int = 3
    max_steps: int | None = None
    target_index: int | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise BadInputError(f"k must be positive, got {self.k}")
        if self.tau < 1:
            raise BadInputError(f"tau must be >= 1, got {self.tau}")
        if self.max_steps is not None and self.max_steps < 1:
            raise BadInputError(f"max_steps must be positive, got {self.max_steps}")

    @property
    def state_length(self) -> int:
        return 2 * self.k + 1


@dataclass(frozen=True)
class WorldState:
    window: np.ndarray  # (2k+1,) normalized depths in [0, 1]
    agent_index: int


@dataclass(frozen=True)
class Transition:
    state: WorldState
    action: Action
    next_state: WorldState
    reward: float | None  # None when the world has no target (test rollouts)


def _profile_of(source) -> np.ndarray:
    depths = source.depths if isinstance(source, Centerline) else source
    depths = np.asarray(depths, dtype=np.float64)
    if depths.ndim != 1 or depths.size == 0:
        raise BadInputError("depth profile must be a non-empty 1D sequence")
    return depths


def observe(source, i: int, k: int) -> WorldState:
    """Normalized edge-replicated depth window of length 2k+1 centered at i."""
    depths = _profile_of(source)
    t = depths.size
    if 2 * k + 1 > t:
        raise BadInputError(f"window 2k+1={2 * k + 1} exceeds profile length {t}")
    if not 0 <= i < t:
        raise BadInputError(f"index {i} outside profile of length {t}")
    peak = depths.max()
    if peak <= 0:
        raise BadInputError("profile maximum must be positive for normalization")
    idx = np.clip(np.arange(i - k, i + k + 1), 0, t - 1)
    return WorldState(window=depths[idx] / peak, agent_index=int(i))


def step(i: int, action: Action, p: int, tau: int, t: int) -> tuple[int, int]:
    """One move on a length-t profile; returns (next index, reward)."""
    if not 0 <= i < t:
        raise BadInputError(f"index {i} outside profile of length {t}")
    nxt = min(max(i + Action(action).delta, 0), t - 1)
    if abs(p - i) <= tau:
        reward = 2
    elif abs(p - nxt) < abs(p - i):
        reward = 1
    else:
        reward = -1
    return nxt, reward


class DepthWorld:
    """A depth profile bound to an environment configuration.

    ``target`` (the orifice index p) is required for training rewards and
    may be carried purely for evaluation at test time.
    """

    def __init__(self, profile, cfg: EnvConfig | None = None, target: int | None = None):
        self.profile = _profile_of(profile)
        self.cfg = cfg or EnvConfig()
        if self.cfg.state_length > self.profile.size:
            raise BadInputError(
                f"state length {self.cfg.state_length} exceeds profile "
                f"length {self.profile.size}"
            )
        if target is None:
            target = self.cfg.target_index
        if target is not None and not 0 <= target < self.profile.size:
            raise BadInputError(f"target {target} outside profile of length {self.profile.size}")
        self.target = target

    def __len__(self) -> int:
        return self.profile.size

    @property
    def max_steps(self) -> int:
        return self.cfg.max_steps or 2 * self.profile.size

    def observe(self, i: int) -> WorldState:
        return observe(self.profile, i, self.cfg.k)

    def step_from(self, i: int, action: Action) -> tuple[int, int | None]:
        if self.target is None:
            nxt = min(max(i + Action(action).delta, 0), len(self) - 1)
            return nxt, None
        return step(i, action, self.target, self.cfg.tau, len(self))


@dataclass(frozen=True)
class EpisodeResult:
    transitions: list[Transition]
    final_index: int
    start_index: int
    converged: bool  # train: entered the tau band; test: oscillation seen
    policy_probs: np.ndarray = field(repr=False)  # (n, 2) pi(s, .) per step


PolicyFn = Callable[[WorldState], Sequence[float]]
ActionFn = Callable[[np.ndarray, np.random.Generator | None], Action]


def _sample_action(probs: np.ndarray, rng: np.random.Generator | None) -> Action:
    if rng is None:
        raise BadInputError("sampling actions requires an rng")
    return Action.FORWARD if rng.random() < probs[0] else Action.BACKWARD


def _greedy_action(probs: np.ndarray, rng=None) -> Action:
    return Action(int(np.argmax(probs)))


def run_episode(
    world,
    policy: PolicyFn,
    mode: str = "train",
    start: int | None = None,
    rng: np.random.Generator | None = None,
    action_fn: ActionFn | None = None,
) -> EpisodeResult:
    """Roll the agent along the profile until termination.

    ``world`` may be a :class:`DepthWorld`, a :class:`Centerline` or a raw
    profile (the latter two get a default config).  ``policy`` maps a state
    to the two action probabilities.  Train mode samples actions from those
    probabilities (override with ``action_fn``, e.g. for epsilon-greedy
    exploration) and stops on arrival in the reward band; test mode is
    greedy and stops on oscillation.  Both stop at the step cap.
    """
    if not isinstance(world, DepthWorld):
        world = DepthWorld(world)
    if mode not in ("train", "test"):
        raise BadInputError(f"mode must be 'train' or 'test', got {mode!r}")
    if mode == "train" and world.target is None:
        raise BadInputError("train mode requires a world with a target index")
    t = len(world)
    if start is None:
        if rng is None:
            raise BadInputError("random start requires an rng")
        k = world.cfg.k
        start = int(rng.integers(k, t - k))
    if not 0 <= start < t:
        raise BadInputError(f"start {start} outside profile of length {t}")
    if action_fn is None:
        action_fn = _sample_action if mode == "train" else _greedy_action

    transitions: list[Transition] = []
    probs_log: list[np.ndarray] = []
    i = start
    positions = [i]  # raw position sequence, clamped repeats included
    moved = [i]  # positions where the agent actually arrived (for oscillation)
    visits = Counter({i: 1})
    converged = False

    if mode == "train" and abs(world.target - i) <= world.cfg.tau:
        # already inside the band: nothing to do
        return EpisodeResult([], i, start, True, np.zeros((0, 2)))

    state = world.observe(i)
    for _ in range(world.max_steps):
        probs = np.asarray(policy(state), dtype=np.float64)
        action = action_fn(probs, rng)
        nxt, reward = world.step_from(i, action)
        next_state = world.observe(nxt)
        transitions.append(Transition(state, Action(action), next_state, reward))
        probs_log.append(probs)
        positions.append(nxt)
        if nxt != i:
            moved.append(nxt)
            visits[nxt] += 1
        i, state = nxt, next_state
        if mode == "train":
            if abs(world.target - i) <= world.cfg.tau:
                converged = True
                break
        else:
            if (len(moved) >= 3 and moved[-1] == moved[-3]) or visits[i] >= 3:
                converged = True
                break

    if mode == "train":
        final = i
    else:
        tail = positions[-6:]
        counts = Counter(tail)
        top = max(counts.values())
        final = min(pos for pos, c in counts.items() if c == top)
    probs_arr = np.asarray(probs_log) if probs_log else np.zeros((0, 2))
    return EpisodeResult(transitions, int(final), int(start), converged, probs_arr)


def save_trajectory_jsonl(transitions: Sequence[Transition], path: str) -> None:
    """One transition per line, for debugging and plotting."""
    try:
        with open(path, "w") as fh:
            for tr in transitions:
                fh.write(
                    json.dumps(
                        {
                            "state": {
                                "agent_index": tr.state.agent_index,
                                "window": tr.state.window.tolist(),
                            },
                            "action": Action(tr.action).name.lower(),
                            "next_state": {
                                "agent_index": tr.next_state.agent_index,
                                "window": tr.next_state.window.tolist(),
                            },
                            "reward": tr.reward,
                        }
                    )
                    + "\n"
                )
    except OSError as exc:
        raise BadInputError(f"cannot write trajectory to {path!r}: {exc}") from exc


def load_trajectory_jsonl(path: str) -> list[Transition]:
    out = []
    try:
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                out.append(
                    Transition(
                        WorldState(
                            np.asarray(rec["state"]["window"]), rec["state"]["agent_index"]
                        ),
                        Action[rec["action"].upper()],
                        WorldState(
                            np.asarray(rec["next_state"]["window"]),
                            rec["next_state"]["agent_index"],
                        ),
                        rec["reward"],
                    )
                )
    except OSError as exc:
        raise BadInputError(f"cannot read trajectory from {path!r}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise BadInputError(f"malformed trajectory file {path!r}: {exc}") from exc
    return out
