"""Clipped-ratio policy optimization over depth-profile worlds.

Each epoch alternates a collection phase (episodes rolled with the current
policy under epsilon-greedy exploration, recording the policy's own action
probability for the ratio) and an update phase (minibatch gradient ascent on
the clipped surrogate for the policy net, descent on the squared return
error for the value net, with value bootstrap targets frozen at the epoch
start).  Greedy evaluation rollouts with oscillation stopping report how
close final positions land to the targets.

Exploration follows the stated convention literally: the action comes from
the policy with probability epsilon and is uniform random with probability
1 - epsilon (note the inversion from the textbook epsilon-greedy; set
``conventional_epsilon`` to flip the roles).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import BadInputError, DivergenceError
from .networks import (
    NetConfig,
    NetworkParams,
    adam_step,
    init_network_params,
    policy_forward,
    policy_gradients,
    value_forward,
    value_gradients,
)
from .world import DepthWorld, EnvConfig

__all__ = [
    "Experience",
    "TrainConfig",
    "EpochLog",
    "TrainResult",
    "EvalResult",
    "collect_experiences",
    "compute_advantage",
    "compute_advantages",
    "ppo_surrogate",
    "train",
    "evaluate_policy",
    "write_log_csv",
]


@dataclass(frozen=True)
class Experience:
    state: np.ndarray = field(repr=False)  # normalized depth window
    action: int
    next_state: np.ndarray = field(repr=False)
    reward: float
    old_policy_prob: float  # pi_old(s, a), recorded at collection time
    done: bool = False


@dataclass(frozen=True)
class TrainConfig:
    epsilon: float = 0.7
    gamma: float = 0.9
    delta: float = 0.2
    episodes_per_epoch: int = 32
    minibatch_size: int = 64
    gradient_steps_per_epoch: int = 50
    epochs: int = 200
    rng_seed: int = 0
    conventional_epsilon: bool = False
    eval_episodes: int = 32

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise BadInputError(f"epsilon must lie in [0,1], got {self.epsilon}")
        if not 0.0 < self.gamma < 1.0:
            raise BadInputError(f"gamma must lie in (0,1), got {self.gamma}")
        if self.delta <= 0.0:
            raise BadInputError(f"delta must be positive, got {self.delta}")
        for name in ("episodes_per_epoch", "minibatch_size",
                     "gradient_steps_per_epoch", "epochs", "eval_episodes"):
            if getattr(self, name) < 1:
                raise BadInputError(f"{name} must be positive")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    mean_reward: float
    eval_mean_abs_error: float
    eval_pct_within_tau: float


@dataclass
class TrainResult:
    policy: NetworkParams
    value: NetworkParams
    log: list[EpochLog]
    rng: np.random.Generator
    epochs_done: int


@dataclass(frozen=True)
class EvalResult:
    final_indices: np.ndarray
    targets: np.ndarray
    abs_errors: np.ndarray
    mean_abs_error: float
    pct_within_tau: float


def _as_world(world, env_cfg: EnvConfig) -> DepthWorld:
    if isinstance(world, DepthWorld):
        return world
    profile = getattr(world, "depths", world)
    target = getattr(world, "target", None)
    return DepthWorld(profile, env_cfg, target=target)


def _gather_windows(profiles: np.ndarray, maxd: np.ndarray, pos: np.ndarray,
                    k: int) -> np.ndarray:
    """Normalized edge-replicated windows for many episodes at once."""
    t = profiles.shape[1]
    idx = np.clip(pos[:, None] + np.arange(-k, k + 1)[None, :], 0, t - 1)
    return profiles[np.arange(len(pos))[:, None], idx] / maxd[:, None]


def batched_greedy_rollouts(
    profiles: np.ndarray,
    starts: np.ndarray,
    policy_params: NetworkParams,
    env_cfg: EnvConfig,
) -> np.ndarray:
    """Greedy test episodes over equal-length profiles, stepped in lockstep.

    Exactly the per-episode semantics of :func:`laaloc.world.run_episode` in
    test mode (oscillation stopping, most-visited of the last six positions,
    smallest index on ties), but with one batched policy forward per step,
    which is what makes evaluation over many worlds cheap.
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    n, t = profiles.shape
    k = env_cfg.k
    max_steps = env_cfg.max_steps or 2 * t
    maxd = profiles.max(axis=1)
    pos = np.asarray(starts, dtype=int).copy()
    visits = np.zeros((n, t), dtype=np.int32)
    visits[np.arange(n), pos] = 1
    # last three *moved-to* positions (rolling), and how many moves happened
    moved = np.full((n, 3), -1, dtype=int)
    moved[:, 2] = pos
    move_count = np.ones(n, dtype=int)
    tail = np.full((n, 6), -1, dtype=int)  # raw position ring, clamps included
    tail[:, 5] = pos
    active = np.ones(n, dtype=bool)
    for _ in range(max_steps):
        act = np.nonzero(active)[0]
        if act.size == 0:
            break
        windows = _gather_windows(profiles[act], maxd[act], pos[act], k)
        probs = policy_forward(policy_params, windows)
        delta = np.where(probs[:, 0] >= probs[:, 1], 1, -1)  # argmax, tie -> forward
        nxt = np.clip(pos[act] + delta, 0, t - 1)
        changed = nxt != pos[act]
        tail[act] = np.roll(tail[act], -1, axis=1)
        tail[act, 5] = nxt
        osc = np.zeros(len(act), dtype=bool)
        ch = act[changed]
        if ch.size:
            osc_ch = (move_count[ch] >= 2) & (moved[ch, 1] == nxt[changed])
            moved[ch] = np.roll(moved[ch], -1, axis=1)
            moved[ch, 2] = nxt[changed]
            move_count[ch] += 1
            visits[ch, nxt[changed]] += 1
            osc_ch |= visits[ch, nxt[changed]] >= 3
            osc[changed] = osc_ch
        pos[act] = nxt
        active[act[osc]] = False
    finals = np.empty(n, dtype=int)
    for i in range(n):
        ring = tail[i][tail[i] >= 0]
        counts = np.bincount(ring)
        finals[i] = int(np.flatnonzero(counts == counts.max())[0])
    return finals


def collect_experiences(
    worlds,
    policy_params: NetworkParams,
    cfg: TrainConfig,
    env_cfg: EnvConfig,
    rng: np.random.Generator,
) -> tuple[list[Experience], dict]:
    """Roll episodes; returns the buffer plus {mean_reward, episode_lengths}.

    Start indices are uniform over the full-state range, re-drawn if they
    fall inside the reward band (such an episode would be empty)."""
    worlds = [_as_world(w, env_cfg) for w in worlds]
    if not worlds:
        raise BadInputError("need at least one training world")
    for w in worlds:
        if w.target is None:
            raise BadInputError("training worlds must carry a target index")

    p_policy = 1.0 - cfg.epsilon if cfg.conventional_epsilon else cfg.epsilon

    episodes = []  # (world index, start)
    for _ in range(cfg.episodes_per_epoch):
        wi = int(rng.integers(len(worlds)))
        world = worlds[wi]
        k, t = world.cfg.k, len(world)
        start = int(rng.integers(k, t - k))
        for _try in range(1000):
            if abs(world.target - start) > world.cfg.tau:
                break
            start = int(rng.integers(k, t - k))
        episodes.append((wi, start))

    # episodes over equal-length profiles run in lockstep: one batched policy
    # forward per step instead of one per episode-step
    per_episode: list[list[Experience]] = [[] for _ in episodes]
    groups: dict[int, list[int]] = {}
    for ep_idx, (wi, _start) in enumerate(episodes):
        groups.setdefault(len(worlds[wi]), []).append(ep_idx)
    for t, ep_indices in groups.items():
        group_worlds = [worlds[episodes[e][0]] for e in ep_indices]
        profiles = np.stack([w.profile for w in group_worlds])
        targets = np.array([w.target for w in group_worlds])
        starts = np.array([episodes[e][1] for e in ep_indices])
        k = env_cfg.k
        tau = env_cfg.tau
        max_steps = env_cfg.max_steps or 2 * t
        maxd = profiles.max(axis=1)
        pos = starts.copy()
        active = np.abs(targets - pos) > tau  # in-band starts stay empty
        for _ in range(max_steps):
            act = np.nonzero(active)[0]
            if act.size == 0:
                break
            windows = _gather_windows(profiles[act], maxd[act], pos[act], k)
            probs = policy_forward(policy_params, windows)
            u_mode = rng.random(act.size)
            u_policy = rng.random(act.size)
            u_uniform = rng.integers(0, 2, size=act.size)
            policy_action = np.where(u_policy < probs[:, 0], 0, 1)
            actions = np.where(u_mode < p_policy, policy_action, u_uniform)
            delta = np.where(actions == 0, 1, -1)
            nxt = np.clip(pos[act] + delta, 0, t - 1)
            dist_now = np.abs(targets[act] - pos[act])
            dist_next = np.abs(targets[act] - nxt)
            rewards = np.where(dist_now <= tau, 2, np.where(dist_next < dist_now, 1, -1))
            next_windows = _gather_windows(profiles[act], maxd[act], nxt, k)
            arrived = dist_next <= tau
            # saturated softmax can round to exactly 0/1 in float64; the
            # stored ratio denominator must stay strictly inside (0, 1)
            pi_a = np.clip(probs[np.arange(act.size), actions], 1e-9, 1.0 - 1e-9)
            for row, group_row in enumerate(act):
                per_episode[ep_indices[group_row]].append(
                    Experience(
                        state=windows[row],
                        action=int(actions[row]),
                        next_state=next_windows[row],
                        reward=float(rewards[row]),
                        old_policy_prob=float(pi_a[row]),
                        done=bool(arrived[row]),
                    )
                )
            pos[act] = nxt
            active[act[arrived]] = False

    buffer: list[Experience] = []
    episode_rewards = []
    episode_lengths = []
    for exps in per_episode:
        buffer.extend(exps)
        episode_rewards.append(sum(e.reward for e in exps))
        episode_lengths.append(len(exps))
    stats = {
        "mean_reward": float(np.mean(episode_rewards)) if episode_rewards else 0.0,
        "episode_lengths": episode_lengths,
    }
    return buffer, stats


def compute_advantage(exp: Experience, value, gamma: float) -> float:
    """A = r + gamma * V(s') - V(s); the bootstrap drops on terminal steps.

    ``value`` is either value-network parameters or any callable mapping a
    state window to a scalar.
    """
    v = (lambda s: value_forward(value, s)) if isinstance(value, NetworkParams) else value
    v_s = float(v(exp.state))
    v_next = 0.0 if exp.done else float(v(exp.next_state))
    return float(exp.reward + gamma * v_next - v_s)


def compute_advantages(
    buffer: list[Experience], value_params: NetworkParams, gamma: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched advantages plus frozen value targets r + gamma * V(s')."""
    states = np.stack([e.state for e in buffer])
    next_states = np.stack([e.next_state for e in buffer])
    rewards = np.array([e.reward for e in buffer])
    done = np.array([e.done for e in buffer])
    v_s = value_forward(value_params, states)
    v_next = value_forward(value_params, next_states)
    targets = rewards + gamma * np.where(done, 0.0, v_next)
    return targets - v_s, targets, v_s


def ppo_surrogate(rho, advantage, delta: float):
    """min(rho * A, clip(rho, 1 - delta, 1 + delta) * A); elementwise."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0.0):
        raise BadInputError("probability ratio must be positive")
    advantage = np.asarray(advantage, dtype=np.float64)
    out = np.minimum(rho * advantage, np.clip(rho, 1.0 - delta, 1.0 + delta) * advantage)
    return float(out) if out.ndim == 0 else out


def evaluate_policy(
    worlds,
    policy_params: NetworkParams,
    cfg: TrainConfig,
    env_cfg: EnvConfig,
    rng: np.random.Generator,
    max_worlds: int | None = None,
) -> EvalResult:
    """Greedy test rollouts with oscillation stopping; |final - p| statistics."""
    worlds = [_as_world(w, env_cfg) for w in worlds]
    if max_worlds is not None and len(worlds) > max_worlds:
        pick = rng.choice(len(worlds), size=max_worlds, replace=False)
        worlds = [worlds[int(ix)] for ix in pick]
    for world in worlds:
        if world.target is None:
            raise BadInputError("evaluation worlds must carry a target index")
    starts = np.array(
        [int(rng.integers(w.cfg.k, len(w) - w.cfg.k)) for w in worlds], dtype=int
    )
    finals = np.empty(len(worlds), dtype=int)
    groups: dict[int, list[int]] = {}
    for idx, world in enumerate(worlds):
        groups.setdefault(len(world), []).append(idx)
    for _t, indices in groups.items():
        profiles = np.stack([worlds[i].profile for i in indices])
        finals[indices] = batched_greedy_rollouts(
            profiles, starts[indices], policy_params, env_cfg
        )
    targets = np.asarray([w.target for w in worlds])
    errors = np.abs(finals - targets)
    return EvalResult(
        final_indices=finals,
        targets=targets,
        abs_errors=errors,
        mean_abs_error=float(errors.mean()),
        pct_within_tau=float(np.mean(errors <= env_cfg.tau) * 100.0),
    )


def train(
    worlds,
    cfg: TrainConfig,
    env_cfg: EnvConfig | None = None,
    net_cfg: NetConfig | None = None,
    eval_worlds=None,
    policy: NetworkParams | None = None,
    value: NetworkParams | None = None,
    rng: np.random.Generator | None = None,
    log_path: str | None = None,
    start_epoch: int = 0,
) -> TrainResult:
    """Run the full epoch loop; returns trained nets and the per-epoch log.

    Pass ``policy``/``value``/``rng`` (and ``start_epoch`` for log
    numbering) to resume from a checkpointed state; otherwise networks are
    initialized from ``net_cfg`` and the rng from ``cfg.rng_seed``.
    """
    env_cfg = env_cfg or EnvConfig()
    net_cfg = net_cfg or NetConfig(state_len=env_cfg.state_length)
    if net_cfg.state_len != env_cfg.state_length:
        raise BadInputError(
            f"net state_len {net_cfg.state_len} != env state length {env_cfg.state_length}"
        )
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    if policy is None:
        policy = init_network_params(net_cfg, 2, np.random.default_rng(net_cfg.init_seed))
    if value is None:
        value = init_network_params(net_cfg, 1, np.random.default_rng(net_cfg.init_seed + 1))
    eval_worlds = eval_worlds if eval_worlds is not None else worlds

    max_abs_reward = 2.0
    v_bound = 10.0 * max_abs_reward / (1.0 - cfg.gamma)

    log: list[EpochLog] = []
    # many tiny matrix products: extra BLAS threads only synchronize
    with threadpool_limits(limits=1):
        _train_epochs(worlds, eval_worlds, cfg, env_cfg, policy, value, rng,
                      start_epoch, v_bound, log)
    if log_path:
        write_log_csv(log, log_path)
    return TrainResult(
        policy=policy, value=value, log=log, rng=rng, epochs_done=start_epoch + cfg.epochs
    )


def _train_epochs(worlds, eval_worlds, cfg, env_cfg, policy, value, rng,
                  start_epoch, v_bound, log) -> None:
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        buffer, stats = collect_experiences(worlds, policy, cfg, env_cfg, rng)
        mean_reward = stats["mean_reward"]
        if not buffer:
            log.append(EpochLog(epoch, mean_reward, float("nan"), float("nan")))
            continue
        states = np.stack([e.state for e in buffer])
        next_states = np.stack([e.next_state for e in buffer])
        actions = np.array([e.action for e in buffer])
        old_probs = np.array([e.old_policy_prob for e in buffer])
        rewards = np.array([e.reward for e in buffer])
        not_done = ~np.array([e.done for e in buffer])
        n = len(buffer)
        # value targets and advantages use the value net frozen at epoch
        # start; evaluated lazily per minibatch (the buffer is much larger
        # than the slice of it the gradient steps actually touch)
        frozen_value = value.copy()
        guard_rows = slice(0, min(n, 2048))
        v_sample = value_forward(frozen_value, states[guard_rows])
        if float(np.abs(v_sample).mean()) > v_bound:
            raise DivergenceError(
                f"mean |V| {np.abs(v_sample).mean():.2f} exceeds {v_bound:.2f}; "
                "training aborted"
            )
        for _ in range(cfg.gradient_steps_per_epoch):
            idx = rng.integers(0, n, size=cfg.minibatch_size)
            v_next = value_forward(frozen_value, next_states[idx])
            targets = rewards[idx] + cfg.gamma * np.where(not_done[idx], v_next, 0.0)
            advantages = targets - value_forward(frozen_value, states[idx])
            pg, _ = policy_gradients(
                policy, states[idx], actions[idx], old_probs[idx], advantages, cfg.delta
            )
            adam_step(policy, pg, maximize=True)
            vg, _ = value_gradients(value, states[idx], targets)
            adam_step(value, vg)
        ev = evaluate_policy(
            eval_worlds, policy, cfg, env_cfg, rng, max_worlds=cfg.eval_episodes
        )
        log.append(EpochLog(epoch, mean_reward, ev.mean_abs_error, ev.pct_within_tau))


def write_log_csv(log: list[EpochLog], path: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_reward", "eval_mean_abs_error",
                             "eval_pct_within_tau"])
            for row in log:
                writer.writerow(
                    [row.epoch, repr(row.mean_reward), repr(row.eval_mean_abs_error),
                     repr(row.eval_pct_within_tau)]
                )
    except OSError as exc:
        raise BadInputError(f"cannot write training log to {path!r}: {exc}") from exc
