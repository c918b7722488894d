import numpy as np
import pytest

from laaloc import (
    NetConfig,
    init_network_params,
    load_checkpoint,
    policy_forward,
    save_checkpoint,
    value_forward,
)
from laaloc.errors import BadInputError, ConfigMismatchError, NonFiniteGradientError
from laaloc.networks import (
    _pooled_lengths,
    adam_step,
    backprop,
    flatten_grads,
    flatten_params,
    policy_gradients,
    set_flat_params,
    value_gradients,
)

# small but structurally complete net: every layer type is exercised and a
# full finite-difference sweep over all parameters stays cheap
SMALL = NetConfig(state_len=15, conv_channels=(2, 3, 3), fc_widths=(8, 6), init_seed=3)
DEFAULT = NetConfig()


def _zeroed(cfg, n_outputs):
    params = init_network_params(cfg, n_outputs)
    for arr in params.arrays.values():
        arr[...] = 0.0
    return params


def test_pooling_schedule_for_default_state_length():
    assert _pooled_lengths(51) == [51, 25, 12, 6]
    assert _pooled_lengths(15) == [15, 7, 3, 1]


def test_zero_parameters_give_uniform_policy(rng):
    params = _zeroed(DEFAULT, 2)
    for _ in range(3):
        probs = policy_forward(params, rng.random(51))
        assert np.allclose(probs, [0.5, 0.5])


def test_zero_parameters_give_zero_value(rng):
    params = _zeroed(DEFAULT, 1)
    assert value_forward(params, rng.random(51)) == 0.0


def test_probabilities_sum_to_one(rng):
    for seed in range(5):
        params = init_network_params(DEFAULT, 2, np.random.default_rng(seed))
        states = rng.random((8, 51))
        probs = policy_forward(params, states)
        assert np.all(probs > 0.0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_value_is_deterministic_and_finite(rng):
    params = init_network_params(DEFAULT, 1)
    state = rng.random(51)
    v1 = value_forward(params, state)
    v2 = value_forward(params, state)
    assert v1 == v2
    assert np.isfinite(value_forward(params, rng.random((16, 51)))).all()


def test_shape_mismatch_rejected(rng):
    params = init_network_params(DEFAULT, 2)
    with pytest.raises(BadInputError):
        policy_forward(params, rng.random(50))


def test_init_is_reproducible():
    a = init_network_params(SMALL, 2)
    b = init_network_params(SMALL, 2)
    for name in a.names:
        assert np.array_equal(a.arrays[name], b.arrays[name])


# ---------------------------------------------------------------------------
# gradient checks


def _alive_params(cfg, n_outputs, seed):
    """Random weights plus small random biases.

    Freshly initialized nets have all-zero biases, so a dead draw parks
    pre-activations exactly on the ReLU kink where central differences
    measure the subgradient average; generic biases avoid that measure-zero
    pathology.
    """
    gen = np.random.default_rng(seed)
    params = init_network_params(cfg, n_outputs, gen)
    for name, arr in params.arrays.items():
        if name.endswith("_b"):
            arr[...] = 0.1 * gen.standard_normal(arr.shape)
    return params


def _fd_check(params, loss_fn, grads, rel_tol=1e-3, abs_tol=1e-7):
    """Central finite differences over every parameter component."""
    flat = flatten_params(params)
    analytic = flatten_grads(params, grads)
    numeric = np.empty_like(analytic)
    for idx in range(flat.size):
        h = 1e-4 * max(1.0, abs(flat[idx]))
        for sign, slot in ((+1, 0), (-1, 1)):
            bumped = flat.copy()
            bumped[idx] += sign * h
            set_flat_params(params, bumped)
            if slot == 0:
                up = loss_fn()
            else:
                down = loss_fn()
        numeric[idx] = (up - down) / (2 * h)
    set_flat_params(params, flat)
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_tol / rel_tol)
    worst = (err / scale).max()
    assert worst <= rel_tol, f"worst relative gradient error {worst:.2e}"


def _random_policy_batch(rng, cfg, n=6):
    states = rng.random((n, cfg.state_len))
    actions = rng.integers(0, 2, size=n)
    old_probs = rng.uniform(0.2, 0.8, size=n)
    advantages = rng.standard_normal(n)
    return states, actions, old_probs, advantages


def test_policy_gradient_matches_finite_differences(rng):
    params = _alive_params(SMALL, 2, seed=7)
    states, actions, old_probs, advantages = _random_policy_batch(rng, SMALL)
    grads, _ = policy_gradients(params, states, actions, old_probs, advantages, delta=0.2)

    def objective():
        probs = policy_forward(params, states)
        pa = probs[np.arange(len(states)), actions]
        rho = pa / old_probs
        clipped = np.clip(rho, 0.8, 1.2) * advantages
        return float(np.minimum(rho * advantages, clipped).mean())

    _fd_check(params, objective, grads)


def test_value_gradient_matches_finite_differences(rng):
    params = _alive_params(SMALL, 1, seed=8)
    states = rng.random((5, SMALL.state_len))
    targets = rng.standard_normal(5)
    grads, _ = value_gradients(params, states, targets)

    def loss():
        v = value_forward(params, states)
        return float(((v - targets) ** 2).mean())

    _fd_check(params, loss, grads)


def test_zero_advantage_gives_zero_policy_gradient(rng):
    params = init_network_params(SMALL, 2)
    states, actions, old_probs, _ = _random_policy_batch(rng, SMALL)
    grads, obj = policy_gradients(params, states, actions, old_probs,
                                  np.zeros(len(states)), delta=0.2)
    assert obj == 0.0
    for g in grads.values():
        assert np.all(g == 0.0)


def test_duplicated_sample_doubles_sum_gradient(rng):
    params = init_network_params(SMALL, 2)
    states, actions, old_probs, advantages = _random_policy_batch(rng, SMALL, n=1)
    single, _ = policy_gradients(params, states, actions, old_probs, advantages,
                                 delta=0.2, reduce="sum")
    doubled, _ = policy_gradients(
        params,
        np.vstack([states, states]),
        np.concatenate([actions, actions]),
        np.concatenate([old_probs, old_probs]),
        np.concatenate([advantages, advantages]),
        delta=0.2,
        reduce="sum",
    )
    for name in single:
        assert np.allclose(doubled[name], 2.0 * single[name], rtol=1e-12, atol=1e-15)


def test_backprop_dispatcher(rng):
    params = init_network_params(SMALL, 2)
    states, actions, old_probs, advantages = _random_policy_batch(rng, SMALL)
    grads = backprop(
        params,
        {"states": states, "actions": actions, "old_probs": old_probs,
         "advantages": advantages, "delta": 0.2},
        "ppo",
    )
    direct, _ = policy_gradients(params, states, actions, old_probs, advantages, 0.2)
    for name in grads:
        assert np.array_equal(grads[name], direct[name])
    with pytest.raises(BadInputError):
        backprop(params, {}, "nonsense")


# ---------------------------------------------------------------------------
# optimizer


def test_adam_zero_gradient_leaves_parameters_unchanged():
    params = init_network_params(SMALL, 2)
    before = flatten_params(params).copy()
    zeros = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    adam_step(params, zeros, lr=1e-3)
    assert np.array_equal(flatten_params(params), before)


def test_adam_first_step_magnitude_is_lr_times_sign(rng):
    params = init_network_params(SMALL, 1)
    before = flatten_params(params).copy()
    grads = {k: rng.standard_normal(v.shape) for k, v in params.arrays.items()}
    lr = 1e-3
    adam_step(params, grads, lr=lr)
    delta = flatten_params(params) - before
    gflat = flatten_grads(params, grads)
    # first step: lr * g / (|g| + eps) =~ lr * sign(g); eps blurs tiny g
    clear = np.abs(gflat) > 1e-2
    assert np.allclose(delta[clear], -lr * np.sign(gflat[clear]), rtol=1e-5)


def test_adam_maximize_flips_direction(rng):
    params = init_network_params(SMALL, 1)
    before = flatten_params(params).copy()
    grads = {k: np.ones_like(v) for k, v in params.arrays.items()}
    adam_step(params, grads, lr=1e-3, maximize=True)
    assert np.all(flatten_params(params) - before > 0)


def test_adam_rejects_non_finite_gradients():
    params = init_network_params(SMALL, 1)
    grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    grads["fc0_w"][0, 0] = np.nan
    with pytest.raises(NonFiniteGradientError):
        adam_step(params, grads)


def test_adam_runs_identically_for_identical_seeds(rng):
    results = []
    for _ in range(2):
        params = init_network_params(SMALL, 2, np.random.default_rng(5))
        grad_rng = np.random.default_rng(99)
        for _step in range(10):
            grads = {k: grad_rng.standard_normal(v.shape) for k, v in params.arrays.items()}
            adam_step(params, grads, lr=1e-3)
        results.append(flatten_params(params))
    assert np.array_equal(results[0], results[1])


# ---------------------------------------------------------------------------
# checkpointing


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    policy = init_network_params(SMALL, 2, np.random.default_rng(1))
    value = init_network_params(SMALL, 1, np.random.default_rng(2))
    grads = {k: rng.standard_normal(v.shape) for k, v in policy.arrays.items()}
    adam_step(policy, grads, lr=1e-4)  # non-trivial moments and step counter
    path = str(tmp_path / "ckpt")
    save_checkpoint(path, {"policy": policy, "value": value}, metadata={"note": 7})
    nets, meta = load_checkpoint(path)
    assert meta == {"note": 7}
    for name, orig in (("policy", policy), ("value", value)):
        loaded = nets[name]
        assert loaded.step == orig.step
        for arr_name in orig.names:
            assert np.array_equal(loaded.arrays[arr_name], orig.arrays[arr_name])
            assert np.array_equal(loaded.m[arr_name], orig.m[arr_name])
            assert np.array_equal(loaded.v[arr_name], orig.v[arr_name])


def test_checkpoint_config_mismatch_raises(tmp_path):
    params = init_network_params(SMALL, 2)
    path = str(tmp_path / "ckpt")
    save_checkpoint(path, params)
    with pytest.raises(ConfigMismatchError):
        load_checkpoint(path, expected_config=NetConfig(state_len=51))


def test_fresh_checkpoint_reports_step_zero(tmp_path):
    params = init_network_params(SMALL, 1)
    path = str(tmp_path / "ckpt")
    save_checkpoint(path, params)
    nets, _ = load_checkpoint(path)
    assert nets["net"].step == 0


def test_corrupt_checkpoint_rejected(tmp_path):
    path = tmp_path / "ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(BadInputError):
        load_checkpoint(str(path))
    path.write_bytes(b"")
    with pytest.raises(BadInputError):
        load_checkpoint(str(path))
