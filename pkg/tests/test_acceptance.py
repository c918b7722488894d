"""The acceptance gate: one test per criterion, each printing PASS on exit.

Run with ``pytest tests/test_acceptance.py -v -s``.  The slow criteria share
session-scoped artifacts (one trained policy, one phantom batch); the
determinism criterion re-runs them from scratch and compares bit-exactly.
"""

import time

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

import laaloc
from laaloc import (
    EnvConfig,
    GeodesicConfig,
    NetConfig,
    OrificeResult,
    PhantomSpec,
    PipelineConfig,
    TrainConfig,
    Volume,
    brute_force_edt,
    dijkstra_geodesic,
    edt,
    evaluate_policy,
    gen_phantom_volume,
    gen_profile_family,
    geodesic_distance_map,
    grow_seed_region,
    nearest_centerline_index,
    orifice_metrics,
    ppo_surrogate,
    rule_localize,
    step,
    train,
)
from laaloc.networks import (
    flatten_grads,
    flatten_params,
    init_network_params,
    policy_forward,
    policy_gradients,
    set_flat_params,
    value_forward,
    value_gradients,
)
from laaloc.phantoms import ProfileFamilyConfig
from laaloc.pipeline import extract_pipeline, localize_orifice
from laaloc.world import Action

# ---------------------------------------------------------------------------
# shared configurations (fixed here; nothing is tuned at test time)

ENV = EnvConfig(k=25, tau=3)
NET = NetConfig(state_len=51, learning_rate=1e-5, init_seed=7)
FAMILY = ProfileFamilyConfig(distractor_prob=0.35, noise_sigma=0.06)
TRAIN_CFG = TrainConfig(
    epsilon=0.7,
    gamma=0.9,
    delta=0.2,
    episodes_per_epoch=32,
    minibatch_size=64,
    gradient_steps_per_epoch=50,
    epochs=260,
    rng_seed=0,
    eval_episodes=24,
)
TRAIN_SEED = 100
HELDOUT_SEED = 200
DISTRACTOR_SEED = 300
PHANTOM_SEED = 7000


def _train_policy():
    worlds = gen_profile_family(200, FAMILY, rng_seed=TRAIN_SEED)
    held_out = gen_profile_family(50, FAMILY, rng_seed=HELDOUT_SEED)
    result = train(worlds, TRAIN_CFG, env_cfg=ENV, net_cfg=NET, eval_worlds=held_out)
    return result, held_out


@pytest.fixture(scope="session")
def trained(request):
    start = time.time()
    result, held_out = _train_policy()
    return result, held_out, time.time() - start


def _phantom_specs():
    specs = []
    rng = np.random.default_rng(PHANTOM_SEED)
    for i in range(40):
        noise = 5.0 if i >= 20 else 0.0  # 5% of the 100-unit lumen contrast
        specs.append(
            PhantomSpec(
                tip_radius=float(rng.uniform(5.0, 6.2)),
                neck_radius=float(rng.uniform(3.4, 4.6)),
                atrium_radius=float(rng.uniform(10.0, 12.0)),
                neck_length=float(rng.uniform(12.0, 16.0)),
                bend_angle=float(rng.uniform(0.0, 25.0)),
                noise_sigma=noise,
                rng_seed=PHANTOM_SEED + i,
            )
        )
    return specs


def _run_phantom_batch(policy):
    cfg = PipelineConfig()
    rows = []
    for i, spec in enumerate(_phantom_specs()):
        volume, truth = gen_phantom_volume(spec)
        extraction = extract_pipeline(volume, truth.tip_seed, cfg)
        result = localize_orifice(
            extraction.centerline, extraction.mask, "rl", policy=policy, cfg=cfg,
            rng=np.random.default_rng(1000 + i),
        )
        truth_result = OrificeResult(
            index=nearest_centerline_index(extraction.centerline, truth.orifice_center_mm),
            center_mm=truth.orifice_center_mm,
            normal=truth.orifice_normal,
            area_mm2=truth.orifice_area_mm2,
        )
        m = orifice_metrics(result, truth_result)
        rows.append(
            (m.center_mm, m.orientation_deg,
             abs(result.area_mm2 - truth.orifice_area_mm2) / truth.orifice_area_mm2)
        )
    return np.asarray(rows)


# ---------------------------------------------------------------------------


def test_criterion_01_edt_exactness(rng):
    start = time.time()
    checked = 0
    for _ in range(500):
        shape = tuple(int(s) for s in rng.integers(10, 21, size=3))
        spacing = tuple(float(s) for s in rng.uniform(0.3, 1.2, size=3))
        data = (rng.random(shape) < rng.uniform(0.2, 0.8)).astype(np.float32)
        data.flat[int(rng.integers(data.size))] = 0.0
        mask = Volume(data=data, spacing=spacing)
        fast = edt(mask).data
        slow = brute_force_edt(mask).data
        assert np.allclose(fast, slow, rtol=1e-9, atol=1e-12)
        checked += 1
    elapsed = time.time() - start
    assert checked == 500
    assert elapsed < 10.0, f"EDT batch took {elapsed:.1f}s (budget 10s)"
    print(f"\nCRITERION 1 PASS: edt == brute force on 500 masks in {elapsed:.1f}s")


def test_criterion_02_geodesic_fidelity(rng):
    worst = 0.0
    for _ in range(50):
        raw = gaussian_filter(rng.random((16, 16, 16)), sigma=1.5)
        raw = (raw - raw.min()) / (raw.max() - raw.min())
        vol = Volume(data=raw.astype(np.float32),
                     spacing=tuple(rng.uniform(0.4, 0.8, size=3)))
        seed = tuple(int(s) for s in rng.integers(3, 13, size=3))
        omega = grow_seed_region(seed, 2, vol)
        approx = geodesic_distance_map(vol, omega, GeodesicConfig(alpha=1.0, passes=2))
        exact = dijkstra_geodesic(vol, omega, 1.0)
        pos = exact.data > 0
        rel = np.abs(approx.data[pos] - exact.data[pos]) / exact.data[pos]
        worst = max(worst, float(rel.max()))
        assert rel.max() < 0.02
    # alpha = 0 on an obstacle-free grid: exact up to f64 rounding
    vol = Volume(data=rng.random((14, 12, 10)).astype(np.float32),
                 spacing=(0.5, 0.6, 0.7))
    omega = grow_seed_region((4, 6, 7), 1, vol)
    approx = geodesic_distance_map(vol, omega, GeodesicConfig(alpha=0.0, passes=2))
    exact = dijkstra_geodesic(vol, omega, 0.0)
    assert np.allclose(approx.data, exact.data, rtol=1e-12, atol=1e-12)
    print(f"\nCRITERION 2 PASS: raster scan within 2% of Dijkstra "
          f"(worst {worst * 100:.2f}%), alpha=0 exact")


def test_criterion_03_gradient_check(rng):
    small = NetConfig(state_len=15, conv_channels=(2, 3, 3), fc_widths=(8, 6))
    worst = 0.0
    for batch_idx in range(10):
        gen = np.random.default_rng(500 + batch_idx)
        for head, n_out in (("policy", 2), ("value", 1)):
            params = init_network_params(small, n_out, gen)
            for name, arr in params.arrays.items():
                if name.endswith("_b"):
                    arr[...] = 0.1 * gen.standard_normal(arr.shape)
            states = gen.random((5, small.state_len))
            if head == "policy":
                actions = gen.integers(0, 2, size=5)
                old = gen.uniform(0.2, 0.8, size=5)
                adv = gen.standard_normal(5)
                grads, _ = policy_gradients(params, states, actions, old, adv, 0.2)

                def loss():
                    probs = policy_forward(params, states)
                    pa = probs[np.arange(5), actions]
                    rho = pa / old
                    return float(np.minimum(rho * adv, np.clip(rho, 0.8, 1.2) * adv).mean())

            else:
                targets = gen.standard_normal(5)
                grads, _ = value_gradients(params, states, targets)

                def loss():
                    return float(((value_forward(params, states) - targets) ** 2).mean())

            flat = flatten_params(params)
            analytic = flatten_grads(params, grads)
            numeric = np.empty_like(analytic)
            for idx in range(flat.size):
                h = 1e-4 * max(1.0, abs(flat[idx]))
                bumped = flat.copy()
                bumped[idx] += h
                set_flat_params(params, bumped)
                up = loss()
                bumped[idx] -= 2 * h
                set_flat_params(params, bumped)
                down = loss()
                numeric[idx] = (up - down) / (2 * h)
            set_flat_params(params, flat)
            scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
            rel = (np.abs(analytic - numeric) / scale).max()
            worst = max(worst, float(rel))
            assert rel <= 1e-3, f"{head} batch {batch_idx}: rel err {rel:.2e}"
    print(f"\nCRITERION 3 PASS: all gradients within 1e-3 of finite differences "
          f"(worst {worst:.1e}) over 10 minibatches x 2 heads")


def test_criterion_04_reward_and_surrogate():
    t, p, tau = 20, 8, 2
    for i in range(t):
        for action in (Action.FORWARD, Action.BACKWARD):
            nxt, r = step(i, action, p, tau, t)
            if abs(p - i) <= tau:
                assert r == 2
            elif abs(p - nxt) < abs(p - i):
                assert r == 1
            else:
                assert r == -1
    assert ppo_surrogate(1.0, 0.7, 0.2) == 0.7
    assert ppo_surrogate(1.0, -1.3, 0.2) == -1.3
    assert ppo_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert ppo_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    print("\nCRITERION 4 PASS: exhaustive reward enumeration and surrogate examples hold")


def test_criterion_05_training_efficacy(trained):
    result, held_out, elapsed = trained
    ev = evaluate_policy(held_out, result.policy, TRAIN_CFG, ENV, np.random.default_rng(1))
    assert elapsed <= 30 * 60, f"training took {elapsed / 60:.1f} min (budget 30)"
    assert ev.pct_within_tau >= 90.0, (
        f"only {ev.pct_within_tau:.0f}% of held-out episodes within tau "
        f"(mean error {ev.mean_abs_error:.2f})"
    )
    print(f"\nCRITERION 5 PASS: {ev.pct_within_tau:.0f}% of 50 held-out episodes "
          f"within tau={ENV.tau} (mean |err| {ev.mean_abs_error:.2f}); "
          f"trained in {elapsed / 60:.1f} min")


def test_criterion_06_rl_beats_rule_on_distractors(trained):
    result, _, _ = trained
    distractors = gen_profile_family(
        50, ProfileFamilyConfig(distractor_prob=1.0), rng_seed=DISTRACTOR_SEED
    )
    rule_errors = np.array(
        [abs(rule_localize(w.depths) - w.target) for w in distractors], dtype=float
    )
    ev = evaluate_policy(distractors, result.policy, TRAIN_CFG, ENV,
                         np.random.default_rng(2))
    assert np.all(rule_errors >= 10)  # wrong by construction
    assert ev.mean_abs_error < rule_errors.mean(), (
        f"RL mean {ev.mean_abs_error:.1f} not below rule mean {rule_errors.mean():.1f}"
    )
    print(f"\nCRITERION 6 PASS: RL mean |err| {ev.mean_abs_error:.1f} < "
          f"rule mean |err| {rule_errors.mean():.1f} on 50 distractor profiles")


def test_criterion_07_end_to_end_phantoms(trained):
    result, _, _ = trained
    rows = _run_phantom_batch(result.policy)
    center, orient, area_frac = rows.mean(axis=0)
    assert center <= 1.5, f"mean center error {center:.2f} mm > 1.5 mm"
    assert orient <= 10.0, f"mean orientation error {orient:.1f} deg > 10 deg"
    assert area_frac <= 0.15, f"mean area error {area_frac * 100:.1f}% > 15%"
    print(f"\nCRITERION 7 PASS: 40 phantoms -> center {center:.2f} mm, "
          f"orientation {orient:.1f} deg, area {area_frac * 100:.1f}%")


def test_criterion_08_runtime(trained):
    result, _, _ = trained
    spec = PhantomSpec(shape=(128, 128, 128), tip_radius=6.5, neck_radius=4.5,
                       atrium_radius=14.0, neck_length=20.0, rng_seed=77)
    volume, truth = gen_phantom_volume(spec)
    cfg = PipelineConfig()
    start = time.time()
    extraction = extract_pipeline(volume, truth.tip_seed, cfg)
    localize_orifice(extraction.centerline, extraction.mask, "rl",
                     policy=result.policy, cfg=cfg, rng=np.random.default_rng(3))
    elapsed = time.time() - start
    assert elapsed <= 10.0, f"extract+localize took {elapsed:.1f}s on a 128^3 volume"
    print(f"\nCRITERION 8 PASS: extract+localize on 128^3 in {elapsed:.1f}s")


def test_criterion_09_seed_insensitivity(trained):
    result, _, _ = trained
    volume, truth = gen_phantom_volume(PhantomSpec(rng_seed=505))
    cfg = PipelineConfig()
    rng = np.random.default_rng(42)
    i0, j0, k0 = truth.tip_seed
    seeds = [(i0, j0, k0)]
    while len(seeds) < 10:
        cand = (i0 + int(rng.integers(-5, 6)), j0 + int(rng.integers(-5, 6)),
                k0 + int(rng.integers(-4, 5)))
        if volume.value_at(cand) > 50.0 and cand not in seeds:
            seeds.append(cand)
    reference = None
    projected = []
    for n, seed in enumerate(seeds):
        extraction = extract_pipeline(volume, seed, cfg)
        idx = laaloc.localize_index(
            extraction.centerline, "rl", policy=result.policy, cfg=cfg,
            rng=np.random.default_rng(900 + n),
        )
        position = extraction.centerline.world_mm[idx]
        if reference is None:
            reference = extraction.centerline
        projected.append(nearest_centerline_index(reference, position))
    spread = float(np.std(projected))
    assert spread <= 1.0, f"final index std {spread:.2f} across 10 seeds"
    print(f"\nCRITERION 9 PASS: 10 tip seeds -> final index std {spread:.2f} "
          f"(indices {sorted(projected)})")


def test_criterion_10_state_length_sweep():
    sweep_train = gen_profile_family(120, FAMILY, rng_seed=TRAIN_SEED + 1)
    sweep_eval = gen_profile_family(40, FAMILY, rng_seed=HELDOUT_SEED + 1)
    budget = TrainConfig(
        epsilon=0.7, gamma=0.9, delta=0.2, episodes_per_epoch=32,
        minibatch_size=64, gradient_steps_per_epoch=50, epochs=120,
        rng_seed=0, eval_episodes=24,
    )
    errors = {}
    for k in (15, 25, 35):
        env = EnvConfig(k=k, tau=3)
        net = NetConfig(state_len=env.state_length, learning_rate=1e-5, init_seed=7)
        res = train(sweep_train, budget, env_cfg=env, net_cfg=net, eval_worlds=sweep_eval)
        ev = evaluate_policy(sweep_eval, res.policy, budget, env, np.random.default_rng(4))
        errors[k] = ev.mean_abs_error
    assert errors[25] <= errors[15], f"k=25 ({errors[25]:.1f}) worse than k=15 ({errors[15]:.1f})"
    assert errors[25] <= errors[35], f"k=25 ({errors[25]:.1f}) worse than k=35 ({errors[35]:.1f})"
    print(f"\nCRITERION 10 PASS: state-length sweep errors "
          f"k=15: {errors[15]:.1f}, k=25: {errors[25]:.1f}, k=35: {errors[35]:.1f}")


def test_criterion_11_determinism(trained):
    result, held_out, _ = trained
    repeat, _ = _train_policy()
    assert repeat.log == result.log, "training logs differ between identical runs"
    for name in result.policy.names:
        assert np.array_equal(repeat.policy.arrays[name], result.policy.arrays[name])
        assert np.array_equal(repeat.value.arrays[name], result.value.arrays[name])
    ev1 = evaluate_policy(held_out, result.policy, TRAIN_CFG, ENV, np.random.default_rng(1))
    ev2 = evaluate_policy(held_out, repeat.policy, TRAIN_CFG, ENV, np.random.default_rng(1))
    assert np.array_equal(ev1.final_indices, ev2.final_indices)
    batch1 = _run_phantom_batch(result.policy)
    batch2 = _run_phantom_batch(repeat.policy)
    assert np.array_equal(batch1, batch2), "phantom pipeline results differ"
    print("\nCRITERION 11 PASS: training, evaluation and the phantom pipeline "
          "reproduce bit-exactly under fixed seeds")
