"""Train the localization agent on a synthetic profile family.

Small-budget run for demonstration (a few minutes); the acceptance suite
uses a larger budget.  Writes the training log, a learning curve, and a
checkpoint reusable by demo 05 and the CLI.
"""

import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from laaloc import (
    EnvConfig,
    NetConfig,
    TrainConfig,
    evaluate_policy,
    save_checkpoint,
    train,
)
from laaloc.phantoms import ProfileFamilyConfig, gen_profile_family
from laaloc.training import write_log_csv

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)


def main():
    family_cfg = ProfileFamilyConfig(distractor_prob=0.35, noise_sigma=0.06)
    train_worlds = gen_profile_family(120, family_cfg, rng_seed=100)
    held_out = gen_profile_family(30, family_cfg, rng_seed=200)
    print(f"training on {len(train_worlds)} profiles, evaluating on {len(held_out)}")

    env = EnvConfig(k=25, tau=3)
    net = NetConfig(state_len=env.state_length, learning_rate=1e-5)
    cfg = TrainConfig(epochs=120, rng_seed=0)

    t0 = time.time()
    result = train(train_worlds, cfg, env_cfg=env, net_cfg=net, eval_worlds=held_out)
    print(f"{cfg.epochs} epochs in {time.time() - t0:.0f} s")

    final = evaluate_policy(held_out, result.policy, cfg, env, np.random.default_rng(1))
    print(f"held-out: mean |final - target| = {final.mean_abs_error:.2f} indices, "
          f"{final.pct_within_tau:.0f}% within tau={env.tau}")

    write_log_csv(result.log, os.path.join(OUT, "training_log.csv"))
    save_checkpoint(os.path.join(OUT, "demo_policy.ckpt"),
                    {"policy": result.policy, "value": result.value},
                    metadata={"epochs_done": result.epochs_done})

    epochs = [r.epoch for r in result.log]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3))
    ax1.plot(epochs, [r.mean_reward for r in result.log], color="0.3")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean episodic reward")
    ax2.plot(epochs, [r.eval_mean_abs_error for r in result.log], color="tab:blue")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("eval |final - target|")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "learning_curve.svg"))
    print(f"wrote {OUT}/training_log.csv, demo_policy.ckpt, learning_curve.svg")


if __name__ == "__main__":
    main()
