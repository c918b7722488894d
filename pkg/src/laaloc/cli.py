"""Batch command-line front-end.

Subcommands: ``phantom`` (generate synthetic volumes or profile families),
``extract`` (volume + seed -> centerline CSV), ``train`` (profile family ->
policy checkpoint + log), ``localize`` (centerline -> orifice result JSON),
``eval`` (results vs truths -> report + plots).  Exit codes: 0 ok, 2 bad
input, 3 pipeline failure, 4 config mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import phantoms
from .centerline import load_centerline_csv, nearest_centerline_index, save_centerline_csv
from .config import PipelineConfig, load_config
from .errors import BadInputError, ConfigMismatchError, LaalocError, PipelineError
from .networks import load_checkpoint, save_checkpoint
from .pipeline import extract_pipeline, localize_orifice
from .plane import OrificeResult, load_orifice_json, orifice_metrics, save_orifice_json
from .training import TrainConfig, train
from .volume import load_volume, save_volume

__all__ = ["main", "build_parser"]


def _parse_seed_triple(text: str):
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError as exc:
        raise BadInputError(f"seed must be 'i,j,k' integers, got {text!r}") from exc
    if len(parts) != 3:
        raise BadInputError(f"seed must have three components, got {text!r}")
    return tuple(parts)


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise BadInputError(f"cannot read {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadInputError(f"{path!r} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# phantom


def _cmd_phantom(args) -> int:
    spec_payload = _load_json(args.spec) if args.spec else {}
    mode = args.mode or spec_payload.get("mode", "volume")
    seed = args.seed if args.seed is not None else int(spec_payload.get("seed", 0))
    os.makedirs(args.out, exist_ok=True)
    if mode == "profile":
        family_payload = dict(spec_payload.get("family", {}))
        for key, value in family_payload.items():
            if isinstance(value, list):
                family_payload[key] = tuple(value)
        try:
            cfg = phantoms.ProfileFamilyConfig(**family_payload)
        except TypeError as exc:
            raise BadInputError(f"invalid profile family spec: {exc}") from exc
        worlds = phantoms.gen_profile_family(args.count, cfg, rng_seed=seed)
        phantoms.save_profile_family(worlds, args.out)
        print(f"wrote {len(worlds)} profiles to {args.out}")
        return 0
    if mode != "volume":
        raise BadInputError(f"unknown phantom mode {mode!r}")
    base = dict(spec_payload.get("spec", {}))
    jitter = spec_payload.get("jitter", {})
    for index in range(args.count):
        rng = np.random.default_rng(seed + index)
        fields = dict(base)
        for name, rng_range in jitter.items():
            lo, hi = float(rng_range[0]), float(rng_range[1])
            fields[name] = float(rng.uniform(lo, hi))
        for key, value in fields.items():
            if isinstance(value, list):
                fields[key] = tuple(
                    tuple(v) if isinstance(v, list) else v for v in value
                )
        fields["rng_seed"] = seed + index
        try:
            spec = phantoms.PhantomSpec(**fields)
        except TypeError as exc:
            raise BadInputError(f"invalid phantom spec: {exc}") from exc
        volume, truth = phantoms.gen_phantom_volume(spec)
        stem = os.path.join(args.out, f"vol_{index:03d}")
        save_volume(volume, stem)
        phantoms.save_truth_json(truth, stem + ".truth.json")
    print(f"wrote {args.count} volume/truth pairs to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# extract


def _cmd_extract(args) -> int:
    cfg = load_config(args.config)
    volume = load_volume(args.volume)
    seed = _parse_seed_triple(args.seed)
    result = extract_pipeline(volume, seed, cfg)
    save_centerline_csv(result.centerline, args.out)
    if args.save_mask:
        save_volume(result.mask, args.save_mask)
    if args.save_depth:
        save_volume(result.depth, args.save_depth)
    note = " (stalled early)" if result.centerline.stalled else ""
    print(f"wrote {len(result.centerline)}-point centerline to {args.out}{note}")
    return 0


# ---------------------------------------------------------------------------
# train


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    worlds = phantoms.load_profile_family(args.worlds)
    if not worlds:
        raise BadInputError(f"no worlds found in {args.worlds!r}")
    train_cfg = cfg.train
    net_cfg = cfg.resolved_net()
    policy = value = rng = None
    start_epoch = 0
    if args.resume:
        nets, meta = load_checkpoint(args.resume, expected_config=net_cfg)
        if "policy" not in nets or "value" not in nets:
            raise ConfigMismatchError(f"{args.resume!r} is not a training checkpoint")
        policy, value = nets["policy"], nets["value"]
        rng = np.random.default_rng()
        try:
            rng.bit_generator.state = meta["rng_state"]
        except (KeyError, TypeError) as exc:
            raise ConfigMismatchError(f"checkpoint lacks a resumable rng state: {exc}") from exc
        start_epoch = int(meta.get("epochs_done", 0))
        if start_epoch >= train_cfg.epochs:
            raise BadInputError(
                f"checkpoint already covers {start_epoch} epochs >= target {train_cfg.epochs}"
            )
        train_cfg = dataclasses.replace(train_cfg, epochs=train_cfg.epochs - start_epoch)
    result = train(
        worlds,
        train_cfg,
        env_cfg=cfg.env,
        net_cfg=net_cfg,
        policy=policy,
        value=value,
        rng=rng,
        log_path=args.log,
        start_epoch=start_epoch,
    )
    save_checkpoint(
        args.out,
        {"policy": result.policy, "value": result.value},
        metadata={
            "epochs_done": result.epochs_done,
            "rng_state": result.rng.bit_generator.state,
            "env": dataclasses.asdict(cfg.env),
            "train": dataclasses.asdict(cfg.train),
        },
    )
    last = result.log[-1] if result.log else None
    if last is not None:
        print(
            f"trained to epoch {result.epochs_done}: mean reward {last.mean_reward:.3f}, "
            f"eval error {last.eval_mean_abs_error:.2f}, "
            f"{last.eval_pct_within_tau:.0f}% within tau"
        )
    print(f"checkpoint written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# localize


def _cmd_localize(args) -> int:
    cfg = load_config(args.config)
    centerline = load_centerline_csv(args.centerline)
    mask = load_volume(args.volume)
    policy = None
    if args.method == "rl":
        if not args.ckpt:
            raise BadInputError("--method rl requires --ckpt")
        nets, _meta = load_checkpoint(args.ckpt)
        if "policy" not in nets:
            raise ConfigMismatchError(f"{args.ckpt!r} holds no policy network")
        policy = nets["policy"]
        if policy.config.state_len != cfg.env.state_length:
            raise ConfigMismatchError(
                f"checkpoint state length {policy.config.state_len} does not match "
                f"env state length {cfg.env.state_length}"
            )
    rng = np.random.default_rng(args.seed)
    result = localize_orifice(
        centerline, mask, args.method, policy=policy, cfg=cfg, rng=rng
    )
    save_orifice_json(result, args.out, extra={"centerline": os.path.abspath(args.centerline)})
    print(
        f"{args.method} localized index {result.index}, area {result.area_mm2:.1f} mm^2, "
        f"result written to {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval


def _stat_block(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=0)),
        "median": float(np.median(arr)),
        "n": int(arr.size),
    }


def _cmd_eval(args) -> int:
    result_files = sorted(
        f for f in os.listdir(args.results) if f.endswith(".result.json")
    )
    if not result_files:
        raise BadInputError(f"no *.result.json files in {args.results!r}")
    per_method: dict[str, dict[str, list[float]]] = {}
    cases = []
    markers = []
    for fname in result_files:
        stem = fname[: -len(".result.json")]
        truth_path = os.path.join(args.truths, stem + ".truth.json")
        if not os.path.exists(truth_path):
            raise BadInputError(f"no matching truth for {fname!r} (expected {truth_path!r})")
        result, payload = load_orifice_json(os.path.join(args.results, fname))
        truth = phantoms.load_truth_json(truth_path)
        truth_result = OrificeResult(
            index=truth.orifice_index_hint,
            center_mm=truth.orifice_center_mm,
            normal=truth.orifice_normal,
            area_mm2=truth.orifice_area_mm2,
        )
        metrics = orifice_metrics(result, truth_result)
        method = result.method or payload.get("method", "unknown")
        bucket = per_method.setdefault(
            method, {"center_mm": [], "orientation_deg": [], "area_mm2": []}
        )
        bucket["center_mm"].append(metrics.center_mm)
        bucket["orientation_deg"].append(metrics.orientation_deg)
        bucket["area_mm2"].append(metrics.area_mm2)
        cases.append(
            {
                "case": stem,
                "method": method,
                "index": result.index,
                "center_mm": metrics.center_mm,
                "orientation_deg": metrics.orientation_deg,
                "area_mm2": metrics.area_mm2,
            }
        )
        markers.append((stem, method, result, payload, truth))
    report = {
        "methods": {
            method: {metric: _stat_block(vals) for metric, vals in buckets.items()}
            for method, buckets in per_method.items()
        },
        "cases": cases,
    }
    try:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    except OSError as exc:
        raise BadInputError(f"cannot write report to {args.out!r}: {exc}") from exc
    if args.plots:
        _write_plots(markers, args.plots)
    for method, buckets in report["methods"].items():
        center = buckets["center_mm"]
        print(
            f"{method}: center {center['mean']:.2f} +- {center['sd']:.2f} mm "
            f"(median {center['median']:.2f}, n={center['n']})"
        )
    print(f"report written to {args.out}")
    return 0


def _write_plots(markers, plots_dir: str) -> None:
    import csv as _csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(plots_dir, exist_ok=True)
    rows = []
    for stem, method, result, payload, truth in markers:
        centerline_path = payload.get("centerline")
        if not centerline_path or not os.path.exists(centerline_path):
            continue
        centerline = load_centerline_csv(centerline_path)
        truth_index = nearest_centerline_index(centerline, truth.orifice_center_mm)
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.plot(centerline.depths, color="0.3", lw=1.2, label="depth")
        ax.axvline(result.index, color="tab:blue", lw=1.5, label=f"{method} @{result.index}")
        ax.axvline(truth_index, color="tab:red", ls="--", lw=1.2, label=f"truth @{truth_index}")
        ax.set_xlabel("centerline index")
        ax.set_ylabel("depth (mm)")
        ax.legend(loc="upper left", fontsize=8)
        fig.tight_layout()
        fig.savefig(os.path.join(plots_dir, f"{stem}.svg"))
        plt.close(fig)
        depth_at = float(centerline.depths[min(result.index, len(centerline) - 1)])
        rows.append([stem, method, result.index, repr(depth_at), truth_index])
    try:
        with open(os.path.join(plots_dir, "markers.csv"), "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["case", "method", "index", "depth_mm", "truth_index"])
            writer.writerows(rows)
    except OSError as exc:
        raise BadInputError(f"cannot write markers CSV in {plots_dir!r}: {exc}") from exc


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laaloc",
        description="Centerline-based orifice localization toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate synthetic volumes or profile families")
    p.add_argument("--spec", help="JSON spec (mode, spec/jitter or family sections)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1, help="number of phantoms/profiles")
    p.add_argument("--mode", choices=["volume", "profile"], help="override spec mode")
    p.add_argument("--seed", type=int, help="override spec seed")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("extract", help="volume + tip seed -> centerline CSV")
    p.add_argument("--volume", required=True, help="volume base path (.json/.raw pair)")
    p.add_argument("--seed", required=True, help="tip seed as i,j,k")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="centerline CSV path")
    p.add_argument("--save-mask", help="also write the segmentation mask volume")
    p.add_argument("--save-depth", help="also write the depth (EDT) volume")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train", help="train the localization policy on a profile family")
    p.add_argument("--worlds", required=True, help="directory with profiles.csv/targets.csv")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="training log CSV path")
    p.add_argument("--resume", help="resume from an earlier checkpoint")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("localize", help="centerline (+ mask) -> orifice result JSON")
    p.add_argument("--centerline", required=True, help="centerline CSV from extract")
    p.add_argument("--ckpt", help="trained checkpoint (required for --method rl)")
    p.add_argument("--method", choices=["rl", "rule"], default="rl")
    p.add_argument("--volume", required=True, help="mask volume from extract --save-mask")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="orifice result JSON path")
    p.add_argument("--seed", type=int, default=0, help="rng seed for rollout starts")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("eval", help="aggregate results vs truths into a report + plots")
    p.add_argument("--results", required=True, help="directory of *.result.json files")
    p.add_argument("--truths", required=True, help="directory of *.truth.json files")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--plots", help="directory for SVG plots and markers.csv")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except BadInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LaalocError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
