"""Command-line harness: coefficient export, path tracing, the
Monte-Carlo oracle run, gradient checks, head training and the
teacher-substitution simulation.

All commands are deterministic under a fixed seed; every CSV/JSON output
embeds the hash of the effective configuration that produced it. Exit
codes: 0 on pass, 1 on validation failure, 2 on parse error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np

from .camera import UcmCamera, relative_transform
from .checks import run_head_gradcheck, run_loss_gradcheck
from .formats import (
    FormatError,
    load_trajectory,
    read_rdm1,
    read_sidecar,
    save_head_params,
)
from .oracle import run_oracle_check
from .phasor import (
    RadialInterval,
    breakpoints,
    coefficients_from_paths,
    patch_rays,
    token_paths,
)
from .rope import make_frequency_plan
from .scene import SceneSpec, TrajectorySpec, make_trajectory, render_clip
from .supervision import near_distance_stat, normalize_and_pool, validity_mask
from .teacher_mix import MixSchedule, external_override, sample_mask, substitution_probability
from .trainer import DivergenceError, run_layer_probe

__all__ = ["main", "entry", "DEFAULT_CONFIG"]

COEFFS_MAGIC = b"MCF1"

DEFAULT_CONFIG = {
    "seed": 0,
    "k": 5,
    "patch_size": 16,
    "pairs_per_group": 2,
    "freq_base": 10000.0,
    "trajectory": None,
    "trajectory_spec": None,
    "rdm1": None,
    "coeffs": {"sigma_override": None, "teacher_sigma": 0.1},
    "trace": {"query_frame": -1, "source_frame": 0},
    "oracle": {
        "num_configs": 50,
        "samples": 200000,
        "k_values": [2, 5, 129],
        "tolerance": 5e-3,
        "win_fraction": 0.9,
    },
    "gradcheck": {"samples": 100, "d_model": 64, "step": 1e-5},
    "train": {
        "num_layers": 12,
        "d_model": 64,
        "steps": 2000,
        "lr": 0.01,
        "holdout": 0.2,
        "noise": 0.2,
        "patch_size": 8,
        "record_every": 100,
        "scene": {"kind": "point_cloud", "extent": 2.0, "num_points": 300, "seed": 0},
        "motion": "dolly",
        "frames": 3,
        "amplitude": 0.4,
        "camera": {
            "fx": 56.0, "fy": 56.0, "cx": 32.0, "cy": 32.0,
            "xi": 0.3, "width": 64, "height": 64,
        },
    },
    "mix": {
        "mode": "block_frame",
        "decay_start": 1000,
        "decay_end": 7000,
        "total_steps": 8000,
        "granules": 16,
        "valid_fraction": 1.0,
        "stride": 100,
    },
}


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        text = Path(args.config).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid config JSON: {e.msg}", e.pos) from e
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = _deep_merge(cfg, user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.k is not None:
        cfg["k"] = args.k
    if cfg["k"] < 2:
        raise ValueError(f"k must be >= 2, got {cfg['k']}")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_csv(path: Path, chash: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={chash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, chash: str, payload: dict) -> None:
    doc = {"config_hash": chash, **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _camera_from_dict(c: dict) -> UcmCamera:
    return UcmCamera(
        fx=float(c["fx"]), fy=float(c["fy"]), cx=float(c["cx"]), cy=float(c["cy"]),
        xi=float(c["xi"]), width=int(c["width"]), height=int(c["height"]),
    )


def _resolve_trajectory(cfg: dict):
    if cfg["trajectory"]:
        return load_trajectory(cfg["trajectory"])
    spec = cfg["trajectory_spec"]
    if spec is None:
        raise ValueError("this command needs 'trajectory' (file) or 'trajectory_spec' (inline)")
    cam = _camera_from_dict(spec["camera"])
    tspec = TrajectorySpec(
        frames=int(spec["frames"]), motion=spec["motion"],
        amplitude=float(spec["amplitude"]), camera=cam,
    )
    return cam, make_trajectory(tspec)


def _token_intervals(cfg: dict, cam: UcmCamera, frames: int):
    """Interval grids (mu, sigma) per (frame, row, col) token.

    Without an RDM1 input every token carries the freshly initialized
    head interval (0, 3); with one, valid pooled tokens take the teacher
    interval over that baseline.
    """
    patch = cfg["patch_size"]
    rows, cols = cam.height // patch, cam.width // patch
    if rows < 1 or cols < 1:
        raise ValueError("patch_size larger than the image")
    mu = np.zeros((frames, rows, cols))
    sigma = np.full((frames, rows, cols), 3.0)
    if cfg["rdm1"]:
        rmap = read_rdm1(cfg["rdm1"])
        if rmap.frames != frames:
            raise ValueError(
                f"RDM1 has {rmap.frames} frames but the trajectory has {frames}"
            )
        if rmap.values.shape[1:] != (cam.height, cam.width):
            raise ValueError("RDM1 resolution does not match the camera")
        sidecar = read_sidecar(cfg["rdm1"]) or {}
        near = sidecar.get("near_stat")
        if near is None:
            near = near_distance_stat(rmap, validity_mask(rmap))
        result = external_override(
            mu, sigma, rmap, float(near), teacher_sigma=float(cfg["coeffs"]["teacher_sigma"])
        )
        mu, sigma = result.mu, result.sigma
    override = cfg["coeffs"]["sigma_override"]
    if override is not None:
        sigma = np.full_like(sigma, float(override))
    return mu, sigma


def _plan(cfg: dict):
    pairs = int(cfg["pairs_per_group"])
    if pairs < 1:
        raise ValueError("pairs_per_group must be >= 1")
    return make_frequency_plan(9 * 2 * pairs, 9, float(cfg["freq_base"]))


def cmd_coeffs(cfg: dict, out: Path, chash: str) -> bool:
    cam, poses = _resolve_trajectory(cfg)
    frames = len(poses)
    patch = cfg["patch_size"]
    rows, cols = cam.height // patch, cam.width // patch
    mu, sigma = _token_intervals(cfg, cam, frames)
    plan = _plan(cfg)
    k = cfg["k"]

    patches = [patch_rays(cam, (r, c), patch) for r in range(rows) for c in range(cols)]
    coeffs = np.empty((frames, frames, rows * cols, plan.num_pairs, 2))
    fallbacks = 0
    for qf in range(frames):
        for sf in range(frames):
            transform = relative_transform(poses[sf], poses[qf])
            for idx, pr in enumerate(patches):
                r, c = divmod(idx, cols)
                interval = RadialInterval(float(mu[sf, r, c]), float(sigma[sf, r, c]))
                radii = breakpoints(interval, k)
                paths = token_paths(cam, transform, pr, radii)
                coeffs[qf, sf, idx], fb = coefficients_from_paths(paths, plan)
                fallbacks += fb

    payload = np.ascontiguousarray(coeffs, dtype="<f4")
    with open(out / "coeffs.bin", "wb") as fh:
        fh.write(COEFFS_MAGIC)
        fh.write(struct.pack("<IIIII", frames, frames, rows, cols, plan.num_pairs))
        fh.write(payload.tobytes())

    # Bound check on the computed values; the f32 file rounds separately.
    mags = np.sqrt((coeffs**2).sum(axis=-1))
    _write_json(
        out / "coeffs_summary.json",
        chash,
        {
            "shape": list(coeffs.shape),
            "k": k,
            "min_magnitude": float(mags.min()),
            "max_magnitude": float(mags.max()),
            "identity_fallback_count": int(fallbacks),
            "magnitude_bound_ok": bool(mags.max() ** 2 <= 1.0 + 1e-12),
        },
    )
    return True


def cmd_trace_path(cfg: dict, out: Path, chash: str) -> bool:
    cam, poses = _resolve_trajectory(cfg)
    frames = len(poses)
    patch = cfg["patch_size"]
    rows, cols = cam.height // patch, cam.width // patch
    mu, sigma = _token_intervals(cfg, cam, frames)
    qf = cfg["trace"]["query_frame"] % frames
    sf = cfg["trace"]["source_frame"] % frames
    transform = relative_transform(poses[sf], poses[qf])
    k = cfg["k"]

    csv_rows = []
    for idx in range(rows * cols):
        r, c = divmod(idx, cols)
        pr = patch_rays(cam, (r, c), patch)
        interval = RadialInterval(float(mu[sf, r, c]), float(sigma[sf, r, c]))
        radii = breakpoints(interval, k)
        for a, path in enumerate(token_paths(cam, transform, pr, radii)):
            for j in range(k):
                u, v, rng = path.points[j]
                csv_rows.append(
                    [idx, a, j + 1, repr(float(radii[j])), repr(float(u)), repr(float(v)),
                     repr(float(rng)), int(path.valid[j])]
                )
    _write_csv(
        out / "trace.csv", chash,
        ["token", "offset", "k", "r_k", "u_bounded", "v_bounded", "range", "valid"],
        csv_rows,
    )
    return True


def cmd_oracle_check(cfg: dict, out: Path, chash: str) -> bool:
    o = cfg["oracle"]
    result = run_oracle_check(
        num_configs=int(o["num_configs"]),
        samples=int(o["samples"]),
        k_values=o["k_values"],
        seed=cfg["seed"],
        mc_tolerance=float(o["tolerance"]),
        win_fraction=float(o["win_fraction"]),
    )
    report = result["report"]
    rows = result["rows"]
    keys = sorted(rows[0].keys()) if rows else []
    _write_csv(
        out / "oracle_errors.csv", chash, keys,
        [[repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys] for r in rows],
    )
    _write_json(out / "oracle_report.json", chash, report)
    return bool(report["pass"])


def cmd_gradcheck(cfg: dict, out: Path, chash: str) -> bool:
    g = cfg["gradcheck"]
    head = run_head_gradcheck(
        samples=int(g["samples"]), d_model=int(g["d_model"]),
        seed=cfg["seed"], step=float(g["step"]),
    )
    loss = run_loss_gradcheck(samples=int(g["samples"]), seed=cfg["seed"], step=float(g["step"]))
    _write_json(out / "gradcheck_report.json", chash, {"head": head, "radial_loss": loss})
    return bool(head["pass"] and loss["pass"])


def cmd_train_head(cfg: dict, out: Path, chash: str) -> bool:
    t = cfg["train"]
    cam = _camera_from_dict(t["camera"])
    scene = SceneSpec(
        kind=t["scene"]["kind"], extent=float(t["scene"]["extent"]),
        num_points=int(t["scene"]["num_points"]), seed=int(t["scene"]["seed"]),
    )
    tspec = TrajectorySpec(
        frames=int(t["frames"]), motion=t["motion"], amplitude=float(t["amplitude"]), camera=cam
    )
    rmap = render_clip(scene, make_trajectory(tspec), cam)
    mask = validity_mask(rmap)
    near = near_distance_stat(rmap, mask)
    targets = normalize_and_pool(rmap, mask, near, int(t["patch_size"]))

    results = run_layer_probe(
        targets,
        num_layers=int(t["num_layers"]), d_model=int(t["d_model"]),
        steps=int(t["steps"]), lr=float(t["lr"]), seed=cfg["seed"],
        holdout_fraction=float(t["holdout"]), noise_scale=float(t["noise"]),
        record_every=int(t["record_every"]),
    )

    _write_csv(
        out / "probe_errors.csv", chash,
        ["layer", "depth_weight", "init_loss", "final_loss", "loss_reduction",
         "init_probe_error", "final_probe_error"],
        [
            [r.layer, repr(r.depth_weight), repr(r.init_loss), repr(r.final_loss),
             repr(r.loss_reduction), repr(r.init_probe_error), repr(r.final_probe_error)]
            for r in results
        ],
    )
    _write_csv(
        out / "train_curves.csv", chash, ["layer", "step", "loss"],
        [[r.layer, step, repr(loss)] for r in results for step, loss in r.curve],
    )
    best = min(results, key=lambda r: r.final_probe_error)
    save_head_params(out / "head_best.ckpt", best.params)
    _write_json(
        out / "train_report.json", chash,
        {
            "near_stat": near,
            "valid_tokens": int(targets.mask.sum()),
            "best_layer": best.layer,
            "best_probe_error": best.final_probe_error,
            "min_loss_reduction": min(r.loss_reduction for r in results),
        },
    )
    return True


def cmd_mix_sim(cfg: dict, out: Path, chash: str) -> bool:
    m = cfg["mix"]
    schedule = MixSchedule(
        mode=m["mode"], decay_start=int(m["decay_start"]), decay_end=int(m["decay_end"])
    )
    granules = int(m["granules"])
    valid = np.zeros(granules, dtype=bool)
    valid[: int(round(float(m["valid_fraction"]) * granules))] = True
    rows = []
    total_sub = 0
    steps = range(0, int(m["total_steps"]) + 1, int(m["stride"]))
    for step in steps:
        p = substitution_probability(schedule, step)
        mask = sample_mask(p, granules, seed=[cfg["seed"], step])
        substituted = mask & valid
        n_sub = int(substituted.sum())
        total_sub += n_sub
        rows.append(
            [step, repr(p), repr(float(valid.mean())), n_sub, granules - n_sub,
             repr(n_sub / granules)]
        )
    _write_csv(
        out / "mix_sim.csv", chash,
        ["step", "probability", "valid_fraction", "substituted", "predicted", "realized_rate"],
        rows,
    )
    _write_json(
        out / "mix_summary.json", chash,
        {
            "mode": m["mode"],
            "floor": schedule.floor,
            "granules": granules,
            "steps_logged": len(rows),
            "mean_realized_rate": total_sub / (granules * len(rows)),
        },
    )
    return True


_COMMANDS = {
    "coeffs": cmd_coeffs,
    "trace-path": cmd_trace_path,
    "oracle-check": cmd_oracle_check,
    "gradcheck": cmd_gradcheck,
    "train-head": cmd_train_head,
    "mix-sim": cmd_mix_sim,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curverope",
        description="Curved-path expected rotary encoding harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default="curverope-out")
        p.add_argument("--k", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        chash = config_hash(cfg)
        ok = _COMMANDS[args.command](cfg, out, chash)
    except FormatError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2
    except DivergenceError as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    return 0 if ok else 1


def entry() -> None:
    sys.exit(main())
