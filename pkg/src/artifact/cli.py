"""Command line entry point.

Exit codes: 0 success, 1 invalid input or failed check, 2 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import numcore as nc

log = logging.getLogger("artifact")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def _config(args):
    from .pipeline import RunConfig

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg.validate()


def _out(args, default):
    return Path(args.out or default)


def cmd_gen_data(args):
    from .pipeline import gen_data

    cfg = _config(args)
    m = gen_data(cfg, _out(args, "run/data"))
    print(f"wrote {sum(len(v) for v in m['splits'].values())} scenes, config {m['config_hash']}")


def cmd_sample_cameras(args):
    from .camsample import curate
    from .geometry import load_manifest, make_distance, save_manifest
    from .splat import orbit_cameras

    cfg = _config(args)
    out = _out(args, "run/cameras")
    out.mkdir(parents=True, exist_ok=True)
    if args.poses:
        poses = load_manifest(args.poses)
    else:
        poses = orbit_cameras(nc.Rng(cfg.seed), args.n or cfg.n_frames, cfg.extent, cfg.image_size)
        save_manifest(out / "poses.json", poses)
    K = cfg.k_eval if args.k is None else args.k
    res = curate(poses, K, make_distance(poses, frobenius=args.frobenius))
    d = res.to_dict()
    d.update(config_hash=cfg.hash(), seed=cfg.seed, K=K, frobenius=bool(args.frobenius))
    (out / "curation.json").write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
    print(json.dumps(res.to_dict(), sort_keys=True))


def cmd_render(args):
    from .geometry import load_manifest
    from .pipeline import render_trajectory, write_frames
    from .splat import load_scene

    cfg = _config(args)
    scene = load_scene(args.scene)
    cams = load_manifest(args.poses)
    rgb, op = render_trajectory(scene, cams)
    out = _out(args, "run/render")
    write_frames(out / "rgb", rgb)
    write_frames(out / "opacity", op)
    nc.io.save(out / "frames.spfl", {"rgb": rgb, "opacity": op})
    meta = {"config_hash": cfg.hash(), "seed": cfg.seed, "scene": str(args.scene), "poses": str(args.poses), "frames": len(cams)}
    (out / "manifest.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(f"rendered {len(cams)} frames to {out}")


def cmd_train_teacher(args):
    from .pipeline import train_teacher

    cfg = _config(args)
    ck = train_teacher(cfg, args.data, _out(args, "run/ckpt"), resume=args.resume, n_iters=args.iters)
    print(f"teacher checkpoint {ck}")


def cmd_distill(args):
    from .pipeline import convert_and_distill

    cfg = _config(args)
    ck = convert_and_distill(cfg, args.data, args.teacher, _out(args, "run/ckpt"))
    print(f"generator checkpoint {ck}")


def cmd_generate(args):
    from .model import load_checkpoint
    from .pipeline import generate_frames, generate_variants, load_scene_data, write_frames

    cfg = _config(args)
    over = {k: getattr(args, k) for k in ("chunk_size", "gen_steps", "window") if getattr(args, k) is not None}
    if over:
        cfg = cfg.replace(**over)
    gen, _ = load_checkpoint(args.generator)
    sd = load_scene_data(args.scene_dir)
    out = _out(args, "run/generate")
    rng = nc.Rng(cfg.seed)
    meta = {"config_hash": cfg.hash(), "seed": cfg.seed, "generator": str(args.generator), "scene_dir": str(args.scene_dir), "chunk_size": cfg.chunk_size, "steps_per_chunk": cfg.gen_steps, "window": cfg.window}
    if args.variants:
        from .splat import save_scene

        v = generate_variants(cfg, gen, sd, rng)
        arrays = {"direct": v.direct, "refit": v.refit_frames, "refit_opacity": v.refit_opacity, "refit_enhanced": v.reenhanced}
        for k in ("direct", "refit", "refit_enhanced"):
            write_frames(out / k, arrays[k])
        save_scene(out / "refit_scene.json", v.refit_scene)
        meta["fit_loss"] = [v.refit_losses[0], v.refit_losses[-1]] if v.refit_losses else []
    else:
        frames = generate_frames(cfg, gen, sd, rng)
        arrays = {"direct": frames}
        write_frames(out / "direct", frames)
    nc.io.save(out / "frames.spfl", arrays)
    meta["frames"] = int(sd.clean.shape[0])
    (out / "manifest.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(f"wrote {meta['frames']} frames to {out}")


def cmd_eval(args):
    from .evaluation import report
    from .pipeline import eval_run

    cfg = _config(args)
    out = _out(args, "run/eval")
    if args.pred:
        pred = nc.io.load(args.pred)[args.key]
        gt = nc.io.load(args.gt)[args.gt_key]
        rep = report(out, list(pred), list(gt), label=args.key, config_hash=cfg.hash(), seed=cfg.seed)
        print(f"{rep.label}: {rep.count} frames, PSNR {rep.mean_psnr:.3f} dB, SSIM {rep.mean_ssim:.4f}")
        return
    if not (args.data and args.teacher and args.generator):
        raise ValueError("eval needs either --pred/--gt or --data, --teacher and --generator")
    reps = eval_run(cfg, args.data, args.teacher, args.generator, out)
    print((out / "comparison.csv").read_text(), end="")


def cmd_gradcheck(args):
    from .acceptance import gradient_check

    res = gradient_check(n_params=args.n, seed=args.seed or 0)
    print(res.detail)
    return EXIT_OK if res.passed else EXIT_INVALID


def cmd_selftest(args):
    from .acceptance import run_suite

    results = run_suite(workdir=args.out, quick=args.quick, seed=args.seed or 0)
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVALID


def build_parser():
    p = argparse.ArgumentParser(prog="splatflow", description="Reconstruction-conditioned video enhancement at toy scale.")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    sub.add_parser("gen-data", help="synthetic scenes, degraded renders, references").set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("sample-cameras", help="curate a pose set into two groups")
    s.add_argument("--poses", help="pose manifest JSON (default: a seeded orbit)")
    s.add_argument("--n", type=int, help="orbit size when no poses are given")
    s.add_argument("--k", type=int, help="cameras selected per group")
    s.add_argument("--frobenius", action="store_true", help="use the Frobenius pose distance")
    s.set_defaults(fn=cmd_sample_cameras)

    s = sub.add_parser("render", help="render a scene along a trajectory")
    s.add_argument("--scene", required=True)
    s.add_argument("--poses", required=True)
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("train-teacher", help="train the bidirectional teacher")
    s.add_argument("--data", required=True)
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--iters", type=int, help="stop at this step instead of the config's")
    s.set_defaults(fn=cmd_train_teacher)

    s = sub.add_parser("distill", help="causal conversion and DMD distillation")
    s.add_argument("--data", required=True)
    s.add_argument("--teacher", required=True)
    s.set_defaults(fn=cmd_distill)

    s = sub.add_parser("generate", help="roll out a generator over a dataset scene")
    s.add_argument("--generator", required=True)
    s.add_argument("--scene-dir", required=True, help="a scene folder written by gen-data")
    s.add_argument("--chunk", dest="chunk_size", type=int)
    s.add_argument("--steps", dest="gen_steps", type=int)
    s.add_argument("--window", type=int)
    s.add_argument("--variants", action="store_true", help="also refit the scene and re-enhance")
    s.set_defaults(fn=cmd_generate)

    s = sub.add_parser("eval", help="metrics and comparison table")
    s.add_argument("--data")
    s.add_argument("--teacher")
    s.add_argument("--generator")
    s.add_argument("--pred", help="SPFL file with predicted frames")
    s.add_argument("--gt", help="SPFL file with ground-truth frames")
    s.add_argument("--key", default="direct", help="array name in --pred")
    s.add_argument("--gt-key", default="clean", help="array name in --gt")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of denoiser and renderer gradients")
    s.add_argument("--n", type=int, default=100, help="denoiser parameters to check")
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("selftest", help="run the acceptance suite")
    s.add_argument("--quick", action="store_true", help="skip the end-to-end training criteria")
    s.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None):
    p = build_parser()
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.fn(args)
    except FloatingPointError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
