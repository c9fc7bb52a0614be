"""End-to-end stages: synthetic data, teacher training, causal conversion and
distillation, generation of the three variants, and evaluation.

Each stage reads only files written by earlier stages. Every file carries the
run config hash and seed, and a stage re-run with the same config writes the
same bytes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import numcore as nc
from .camsample import K_MAX, K_MIN, curate, sample_k
from .causal import RolloutGenerator, df_noise, dmd_train, rollout
from .evaluation import comparison_table, report
from .flowmatch import cfm_loss, decode, encode, ode_sample, opacity_downscale, opacity_mix
from .geometry import CameraPose
from .images import write_png
from .model import (
    Denoiser,
    DenoiserConfig,
    build_conditioning,
    load_checkpoint,
    save_checkpoint,
    stack_conditioning,
)
from .splat import DegradeParams, degrade, fit_scene, gen_scene, load_scene, orbit_cameras, render, save_scene

log = logging.getLogger(__name__)

# per-stage rng stream keys
_DATA, _TEACHER, _CAUSAL, _DMD, _EVAL = range(5)
_SPLITS = {"train": 0, "eval": 1}


class DivergenceError(nc.NonFiniteError):
    """Training loss stayed far above its starting value."""


@dataclass
class RunConfig:
    seed: int = 0
    # scenes and cameras
    n_train_scenes: int = 32
    n_eval_scenes: int = 4
    n_primitives: int = 40
    extent: float = 1.0
    n_frames: int = 8
    image_size: int = 32
    k_range: tuple = (2, 4)
    k_eval: int = 3
    tau_vis: float = 0.05
    eta: float = 0.02
    # model
    model: dict = field(default_factory=lambda: DenoiserConfig(dtype="float32").to_dict())
    # teacher
    batch_size: int = 4
    max_train_refs: int = 4
    eval_refs: int = 2
    dropout_prob: float = 0.5
    teacher_iters: int = 2000
    teacher_lr: float = 1e-3
    # causal conversion and distillation
    causal_iters: int = 500
    causal_lr: float = 3e-4
    dmd_iters: int = 300
    dmd_batch_size: int = 2
    gen_lr: float = 5e-5
    fake_lr: float = 1e-5
    fake_ratio: int = 5
    chunk_size: int = 2
    window: int = 8
    gen_steps: int = 4
    teacher_steps: int = 32
    # refit
    fit_steps: int = 200
    fit_lr: float = 0.01
    # bookkeeping
    log_every: int = 50
    divergence_factor: float = 10.0
    divergence_patience: int = 100

    def __post_init__(self):
        self.k_range = tuple(int(k) for k in self.k_range)
        self.model = DenoiserConfig.from_dict(dict(self.model)).to_dict()

    @property
    def denoiser(self) -> DenoiserConfig:
        return DenoiserConfig.from_dict(self.model)

    def to_dict(self):
        d = asdict(self)
        d["k_range"] = list(self.k_range)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(d)

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return RunConfig.from_dict(d)

    def validate(self):
        m = self.denoiser
        pos = ["n_train_scenes", "n_eval_scenes", "n_primitives", "n_frames", "image_size", "batch_size", "dmd_batch_size", "chunk_size", "window", "gen_steps", "teacher_steps", "fake_ratio"]
        for k in pos:
            if getattr(self, k) < 1:
                raise ValueError(f"{k} must be >= 1, got {getattr(self, k)}")
        for k in ("teacher_iters", "causal_iters", "dmd_iters", "fit_steps", "log_every"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")
        lo, hi = self.k_range
        if not K_MIN <= lo <= hi <= K_MAX:
            raise ValueError(f"k_range {self.k_range} must lie inside [{K_MIN}, {K_MAX}]")
        if not K_MIN <= self.k_eval <= K_MAX:
            raise ValueError(f"k_eval {self.k_eval} outside [{K_MIN}, {K_MAX}]")
        if m.image_size != (self.image_size, self.image_size):
            raise ValueError(f"model image size {m.image_size} differs from image_size {self.image_size}")
        if self.n_frames > m.max_frames:
            raise ValueError(f"n_frames {self.n_frames} exceeds the model's max_frames {m.max_frames}")
        if max(self.max_train_refs, self.eval_refs) > m.ref_capacity:
            raise ValueError(f"reference counts exceed ref_capacity {m.ref_capacity}")
        if self.n_frames < 2:
            raise ValueError("n_frames must be >= 2 for curation")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        return self


def _stamp(cfg: RunConfig, **kw):
    d = {"config_hash": cfg.hash(), "seed": cfg.seed}
    d.update(kw)
    return d


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# data


@dataclass
class SceneData:
    path: Path
    cams: list
    curation: dict
    K: int
    clean: np.ndarray  # (F,H,W,3)
    degraded: np.ndarray  # (F,H,W,3)
    opacity: np.ndarray  # (F,H,W)
    refs: np.ndarray  # (N,H,W,3) clean renders of the input cameras
    ref_index: list

    @property
    def held_out(self):
        return list(self.curation["group2"])

    def scene(self):
        return load_scene(self.path / "scene.json")

    def degraded_scene(self):
        return load_scene(self.path / "degraded.json")


def make_scene(cfg: RunConfig, rng: nc.Rng, K: int):
    """Clean scene, trajectory, curation and degraded scene for one sample."""
    scene = gen_scene(rng.child(0), cfg.n_primitives, cfg.extent)
    cams = orbit_cameras(rng.child(1), cfg.n_frames, cfg.extent, cfg.image_size)
    cur = curate(cams, K)
    inputs = [cams[i] for i in cur.selected1]
    deg = degrade(scene, inputs, rng.child(2), DegradeParams(cfg.tau_vis, cfg.eta))
    return scene, cams, cur, deg


def render_trajectory(scene, cams):
    rs = [render(scene, c) for c in cams]
    return np.stack([r.rgb for r in rs]), np.stack([r.opacity for r in rs])


def write_frames(folder, frames, names=None):
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    names = range(len(frames)) if names is None else names
    for n, img in zip(names, frames):
        write_png(folder / f"{int(n):03d}.png", img)


def gen_data(cfg: RunConfig, out_dir):
    """Write train and eval scenes under ``out_dir``; returns the dataset manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = nc.Rng(cfg.seed).child(_DATA)
    splits = {}
    for split, n in (("train", cfg.n_train_scenes), ("eval", cfg.n_eval_scenes)):
        names = []
        for i in range(n):
            rng = root.child(_SPLITS[split], i)
            K = sample_k(rng.child(3), cfg.k_range) if split == "train" else cfg.k_eval
            name = f"{split}/scene_{i:03d}"
            write_scene(cfg, out / name, rng, K, split, i)
            names.append(name)
        splits[split] = names
    manifest = _stamp(cfg, kind="dataset", splits=splits, config=cfg.to_dict())
    _write_json(out / "dataset.json", manifest)
    log.info("gen_data: %d train, %d eval scenes in %s", cfg.n_train_scenes, cfg.n_eval_scenes, out)
    return manifest


def write_scene(cfg: RunConfig, folder, rng: nc.Rng, K: int, split="train", index=0):
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    scene, cams, cur, deg = make_scene(cfg, rng, K)
    clean, _ = render_trajectory(scene, cams)
    degraded, opacity = render_trajectory(deg, cams)
    ref_index = list(cur.selected1)
    refs = clean[ref_index]
    save_scene(folder / "scene.json", scene)
    save_scene(folder / "degraded.json", deg)
    nc.io.save(folder / "arrays.spfl", {"clean": clean, "degraded": degraded, "opacity": opacity, "refs": refs})
    write_frames(folder / "clean", clean)
    write_frames(folder / "degraded", degraded)
    write_frames(folder / "opacity", opacity)
    write_frames(folder / "refs", refs, ref_index)
    manifest = _stamp(
        cfg,
        kind="scene",
        split=split,
        index=index,
        K=K,
        cameras=[c.to_dict() for c in cams],
        curation=cur.to_dict(),
        ref_index=ref_index,
        n_primitives={"clean": len(scene), "degraded": len(deg)},
        files={"arrays": "arrays.spfl", "scene": "scene.json", "degraded_scene": "degraded.json", "clean": "clean/", "degraded": "degraded/", "opacity": "opacity/", "refs": "refs/"},
    )
    _write_json(folder / "manifest.json", manifest)
    return manifest


def load_scene_data(folder) -> SceneData:
    folder = Path(folder)
    m = _read_json(folder / "manifest.json")
    arrs = nc.io.load(folder / "arrays.spfl")
    cams = [CameraPose.from_dict(d) for d in m["cameras"]]
    return SceneData(folder, cams, m["curation"], m["K"], arrs["clean"], arrs["degraded"], arrs["opacity"], arrs["refs"], list(m["ref_index"]))


def load_split(data_dir, split):
    data_dir = Path(data_dir)
    m = _read_json(data_dir / "dataset.json")
    if split not in m["splits"]:
        raise ValueError(f"dataset has no split {split!r}")
    return [load_scene_data(data_dir / name) for name in m["splits"][split]]


# ---------------------------------------------------------------------------
# batches


def scene_inputs(cfg: RunConfig, sd: SceneData, rgb=None, opacity=None, ref_sel=None):
    """Single-sample (z_deg, O_z, z_clean, cond) for a scene; ``rgb`` and
    ``opacity`` default to the stored degraded renders."""
    s = cfg.denoiser.s
    rgb = sd.degraded if rgb is None else rgb
    opacity = sd.opacity if opacity is None else opacity
    ref_sel = [] if ref_sel is None else list(ref_sel)
    ref_lat = encode(sd.refs[ref_sel], s) if ref_sel else None
    ref_cams = [sd.cams[sd.ref_index[j]] for j in ref_sel]
    cond = build_conditioning(sd.cams, opacity, ref_lat, ref_cams)
    return encode(rgb, s)[None], opacity_downscale(opacity, s)[None], encode(sd.clean, s)[None], cond


def assemble_batch(cfg: RunConfig, scenes, rng: nc.Rng, batch_size, dropout=True):
    """Random training batch: scenes, a shared reference count in 0..max and
    optional frame dropout on the degraded latents and opacity."""
    idx = rng.integers(0, len(scenes), shape=batch_size)
    avail = min(len(scenes[i].ref_index) for i in idx)
    n_ref = int(rng.integers(0, min(cfg.max_train_refs, avail) + 1))
    zd, oz, zc, conds = [], [], [], []
    for i in idx:
        sd = scenes[i]
        sel = sorted(rng.permutation(len(sd.ref_index))[:n_ref].tolist())
        a, b, c, cond = scene_inputs(cfg, sd, ref_sel=sel)
        zd.append(a)
        oz.append(b)
        zc.append(c)
        conds.append(cond)
    cond = stack_conditioning(conds)
    batch = {"z_deg": np.concatenate(zd), "O_z": np.concatenate(oz), "z_clean": np.concatenate(zc), "cond": cond}
    if dropout:
        B, F = batch["z_deg"].shape[:2]
        K = np.zeros(B, dtype=np.int64)
        for b in range(B):
            if rng.uniform() < cfg.dropout_prob:
                K[b] = int(rng.integers(1, F + 1))
        # dropped frames keep their raymaps but lose rendering and opacity
        for b in range(B):
            if K[b]:
                batch["z_deg"][b, F - K[b] :] = 0
                batch["O_z"][b, F - K[b] :] = 0
                cond.opacity[b, F - K[b] :] = 0
    return batch


def flow_batch(batch, rng: nc.Rng, t=None, batch_id=""):
    B = batch["z_deg"].shape[0]
    return {
        "z_mix": opacity_mix(batch["z_deg"], batch["O_z"], rng),
        "z_clean": batch["z_clean"],
        "t": rng.uniform(B) if t is None else t,
        "cond": batch["cond"],
        "batch_id": batch_id,
    }


# ---------------------------------------------------------------------------
# training loops


@dataclass
class TrainState:
    step: int
    losses: list
    rng: nc.Rng


def _write_loss_log(path, losses, start=0):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for i, l in enumerate(losses):
        w.writerow([start + i, f"{l:.9g}"])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _read_loss_log(path):
    rows = list(csv.DictReader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    return [float(r["loss"]) for r in rows]


def _check_divergence(cfg, losses, stage):
    n = cfg.divergence_patience
    if len(losses) > n and all(l > cfg.divergence_factor * losses[0] for l in losses[-n:]):
        raise DivergenceError(f"{stage}: loss above {cfg.divergence_factor}x its initial value {losses[0]:.4g} for {n} consecutive steps (step {len(losses) - 1})")


def _save_stage(cfg, out_dir, stage, model, opt, state: TrainState, extra=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ck = out / f"{stage}.spfl"
    meta = _stamp(cfg, stage=stage, step=state.step, rng_state=state.rng.get_state(), run_config=cfg.to_dict())
    meta.update(extra or {})
    save_checkpoint(ck, model, meta)
    if opt is not None:
        nc.io.save(out / f"{stage}_opt.spfl", opt.state())
    _write_loss_log(out / f"{stage}_loss.csv", state.losses)
    return ck


def _resume(path, model, opt):
    path = Path(path)
    m, meta = load_checkpoint(path)
    model.load_state(m.state())
    if opt is not None:
        opt.load_state(nc.io.load(path.with_name(path.stem + "_opt.spfl")))
    losses = _read_loss_log(path.with_name(path.stem + "_loss.csv"))
    return TrainState(int(meta["step"]), losses, nc.Rng(0).set_state(meta["rng_state"]))


def _fit_loop(cfg, stage, model, opt, state: TrainState, n_iters, make_loss):
    params = model.params
    for p in params.values():
        p.requires_grad = True
    try:
        while state.step < n_iters:
            with nc.Tape() as tape:
                loss = make_loss(state.rng, state.step)
                grads = tape.backward(loss)
            opt.step(grads)
            state.losses.append(float(loss.data))
            if cfg.log_every and (state.step % cfg.log_every == 0 or state.step == n_iters - 1):
                log.info("%s step %d: loss %.5g", stage, state.step, state.losses[-1])
            _check_divergence(cfg, state.losses, stage)
            state.step += 1
    finally:
        for p in params.values():
            p.requires_grad = False
    return state


def train_teacher(cfg: RunConfig, data_dir, out_dir, resume=None, n_iters=None):
    """Bidirectional teacher trained with CFM from opacity-mixed sources.

    ``n_iters`` overrides ``cfg.teacher_iters`` as the step to stop at, which
    lets a run be split and resumed.
    """
    scenes = load_split(data_dir, "train")
    mcfg = cfg.denoiser
    root = nc.Rng(cfg.seed).child(_TEACHER)
    model = Denoiser(mcfg, root.child(0))
    opt = nc.AdamW(model.params, lr=cfg.teacher_lr)
    state = _resume(resume, model, opt) if resume else TrainState(0, [], root.child(1))
    n_iters = cfg.teacher_iters if n_iters is None else n_iters

    def make_loss(rng, step):
        batch = assemble_batch(cfg, scenes, rng, cfg.batch_size)
        return cfm_loss(model, flow_batch(batch, rng, batch_id=f"teacher-{step}"), mode="full")

    _fit_loop(cfg, "teacher", model, opt, state, n_iters, make_loss)
    return _save_stage(cfg, out_dir, "teacher", model, opt, state, {"mode": "full"})


def convert_and_distill(cfg: RunConfig, data_dir, teacher_ckpt, out_dir):
    """Causal initialisation from the teacher, then rollout + DMD.

    Writes ``causal.spfl`` after phase 1 and ``generator.spfl`` after phase 2.
    """
    scenes = load_split(data_dir, "train")
    teacher, _ = load_checkpoint(teacher_ckpt)
    causal = teacher.copy()

    # phase 1: block-causal CFM with independent per-frame noise levels
    opt = nc.AdamW(causal.params, lr=cfg.causal_lr)
    state = TrainState(0, [], nc.Rng(cfg.seed).child(_CAUSAL))

    def make_loss(rng, step):
        batch = assemble_batch(cfg, scenes, rng, cfg.batch_size)
        lv = df_noise(cfg.batch_size, cfg.n_frames, rng).levels
        return cfm_loss(causal, flow_batch(batch, rng, t=lv, batch_id=f"causal-{step}"), mode="block_causal")

    _fit_loop(cfg, "causal", causal, opt, state, cfg.causal_iters, make_loss)
    _save_stage(cfg, out_dir, "causal", causal, opt, state, {"mode": "block_causal"})

    # phase 2: distribution matching against the teacher
    rng = nc.Rng(cfg.seed).child(_DMD)
    gen = RolloutGenerator(causal, cfg.chunk_size, cfg.gen_steps, cfg.window)
    fake = teacher.copy()
    gen_opt = nc.AdamW(causal.params, lr=cfg.gen_lr)
    fake_opt = nc.AdamW(fake.params, lr=cfg.fake_lr)
    batch_rng = rng.child(0)
    cache = {}

    def next_batch(it):
        if it not in cache:
            cache.clear()
            cache[it] = assemble_batch(cfg, scenes, batch_rng, cfg.dmd_batch_size, dropout=False)
        return cache[it]

    hist = dmd_train(gen, teacher, fake, next_batch, rng.child(1), cfg.dmd_iters, gen_opt, fake_opt, cfg.fake_ratio, {"mode": "full"}, cfg.log_every, log)
    for h in hist:
        for k in ("score_gap", "fake_loss"):
            if not np.isfinite(h[k]):
                raise nc.NonFiniteError(f"dmd: non-finite {k} at step {h['step']}")
    out = Path(out_dir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "score_gap", "fake_loss"])
    for h in hist:
        w.writerow([h["step"], f"{h['score_gap']:.9g}", f"{h['fake_loss']:.9g}"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "dmd_log.csv").write_text(buf.getvalue(), encoding="utf-8")
    extra = {"mode": "block_causal", "chunk_size": cfg.chunk_size, "steps_per_chunk": cfg.gen_steps, "window": cfg.window}
    return _save_stage(cfg, out_dir, "generator", causal, None, TrainState(cfg.dmd_iters, [h["fake_loss"] for h in hist], rng), extra)


# ---------------------------------------------------------------------------
# generation


def eval_refs(cfg: RunConfig, sd: SceneData):
    """Test-time references: the first ``eval_refs`` input cameras in selection order."""
    return list(range(min(cfg.eval_refs, len(sd.ref_index))))


def teacher_enhance(cfg: RunConfig, teacher, sd: SceneData, rng: nc.Rng):
    z_deg, O_z, _, cond = scene_inputs(cfg, sd, ref_sel=eval_refs(cfg, sd))
    z0 = opacity_mix(z_deg, O_z, rng)
    z = ode_sample(teacher, z0, cond, cfg.teacher_steps, mode="full")
    return np.clip(decode(z, cfg.denoiser.s)[0], 0.0, 1.0)


def generate_frames(cfg: RunConfig, generator, sd: SceneData, rng: nc.Rng, rgb=None, opacity=None):
    """Causal rollout over the whole trajectory; frames in [0, 1]."""
    z_deg, O_z, _, cond = scene_inputs(cfg, sd, rgb, opacity, eval_refs(cfg, sd))
    z = rollout(generator, z_deg, O_z, cond, cfg.chunk_size, cfg.gen_steps, cfg.window, rng)
    return np.clip(decode(z, cfg.denoiser.s)[0], 0.0, 1.0)


@dataclass
class Variants:
    direct: np.ndarray  # (a) generator frames
    refit_scene: object  # (b) splat scene fitted to (a)
    refit_losses: list
    refit_frames: np.ndarray  # (b) renders of the refit scene
    refit_opacity: np.ndarray
    reenhanced: np.ndarray  # (c) rollout on (b)'s renders


def generate_variants(cfg: RunConfig, generator, sd: SceneData, rng: nc.Rng) -> Variants:
    direct = generate_frames(cfg, generator, sd, rng.child(0))
    fit = fit_scene(list(zip(direct, sd.cams)), sd.degraded_scene(), cfg.fit_steps, cfg.fit_lr)
    refit_rgb, refit_op = render_trajectory(fit.scene, sd.cams)
    again = generate_frames(cfg, generator, sd, rng.child(1), refit_rgb, refit_op)
    return Variants(direct, fit.scene, fit.losses, refit_rgb, refit_op, again)


# ---------------------------------------------------------------------------
# evaluation

VARIANT_ORDER = ("degraded", "teacher", "direct", "refit", "refit_enhanced")


def eval_run(cfg: RunConfig, data_dir, teacher_ckpt, generator_ckpt, out_dir):
    """Metrics on the held-out (group-2) frames of every eval scene.

    Writes per-variant CSV/JSON/PNG reports, generated frames and
    ``comparison.csv``; returns {variant: MetricReport}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = load_split(data_dir, "eval")
    teacher, _ = load_checkpoint(teacher_ckpt)
    gen, _ = load_checkpoint(generator_ckpt)
    rng = nc.Rng(cfg.seed).child(_EVAL)
    frames = {k: [] for k in VARIANT_ORDER}
    gt, index, fits = [], [], []
    for i, sd in enumerate(scenes):
        srng = rng.child(i)
        var = generate_variants(cfg, gen, sd, srng.child(1))
        per = {
            "degraded": sd.degraded,
            "teacher": teacher_enhance(cfg, teacher, sd, srng.child(0)),
            "direct": var.direct,
            "refit": var.refit_frames,
            "refit_enhanced": var.reenhanced,
        }
        ho = sd.held_out
        for k in VARIANT_ORDER:
            frames[k].extend(per[k][ho])
            write_frames(out / "frames" / f"scene_{i:03d}" / k, per[k])
        gt.extend(sd.clean[ho])
        index.extend(i * cfg.n_frames + j for j in ho)
        fits.append(
            {
                "scene": i,
                "fit_initial_loss": var.refit_losses[0] if var.refit_losses else None,
                "fit_final_loss": var.refit_losses[-1] if var.refit_losses else None,
                "held_out_opacity_degraded": float(sd.opacity[ho].mean()),
                "held_out_opacity_refit": float(var.refit_opacity[ho].mean()),
            }
        )
        save_scene(out / "frames" / f"scene_{i:03d}" / "refit.json", var.refit_scene)
    reports = {k: report(out, frames[k], gt, index, k, cfg.hash(), cfg.seed) for k in VARIANT_ORDER}
    (out / "comparison.csv").write_text(comparison_table([reports[k] for k in VARIANT_ORDER]), encoding="utf-8")
    _write_json(out / "refit.json", _stamp(cfg, scenes=fits))
    return reports


def run_all(cfg: RunConfig, out_dir):
    """gen-data, train-teacher, distill and eval in one go."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())
    gen_data(cfg, out / "data")
    t = train_teacher(cfg, out / "data", out / "ckpt")
    g = convert_and_distill(cfg, out / "data", t, out / "ckpt")
    return eval_run(cfg, out / "data", t, g, out / "eval")
