"""The whole pipeline at toy-within-toy scale, in well under a minute.

Data generation, teacher training, causal conversion, DMD distillation and
evaluation with the five-way comparison table. The numbers are meaningless
at this size; the default config (``splatflow selftest``) is the real run.

    python3 demos/04_tiny_pipeline.py [out_dir]
"""
import sys
from pathlib import Path

from artifact import model as M
from artifact.pipeline import RunConfig, run_all

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/04")
cfg = RunConfig(
    n_train_scenes=4,
    n_eval_scenes=1,
    n_primitives=16,
    image_size=16,
    model=M.DenoiserConfig(embed_dim=32, n_heads=2, n_blocks=2, image_size=(16, 16)).to_dict(),
    teacher_iters=60,
    causal_iters=10,
    dmd_iters=3,
    dmd_batch_size=1,
    fake_ratio=2,
    teacher_steps=8,
    fit_steps=40,
    log_every=0,
)
reports = run_all(cfg, out)
print((out / "eval" / "comparison.csv").read_text(), end="")
print("config hash", cfg.hash(), "- everything is under", out)
