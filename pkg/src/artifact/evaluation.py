"""PSNR / SSIM and run reports.

Metrics work on float images in [0, 1]; files written here are for viewing
only and are never read back into a metric.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .images import grid, write_png

PSNR_IDENTICAL = float("inf")
SSIM_WINDOW = 8
C1 = 0.01**2
C2 = 0.03**2


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """10 log10(1 / MSE) in dB; identical images give +inf."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * np.log10(1.0 / mse)


def ssim(a, b, window=SSIM_WINDOW):
    """Mean SSIM over every valid ``window`` x ``window`` uniform window and channel."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    H, W = a.shape[:2]
    if H < window or W < window:
        raise ValueError(f"image {H}x{W} is smaller than the {window}x{window} SSIM window")
    wa = sliding_window_view(a, (window, window), axis=(0, 1))  # (H', W', C, w, w)
    wb = sliding_window_view(b, (window, window), axis=(0, 1))
    ma, mb = wa.mean(axis=(-2, -1)), wb.mean(axis=(-2, -1))
    va = ((wa - ma[..., None, None]) ** 2).mean(axis=(-2, -1))
    vb = ((wb - mb[..., None, None]) ** 2).mean(axis=(-2, -1))
    cov = ((wa - ma[..., None, None]) * (wb - mb[..., None, None])).mean(axis=(-2, -1))
    s = ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
    return float(s.mean())


@dataclass
class MetricReport:
    label: str
    frame_index: list
    psnr_db: list
    ssim: list
    config_hash: str = ""
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def count(self):
        return len(self.frame_index)

    @property
    def mean_psnr(self):
        return float(np.mean(self.psnr_db)) if self.psnr_db else float("nan")

    @property
    def mean_ssim(self):
        return float(np.mean(self.ssim)) if self.ssim else float("nan")

    def to_dict(self):
        d = asdict(self)
        d.update(count=self.count, mean_psnr=self.mean_psnr, mean_ssim=self.mean_ssim)
        return d


def evaluate(pred, gt, frame_index=None, label="", config_hash="", seed=0):
    if len(pred) != len(gt):
        raise ValueError(f"frame count mismatch: {len(pred)} generated vs {len(gt)} ground truth")
    idx = list(range(len(gt))) if frame_index is None else [int(i) for i in frame_index]
    ps = [psnr(p, g) for p, g in zip(pred, gt)]
    ss = [ssim(p, g) for p, g in zip(pred, gt)]
    return MetricReport(label, idx, ps, ss, config_hash, seed)


def _fmt(v):
    return "inf" if v == float("inf") else f"{v:.12g}"


def metrics_csv(rep: MetricReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_index", "psnr_db", "ssim"])
    for i, p, s in zip(rep.frame_index, rep.psnr_db, rep.ssim):
        w.writerow([i, _fmt(p), _fmt(s)])
    return buf.getvalue()


def report(out_dir, pred, gt, frame_index=None, label="run", config_hash="", seed=0, extra_rows=None):
    """Write ``<label>.csv``, ``<label>.json`` and a side-by-side ``<label>.png``.

    ``extra_rows`` is an optional list of further image rows (e.g. the
    degraded inputs) shown under the prediction / ground-truth rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = evaluate(pred, gt, frame_index, label, config_hash, seed)
    (out / f"{label}.csv").write_text(metrics_csv(rep), encoding="utf-8")
    summary = {k: (_fmt(v) if isinstance(v, float) else v) for k, v in rep.to_dict().items() if k not in ("psnr_db", "ssim")}
    (out / f"{label}.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    rows = [list(pred), list(gt)] + [list(r) for r in (extra_rows or [])]
    write_png(out / f"{label}.png", grid(rows))
    return rep


def comparison_table(reports) -> str:
    """CSV table ``variant, frames, mean_psnr_db, mean_ssim`` in the given order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "frames", "mean_psnr_db", "mean_ssim"])
    for r in reports:
        w.writerow([r.label, r.count, _fmt(r.mean_psnr), _fmt(r.mean_ssim)])
    return buf.getvalue()
