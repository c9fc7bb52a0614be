import numpy as np
import pytest

from artifact import evaluation as ev


def test_psnr_trivial():
    a = np.random.default_rng(0).uniform(size=(8, 8, 3))
    assert ev.psnr(a, a) == float("inf")
    assert ev.psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0, abs=1e-12)
    with pytest.raises(ValueError):
        ev.psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_psnr_loop_oracle_and_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(size=(2, 9, 7, 3))
    tot = 0.0
    for i in range(9):
        for j in range(7):
            for c in range(3):
                tot += (a[i, j, c] - b[i, j, c]) ** 2
    oracle = 10 * np.log10(1 / (tot / (9 * 7 * 3)))
    assert ev.psnr(a, b) == pytest.approx(oracle, abs=1e-10)
    assert ev.psnr(a, b) == ev.psnr(b, a)


def test_psnr_monotone_in_noise():
    rng = np.random.default_rng(2)
    a = rng.uniform(size=(16, 16, 3))
    n = rng.standard_normal(a.shape)
    vals = [ev.psnr(a, a + s * n) for s in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_ssim_identical_and_constant():
    a = np.random.default_rng(3).uniform(size=(12, 12, 3))
    assert ev.ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    m1, m2 = 0.3, 0.7
    expect = (2 * m1 * m2 + ev.C1) / (m1 * m1 + m2 * m2 + ev.C1)
    assert ev.ssim(np.full((10, 10), m1), np.full((10, 10), m2)) == pytest.approx(expect, abs=1e-12)
    with pytest.raises(ValueError):
        ev.ssim(np.zeros((7, 9)), np.zeros((7, 9)))


def _ssim_loop(a, b, w=8):
    vals = []
    for i in range(a.shape[0] - w + 1):
        for j in range(a.shape[1] - w + 1):
            x, y = a[i : i + w, j : j + w].ravel(), b[i : i + w, j : j + w].ravel()
            mx, my = x.mean(), y.mean()
            vx, vy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
            cxy = ((x - mx) * (y - my)).mean()
            vals.append((2 * mx * my + ev.C1) * (2 * cxy + ev.C2) / ((mx * mx + my * my + ev.C1) * (vx + vy + ev.C2)))
    return np.mean(vals)


def test_ssim_window_loop_oracle_and_symmetry():
    rng = np.random.default_rng(4)
    a, b = rng.uniform(size=(2, 11, 10))
    assert ev.ssim(a, b) == pytest.approx(_ssim_loop(a, b), abs=1e-12)
    assert ev.ssim(a, b) == pytest.approx(ev.ssim(b, a), abs=1e-15)


# Baseline: the 4x4-cell checkerboard against its inverse gives SSIM -0.99.
def test_ssim_inverted_pattern():
    yy, xx = np.mgrid[0:32, 0:32]
    a = (((yy // 4) + (xx // 4)) % 2).astype(float)
    assert ev.ssim(a, 1 - a) < 0.2


def test_report_files(tmp_path):
    a = np.random.default_rng(5).uniform(size=(2, 16, 16, 3))
    rep = ev.report(tmp_path / "r", [a[0]], [a[0]], label="same", config_hash="abc", seed=3)
    lines = (tmp_path / "r" / "same.csv").read_text().splitlines()
    assert lines == ["frame_index,psnr_db,ssim", "0,inf,1"]
    assert rep.mean_psnr == float("inf")
    b = a + 0.05
    rep = ev.report(tmp_path / "r", list(b), list(a), label="two")
    assert rep.mean_psnr == pytest.approx(np.mean(rep.psnr_db), abs=1e-12)
    assert rep.mean_ssim == pytest.approx(np.mean(rep.ssim), abs=1e-12)
    first = {p.name: p.read_bytes() for p in (tmp_path / "r").iterdir()}
    ev.report(tmp_path / "r", list(b), list(a), label="two")
    second = {p.name: p.read_bytes() for p in (tmp_path / "r").iterdir()}
    assert first == second
    with pytest.raises(ValueError):
        ev.report(tmp_path / "r", [a[0]], list(a))
    assert ev.comparison_table([rep]).splitlines()[0] == "variant,frames,mean_psnr_db,mean_ssim"
