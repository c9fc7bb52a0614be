import json

import numpy as np
import pytest

from artifact import cli
from artifact import numcore as nc
from artifact import pipeline as P

from .test_pipeline import tiny


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(tiny().to_json())
    return p


def test_gen_data_sample_cameras_render(tmp_path, cfg_file, capsys):
    out = tmp_path / "data"
    assert cli.main(["--config", str(cfg_file), "--out", str(out), "gen-data"]) == 0
    assert (out / "dataset.json").exists()
    cams = tmp_path / "cams"
    assert cli.main(["--config", str(cfg_file), "--seed", "5", "--out", str(cams), "sample-cameras", "--k", "2"]) == 0
    cur = json.loads((cams / "curation.json").read_text())
    assert cur["seed"] == 5 and len(cur["selected1"]) == 2
    sc = out / "eval" / "scene_000"
    (tmp_path / "poses.json").write_text(json.dumps(json.loads((sc / "manifest.json").read_text())["cameras"]))
    r = tmp_path / "render"
    assert cli.main(["--config", str(cfg_file), "--out", str(r), "render", "--scene", str(sc / "scene.json"), "--poses", str(tmp_path / "poses.json")]) == 0
    np.testing.assert_array_equal(nc.io.load(r / "frames.spfl")["rgb"], P.load_scene_data(sc).clean)


def test_train_distill_generate_eval(tmp_path, cfg_file):
    data, ck = tmp_path / "data", tmp_path / "ckpt"
    base = ["--config", str(cfg_file)]
    assert cli.main(base + ["--out", str(data), "gen-data"]) == 0
    assert cli.main(base + ["--out", str(ck), "train-teacher", "--data", str(data)]) == 0
    assert cli.main(base + ["--out", str(ck), "distill", "--data", str(data), "--teacher", str(ck / "teacher.spfl")]) == 0
    g = tmp_path / "gen"
    args = ["generate", "--generator", str(ck / "generator.spfl"), "--scene-dir", str(data / "eval" / "scene_000"), "--steps", "2"]
    assert cli.main(base + ["--out", str(g)] + args) == 0
    assert json.loads((g / "manifest.json").read_text())["steps_per_chunk"] == 2
    assert len(list((g / "direct").glob("*.png"))) == 8
    e = tmp_path / "eval"
    assert cli.main(base + ["--out", str(e), "eval", "--pred", str(g / "frames.spfl"), "--gt", str(data / "eval" / "scene_000" / "arrays.spfl")]) == 0
    assert (e / "direct.csv").read_text().startswith("frame_index,psnr_db,ssim\n")


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"k_range": [0, 3]}))
    assert cli.main(["--config", str(bad), "gen-data"]) == 1
    assert "k_range" in capsys.readouterr().err
    assert cli.main(["render", "--scene", str(tmp_path / "missing.json"), "--poses", str(tmp_path / "p.json")]) == 1
    assert cli.main(["eval"]) == 1


def test_numerical_abort_exit_code(monkeypatch, tmp_path, capsys):
    def boom(*a, **kw):
        raise P.DivergenceError("teacher: loss above 10x its initial value")

    monkeypatch.setattr(P, "train_teacher", boom)
    assert cli.main(["--out", str(tmp_path), "train-teacher", "--data", str(tmp_path)]) == 2
    assert "numerical abort" in capsys.readouterr().err


def test_gradcheck_verb(capsys):
    assert cli.main(["gradcheck", "--n", "20"]) == 0
    assert "max rel err" in capsys.readouterr().out


def test_parser_lists_every_verb():
    verbs = cli.build_parser()._subparsers._group_actions[0].choices
    assert set(verbs) == {"gen-data", "sample-cameras", "render", "train-teacher", "distill", "generate", "eval", "gradcheck", "selftest"}
