"""Command-line integration: outputs, manifests and the exit-code contract."""

import json

import numpy as np
import pytest

from conftest import run_cli
from interp_oracle import direct_solve
from radardepth import io
from radardepth.geometry import CameraIntrinsics

CALIB = "fx 100\nfy 100\ncx 50\ncy 50\nwidth 100\nheight 100\n"
WALL_SCENE = "ground 1.5\nbox 0 0 30.5 200 20 1\nfar 80\n"


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds") / "street"
    code, _, err = run_cli("synth", root, "--frames", 6, "--seed", 3)
    assert code == 0, err
    return root


def write(path, text):
    path.write_text(text)
    return path


# --- project --------------------------------------------------------------------------

def test_project_example(tmp_path):
    pts = write(tmp_path / "p.csv", "x,y,z\n1,0,10\n")
    calib = write(tmp_path / "c.txt", CALIB)
    code, out, _ = run_cli("project", pts, calib, tmp_path / "d.pfm", "--png16", "true")
    assert code == 0
    depth = io.read_pfm(tmp_path / "d.pfm")
    assert depth[50, 60] == 10.0 and np.count_nonzero(depth) == 1
    assert (tmp_path / "d.png").exists()
    manifest = json.loads((tmp_path / "d.manifest.json").read_text())
    assert manifest["command"] == "project"
    assert manifest["config"]["png16"] is True
    assert set(manifest) >= {"inputs", "outputs", "version", "duration_s"}
    assert "1 points" in out


def test_project_empty_cloud(tmp_path):
    pts = write(tmp_path / "p.csv", "x,y,z\n")
    calib = write(tmp_path / "c.txt", CALIB)
    assert run_cli("project", pts, calib, tmp_path / "d.pfm")[0] == 0
    assert not io.read_pfm(tmp_path / "d.pfm").any()


def test_project_bad_inputs(tmp_path):
    pts = write(tmp_path / "p.csv", "x,y,z\n1,0,10\n")
    calib = write(tmp_path / "c.txt", CALIB.replace("fy 100", "fy x"))
    code, _, err = run_cli("project", pts, calib, tmp_path / "d.pfm")
    assert code == 2 and "'fy'" in err
    bad = write(tmp_path / "q.csv", "x,y,z\n1,0\n")
    code, _, err = run_cli("project", bad, write(tmp_path / "ok.txt", CALIB), tmp_path / "d.pfm")
    assert code == 2 and "q.csv:2" in err
    assert run_cli("project", tmp_path / "missing.csv", calib, tmp_path / "d.pfm")[0] == 2


# --- pipeline -------------------------------------------------------------------------

def test_degenerate_pipeline_equals_project(small_dataset, tmp_path):
    last = sorted((small_dataset / "radar").glob("*.csv"))[-1]
    assert run_cli("pipeline", small_dataset, tmp_path / "pipe.pfm", "--accumulate", 1, "--extend", "false")[0] == 0
    assert run_cli("project", last, small_dataset / "calib.txt", tmp_path / "proj.pfm")[0] == 0
    assert (tmp_path / "pipe.pfm").read_bytes() == (tmp_path / "proj.pfm").read_bytes()


def test_pipeline_report_trend(small_dataset, tmp_path):
    # reference: the frame's own ground truth
    ref = small_dataset / "gt" / "000005.pfm"
    code, out, err = run_cli("pipeline", small_dataset, tmp_path / "out.pfm", "--filter", "true",
                             "--reference", ref, "--figure", tmp_path / "out.png")
    assert code == 0, err
    with open(tmp_path / "out.csv") as f:
        rows = {r.split(",")[0]: r.strip().split(",") for r in f.readlines()[1:]}
    raw, ext, filt = rows["raw"], rows["extended"], rows["filtered"]
    assert float(ext[4]) > float(raw[4])           # points up with extension
    assert float(filt[3]) < float(ext[3])          # RMSE down with filtering
    assert float(filt[4]) < float(ext[4])
    assert (tmp_path / "out.png").stat().st_size > 0
    assert "extended" in out


def test_pipeline_validation_errors(small_dataset, tmp_path):
    code, _, err = run_cli("pipeline", small_dataset, tmp_path / "o.pfm", "--h-min", 2.0, "--h-max", 0.25)
    assert code == 2 and "inverted" in err
    code, _, err = run_cli("pipeline", small_dataset, tmp_path / "o.pfm", "--filter", "true")
    assert code == 2 and "--reference" in err
    assert run_cli("pipeline", tmp_path, tmp_path / "o.pfm")[0] == 2
    assert run_cli("pipeline", small_dataset, tmp_path / "o.pfm", "--frame", 99)[0] == 2


def test_pipeline_config_file_and_flag_precedence(small_dataset, tmp_path):
    cfg = write(tmp_path / "run.cfg", "accumulate 1\nextend false\n")
    assert run_cli("pipeline", small_dataset, tmp_path / "a.pfm", "--config", cfg)[0] == 0
    assert run_cli("pipeline", small_dataset, tmp_path / "b.pfm", "--accumulate", 1, "--extend", "false")[0] == 0
    assert (tmp_path / "a.pfm").read_bytes() == (tmp_path / "b.pfm").read_bytes()
    assert run_cli("pipeline", small_dataset, tmp_path / "c.pfm", "--config", cfg, "--extend", "true")[0] == 0
    a = io.read_pfm(tmp_path / "a.pfm")
    c = io.read_pfm(tmp_path / "c.pfm")
    assert np.count_nonzero(c) > np.count_nonzero(a)
    bad = write(tmp_path / "bad.cfg", "accumulat 1\n")
    code, _, err = run_cli("pipeline", small_dataset, tmp_path / "d.pfm", "--config", bad)
    assert code == 2 and "accumulat" in err


def test_pipeline_crop_and_downsample(small_dataset, tmp_path):
    assert run_cli("pipeline", small_dataset, tmp_path / "o.pfm", "--crop", 10, 20, 60, 120,
                   "--downsample", 2)[0] == 0
    assert io.read_pfm(tmp_path / "o.pfm").shape == (30, 60)


# --- interpolate ----------------------------------------------------------------------

def test_interpolate_constant_and_oracle(tmp_path, rng):
    seeds = np.where(rng.random((9, 12)) < 0.1, 7.3, 0.0)
    seeds[0, 0] = 7.3
    io.write_pfm(tmp_path / "s.pfm", seeds)
    io.write_pfm(tmp_path / "g.pfm", rng.random((9, 12)))
    code, out, _ = run_cli("interpolate", tmp_path / "s.pfm", tmp_path / "g.pfm", tmp_path / "d.pfm")
    assert code == 0 and "residual" in out and "iterations" in out
    assert np.max(np.abs(io.read_pfm(tmp_path / "d.pfm") - 7.3)) <= 1e-6

    # float32 storage: compare against the oracle on float32-exact inputs
    seeds = np.zeros((5, 5))
    seeds[0, 0], seeds[4, 4], seeds[2, 1] = 2.0, 30.0, 11.5
    guide = np.round(rng.random((5, 5)) * 256) / 256
    io.write_pfm(tmp_path / "s5.pfm", seeds)
    io.write_pfm(tmp_path / "g5.pfm", guide)
    assert run_cli("interpolate", tmp_path / "s5.pfm", tmp_path / "g5.pfm", tmp_path / "d5.pfm")[0] == 0
    np.testing.assert_allclose(io.read_pfm(tmp_path / "d5.pfm"), direct_solve(seeds, guide), rtol=1e-6)


def test_interpolate_errors(tmp_path, rng):
    io.write_pfm(tmp_path / "z.pfm", np.zeros((4, 4)))
    io.write_pfm(tmp_path / "g.pfm", rng.random((4, 4)))
    code, _, err = run_cli("interpolate", tmp_path / "z.pfm", tmp_path / "g.pfm", tmp_path / "d.pfm")
    assert code == 2 and "seed" in err
    seeds = np.zeros((30, 30))
    seeds[0, 0], seeds[29, 29] = 1.0, 50.0
    io.write_pfm(tmp_path / "s.pfm", seeds)
    io.write_pfm(tmp_path / "g30.pfm", rng.random((30, 30)))
    code, _, err = run_cli("interpolate", tmp_path / "s.pfm", tmp_path / "g30.pfm", tmp_path / "d.pfm",
                           "--max-iterations", 1, "--tolerance", 1e-14, "--preconditioner", "jacobi")
    assert code == 3 and "residual" in err
    code, _, _ = run_cli("interpolate", tmp_path / "s.pfm", tmp_path / "g30.pfm", tmp_path / "d.pfm",
                         "--neighborhood", 6)
    assert code == 2


# --- evaluate -------------------------------------------------------------------------

def test_evaluate_rows(tmp_path, rng):
    gt = rng.uniform(1, 40, (8, 8))
    io.write_pfm(tmp_path / "gt.pfm", gt)
    io.write_pfm(tmp_path / "p2.pfm", 2 * gt)
    code, out, _ = run_cli("evaluate", tmp_path / "gt.pfm", tmp_path / "gt.pfm")
    assert code == 0 and out.strip() == "1.000  0.000  0.000"
    code, out, _ = run_cli("evaluate", tmp_path / "p2.pfm", tmp_path / "gt.pfm", "--out", tmp_path / "m.csv")
    d1, _, absrel = out.split()
    assert code == 0 and d1 == "0.000" and absrel == "1.000"
    header, row = (tmp_path / "m.csv").read_text().splitlines()
    assert header.startswith("method,delta1,rmse,abs_rel")
    assert row.startswith("prediction,0.000,")
    assert (tmp_path / "m.manifest.json").exists()


def test_evaluate_errors(tmp_path):
    io.write_pfm(tmp_path / "a.pfm", np.ones((4, 4)))
    io.write_pfm(tmp_path / "b.pfm", np.ones((4, 5)))
    io.write_pfm(tmp_path / "z.pfm", np.zeros((4, 4)))
    assert run_cli("evaluate", tmp_path / "a.pfm", tmp_path / "b.pfm")[0] == 2
    assert run_cli("evaluate", tmp_path / "a.pfm", tmp_path / "z.pfm")[0] == 3


# --- synth and table1 -----------------------------------------------------------------

def test_synth_zero_frames_and_empty_table(tmp_path):
    code, _, _ = run_cli("synth", tmp_path / "empty", "--frames", 0)
    assert code == 0
    assert (tmp_path / "empty" / "manifest.json").exists()
    assert (tmp_path / "empty" / "poses.txt").read_text() == ""
    code, _, err = run_cli("table1", tmp_path / "empty")
    assert code == 2 and "no frames" in err


def test_synth_layout(small_dataset):
    for sub in ("radar", "gt", "lidar", "guide"):
        assert len(list((small_dataset / sub).iterdir())) == 6
    intr, _ = io.read_calibration(small_dataset / "calib.txt")
    assert intr == CameraIntrinsics(100.0, 100.0, 100.0, 45.0, 200, 100)
    manifest = json.loads((small_dataset / "manifest.json").read_text())
    assert "radar/000005.csv" in manifest["outputs"]


def test_synth_bad_scene(tmp_path):
    scene = write(tmp_path / "s.txt", "ground 1.5\nbox 0 0 10 1 1\n")
    code, _, err = run_cli("synth", tmp_path / "o", "--scene", scene, "--frames", 1)
    assert code == 2 and "s.txt:2" in err


def test_noise_free_table1(tmp_path):
    scene = write(tmp_path / "wall.txt", WALL_SCENE)
    code, _, err = run_cli("synth", tmp_path / "ds", "--scene", scene, "--frames", 6, "--ego-step", 0.5,
                           "--noise-sigma", 0, "--range-noise-frac", 0, "--dropout", 0, "--clutter", 0)
    assert code == 0, err
    code, out, err = run_cli("table1", tmp_path / "ds", "--out", tmp_path / "t1")
    assert code == 0, err
    lines = (tmp_path / "t1" / "table1.csv").read_text().splitlines()
    assert lines[0] == "modality,threshold,delta1,rmse,points,retained_pct"
    for line in lines[1:]:
        cells = line.split(",")
        assert cells[2] == "1.000"
        assert cells[5] == "100.0"
    assert (tmp_path / "t1" / "table1.png").stat().st_size > 0
    assert "radar2" in out


def test_version_and_usage():
    assert run_cli("--version")[0] == 0
    assert run_cli()[0] == 2
    assert run_cli("evaluate", "only-one")[0] == 2
