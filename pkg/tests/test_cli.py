import json
import os

import numpy as np
import pytest

from hrnvo.cli import main, read_trajectory_csv, write_trajectory_csv
from hrnvo.eventio import load_events


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    (root / "scene.ini").write_text("seed = 1\nshape_count = 6\n")
    (root / "traj.ini").write_text("[trajectory]\nduration = 1.5\namp_roll = 15\nfreq_roll = 0.7\n")
    out = root / "data"
    rc = main(["synth", "--scene", str(root / "scene.ini"), "--traj", str(root / "traj.ini"), "--out", str(out)])
    assert rc == 0
    return out


def write_config(path, dataset, **extra):
    lines = ["[run]", f"dataset = {dataset}", "package_size = 1000", "grid_width = 32", "grid_height = 24"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_synth_outputs(dataset, capsys):
    for name in ("events.txt", "imu.txt", "groundtruth.txt", "manifest.json"):
        assert (dataset / name).exists()
    man = json.loads((dataset / "manifest.json").read_text())
    assert man["sensor_dims"] == [128, 96] and man["scene"]["seed"] == 1
    assert man["trajectory"]["duration"] == 1.5


def test_synth_default_spec_and_seed(tmp_path):
    # short default-shaped dataset, byte-identical across runs
    (tmp_path / "t.ini").write_text("duration = 0.3\n")
    for d in ("a", "b"):
        assert main(["synth", "--traj", str(tmp_path / "t.ini"), "--seed", "5", "--out", str(tmp_path / d)]) == 0
    for name in ("events.txt", "imu.txt", "groundtruth.txt", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_invalid_spec(tmp_path):
    (tmp_path / "t.ini").write_text("amp_x = 500\n")
    assert main(["synth", "--traj", str(tmp_path / "t.ini"), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()
    (tmp_path / "bad.ini").write_text("no_such_key = 1\n")
    assert main(["synth", "--scene", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "o")]) == 2


def test_run_csv_rows_and_determinism(dataset, tmp_path):
    cfg = write_config(tmp_path / "run.ini", dataset)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r1")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r2")]) == 0
    a = (tmp_path / "r1" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "r2" / "trajectory.csv").read_bytes()
    lines = a.decode().split("\n")
    assert lines[0] == "t,h,v,r" and b"\r" not in a
    n_events = len(load_events(dataset / "events.txt")[0])
    assert len(lines) - 2 == n_events // 1000
    man = json.loads((tmp_path / "r1" / "run_manifest.json").read_text())
    assert man["package_count"] == n_events // 1000 and man["seed"] == 0
    assert man["config"]["run"]["grid_width"] == 32 and man["sensor_dims"] == [128, 96]


def test_run_relative_dataset_profiles_and_fusion_flag(dataset, tmp_path):
    rel = os.path.relpath(dataset, tmp_path)
    cfg = write_config(tmp_path / "run.ini", rel, save_profiles="true", out=str(tmp_path / "cfg_out"))
    assert main(["run", "--config", str(cfg), "--fusion"]) == 0
    assert (tmp_path / "cfg_out" / "profiles.npz").exists()
    prof = np.load(tmp_path / "cfg_out" / "profiles.npz")
    assert prof["h"].shape[1] == 32 and prof["r"].shape[1] == 360
    man = json.loads((tmp_path / "cfg_out" / "run_manifest.json").read_text())
    assert man["config"]["resonator"]["fusion_enabled"] is True


def test_run_config_errors(dataset, tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\ndataset = x\npackage_size = zero\n")
    assert main(["run", "--config", str(bad)]) == 2
    bad.write_text("[weird]\nx = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    bad.write_text(f"dataset = {dataset}\n[resonator]\ngamma = 2\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run"]) == 2


def test_run_data_errors_remove_partial_outputs(tmp_path):
    cfg = write_config(tmp_path / "run.ini", tmp_path / "nowhere")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 3
    assert not out.exists()
    tiny = tmp_path / "tiny"
    tiny.mkdir()
    (tiny / "events.txt").write_text("".join(f"{i * 1e-3:.3f} {i % 128} {i % 96} 1\n" for i in range(50)))
    cfg = write_config(tmp_path / "run2.ini", tiny)
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 3
    assert not out.exists()


def test_eval_identity_and_plots(dataset, tmp_path):
    gt_lines = [ln.split() for ln in (dataset / "groundtruth.txt").read_text().splitlines()]
    gt = np.array(gt_lines, dtype=float)
    from hrnvo.eventio import quats_to_euler

    roll = quats_to_euler(gt[:, [7, 4, 5, 6]])[:, 0]
    write_trajectory_csv(tmp_path / "net.csv", gt[:, 0], np.column_stack([gt[:, 1], gt[:, 2], roll]))
    args = ["eval", "--traj", str(tmp_path / "net.csv"), "--gt", str(dataset / "groundtruth.txt"),
            "--mode", "planar", "--window", "split-70-30"]
    assert main(args + ["--out", str(tmp_path / "e1")]) == 0
    assert main(args + ["--out", str(tmp_path / "e2")]) == 0
    rep = (tmp_path / "e1" / "report.txt").read_text()
    vals = dict(line.split(": ", 1) for line in rep.splitlines())
    # zero up to the 6-decimal CSV rounding
    assert float(vals["median_angle_error_deg"]) < 1e-5
    assert float(vals["median_position_error"]) < 1e-5
    for name in ("errors.csv", "trajectory.png", "error.png"):
        assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()
    assert (tmp_path / "e1" / "errors.csv").read_text().startswith("t,angle_error_deg,pos_error\n")


def test_eval_exit_codes(dataset, tmp_path):
    write_trajectory_csv(tmp_path / "late.csv", np.array([100.0, 101.0, 102.0]), np.zeros((3, 3)))
    gt = str(dataset / "groundtruth.txt")
    assert main(["eval", "--traj", str(tmp_path / "late.csv"), "--gt", gt, "--out", str(tmp_path / "o")]) == 4
    assert not (tmp_path / "o").exists()
    assert main(["eval", "--traj", str(tmp_path / "missing.csv"), "--gt", gt]) == 3
    assert main(["eval", "--traj", str(tmp_path / "late.csv"), "--gt", gt, "--mode", "6dof"]) == 2
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    assert main(["eval", "--traj", str(tmp_path / "bad.csv"), "--gt", gt]) == 3


def test_csv_roundtrip(tmp_path):
    t = np.array([0.1, 0.2])
    v = np.array([[1.5, -2.25, 359.5], [0, 0, 0]])
    write_trajectory_csv(tmp_path / "x.csv", t, v)
    tr = read_trajectory_csv(tmp_path / "x.csv")
    np.testing.assert_allclose(tr.t, t)
    np.testing.assert_allclose(tr.values, v)


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "hrn-vo" in capsys.readouterr().out
