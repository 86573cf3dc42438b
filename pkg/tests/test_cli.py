import json
import subprocess
import sys

import numpy as np
import pytest

from proxyvid import io, synth
from proxyvid.cli import main

TINY = {"train": {"code_dim": 4, "hidden": 16, "n_layers": 3, "n_freq": 2, "batch_size": 256, "steps": 30},
        "propagation": {"eps_d": 6.0}, "vectorizer": {"spacing": 3.0}, "edit": {"steps": 20}}


def small_spec():
    return synth.SceneSpec(
        height=24, width=24, n_frames=4, seed=5, name="tiny",
        layers=[synth.LayerSpec(shape="disk", size=[5.0],
                                motion=synth.MotionSpec(center=[8.0, 12.0], velocity=[2.0, 0.0]))])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.json").write_text(json.dumps(TINY))
    (root / "spec.json").write_text(small_spec().to_json())
    cfg = ["--config", str(root / "tiny.json")]
    assert main(cfg + ["synth", "--spec", str(root / "spec.json"), "--out", str(root / "data")]) == 0
    assert main(cfg + ["vectorize", "--frames", str(root / "data"), "--out", str(root / "seeds.jsonl")]) == 0
    assert main(cfg + ["build", "--frames", str(root / "data"), "--seeds", str(root / "seeds.jsonl"),
                       "--out", str(root / "traj")]) == 0
    assert main(cfg + ["--deterministic", "fit", "--frames", str(root / "data"), "--trajectories",
                       str(root / "traj"), "--loss-csv", str(root / "loss.csv"), "--out",
                       str(root / "model.pvr")]) == 0
    return root, cfg


def test_synth_layout(workspace):
    root, _ = workspace
    data = root / "data"
    assert sorted(p.name for p in data.glob("frame_*.png")) == [f"frame_{t:05d}.png" for t in range(4)]
    assert (data / "layer_00" / "mask_00003.png").exists() and (data / "layer_01").is_dir()
    assert len(list((data / "clean").glob("*.png"))) == 4
    assert synth.SceneSpec.from_json((data / "scene.json").read_text()) == small_spec()


def test_vectorize_and_build_outputs(workspace):
    root, _ = workspace
    seeds = io.read_jsonl(root / "seeds.jsonl")
    assert [s["layer_id"] for s in seeds] == [0, 1]
    assert all(s["frame"] == 0 and len(s["edge_points"]) >= 3 for s in seeds)
    for lid in (0, 1):
        got_lid, t0, pos, conf = io.read_pvt(root / "traj" / f"layer_{lid:02d}.pvt")
        assert got_lid == lid and t0 == 0 and pos.shape[1] == 4
    recs = io.read_jsonl(root / "traj" / "layers.jsonl")
    assert {"round_tag", "source_frame", "diagnostics"} <= set(recs[0])


def test_fit_outputs(workspace):
    root, _ = workspace
    rep = io.load_pvr(root / "model.pvr")
    assert rep.code_dim == 4 and rep.n_frames == 4 and len(rep.layers) == 2
    lines = (root / "loss.csv").read_text().splitlines()
    assert lines[0] == "step,loss,psnr_estimate" and len(lines) == 31
    assert rep.meta["config"]["train"]["steps"] == 30


def test_deterministic_runs_are_bit_identical(workspace, tmp_path):
    root, cfg = workspace
    args = cfg + ["--deterministic", "fit", "--frames", str(root / "data"), "--trajectories", str(root / "traj")]
    assert main(args + ["--out", str(tmp_path / "a.pvr")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.pvr")]) == 0
    assert (tmp_path / "a.pvr").read_bytes() == (tmp_path / "b.pvr").read_bytes()
    assert (tmp_path / "a.pvr").read_bytes() == (root / "model.pvr").read_bytes()


def test_render_variants(workspace, tmp_path):
    root, cfg = workspace
    model = str(root / "model.pvr")
    assert main(cfg + ["render", "--model", model, "--out", str(tmp_path / "all"), "--ppm"]) == 0
    assert len(list((tmp_path / "all").glob("*.png"))) == 4 and len(list((tmp_path / "all").glob("*.ppm"))) == 4
    assert main(cfg + ["render", "--model", model, "--out", str(tmp_path / "one"), "--frame", "2",
                       "--scale", "2"]) == 0
    assert io.read_png(tmp_path / "one" / "frame_00002.png").shape == (48, 48, 3)
    assert main(cfg + ["render", "--model", model, "--out", str(tmp_path / "t"), "--time", "1.5"]) == 0
    assert len(list((tmp_path / "t").glob("time_*.png"))) == 1
    assert main(cfg + ["render", "--model", model, "--out", str(tmp_path / "d"), "--drop-layers", "1"]) == 0
    assert main(cfg + ["render", "--model", model, "--out", str(tmp_path / "x"), "--drop-layers", "0"]) == 1
    assert main(cfg + ["render", "--model", model, "--out", str(tmp_path / "x"), "--drop-layers", "7"]) == 1


def test_inpaint_edit_eval(workspace, tmp_path, capsys):
    root, cfg = workspace
    model = str(root / "model.pvr")
    assert main(cfg + ["inpaint", "--model", model, "--out", str(tmp_path / "inp")]) == 0
    assert len(list((tmp_path / "inp").glob("*.png"))) == 4
    frame = io.read_png(root / "data" / "frame_00001.png")
    region = np.zeros((24, 24), dtype=bool)
    region[9:15, 7:13] = True
    edited = frame.copy()
    edited[region] = [0.9, 0.1, 0.1]
    io.write_png(tmp_path / "edited.png", edited)
    io.write_png(tmp_path / "region.png", region)
    assert main(cfg + ["edit", "--model", model, "--keyframe", "1", "--edited", str(tmp_path / "edited.png"),
                       "--region", str(tmp_path / "region.png"), "--steps", "5",
                       "--out", str(tmp_path / "edited.pvr")]) == 0
    assert io.load_pvr(tmp_path / "edited.pvr").meta["edit"]["frame"] == 1
    capsys.readouterr()
    assert main(["eval", "--pred", str(root / "data"), "--ref", str(root / "data"),
                 "--report", str(tmp_path / "r.jsonl")]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["psnr"] == 99.0 and summary["ssim"] == pytest.approx(1.0)
    assert len(io.read_jsonl(tmp_path / "r.jsonl")) == 5


def test_ablate(workspace, tmp_path, capsys):
    root, cfg = workspace
    assert main(cfg + ["ablate", "--frames", str(root / "data"), "--variants", "full,w/o-U,F",
                       "--steps", "5", "--report", str(tmp_path / "abl.jsonl")]) == 0
    recs = io.read_jsonl(tmp_path / "abl.jsonl")
    assert [r["variant"] for r in recs] == ["full", "w/o-U", "F"]
    assert all(np.isfinite(r["final_loss"]) for r in recs)
    assert main(cfg + ["ablate", "--frames", str(root / "data"), "--variants", "nope"]) == 1


def test_errors_give_nonzero_exit(workspace, tmp_path, capsys):
    root, cfg = workspace
    (tmp_path / "bad.json").write_text(json.dumps({"train": {"bogus": 1}}))
    assert main(["--config", str(tmp_path / "bad.json"), "eval", "--pred", "a", "--ref", "b"]) == 2
    assert main(["render", "--model", str(tmp_path / "missing.pvr"), "--out", str(tmp_path)]) == 1
    (tmp_path / "junk.pvr").write_bytes(b"junk")
    assert main(["render", "--model", str(tmp_path / "junk.pvr"), "--out", str(tmp_path)]) == 1
    assert "bad magic" in capsys.readouterr().err
    # oracle tracking needs scene.json
    nodata = tmp_path / "plain"
    io.write_video(nodata, synth.generate(small_spec()).video)
    assert main(cfg + ["build", "--frames", str(nodata), "--tracker", "oracle", "--out", str(tmp_path / "o")]) == 1
    with pytest.raises(SystemExit):
        main(["synth", "--out", str(tmp_path)])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "proxyvid.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("synth", "vectorize", "build", "fit", "render", "inpaint", "edit", "eval", "ablate"):
        assert cmd in out.stdout
