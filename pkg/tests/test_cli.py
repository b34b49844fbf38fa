"""Command-line surface: flags, exit codes, artifacts, determinism."""

import json
from pathlib import Path

import pytest

from layoutforge.cli import main
from layoutforge.pipeline import Pipeline
from layoutforge.scenegraph import Vocabulary

TINY_CFG = """\
# desk-scale network and schedule
learning_rate = 0.003
batch_size = 4
embed_dim = 8
canvas = 64
s1_depth = 2
seg_base = 2
seg_depth = 2
seg_blocks = 1
gen_base = 2
gen_blocks = 1
disc_base = 2
pyramid_base = 1
pyramid_levels = 2
box_epochs = 1
seg_epochs = 0
img_epochs = 0
joint_epochs = 1
"""

GRAPH = "a : circle ; b : square ; a left_of b ; b right_of a ;\n"


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["datagen", "shapes", "--count", "30", "--size", "64",
                 "--out", str(data), "--seed", "7"]) == 0
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    ckpt = root / "box.lfck"
    assert main(["train", "--stage", "box", "--data", str(data),
                 "--config", str(cfg), "--out", str(ckpt)]) == 0
    graph = root / "scene.sg"
    graph.write_text(GRAPH)
    return {"root": root, "data": data, "cfg": cfg, "ckpt": ckpt,
            "graph": graph}


# ------------------------------------------------------------------ plumbing


@pytest.mark.parametrize("argv", [
    ["--help"],
    ["datagen", "--help"],
    ["datagen", "shapes", "--help"],
    ["train", "--help"],
    ["generate", "--help"],
    ["eval", "--help"],
    ["serve", "--help"],
])
def test_help_exits_zero(argv, capsys):
    assert main(argv) == 0
    assert "usage" in capsys.readouterr().out


def test_help_lists_the_flags(capsys):
    main(["generate", "--help"])
    out = capsys.readouterr().out
    for flag in ("--ckpt", "--graph", "--patch", "--patch-at", "--out",
                 "--seed"):
        assert flag in out


def test_missing_command(capsys):
    assert main([]) == 1
    err = capsys.readouterr().err
    assert err.startswith("usage error:") and err.count("\n") == 1


def test_unknown_flag(capsys):
    assert main(["datagen", "shapes", "--count", "1", "--out", "x",
                 "--frobnicate"]) == 1
    assert "usage error:" in capsys.readouterr().err


def test_unknown_command():
    assert main(["explode"]) == 1


# ------------------------------------------------------------------- datagen


def test_datagen_writes_a_dataset(workspace):
    data = workspace["data"]
    assert (data / "manifest.jsonl").exists()
    assert (data / "vocab.txt").exists()
    assert len(list((data / "images").glob("*.ppm"))) == 30


def test_datagen_is_deterministic(tmp_path):
    for name in ("one", "two"):
        assert main(["datagen", "shapes", "--count", "3", "--size", "64",
                     "--out", str(tmp_path / name), "--seed", "11"]) == 0
    assert tree_bytes(tmp_path / "one") == tree_bytes(tmp_path / "two")


def test_datagen_needs_a_dataset_kind(capsys):
    assert main(["datagen"]) == 1
    assert "shapes" in capsys.readouterr().err


def test_datagen_rejects_zero_count(tmp_path):
    assert main(["datagen", "shapes", "--count", "0",
                 "--out", str(tmp_path / "d")]) == 1


def test_datagen_rejects_bad_canvas(tmp_path, capsys):
    assert main(["datagen", "shapes", "--count", "1", "--size", "12",
                 "--out", str(tmp_path / "d")]) == 1
    assert "config error:" in capsys.readouterr().err


# --------------------------------------------------------------------- train


def test_train_writes_artifacts(workspace):
    ckpt = workspace["ckpt"]
    assert ckpt.exists()
    csv = Path(f"{ckpt}.train.csv").read_text()
    assert csv.splitlines()[0] == "step,stage,loss"
    assert len(csv.splitlines()) > 1
    summary = json.loads(Path(f"{ckpt}.train.json").read_text())
    assert summary["steps"] > 0
    assert "box" in summary["final_loss"]
    assert (Path(f"{ckpt}.epochs") / "box_epoch_001.lfck").exists()


def test_train_is_deterministic(workspace, tmp_path):
    outs = []
    for name in ("one", "two"):
        out = tmp_path / f"{name}.lfck"
        assert main(["train", "--stage", "box", "--data",
                     str(workspace["data"]), "--config",
                     str(workspace["cfg"]), "--out", str(out)]) == 0
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert Path(f"{outs[0]}.train.csv").read_bytes() == \
        Path(f"{outs[1]}.train.csv").read_bytes()
    assert Path(f"{outs[0]}.train.json").read_bytes() == \
        Path(f"{outs[1]}.train.json").read_bytes()


def test_train_joint_from_scratch(workspace, tmp_path):
    out = tmp_path / "joint.lfck"
    assert main(["train", "--stage", "joint", "--mode", "scratch",
                 "--data", str(workspace["data"]), "--config",
                 str(workspace["cfg"]), "--out", str(out)]) == 0
    csv = Path(f"{out}.train.csv").read_text()
    assert "joint.total" in csv


def test_train_missing_data_dir(workspace, tmp_path, capsys):
    assert main(["train", "--stage", "box", "--data",
                 str(tmp_path / "absent"), "--config",
                 str(workspace["cfg"]), "--out",
                 str(tmp_path / "x.lfck")]) == 2
    assert "data error:" in capsys.readouterr().err


def test_train_bad_config_key(workspace, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("momentum = 0.9\n")
    assert main(["train", "--stage", "box", "--data",
                 str(workspace["data"]), "--config", str(cfg),
                 "--out", str(tmp_path / "x.lfck")]) == 1
    assert "config error:" in capsys.readouterr().err


def test_train_requires_stage(workspace, tmp_path):
    assert main(["train", "--data", str(workspace["data"]),
                 "--out", str(tmp_path / "x.lfck")]) == 1


# ------------------------------------------------------------------ generate


def test_generate_writes_the_three_stage_outputs(workspace, tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(workspace["graph"]),
                 "--out", str(out)]) == 0
    assert (out / "boxes.json").exists()
    assert (out / "seg.pgm").read_bytes().startswith(b"P5\n64 64\n")
    assert (out / "image.ppm").read_bytes().startswith(b"P6\n64 64\n")
    boxes = json.loads((out / "boxes.json").read_text())
    assert [b["id"] for b in boxes] == ["a", "b"]


def test_generate_is_deterministic(workspace, tmp_path):
    for name in ("one", "two"):
        assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                     "--graph", str(workspace["graph"]),
                     "--out", str(tmp_path / name)]) == 0
    assert tree_bytes(tmp_path / "one") == tree_bytes(tmp_path / "two")


def test_generate_accepts_a_patch(workspace, tmp_path):
    out = tmp_path / "gen"
    patch = workspace["data"] / "images" / "0000.ppm"
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(workspace["graph"]), "--patch", str(patch),
                 "--patch-at", "0,0", "--out", str(out)]) == 0
    plain = tmp_path / "plain"
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(workspace["graph"]),
                 "--out", str(plain)]) == 0
    assert (out / "image.ppm").read_bytes() != \
        (plain / "image.ppm").read_bytes()


def test_generate_names_unknown_categories(workspace, tmp_path, capsys):
    graph = tmp_path / "bad.sg"
    graph.write_text("a : rhombus ;\n")
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(graph), "--out", str(tmp_path / "g")]) == 2
    err = capsys.readouterr().err
    assert "rhombus" in err and err.count("\n") == 1


def test_generate_refuses_an_empty_graph(workspace, tmp_path):
    graph = tmp_path / "empty.sg"
    graph.write_text("# no objects\n")
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(graph), "--out", str(tmp_path / "g")]) == 2


def test_generate_missing_checkpoint(workspace, tmp_path):
    assert main(["generate", "--ckpt", str(tmp_path / "nope.lfck"),
                 "--graph", str(workspace["graph"]),
                 "--out", str(tmp_path / "g")]) == 2


def test_patch_at_requires_a_patch(workspace, tmp_path):
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(workspace["graph"]), "--patch-at", "3,5",
                 "--out", str(tmp_path / "g")]) == 1


def test_patch_at_must_be_two_integers(workspace, tmp_path):
    patch = workspace["data"] / "images" / "0000.ppm"
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(workspace["graph"]), "--patch", str(patch),
                 "--patch-at", "3;5", "--out", str(tmp_path / "g")]) == 1


def test_oversized_patch_is_a_data_error(workspace, tmp_path, capsys):
    patch = workspace["data"] / "images" / "0000.ppm"
    assert main(["generate", "--ckpt", str(workspace["ckpt"]),
                 "--graph", str(workspace["graph"]), "--patch", str(patch),
                 "--patch-at", "8,8", "--out", str(tmp_path / "g")]) == 2
    assert "data error:" in capsys.readouterr().err


# ---------------------------------------------------------------------- eval


def test_eval_writes_a_metric_table(workspace, tmp_path):
    report = tmp_path / "report.csv"
    assert main(["eval", "--ckpt", str(workspace["ckpt"]),
                 "--data", str(workspace["data"]),
                 "--out", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "metric,value"
    names = {line.split(",")[0] for line in lines[1:]}
    assert {"box_iou", "relation_consistency", "pixel_accuracy",
            "psnr_db", "n_samples"} <= names


def test_eval_rejects_vocab_mismatch(workspace, tmp_path, capsys):
    other = tmp_path / "other.lfck"
    Pipeline(Vocabulary(["background", "blob"]), canvas=16, embed_dim=8,
             s1_depth=2, seg_base=2, seg_depth=2, seg_blocks=1, gen_base=2,
             gen_blocks=1, disc_base=2, pyramid_base=1,
             pyramid_levels=2).save(other)
    assert main(["eval", "--ckpt", str(other),
                 "--data", str(workspace["data"]),
                 "--out", str(tmp_path / "r.csv")]) == 2
    assert "vocabulary" in capsys.readouterr().err


# --------------------------------------------------------------------- serve


def test_serve_rejects_a_bad_address(workspace, capsys):
    assert main(["serve", "--ckpt", str(workspace["ckpt"]),
                 "--addr", "no-port-here"]) == 1
    assert "HOST:PORT" in capsys.readouterr().err
