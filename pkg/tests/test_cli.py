from __future__ import annotations

import json
import os

import numpy as np
import pytest

from gliamorph import __version__, cli
from gliamorph.atomic import Staging, atomic_write_text
from gliamorph.compare import parse_morph
from gliamorph.phantom import make_scene
from gliamorph.volume_io import load_stack, write_stack

SP = (0.5, 0.5, 0.5)


@pytest.fixture
def scene(tmp_path):
    grid, truth = make_scene(4, seed=3, shape=(48, 48, 48), spacing=SP, length=8.0)
    p = tmp_path / "scene.tif"
    write_stack(grid.data, p, SP)
    return p, truth


def _files(d):
    return sorted(os.listdir(d)) if d.exists() else []


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--version"])
    assert e.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_run_writes_table(tmp_path, scene):
    src, truth = scene
    out = tmp_path / "out"
    assert cli.main(["run", str(src), "--spacing", "0.5", "--output-dir", str(out)]) == 0
    rows = parse_morph(out / "D_scene.csv")
    assert len(rows) == len(truth.cells) == 4
    text = (out / "D_scene.csv").read_text()
    assert "# config_sha256: " in text and f"# version: {__version__}" in text


def test_missing_input_leaves_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", str(tmp_path / "missing.tif"), "--output-dir", str(out)])
    assert code == 3
    assert _files(out) == []
    assert "volume_io" in capsys.readouterr().err


def test_failure_after_staging_leaves_no_partial_outputs(tmp_path, scene, fixtures_dir):
    src, _ = scene
    out = tmp_path / "out"
    bad = tmp_path / "M_bad.csv"
    bad.write_text("path_id,name\n1,a\n")
    code = cli.main(["run", str(src), "--spacing", "0.5", "--output-dir", str(out), "--manual", str(bad)])
    assert code == 3
    assert _files(out) == []  # the D_ table was staged but never published


def test_config_file_and_override(tmp_path, scene):
    src, _ = scene
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# pipeline\ninput = {src}\nspacing = 0.5, 0.5, 0.5\nmin_voxels = 100000\n"
                   f"output_dir = {tmp_path / 'a'}\n")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert parse_morph(tmp_path / "a" / "D_scene.csv") == []  # everything filtered out
    assert cli.main(["run", "--config", str(cfg), "--min-voxels", "5", "--output-dir", str(tmp_path / "b")]) == 0
    assert len(parse_morph(tmp_path / "b" / "D_scene.csv")) == 4


@pytest.mark.parametrize("text", ["bogus = 1\n", "spacing = a,b,c\n", "connectivity = 7\n", "just words\n",
                                  "threshold = 3\n", "min_voxels = 1.5\n"])
def test_bad_config_exits_2(tmp_path, text):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(text)
    assert cli.main(["run", "x.tif", "--config", str(cfg)]) == 2


def test_missing_config_file(tmp_path):
    assert cli.main(["run", "x.tif", "--config", str(tmp_path / "none.cfg")]) == 2


def test_config_hash_ignores_output_dir():
    a = cli.PipelineConfig(output_dir="a")
    b = cli.PipelineConfig(output_dir="b")
    c = cli.PipelineConfig(seed=1)
    assert a.sha256() == b.sha256() != c.sha256()


def test_phantom_segment_morph_skeleton(tmp_path):
    vol, truth = tmp_path / "p.tif", tmp_path / "p.json"
    assert cli.main(["--seed", "2", "phantom", "scene", "--k", "3", "--shape", "48", "48", "48",
                     "--length", "8", "--spacing", "0.5", "--out", str(vol), "--truth", str(truth)]) == 0
    doc = json.loads(truth.read_text())
    assert len(doc["cells"]) == 3 and doc["provenance"]["seed"] == 2
    labels = tmp_path / "l.tif"
    assert cli.main(["segment", str(vol), "--spacing", "0.5", "--out", str(labels)]) == 0
    grid, meta = load_stack(labels, SP)
    assert meta.bit_depth == 16 and int(grid.data.max()) == 3
    table = tmp_path / "D.csv"
    assert cli.main(["morph", str(labels), "--spacing", "0.5", "--out", str(table)]) == 0
    assert len(parse_morph(table)) == 3
    sk = tmp_path / "sk.csv"
    assert cli.main(["skeleton", str(labels), "--spacing", "0.5", "--out", str(sk)]) == 0
    body = [ln for ln in sk.read_text().splitlines() if not ln.startswith("#")]
    assert body[0] == "cell_id,x_um,y_um,z_um,kind"
    kinds = [ln.split(",")[-1] for ln in body[1:]]
    assert kinds.count("endpoint") == 6 and "junction" not in kinds


@pytest.mark.parametrize("kind", ["tube", "y", "sphere", "blob-pair"])
def test_single_phantoms(tmp_path, kind):
    out = tmp_path / "v.tif"
    assert cli.main(["phantom", kind, "--spacing", "0.5", "--length", "10", "--out", str(out)]) == 0
    assert load_stack(out, SP)[0].data.max() > 0


def test_phantom_bad_arguments_exit_2(tmp_path):
    assert cli.main(["phantom", "tube", "--length", "1", "--spacing", "0.5", "--out", str(tmp_path / "v.tif")]) == 2


def test_compare_command(tmp_path, fixtures_dir):
    out, svg = tmp_path / "r.json", tmp_path / "s.svg"
    code = cli.main(["compare", "--manual", str(fixtures_dir / "M_stack79.csv"),
                     "--ilastik", str(fixtures_dir / "i_stack79.csv"),
                     "--morph", str(fixtures_dir / "D_stack79.csv"), "--um-per-px", "0.17", "--radius", "8",
                     "--out", str(out), "--svg", str(svg)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["matching"]["radius_um"] == 8.0
    assert doc["provenance"]["inputs"]["morph"] == "D_stack79.csv"
    assert svg.read_text().startswith("<?xml")


def test_compare_without_inputs(tmp_path):
    assert cli.main(["compare", "--out", str(tmp_path / "r.json")]) == 2
    assert not (tmp_path / "r.json").exists()


def test_unreadable_row_exit_3(tmp_path):
    bad = tmp_path / "D.csv"
    bad.write_text("cell_id\n1\n")
    assert cli.main(["compare", "--morph", str(bad), "--out", str(tmp_path / "r.json")]) == 3


def test_processing_error_exit_4(tmp_path):
    # a constant stack has no Otsu threshold
    p = tmp_path / "flat.tif"
    write_stack(np.full((3, 4, 4), 7, np.uint16), p)
    assert cli.main(["run", str(p), "--output-dir", str(tmp_path / "o")]) == 4


def test_staging_commits_together_or_not_at_all(tmp_path):
    with Staging() as st:
        st.write_text(tmp_path / "a.txt", "a")
        st.write_text(tmp_path / "b.txt", "b")
        assert _files(tmp_path) != ["a.txt", "b.txt"]
    assert (tmp_path / "a.txt").read_text() == "a" and (tmp_path / "b.txt").read_text() == "b"
    with pytest.raises(RuntimeError):
        with Staging() as st:
            st.write_text(tmp_path / "c.txt", "c")
            raise RuntimeError("boom")
    assert _files(tmp_path) == ["a.txt", "b.txt"]


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "x.txt"
    atomic_write_text(p, "one")
    atomic_write_text(p, "two")
    assert p.read_text() == "two" and _files(tmp_path) == ["x.txt"]
