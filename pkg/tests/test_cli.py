import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.sparse.linalg import ArpackNoConvergence

from lapshape import cli, laplacian
from lapshape.config import PROVENANCE_TAG, parse_provenance
from lapshape.io import read_hks_csv, read_labeled_ply, read_segmentation_csv, read_xyz


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def cloud_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "db.xyz"
    assert cli.main(["gen", "dumbbell", "-n", "600", "--seed", "1", "-o", str(path)]) == 0
    return path


def test_gen_writes_provenance(capsys, tmp_path):
    out = tmp_path / "s.xyz"
    code, _, err = run(capsys, "gen", "sphere", "-n", 200, "--seed", 4, "-o", out)
    assert code == 0
    assert PROVENANCE_TAG in err
    block = parse_provenance(out.read_text())
    assert block == parse_provenance(err)
    assert block["command"] == "gen" and block["config"]["seed"] == 4
    assert read_xyz(out).n == 200


def test_labeled_gen_to_ply(capsys, tmp_path):
    out = tmp_path / "c.ply"
    assert run(capsys, "gen", "cube-surface", "-n", 300, "-o", out)[0] == 0
    _, labels = read_labeled_ply(out)
    assert set(labels.tolist()) == set(range(6))


def test_exit_code_invalid_input(capsys, tmp_path):
    bad = tmp_path / "three.xyz"
    bad.write_text("0 0 0\n1 0 0\n0 1 0\n")
    code, _, err = run(capsys, "hks", bad, "-o", tmp_path / "h.csv")
    assert code == 2 and "at least 4" in err
    code, _, _ = run(capsys, "hks", tmp_path / "missing.xyz", "-o", tmp_path / "h.csv")
    assert code == 2
    code, _, _ = run(capsys, "gen", "sphere", "-n", 50, "-o", tmp_path / "x.xyz")
    assert code == 2


def test_exit_code_usage(capsys):
    code, _, _ = run(capsys, "nonsense")
    assert code == 2


def test_exit_code_numerical_failure(capsys, tmp_path, cloud_file, monkeypatch):
    def refuse(*args, **kwargs):
        raise ArpackNoConvergence("no", np.empty(0), np.empty((0, 0)))

    monkeypatch.setattr(laplacian, "eigsh", refuse)
    code, _, err = run(capsys, "hks", cloud_file, "--eig-count", 20, "-o", tmp_path / "h.csv")
    assert code == 3 and "converge" in err


def test_exit_code_unsupported_format(capsys, tmp_path):
    ply = tmp_path / "b.ply"
    ply.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    code, _, err = run(capsys, "hks", ply, "-o", tmp_path / "h.csv")
    assert code == 4 and "binary_little_endian" in err


def test_hks_and_replay_bit_identical(capsys, tmp_path, cloud_file):
    out = tmp_path / "h.csv"
    code, _, err = run(capsys, "hks", cloud_file, "--eig-count", 30, "--scale-count", 4, "-o", out)
    assert code == 0
    first = out.read_bytes()
    block = parse_provenance(first.decode())
    assert block["inputs"] == {str(cloud_file): cli.file_sha256(cloud_file)}
    assert block["extra"]["radius"] > 0
    t, values = read_hks_csv(out)
    assert len(t) == 4 and values.shape == (600, 4)
    out.unlink()
    code, _, _ = run(capsys, "replay", _save(tmp_path, err))
    assert code == 0
    assert out.read_bytes() == first


def _save(tmp_path, text):
    p = tmp_path / "stderr.txt"
    p.write_text(text)
    return p


def test_replay_from_output_file(capsys, tmp_path, cloud_file):
    out = tmp_path / "seg"
    code, _, _ = run(capsys, "segment", cloud_file, "--eig-count", 30, "--scale-count", 6, "--segments", 2,
                     "-o", out)
    assert code == 0
    labels_file = out.with_suffix(".labels.csv")
    first = {p: p.read_bytes() for p in tmp_path.iterdir()}
    labels, meta = read_segmentation_csv(labels_file)
    assert len(set(labels.tolist()) - {-1}) == 2
    copy = _save(tmp_path, labels_file.read_text())
    for p in first:
        p.unlink()
    assert run(capsys, "replay", copy)[0] == 0
    for p, data in first.items():
        assert p.read_bytes() == data


def test_replay_refuses_changed_input(capsys, tmp_path):
    src = tmp_path / "in.xyz"
    cli.main(["gen", "sphere", "-n", "200", "-o", str(src)])
    out = tmp_path / "n.xyz"
    assert run(capsys, "noise", src, "--sigma-p", 0.5, "-o", out)[0] == 0
    src.write_text(src.read_text() + "0 0 0\n")
    code, _, err = run(capsys, "replay", out)
    assert code == 2 and "changed" in err


def test_noise_records_parameters(capsys, tmp_path):
    src = tmp_path / "in.xyz"
    cli.main(["gen", "sphere", "-n", "300", "-o", str(src)])
    h = read_xyz(src).spacing_h
    out = tmp_path / "n.xyz"
    assert run(capsys, "noise", src, "--mu", h / 2, "--sigma-p", 0.125, "-o", out)[0] == 0
    noise = parse_provenance(out.read_text())["extra"]["noise"]
    assert noise["mu"] == h / 2 and noise["sigma_p"] == 0.125 and noise["spacing_h"] == h
    assert run(capsys, "noise", src, "--sigma-p", -1, "-o", out)[0] == 2


def test_config_precedence(capsys, tmp_path, cloud_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"eig_count": 25, "scale_count": 3, "seed": 2}))
    out = tmp_path / "h.csv"
    assert run(capsys, "hks", cloud_file, "--config", cfg, "--scale-count", 5, "-o", out)[0] == 0
    conf = parse_provenance(out.read_text())["config"]
    assert (conf["eig_count"], conf["scale_count"], conf["seed"]) == (25, 5, 2)
    assert len(read_hks_csv(out)[0]) == 5
    cfg.write_text(json.dumps({"eig_count": 25, "bogus": 1}))
    code, _, err = run(capsys, "hks", cloud_file, "--config", cfg, "-o", out)
    assert code == 2 and "bogus" in err


def test_console_script(tmp_path):
    out = tmp_path / "s.xyz"
    proc = subprocess.run([sys.executable, "-m", "lapshape.cli", "gen", "sphere", "-n", "150", "-o", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and PROVENANCE_TAG in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "lapshape.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "lapshape" in proc.stdout


def test_index_and_query(capsys, tmp_path):
    models = tmp_path / "models"
    models.mkdir()
    for kind in ("dumbbell", "cube-surface"):
        cli.main(["gen", kind, "-n", "800", "-o", str(models / f"{kind}.xyz")])
    index = tmp_path / "idx.txt"
    flags = ["--eig-count", "40", "--scale-count", "4"]
    assert run(capsys, "index", models, *flags, "-o", index)[0] == 0
    code, out, _ = run(capsys, "query", index, models / "cube-surface.xyz", "-k", 2)
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0] == "query,rank,model_id,score"
    assert rows[1].startswith("cube-surface,1,cube-surface,0.0")
    code, _, err = run(capsys, "index", models, "--eig-count", 41, "--scale-count", 4, "--append", "-o", index)
    assert code == 2 and "different parameters" in err


def test_segment_then_recluster(capsys, tmp_path):
    src = tmp_path / "fused.xyz"
    cli.main(["gen", "fused-spheres", "-n", "1500", "-o", str(src)])
    stem = tmp_path / "seg"
    assert run(capsys, "segment", src, "--eig-count", 60, "--scale-count", 15, "--scale-index", 0, "--segments", 4,
               "-o", stem)[0] == 0
    types = tmp_path / "types.csv"
    assert run(capsys, "recluster", stem.with_suffix(".labels.csv"), "--auto-balance", "-o", types)[0] == 0
    assert "balance_scores" in parse_provenance(types.read_text())["extra"]
    code, _, err = run(capsys, "recluster", stem.with_suffix(".labels.csv"), "--types", 2, "--threshold", 0.1,
                       "-o", types)
    assert code == 2 and "exactly one" in err


def test_curvseg_cube(capsys, tmp_path):
    src = tmp_path / "cube.xyz"
    cli.main(["gen", "cube-surface", "-n", "2000", "--even", "-o", str(src)])
    stem = tmp_path / "cs"
    assert run(capsys, "curvseg", src, "--target-count", 6, "-o", stem)[0] == 0
    labels, _ = read_segmentation_csv(stem.with_suffix(".labels.csv"))
    assert len(set(labels.tolist()) - {-1}) == 6
    assert run(capsys, "curvseg", src, "-o", stem)[0] == 2
