import json
import os

import pytest

from rectilab import cli

PLANE = """
seed = 3
[model]
kind = "parabolic"
n = 2
k = 1
[measure]
generator = "vertical_plane"
h = 0.5
[measure.box]
kind = "cube"
radius = 2.0
[measure.plane]
axes = [0]
[measure.time]
kind = "lebesgue"
[tree]
top = 8.0
bottom = 4.0
[suites.beta]
"""

EXAMPLE_A = PLANE.replace('"vertical_plane"', '"example_A"').replace(
    "[measure.plane]\naxes = [0]\n[measure.time]\nkind = \"lebesgue\"\n", "")


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_generate_and_analyze_from_file(tmp_path, capsys):
    cfg = write(tmp_path, PLANE)
    assert cli.main(["generate", cfg, "--out", str(tmp_path / "m")]) == 0
    out = str(tmp_path / "b")
    assert cli.main(["analyze", cfg, "--measure", str(tmp_path / "m" / "measure.txt"),
                     "--out", out, "--check"]) == 0
    verdict = json.loads(open(os.path.join(out, "verdict.json")).read())
    assert verdict["all_passed"]
    assert "criterion 4: pass" in capsys.readouterr().out


def test_dry_runs_write_nothing(tmp_path, capsys):
    cfg = write(tmp_path, PLANE)
    assert cli.main(["generate", cfg, "--out", str(tmp_path / "m"), "--dry-run"]) == 0
    assert cli.main(["analyze", cfg, "--out", str(tmp_path / "b"), "--dry-run"]) == 0
    assert not os.path.exists(tmp_path / "m") and not os.path.exists(tmp_path / "b")
    assert "tree: sidelengths 4, 8" in capsys.readouterr().out


@pytest.mark.parametrize("text", [
    "not toml [",
    PLANE.replace('"parabolic"', '"euclidean"'),
    PLANE.replace('"vertical_plane"', '"sphere"'),
    PLANE.replace("h = 0.5", "h = -1"),
    PLANE + "[suites.gamma]\n",
    PLANE.replace("seed = 3", 'seed = "x"'),
], ids=["syntax", "model", "generator", "h", "suite", "seed"])
def test_config_errors_exit_2(tmp_path, text):
    assert cli.main(["analyze", write(tmp_path, text), "--dry-run"]) == 2


def test_missing_config_exits_2(tmp_path):
    assert cli.main(["generate", str(tmp_path / "none.toml")]) == 2


def test_resolution_floor_exits_3(tmp_path, capsys):
    cfg = write(tmp_path, PLANE.replace("bottom = 4.0", "bottom = 1.0"))
    assert cli.main(["analyze", cfg, "--dry-run"]) == 3
    assert "below" in capsys.readouterr().err


def test_failed_verdict_exits_4_only_with_check(tmp_path):
    cfg = write(tmp_path, EXAMPLE_A)
    # the growth-slope criterion fails on two generations of example A
    assert cli.main(["analyze", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["analyze", cfg, "--out", str(tmp_path / "b"), "--check"]) == 4


@pytest.fixture(scope="module")
def bundles(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bundles")
    cfg = write(tmp, PLANE)
    for name in ("one", "two"):
        assert cli.main(["analyze", cfg, "--out", str(tmp / name)]) == 0
    return tmp


def test_analyze_is_byte_reproducible(bundles):
    one, two = bundles / "one", bundles / "two"
    names = sorted(os.listdir(one))
    assert names == sorted(os.listdir(two))
    for n in names:
        assert (one / n).read_bytes() == (two / n).read_bytes(), n


def test_report_and_compare(bundles, tmp_path):
    out = tmp_path / "r"
    assert cli.main(["report", str(bundles / "one"), "--compare", str(bundles / "two"),
                     "--out", str(out)]) == 0
    assert (out / "summary.txt").exists()
    comp = (out / "compare.txt").read_text().splitlines()
    assert comp[0].split()[:3] == ["key", "A", "B"]
    assert any(line.startswith("verdict.4") for line in comp)
    assert list((out / "tables").glob("*.dat"))


def test_tampered_bundle_exits_3(bundles, tmp_path, capsys):
    import shutil
    b = tmp_path / "t"
    shutil.copytree(bundles / "one", b)
    with open(b / "beta.json", "a") as fh:
        fh.write(" ")
    assert cli.main(["report", str(b)]) == 3
    assert "checksum mismatch" in capsys.readouterr().err
