import json

import numpy as np
import pytest
from click.testing import CliRunner

from betacert.certify import beta_square_sum
from betacert.cli import main
from betacert.generators import generate, parse_spec
from betacert.io import InputError, fmt, ingest, read_points, to_json, write_points
from betacert.nets import build_dyadic_tree


# ---------------------------------------------------------------- io


def test_csv_and_json_ingest(tmp_path):
    csv_path = tmp_path / "pts.csv"
    csv_path.write_text("0,0\n1,0.5\n\n2,1\n")
    cloud = ingest(csv_path, 1)
    assert len(cloud) == 3 and cloud.n == 2
    pts = np.random.default_rng(0).normal(size=(7, 3))
    js = tmp_path / "pts.json"
    write_points(js, pts)
    assert np.array_equal(read_points(js), pts)
    back = tmp_path / "back.csv"
    write_points(back, pts)
    assert np.array_equal(read_points(back), pts)


@pytest.mark.parametrize(
    "name, text, line",
    [
        ("nan.csv", "0,0\n1,nan\n2,2\n", 2),
        ("ragged.csv", "0,0\n1,1\n2,2,2\n", 3),
        ("word.csv", "0,0\nx,1\n", 2),
        ("nan.json", "[[0, 0],\n [1, NaN],\n [2, 2]]", 2),
    ],
)
def test_bad_rows_name_their_line(tmp_path, name, text, line):
    path = tmp_path / name
    path.write_text(text)
    with pytest.raises(InputError, match=f":{line}:"):
        read_points(path)


def test_empty_and_unknown_inputs(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("\n")
    with pytest.raises(InputError):
        read_points(path)
    with pytest.raises(InputError):
        read_points(path, "xml")
    bad = tmp_path / "bad.json"
    bad.write_text("{\"a\": 1}")
    with pytest.raises(InputError):
        read_points(bad)


def test_json_encoding_is_canonical():
    assert fmt(0.1) == "0.10000000000000001"
    assert to_json({"b": [1, 2.5], "a": None, "c": True}) == '{"a": null, "b": [1, 2.5], "c": true}\n'
    assert json.loads(to_json({"x": np.float64(1 / 3)}))["x"] == 1 / 3


# ---------------------------------------------------------------- generators


def test_generator_examples():
    flat = generate("plane:n=2,d=1,count=1001")
    assert len(flat) == 1001 and np.all(flat.points[:, 1] == 0)
    roof = generate("tent:0.2,201")
    x, y = roof.points.T
    assert np.allclose(y, 0.2 * (1 - np.abs(x)))
    assert np.array_equal(generate("lipschitz-graph:0.5", seed=3).points, generate("lipschitz-graph:0.5", seed=3).points)


def test_parse_spec_errors():
    assert parse_spec("koch:0.5,4") == ("koch", {"angle": 0.5, "depth": 4})
    for spec in ("sphere:1", "tent:0.2,11,1,9", "tent:width=2"):
        with pytest.raises(ValueError):
            parse_spec(spec)


def test_koch_flattens_with_angle():
    sums = []
    for angle in (1.0, 0.5, 0.2):
        cloud = generate(f"koch:{angle},5")
        sums.append(beta_square_sum(build_dyadic_tree(cloud, 2.0), 1, 2.0, 2.0)[0])
    assert sums[0] > sums[1] > sums[2] > 0


# ---------------------------------------------------------------- cli


def _invoke(args, cwd):
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=cwd):
        result = runner.invoke(main, args, catch_exceptions=False)
        files = {}
        for name in ("out.json", "out.tsv", "out.obj"):
            try:
                with open(name) as fh:
                    files[name] = fh.read()
            except FileNotFoundError:
                pass
    return result, files


def test_analyze_plane_has_zero_theta(tmp_path):
    result, files = _invoke(["analyze", "--gen", "plane:3,2,441", "--eps", "0.1", "--no-figures", "--out", "out.json"], tmp_path)
    assert result.exit_code == 0, result.output
    assert json.loads(files["out.json"])["sums"]["theta"] == 0.0
    assert files["out.tsv"].splitlines()[0].split("\t") == ["level", "cube_id", "beta_inf", "beta_p", "vartheta"]


def test_certify_from_csv(tmp_path):
    cloud = tmp_path / "cloud.csv"
    t = np.linspace(-1, 1, 101)
    write_points(cloud, np.column_stack([t, 0.1 * np.abs(t)]))
    result, files = _invoke(["certify", "--in", str(cloud), "--d", "1", "--p", "2", "--eps", "0.1", "--out", "out.json"], tmp_path)
    assert result.exit_code == 0, result.output
    report = json.loads(files["out.json"])
    assert {"params", "sums", "theorem1", "theorem3", "regularity_c", "breakdown"} <= set(report)


def test_reifenberg_outputs(tmp_path):
    args = ["reifenberg", "--gen", "perturbed-plane:0.01,2601", "--stages", "2", "--count", "11", "--out", "out.obj"]
    result, files = _invoke(args, tmp_path)
    assert result.exit_code == 0, result.output
    assert files["out.obj"].startswith("v ")
    diag = json.loads(files["out.json"])
    assert len(diag["stages"]) == 2


@pytest.mark.parametrize(
    "args",
    [
        ["certify", "--gen", "tent", "--eps", "0.1", "--p", "0.5", "--out", "out.json"],
        ["certify", "--gen", "tent", "--eps", "-1", "--out", "out.json"],
        ["certify", "--gen", "nothing:1", "--eps", "0.1", "--out", "out.json"],
        ["certify", "--gen", "tent", "--d", "2", "--eps", "0.1", "--out", "out.json"],
        ["certify", "--eps", "0.1", "--out", "out.json"],
        ["certify", "--in", "x.csv", "--eps", "0.1", "--out", "out.json"],
    ],
)
def test_configuration_errors_exit_2(tmp_path, args):
    result, _ = _invoke(args, tmp_path)
    assert result.exit_code == 2
    assert "error:" in result.output


def test_unreadable_input_exits_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0\n1,nan\n")
    result, _ = _invoke(["certify", "--in", str(bad), "--d", "1", "--eps", "0.1", "--out", "out.json"], tmp_path)
    assert result.exit_code == 3
    assert ":2:" in result.output
    result, _ = _invoke(["certify", "--in", str(tmp_path / "missing.csv"), "--d", "1", "--eps", "0.1", "--out", "out.json"], tmp_path)
    assert result.exit_code == 3


def test_thread_count_does_not_change_output(tmp_path):
    base = ["certify", "--gen", "tent:0.2,101", "--eps", "0.1", "--out", "out.json"]
    one, a = _invoke(base + ["--threads", "1"], tmp_path)
    two, b = _invoke(base + ["--threads", "2"], tmp_path)
    assert one.exit_code == two.exit_code == 0
    assert a["out.json"] == b["out.json"]


def test_figures_are_written(tmp_path):
    result, _ = _invoke(["analyze", "--gen", "tent:0.2,101", "--eps", "0.1", "--out", "out.json"], tmp_path)
    assert result.exit_code == 0
    pngs = sorted(p.name for p in tmp_path.rglob("*.png"))
    assert pngs and all(name.startswith("out_") for name in pngs)
