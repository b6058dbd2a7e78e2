import subprocess
import sys

import numpy as np
import pytest

import awvd.cubes as cubes_mod
from awvd.cli import main, read_sites_file
from awvd.validate import run_suites


def run_cli(*argv):
    return main(list(argv))


def run_cli_subprocess(*argv):
    return subprocess.run(
        [sys.executable, "-m", "awvd.cli", *argv],
        capture_output=True,
        text=True,
    )


@pytest.fixture(scope="module")
def sites_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sites.txt"
    assert run_cli(
        "generate", "--n", "25", "--d", "2", "--weights", "uniform",
        "--seed", "3", "--out", str(path),
    ) == 0
    return path


@pytest.fixture(scope="module")
def diagram_file(sites_file, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "diagram.awvd"
    assert run_cli(
        "build", "--sites", str(sites_file), "--eps", "0.5",
        "--mode", "reduced", "--out", str(path),
    ) == 0
    return path


def test_generate_file_format_and_determinism(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    for out in (a, b):
        assert run_cli(
            "generate", "--n", "3", "--d", "2", "--weights", "equal",
            "--seed", "1", "--out", str(out),
        ) == 0
    assert a.read_text() == b.read_text()
    lines = a.read_text().splitlines()
    assert lines[0] == "2 3"
    assert len(lines) == 4
    sites = read_sites_file(a)
    assert sites.n == 3 and np.all(sites.weights == 1.0)


def test_generate_rejects_zero_sites(tmp_path):
    assert run_cli(
        "generate", "--n", "0", "--out", str(tmp_path / "x.txt")
    ) == 2


def test_build_rejects_bad_eps(sites_file, tmp_path):
    assert run_cli(
        "build", "--sites", str(sites_file), "--eps", "2",
        "--out", str(tmp_path / "d.awvd"),
    ) == 2


def test_build_dump_roundtrips(diagram_file, tmp_path):
    from awvd.diagram import dumps_diagram, load_diagram

    text = diagram_file.read_text()
    loaded = load_diagram(diagram_file)
    assert dumps_diagram(loaded) == text
    stats = (diagram_file.parent / (diagram_file.name + ".stats.txt")).read_text()
    assert "total_cubes=" in stats


def test_query_point_at_site(diagram_file, sites_file, capsys):
    sites = read_sites_file(sites_file)
    heaviest = sites.coords[-1]
    pts = sites.coords[-1:].copy()
    points_file = diagram_file.parent / "pts.txt"
    with open(points_file, "w") as fh:
        fh.write(" ".join(str(c) for c in heaviest) + "\n")
    assert run_cli(
        "query", "--diagram", str(diagram_file),
        "--points", str(points_file), "--check",
    ) == 0
    out = capsys.readouterr().out
    assert "max_ratio=1" in out


def test_query_random_check_summary(diagram_file, tmp_path, capsys):
    report_dir = tmp_path / "report"
    assert run_cli(
        "query", "--diagram", str(diagram_file), "--random", "500",
        "--seed", "4", "--check", "--report-dir", str(report_dir),
    ) == 0
    out = capsys.readouterr().out
    max_ratio = float([l for l in out.splitlines() if l.startswith("max_ratio=")][0].split("=")[1])
    assert max_ratio <= 1.5
    assert (report_dir / "queries.csv").exists()
    assert (report_dir / "report.txt").exists()
    assert (report_dir / "ratio_hist.png").exists()


def test_query_far_point_gets_heaviest_label(diagram_file, sites_file, capsys):
    sites = read_sites_file(sites_file)
    points_file = diagram_file.parent / "far.txt"
    with open(points_file, "w") as fh:
        fh.write("1000 1000\n")
    assert run_cli(
        "query", "--diagram", str(diagram_file), "--points", str(points_file)
    ) == 0
    out = capsys.readouterr().out.split()
    assert out[2] == str(sites.n)


def test_query_rejects_malformed_points(diagram_file, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("only-one-column\n")
    assert run_cli(
        "query", "--diagram", str(diagram_file), "--points", str(bad)
    ) == 2


def test_render_single_site_and_determinism(tmp_path):
    sites = tmp_path / "one.txt"
    assert run_cli("generate", "--n", "1", "--seed", "2", "--out", str(sites)) == 0
    diagram = tmp_path / "one.awvd"
    assert run_cli(
        "build", "--sites", str(sites), "--eps", "0.5", "--out", str(diagram)
    ) == 0
    svg_a = tmp_path / "a.svg"
    svg_b = tmp_path / "b.svg"
    assert run_cli("render", "--diagram", str(diagram), "--out", str(svg_a)) == 0
    assert run_cli("render", "--diagram", str(diagram), "--out", str(svg_b)) == 0
    body = svg_a.read_bytes()
    assert body == svg_b.read_bytes()
    # One cell rectangle plus one site marker.
    assert body.count(b"<path") >= 2


def test_render_two_sites_two_colors(tmp_path):
    sites = tmp_path / "two.txt"
    with open(sites, "w") as fh:
        fh.write("2 2\n0 0 1\n1 0 2\n")
    diagram = tmp_path / "two.awvd"
    assert run_cli(
        "build", "--sites", str(sites), "--eps", "0.25", "--out", str(diagram)
    ) == 0
    svg = tmp_path / "two.svg"
    assert run_cli("render", "--diagram", str(diagram), "--out", str(svg)) == 0
    text = svg.read_text()
    fills = {
        part.split(";")[0]
        for part in text.split('style="fill: ')[1:]
    }
    assert len(fills) >= 2


def test_render_rejects_non_planar(tmp_path):
    sites = tmp_path / "three_d.txt"
    assert run_cli(
        "generate", "--n", "5", "--d", "3", "--seed", "1", "--out", str(sites)
    ) == 0
    diagram = tmp_path / "d3.awvd"
    assert run_cli(
        "build", "--sites", str(sites), "--eps", "0.5", "--out", str(diagram)
    ) == 0
    assert run_cli(
        "render", "--diagram", str(diagram), "--out", str(tmp_path / "x.svg")
    ) == 4


def test_validate_all_passes(sites_file, tmp_path):
    report_dir = tmp_path / "val"
    assert run_cli(
        "validate", "--sites", str(sites_file), "--eps", "0.5",
        "--suite", "all", "--report-dir", str(report_dir),
    ) == 0
    assert (report_dir / "report.txt").exists()
    assert (report_dir / "ratio_full.png").exists()
    assert (report_dir / "ratio_reduced.png").exists()


def test_validate_sspd_suite_small_instance(tmp_path):
    sites = tmp_path / "small.txt"
    assert run_cli("generate", "--n", "20", "--seed", "5", "--out", str(sites)) == 0
    assert run_cli(
        "validate", "--sites", str(sites), "--eps", "0.5", "--suite", "sspd"
    ) == 0


def test_validate_catches_injected_dedup_fault(sites_file, monkeypatch):
    # Disabling duplicate-cube resolution must break the e2e structure check.
    sites = read_sites_file(sites_file)
    monkeypatch.setattr(cubes_mod, "dedup_min_label", lambda cubes: dict(cubes))
    violations, _, _ = run_suites(["e2e"], sites, 0.5, seed=0)
    assert violations, "fault injection should surface at least one violation"


def test_cli_entry_point_subprocess(tmp_path):
    out = tmp_path / "s.txt"
    result = run_cli_subprocess(
        "generate", "--n", "4", "--seed", "9", "--out", str(out)
    )
    assert result.returncode == 0
    assert out.exists()


def test_build_depth_exhaustion_exits_3(tmp_path, capsys):
    # Two near-coincident similar-weight sites need cubes far below a
    # 6-bit grid.
    sites = tmp_path / "tight.txt"
    sites.write_text("2 2\n0 0 1\n1e-09 0 1.0000001\n")
    code = run_cli(
        "build", "--sites", str(sites), "--eps", "0.25",
        "--frac-bits", "6", "--out", str(tmp_path / "t.awvd"),
    )
    assert code == 3
    assert "frac-bits" in capsys.readouterr().err


def test_validate_all_fifty_sites(tmp_path):
    sites = tmp_path / "fifty.txt"
    assert run_cli(
        "generate", "--n", "50", "--seed", "50", "--out", str(sites)
    ) == 0
    report_dir = tmp_path / "val50"
    assert run_cli(
        "validate", "--sites", str(sites), "--eps", "0.5",
        "--suite", "all", "--report-dir", str(report_dir),
    ) == 0
    assert (report_dir / "covers.txt").exists()


def test_threads_flag_and_env(sites_file, tmp_path, monkeypatch):
    a = tmp_path / "thr_a.awvd"
    b = tmp_path / "thr_b.awvd"
    assert run_cli(
        "build", "--sites", str(sites_file), "--eps", "0.5",
        "--threads", "3", "--out", str(a),
    ) == 0
    monkeypatch.setenv("AWVD_THREADS", "3")
    assert run_cli(
        "build", "--sites", str(sites_file), "--eps", "0.5", "--out", str(b)
    ) == 0
    assert a.read_bytes() == b.read_bytes()
