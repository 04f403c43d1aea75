import csv
import json

import pytest

from rqkd import __version__
from rqkd.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from rqkd.ingest import assemble_active, load_fixture
from rqkd.xdf import assemble_xdf, load_xdf


def read_csv(path):
    rows = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(rows))


def test_factorize_h8(tmp_path):
    assert main(["factorize", "--input", "h8", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "factorize.json").read_text())
    assert report["n_df"] == 25
    ref = assemble_xdf(assemble_active(load_fixture("h8")))
    assert report["lambda1"] == pytest.approx(ref.lambda1, abs=1e-12)
    assert report["lambda2"] == pytest.approx(ref.lambda2, abs=1e-12)
    assert load_xdf(tmp_path / "xdf.npz").n_df == 25
    sweep = read_csv(tmp_path / "factorize.csv")
    assert [int(r["n_df"]) for r in sweep] == sorted(int(r["n_df"]) for r in sweep)


def test_factorize_infinite_threshold(tmp_path):
    assert main(["factorize", "--input", "h4", "--sigma-df", "inf", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "factorize.json").read_text())["n_df"] == 0


def test_evolve_error(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("taus: [1.0, 10.0]\nR_grid: [1, 4, 16]\n")
    assert main(["evolve-error", "--input", "h4", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "evolve_error.csv")
    assert list(rows[0]) == ["protocol", "tau", "R", "depth", "eps_S", "bound"]
    assert len(rows) == 2 * 3 * 4
    for r in rows:
        if r["protocol"] == "d3":
            assert float(r["eps_S"]) <= float(r["bound"])
    report = json.loads((tmp_path / "evolve_error.json").read_text())
    assert report["bound_violations"] == 0
    assert isinstance(report["crossovers"], list)


def test_evolve_error_needs_small_system(tmp_path):
    assert main(["evolve-error", "--input", "h6", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_krylov_outputs_are_deterministic(tmp_path):
    args = ["krylov", "--input", "h4", "--dim", "4", "--ansatz", "d3", "--seed", "3", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    first = {name: (tmp_path / name).read_bytes() for name in ("krylov.csv", "krylov.json")}
    assert main(args) == EXIT_OK
    for name, content in first.items():
        assert (tmp_path / name).read_bytes() == content
    text = (tmp_path / "krylov.csv").read_text()
    assert f"rqkd {__version__}" in text and '"seed": 3' in text
    rows = read_csv(tmp_path / "krylov.csv")
    assert [int(r["D"]) for r in rows] == [1, 2, 3, 4]
    assert all(float(r["delta_E"]) >= -1e-9 for r in rows)


def test_krylov_shot_mode_default_threshold(tmp_path):
    args = ["krylov", "--input", "h4", "--dim", "3", "--estimation", "shots", "--shots", "10000",
            "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    rec = json.loads((tmp_path / "krylov.json").read_text())
    assert rec["config"]["sigma_co_resolved"] == pytest.approx(0.1)


def test_shot_study(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"shot_R": [5], "shot_grid": [100, 1000, 10000], "repeats": 4}))
    assert main(["shot-study", "--input", "h2", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "shot_study.csv")
    assert len(rows) == 3
    assert "5" in json.loads((tmp_path / "shot_study.json").read_text())["slopes"]


@pytest.mark.parametrize(
    "args",
    [
        ["krylov", "--input", "missing.fcidump"],
        ["krylov", "--input", "h4", "--ansatz", "d7"],
        ["krylov", "--input", "h4", "--dim", "0"],
        ["krylov", "--input", "h4", "--estimation", "trajectories"],
    ],
)
def test_config_errors(tmp_path, args):
    assert main(args + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("not_a_field: 1\n")
    assert main(["krylov", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    cfg.write_text("[unclosed\n")
    assert main(["krylov", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("input: h2\ndim: 5\n")
    assert main(["krylov", "--config", str(cfg), "--dim", "2", "--out", str(tmp_path)]) == EXIT_OK
    rec = json.loads((tmp_path / "krylov.json").read_text())
    assert rec["config"]["D"] == 2 and len(rec["rows"]) == 2


def test_numerical_failure_exit_code(tmp_path):
    args = ["krylov", "--input", "h2", "--sigma-co", "10", "--out", str(tmp_path)]
    assert main(args) == EXIT_NUMERIC


def test_argparse_errors_exit_with_config_code():
    with pytest.raises(SystemExit) as info:
        main(["krylov", "--dim", "two"])
    assert info.value.code == EXIT_CONFIG
