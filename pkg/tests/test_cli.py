import csv
import json
import math

import numpy as np
import pytest

from superradiance.cli import centered_indices, main
from superradiance.correlations import g2_bic_analytic, g2_spectral
from superradiance.coupling import FreeSpace, build_matrices, write_decay_csv
from superradiance.emitters import LatticeSpec, build_square_lattice
from superradiance.montecarlo import DisorderDistribution, read_stats_table, summary_stats


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_scan_n_bic(tmp_path):
    assert main(["scan-n", "--env", "bic", "--sizes", "3,5,7,9,11", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "scan_n.csv")
    assert [int(r["n_side"]) for r in rows] == [3, 5, 7, 9, 11]
    for r in rows:
        assert float(r["g2"]) == pytest.approx(float(r["g2_bic_analytic"]), abs=1e-12)
    assert float(rows[-1]["g2"]) == pytest.approx(1.6552, abs=1e-4)


def test_scan_n_free_space_bounds(tmp_path):
    assert main(["scan-n", "--sizes", "3", "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "scan_n.csv")
    assert float(row["g2_independent"]) <= float(row["g2"]) <= float(row["g2_dicke"])
    assert "g2_bic_analytic" not in row


def test_scan_n_tabulated_subsamples(tmp_path):
    arr = build_square_lattice(LatticeSpec(5, 300.0))
    g, _ = build_matrices(arr, FreeSpace())
    src = tmp_path / "g.csv"
    write_decay_csv(g, src)
    out = tmp_path / "out"
    assert main(["scan-n", "--env", f"tabulated:{src}", "--sizes", "3,5", "--out", str(out)]) == 0
    rows = _rows(out / "scan_n.csv")
    small = g.subsample(centered_indices(5, 3))
    assert float(rows[0]["g2"]) == g2_spectral(small).value
    assert float(rows[1]["g2"]) == g2_spectral(g).value
    assert main(["scan-n", "--env", f"tabulated:{src}", "--sizes", "7", "--out", str(out)]) == 1


def test_centered_indices():
    assert centered_indices(5, 3).tolist() == [6, 7, 8, 11, 12, 13, 16, 17, 18]


def test_empty_env_is_usage_error(tmp_path):
    assert main(["scan-n", "--env", "", "--out", str(tmp_path)]) == 1


def test_scan_d_dicke_point(tmp_path):
    assert main(["scan-d", "--d-values", "0", "--coincident", "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "scan_d.csv")
    assert float(row["g2"]) == pytest.approx(16 / 9, abs=1e-12)


def test_scan_d_zero_needs_flag(tmp_path):
    assert main(["scan-d", "--d-values", "0,100", "--out", str(tmp_path)]) == 1


def test_scan_d_large_spacing(tmp_path):
    assert main(["scan-d", "--d-over-lambda", "3,5", "--out", str(tmp_path)]) == 0
    for r in _rows(tmp_path / "scan_d.csv"):
        assert abs(float(r["g2"]) - 8 / 9) < 0.02


def test_scan_d_bic_constant(tmp_path):
    assert main(["scan-d", "--env", "bic", "--d-values", "0,50,400,2000", "--coincident",
                 "--out", str(tmp_path)]) == 0
    values = {r["g2"] for r in _rows(tmp_path / "scan_d.csv")}
    assert len(values) == 1
    assert float(values.pop()) == pytest.approx(g2_bic_analytic(9, 0.8179), abs=1e-12)


def test_dynamics_closed_metadata(tmp_path):
    assert main(["dynamics", "--env", "bic", "--method", "closed", "--n", "9",
                 "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "trace_meta.json").read_text())
    log_bn = math.log(9 * 0.8179)
    assert meta["t0_prime"] == pytest.approx(log_bn / (1.8179 * 9), rel=1e-12)
    assert meta["peak_time"] == pytest.approx(log_bn / (1 + 9 * 0.8179), rel=1e-12)


def test_dynamics_lindblad_single(tmp_path):
    assert main(["dynamics", "--env", "independent", "--method", "lindblad", "--n", "1",
                 "--t-end", "20", "--n-steps", "800", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "trace_meta.json").read_text())
    assert meta["integrated_rate"] == pytest.approx(1.0, abs=0.01)


def test_dynamics_ladder_independent(tmp_path):
    assert main(["dynamics", "--env", "independent", "--method", "ladder", "--n", "3",
                 "--out", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "trace.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(data[:, 1] - 3 * np.exp(-data[:, 0]))) < 1e-6


def test_dynamics_cap(tmp_path):
    code = main(["dynamics", "--env", "bic", "--method", "lindblad", "--n", "5",
                 "--max-emitters", "4", "--out", str(tmp_path)])
    assert code == 1


def test_disorder_full_filling(tmp_path):
    assert main(["disorder", "--mode", "filling", "--eta", "1", "--n-side", "3",
                 "--samples", "4", "--out", str(tmp_path)]) == 0
    dist = DisorderDistribution.from_json(tmp_path / "distribution.json")
    g, _ = build_matrices(build_square_lattice(LatticeSpec(3)), FreeSpace())
    assert np.all(dist.samples == g2_spectral(g).value)
    assert dist.std == 0.0


def test_disorder_tabulated_full_filling(tmp_path):
    arr = build_square_lattice(LatticeSpec(11))
    g, _ = build_matrices(arr, FreeSpace())
    src = tmp_path / "g.csv"
    write_decay_csv(g, src)
    out = tmp_path / "out"
    assert main(["disorder", "--env", f"tabulated:{src}", "--eta", "1", "--samples", "3",
                 "--out", str(out)]) == 0
    dist = DisorderDistribution.from_json(out / "distribution.json")
    assert np.all(dist.samples == g2_spectral(g).value)


def test_disorder_outputs_round_trip(tmp_path):
    assert main(["disorder", "--mode", "orientation", "--delta-theta", "60", "--n-side", "3",
                 "--samples", "25", "--seed", "4", "--out", str(tmp_path)]) == 0
    dist = DisorderDistribution.from_json(tmp_path / "distribution.json")
    st = summary_stats(dist.samples)
    assert st.mean == pytest.approx(dist.mean, abs=1e-12)
    assert st.std == pytest.approx(dist.std, abs=1e-12)
    assert st.skewness == pytest.approx(dist.skewness, abs=1e-12)
    (row,) = read_stats_table(tmp_path / "stats.csv")
    assert row.mean == dist.mean and row.noise == "dtheta=60deg"
    hist = _rows(tmp_path / "histogram.csv")
    assert sum(int(r["count"]) for r in hist) == 25


def test_disorder_unsupported_combination(tmp_path):
    src = tmp_path / "g.csv"
    write_decay_csv(np.eye(9), src)
    code = main(["disorder", "--env", f"tabulated:{src}", "--mode", "position",
                 "--out", str(tmp_path / "o")])
    assert code == 1


def test_manifest_reproduces_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["disorder", "--mode", "position", "--delta-r", "20", "--n-side", "3",
                 "--samples", "10", "--seed", "9", "--out", str(a)]) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == "disorder"
    assert manifest["config"]["steps"] == 100  # defaults are echoed
    assert main(["disorder", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("distribution.json", "histogram.csv", "stats.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"env": "bic", "sizes": [3], "beta": 0.5}))
    assert main(["scan-n", "--config", str(cfg), "--beta", "1.0", "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "scan_n.csv")
    assert float(row["g2"]) == pytest.approx(g2_bic_analytic(9, 1.0), abs=1e-12)


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["scan-n", "--config", str(cfg), "--out", str(tmp_path)]) == 1


# -- validate ---------------------------------------------------------------------

def test_validate_ok(tmp_path, capsys):
    path = tmp_path / "ok.csv"
    path.write_text("1,0.5\n0.5,1\n")
    assert main(["validate", str(path)]) == 0
    assert json.loads(capsys.readouterr().out) == {"ok": True, "violations": []}


def test_validate_cauchy_schwarz(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n2,1\n")
    assert main(["validate", str(path)]) == 2
    report = json.loads(capsys.readouterr().out)
    cs = [v for v in report["violations"] if v["kind"] == "cauchy_schwarz"]
    assert cs and cs[0]["indices"] == [0, 1]


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.csv")]) == 1


def test_validate_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,3\n4,5,6\n")
    assert main(["validate", str(path)]) == 1


def test_bad_flag_exits_one():
    with pytest.raises(SystemExit) as info:
        main(["scan-n", "--sizes", "a,b"])
    assert info.value.code == 1
