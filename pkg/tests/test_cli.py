import csv
import json

import pytest

from encoder_lab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, load_config, main, ConfigError


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_theorem_time(capsys):
    assert main(["theorem-time", "--L", "2", "--epsilon", "0.25"]) == EXIT_OK
    assert "16.635532" in capsys.readouterr().out


def test_validate_and_verify_logical(capsys):
    assert main(["validate", "--L", "4"]) == EXIT_OK
    assert main(["verify-logical", "--L", "5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 15


@pytest.mark.parametrize(
    "argv",
    [
        ["exact-run", "--L", "4"],
        ["traj-run", "--psi", "magic"],
        ["exact-run", "--psi", "nonsense"],
        ["exact-run", "--t-max", "1", "--sample-times", "0,2"],
        ["syndrome-run", "--ntraj", "0"],
        ["exact-run", "--unknown-flag"],
    ],
)
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_CONFIG


def test_exact_run_csv_schema(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["exact-run", "--psi", "bell", "--t-max", "2", "--n-samples", "3", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert list(rows[0]) == ["run_id", "backend", "L", "seed", "t", "observable", "value", "stderr", "n_samples"]
    xx = [r for r in rows if r["observable"] == "logical[XX]"]
    assert len(xx) == 3 and all(float(r["value"]) == pytest.approx(1.0) for r in xx)


def test_explicit_amplitudes(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["exact-run", "--psi", "0,1,0,0", "--t-max", "1", "--n-samples", "2", "--out", str(out)]) == EXIT_OK
    iz = [float(r["value"]) for r in read_csv(out) if r["observable"] == "logical[IZ]"]
    assert iz == pytest.approx([-1.0, -1.0])


def test_outputs_are_byte_identical(tmp_path):
    args = ["traj-run", "--L", "3", "--ntraj", "20", "--t-max", "2", "--n-samples", "3", "--seed", "5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_json_mirrors_csv(tmp_path):
    args = ["syndrome-run", "--L", "8", "--ntraj", "30", "--t-max", "60", "--n-samples", "4", "--seed", "2"]
    c, j = tmp_path / "c.csv", tmp_path / "c.json"
    assert main(args + ["--out", str(c)]) == EXIT_OK
    assert main(args + ["--out", str(j), "--format", "json"]) == EXIT_OK
    rows = read_csv(c)
    doc = json.loads(j.read_text())["rows"]
    assert len(rows) == len(doc)
    for r, d in zip(rows, doc):
        assert r["observable"] == d["observable"]
        assert float(r["value"]) == float(d["value"]) or (r["value"] == "nan" and d["value"] == "nan")
        assert r["run_id"] != ""  # run ids differ between formats since format is part of the config
    assert any(r["observable"] == "absorption_time_mean" for r in rows)


def test_sinks_do_not_change_chain_statistics(tmp_path):
    args = ["syndrome-run", "--L", "4", "--ntraj", "50", "--t-max", "20", "--n-samples", "3", "--seed", "1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--no-include-sinks", "--out", str(b)]) == EXIT_OK
    strip = lambda rows: [(r["t"], r["observable"], r["value"], r["stderr"]) for r in rows]
    assert strip(read_csv(a)) == strip(read_csv(b))


def test_config_file_with_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"L": 2, "backend": "exact", "ntraj": 7, "psi": [[1, 0], 0, 0, [0, 1]]}))
    cfg = load_config(str(cfg_path), {"ntraj": 9})
    assert cfg.ntraj == 9 and cfg.psi[3] == pytest.approx(1j / 2**0.5)
    cfg_path.write_text(json.dumps({"L": 3, "backend": "trajectory", "psi": [1, 0, 0, 0]}))
    with pytest.raises(ConfigError):
        load_config(str(cfg_path), {})
    cfg_path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        load_config(str(cfg_path), {})


def test_scaling(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["scaling", "--L-list", "4,8", "--ntraj", "40", "--epsilon", "0.1", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert {r["L"] for r in rows} == {"4", "8"}
    assert "R^2" in capsys.readouterr().err


def test_verify_all_subset(capsys):
    assert main(["verify-all", "--only", "2"]) == EXIT_OK
    assert "criterion 2 PASS" in capsys.readouterr().out


def test_failed_embedded_verification_exits_1(monkeypatch, tmp_path):
    from encoder_lab import cli
    from encoder_lab.verify import VerificationReport

    def broken(cfg):
        rep = VerificationReport()
        rep.add("forced failure", False)
        return [], rep

    monkeypatch.setitem(cli.ENGINES, "exact", broken)
    assert main(["exact-run", "--out", str(tmp_path / "x.csv")]) == EXIT_FAIL
