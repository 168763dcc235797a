import json
from pathlib import Path

import pytest

from etmeasure import __version__
from etmeasure.cli import EXIT_INPUT, EXIT_MODEL, EXIT_TOLERANCE, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*argv):
    return main([str(a) for a in argv] + ["--quiet"])


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestRun:
    def test_free(self, tmp_path):
        out = tmp_path / "free"
        assert run("run", CONFIGS / "free.ini", "--out", out) == 0
        rows = (out / "probabilities.csv").read_text().splitlines()
        assert rows[0] == "input,P0,P1"
        assert all(r.endswith(",0.5,0.5") for r in rows[1:])
        rep = json.loads((out / "report.json").read_text())
        cfg_sha = __import__("hashlib").sha256((CONFIGS / "free.ini").read_bytes()).hexdigest()
        assert rep["meta"]["config_sha256"] == cfg_sha
        assert rep["meta"]["version"] == __version__
        assert rep["measurement"]["p_error"]["value"] == pytest.approx(0.5)

    def test_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            assert run("run", CONFIGS / "rotation_meter.ini", "--out", tmp_path / d, "--seed", 5) == 0
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name

    def test_spacetime(self, tmp_path):
        assert run("run", CONFIGS / "spacetime.ini", "--out", tmp_path / "s") == 0
        rep = json.loads((tmp_path / "s" / "report.json").read_text())
        assert rep["meta"]["units"] == "si"


class TestSubcommands:
    def test_sweep(self, tmp_path):
        out = tmp_path / "sw"
        assert run("sweep", CONFIGS / "rotation_meter.ini", "--out", out, "--workers", 1) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 4 and "condition1" in lines[0]

    def test_sweep_bad_parameter(self, tmp_path):
        out = tmp_path / "sw"
        assert run("sweep", CONFIGS / "rotation_meter.ini", "--parameter", "mass", "--out", out) == EXIT_INPUT
        assert not out.exists()

    def test_sweep_bad_values(self, tmp_path):
        assert run("sweep", CONFIGS / "rotation_meter.ini", "--values", "1,x", "--out", tmp_path / "o") == EXIT_INPUT

    def test_audit(self, tmp_path):
        out = tmp_path / "au"
        assert run("audit", CONFIGS / "audit_values.csv", "--out", out) == 0
        assert (out / "margins.csv").exists() and (out / "audit.json").exists()

    def test_audit_json(self, tmp_path):
        table = write(tmp_path, "t.json", json.dumps([{"tau": 1, "delta_h_a": 1}]))
        assert run("audit", table, "--out", tmp_path / "o") == 0

    def test_audit_non_numeric(self, tmp_path):
        table = write(tmp_path, "t.csv", "tau,delta_h_a\n1,abc\n")
        assert run("audit", table, "--out", tmp_path / "o") == EXIT_INPUT
        assert not (tmp_path / "o").exists()

    def test_audit_empty(self, tmp_path):
        table = write(tmp_path, "t.csv", "tau,delta_h_a\n")
        assert run("audit", table, "--out", tmp_path / "o") == EXIT_INPUT

    def test_probe(self, tmp_path):
        out = tmp_path / "pr"
        assert run("probe", "--trials", 4, "--out", out) == 0
        rep = json.loads((out / "probe.json").read_text())
        assert rep["counterexamples"] == 0

    def test_chain(self, tmp_path):
        out = tmp_path / "ch"
        assert run("chain", "--L", 4, "--out", out) == 0
        rows = (out / "locality.csv").read_text().splitlines()
        assert len(rows) == 5


class TestExitCodes:
    def test_unknown_key(self, tmp_path, caplog):
        cfg = write(tmp_path, "c.ini", "[experiment]\nkind = measure\n[model]\nkind = free\nspin = 1\n")
        assert run("run", cfg, "--out", tmp_path / "o") == EXIT_INPUT
        assert "line 5" in caplog.text
        assert not (tmp_path / "o").exists()

    def test_missing_config(self, tmp_path):
        assert run("run", tmp_path / "none.ini", "--out", tmp_path / "o") == EXIT_INPUT

    def test_model_error(self, tmp_path):
        cfg = write(tmp_path, "c.ini", "[experiment]\nkind = measure\n[model]\nkind = stern_gerlach_2d\n"
                                       "epsilon = 0.25\nkick = 0.1\n")
        assert run("run", cfg, "--out", tmp_path / "o") == EXIT_MODEL
        assert not (tmp_path / "o").exists()

    def test_tolerance_error(self, tmp_path):
        # 32 points cannot hold the bump packet; the leakage monitor trips
        cfg = write(tmp_path, "c.ini", "[experiment]\nkind = measure\n[model]\nkind = chiral\ngrid_n = 32\n"
                                       "[protocol]\nmethod = split\n")
        assert run("run", cfg, "--out", tmp_path / "o") == EXIT_TOLERANCE
        assert not (tmp_path / "o").exists()

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out
