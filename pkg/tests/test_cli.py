import csv
import json
import subprocess
import sys

import pytest

from ecpru.cli import CSV_COLUMNS, OUT_ENV, main

IRREVERSIBLE = """\
symbols: b 0 1
blank: b
states: q0 q1 qa qr
initial: q0
accept: qa
reject: qr
std q0 0 q1 1 R
std q0 1 q1 0 L
"""


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


class TestArtifacts:
    def test_compile_report(self, tmp_path, capsys):
        assert run(tmp_path, "compile-report", "--machine", "sweep", "--tape-length", "3") == 0
        d = json.loads((tmp_path / "compile-report.json").read_text())
        assert d["configurations"] == 4 * 15 * 27
        assert header(tmp_path / "compile-report.csv") == CSV_COLUMNS["compile-report"]
        assert capsys.readouterr().out.startswith("compile-report: 1620 configurations")

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(out, "pspace", "--tape-length", "2", "--trials", "3", "--seed", "4") == 0
        for name in ("pspace.json", "pspace.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_spectrum_rerun_is_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(out, "spectrum", "--machine", "sweep", "--tape-length", "4") == 0
        assert (a / "spectrum.json").read_bytes() == (b / "spectrum.json").read_bytes()
        assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()

    def test_collapse(self, tmp_path):
        assert run(tmp_path, "collapse", "--T", "64", "--samples", "2000") == 0
        d = json.loads((tmp_path / "collapse.json").read_text())
        assert d["path_length"] == 128 and d["bound_holds"]
        assert d["second_half"] == pytest.approx(d["second_half_from_norms"], abs=1e-12)
        assert abs(d["monte_carlo"]["mean"] - d["second_half"]) <= 4 * d["monte_carlo"]["stderr"]
        with open(tmp_path / "collapse.csv", newline="") as fh:
            assert sum(1 for _ in fh) == 129

    def test_spectrum(self, tmp_path):
        assert run(tmp_path, "spectrum", "--machine", "parity", "--tape-length", "3") == 0
        d = json.loads((tmp_path / "spectrum.json").read_text())
        assert d["audit"]["ok"]
        assert header(tmp_path / "spectrum.csv") == CSV_COLUMNS["spectrum"]

    def test_gapstats(self, tmp_path):
        assert run(tmp_path, "gapstats", "--n", "3", "--seeds", "10") == 0
        d = json.loads((tmp_path / "gapstats.json").read_text())
        assert d["samples"] == 10 and d["threshold"] == 0.125

    def test_channel(self, tmp_path):
        argv = ["channel", "--n", "1", "--m1", "4", "--m2", "4", "--m3", "3", "--beta", "1", "--trials", "200", "--samples", "0"]
        assert run(tmp_path, *argv) == 0
        d = json.loads((tmp_path / "channel.json").read_text())
        assert d["secure_query"] is None and len(d["return_fidelity"]) == 2
        assert header(tmp_path / "channel.csv") == CSV_COLUMNS["channel"]

    def test_verify_exit_codes(self, tmp_path):
        assert run(tmp_path, "verify", "--oracle", "exact", "--n", "8") == 0
        assert header(tmp_path / "verify.csv") == CSV_COLUMNS["verify"]
        assert run(tmp_path, "verify", "--n", "4", "--oracle", "refusing") == 1

    def test_distinguish_identity(self, tmp_path):
        assert run(tmp_path, "distinguish", "--sampler", "identity") == 1
        d = json.loads((tmp_path / "distinguish.json").read_text())
        assert d["decision"] == "Pseudorandom"

    def test_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
        assert main(["gapstats", "--n", "2", "--seeds", "3"]) == 0
        assert (tmp_path / "env" / "gapstats.csv").exists()

    def test_figures(self, tmp_path):
        assert run(tmp_path, "collapse", "--T", "20", "--samples", "0", "--figures") == 0
        assert (tmp_path / "collapse.png").stat().st_size > 0


class TestErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            ["compile-report", "--tape-length", "9"],
            ["compile-report", "--tape-length", "0"],
            ["collapse", "--T", "0"],
            ["gapstats", "--n", "0"],
            ["verify", "--n", "1"],
            ["channel", "--n", "8", "--m1", "8", "--m2", "8", "--m3", "8"],
            ["distinguish", "--n", "3"],
            ["compile-report", "--machine-file", "/nonexistent.tm"],
        ],
    )
    def test_exit_two(self, tmp_path, capsys, argv):
        assert run(tmp_path, *argv) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["command"] == argv[0] and err["message"]

    def test_irreversible_machine(self, tmp_path, capsys):
        path = tmp_path / "bad.tm"
        path.write_text(IRREVERSIBLE)
        assert run(tmp_path, "compile-report", "--machine-file", str(path), "--tape-length", "3") == 2
        assert "not reversible" in json.loads(capsys.readouterr().err)["message"]


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "ecpru", "gapstats", "--n", "2", "--seeds", "2", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.startswith("gapstats:")
