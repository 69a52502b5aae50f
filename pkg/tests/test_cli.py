"""CLI subcommands: exit codes, output formats, reproducibility."""

import csv
import json
from pathlib import Path

import pytest

from parkflux.cli import main


def run(argv):
    return main(argv)


def test_validate_exits_zero(tmp_path):
    assert run(["validate", "--out", str(tmp_path), "--format", "json"]) == 0
    payload = json.loads((tmp_path / "validate.json").read_text())
    assert payload["ok"]


def test_coeffs_match_closed_form(tmp_path):
    assert run(["coeffs", "--order", "4", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "coeffs.csv") as fh:
        rows = {(int(r["n"]), int(r["p"])): r["coefficient"] for r in csv.DictReader(fh)}
    assert [rows[(n, 0)] for n in (1, 2, 3, 4)] == ["2", "9", "54", "378"]


def test_unknown_model_exits_two(tmp_path):
    assert run(["validate", "--model", "no_such_model", "--out", str(tmp_path)]) == 2


def test_lamperti_certificates(tmp_path):
    assert run(["lamperti", "--format", "json", "--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "lamperti.json").read_text())
    roots = {c["branch"]: c["root"] for c in payload["certificates"]}
    assert roots["subordinator"] == pytest.approx(1.5, abs=1e-6)
    assert roots["compensated"] == pytest.approx(2.5, abs=1e-6)
    assert (tmp_path / "psi_scan_subordinator.json").exists()


def test_keycheck_exact(tmp_path):
    assert run(
        [
            "keycheck",
            "--p", "2", "--t", "1",
            "--order", "8",
            "--format", "json",
            "--out", str(tmp_path),
        ]
    ) == 0
    payload = json.loads((tmp_path / "keycheck.json").read_text())
    assert all(entry["passed"] for entry in payload["exact"])


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(
            [
                "sample",
                "--pmax", "300",
                "--p", "16",
                "--samples", "200",
                "--seed", "7",
                "--out", str(out),
            ]
        ) == 0
    assert (a / "sample.csv").read_bytes() == (b / "sample.csv").read_bytes()


def test_nu_summary_fields(tmp_path):
    assert run(
        [
            "nu",
            "--pmax", "300",
            "--depth", "120",
            "--format", "json",
            "--out", str(tmp_path),
        ]
    ) == 0
    payload = json.loads((tmp_path / "nu_summary.json").read_text())
    assert abs(payload["total_mass"] - 1.0) < 0.01
    assert payload["drift"]["verdict"] == "zero-drift"
    assert payload["config"]["seed"] == 0
