import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from replica_cs import __version__
from replica_cs.cli import ConfigError, main, parse_grid
from replica_cs.prior import figure1_prior, prior_hash


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(text):
    header = [ln for ln in text.splitlines() if ln.startswith("#")]
    body = "\n".join(ln for ln in text.splitlines() if not ln.startswith("#"))
    return header, list(csv.DictReader(io.StringIO(body)))


class TestGrid:
    def test_inclusive(self):
        g = parse_grid("0:4:0.05")
        assert g.size == 81 and g[0] == 0.0 and g[-1] == 4.0
        assert g[7] == 0.35

    def test_single_value(self):
        assert parse_grid("2.5").tolist() == [2.5]

    def test_step_not_dividing(self):
        assert parse_grid("0:1:0.3").tolist() == [0.0, 0.3, 0.6, 0.9]

    @pytest.mark.parametrize("text", ["0:4", "a:b:c", "4:0:1", "0:4:0", "-1:2:1", "0:inf:1"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_grid(text)


class TestCurve:
    def test_gaussian(self, capsys, tmp_path):
        out = tmp_path / "g.csv"
        code, _, err = run(capsys, "curve", "--prior", "gaussian", "--delta", "0:4:0.05", "--out", str(out))
        assert code == 0 and err == ""
        header, rows = read_csv(out.read_text())
        assert len(rows) == 81
        assert list(rows[0]) == ["delta", "i_rs_nats", "m_rs", "branch_count"]
        assert not (tmp_path / "g.csv.jumps.json").exists()

    def test_figure1_jump_sidecar(self, capsys, tmp_path):
        out = tmp_path / "f.csv"
        code, _, err = run(capsys, "curve", "--prior", "fig1:0.1", "--delta", "0:6:0.01", "--out", str(out))
        assert code == 0 and "warning" not in err
        doc = json.loads((tmp_path / "f.csv.jumps.json").read_text())
        assert doc["schema"] == 1 and len(doc["jumps"]) == 1
        assert doc["jumps"][0]["z_minus"] > doc["jumps"][0]["z_plus"]

    def test_figure1_failing_prior_warns(self, capsys, tmp_path):
        out = tmp_path / "f.csv"
        code, _, err = run(capsys, "curve", "--prior", "fig1:0.3", "--delta", "0:6:0.01", "--out", str(out))
        assert code == 0
        assert "single-crossing" in err

    def test_json_format(self, capsys):
        code, out, _ = run(capsys, "curve", "--prior", "bpsk", "--delta", "0:1:0.5", "--format", "json")
        doc = json.loads(out)
        assert code == 0 and doc["schema"] == 1
        assert doc["columns"][1] == "i_rs_nats" and len(doc["rows"]) == 3

    def test_header(self, capsys):
        _, out, _ = run(capsys, "curve", "--prior", "fig1:0.1", "--delta", "1:2:1", "--seed", "5")
        header, _ = read_csv(out)
        text = "\n".join(header)
        assert f"version: {__version__}" in text
        assert f"prior_hash: {prior_hash(figure1_prior(0.1))}" in text
        assert "seed: 5" in text


class TestCheck:
    @pytest.mark.parametrize("prior, code", [("bpsk", 0), ("fig1:0.1", 0), ("fig1:0.3", 1)])
    def test_exit_codes(self, capsys, prior, code):
        got, out, _ = run(capsys, "check", "--prior", prior)
        assert got == code
        doc = json.loads(out)
        assert doc["is_single_crossing"] == (code == 0)
        assert doc["meta"]["prior"] == prior


class TestOtherCommands:
    def test_transition(self, capsys):
        code, out, _ = run(capsys, "transition", "--prior", "fig1:0.1")
        doc = json.loads(out)
        assert code == 0 and doc["delta_star"] == pytest.approx(0.2516753, abs=1e-5)
        assert len(doc["stable_fixed_points"]) == 2

    def test_transition_none(self, capsys):
        _, out, _ = run(capsys, "transition", "--prior", "gaussian")
        assert json.loads(out)["delta_star"] is None

    def test_bounds(self, capsys):
        code, out, _ = run(capsys, "bounds", "--prior", "bpsk", "--n", "4", "--m", "0:16:4")
        _, rows = read_csv(out)
        assert code == 0 and [r["m"] for r in rows] == ["0", "4", "8", "12", "16"]
        assert rows[0]["mi_gap_nats"] == "" and rows[-1]["boundary_bound_nats"] != ""

    def test_bounds_json(self, capsys):
        _, out, _ = run(capsys, "bounds", "--prior", "bpsk", "--n", "4", "--delta", "4", "--format", "json")
        rep = json.loads(out)["reports"][0]
        assert rep["m"] == 16 and rep["boundary_bound"] == pytest.approx((4 + math.sqrt(2)) / 2)

    def test_se_trace(self, capsys):
        code, out, _ = run(capsys, "se", "--prior", "gaussian", "--delta", "1")
        _, rows = read_csv(out)
        assert code == 0 and rows[0]["z"] == "1.0"
        assert float(rows[-1]["z"]) == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-9)

    def test_estimate_manifest(self, capsys, tmp_path):
        manifest = tmp_path / "run.json"
        manifest.write_text(json.dumps({"prior": "bpsk", "n": 3, "m": 4, "trials": 50, "seed": 8}))
        dump = tmp_path / "trials.csv"
        code, out, _ = run(capsys, "estimate", "--manifest", str(manifest), "--dump-trials", str(dump))
        doc = json.loads(out)
        assert code == 0 and doc["trials"] == 50 and doc["estimator"] == "posterior_var_avg"
        assert len(dump.read_text().splitlines()) == 51

    def test_estimate_inline_prior(self, capsys, tmp_path):
        manifest = tmp_path / "run.json"
        prior = {"components": [{"weight": 1.0, "mean": 0.0, "variance": 2.0}]}
        manifest.write_text(json.dumps({"prior": prior, "n": 2, "m": 0, "trials": 5, "seed": 1}))
        _, out, _ = run(capsys, "estimate", "--manifest", str(manifest))
        assert json.loads(out)["mmse_hat"] == 2.0

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "replica_cs", "--version"], capture_output=True, text=True)
        assert res.returncode == 0 and __version__ in res.stdout


class TestCompare:
    def test_bpsk_containment(self, capsys):
        code, out, err = run(capsys, "compare", "--prior", "bpsk", "--n", "8", "--delta", "0.5:4:0.5",
                             "--trials", "5000", "--seed", "7")
        _, rows = read_csv(out)
        assert code == 0 and len(rows) == 8
        assert all(r["violations"] == "none" for r in rows)
        assert "warning" not in err

    def test_gaussian_matches_closed_form(self, capsys):
        n, var = 6, 1.0
        code, out, _ = run(capsys, "compare", "--prior", "gaussian", "--n", str(n), "--m", "0:12:3",
                           "--trials", "2000", "--seed", "3", "--format", "json")
        doc = json.loads(out)
        cols = doc["columns"]
        rng = np.random.default_rng(5)
        for row in doc["rows"]:
            r = dict(zip(cols, row))
            m = r["m"]
            if m == 0:
                assert r["mmse_hat"] == var and r["mi_hat_nats"] == 0.0
                continue
            vals = []
            for _ in range(20_000):
                z = rng.standard_normal((m, n))
                vals.append(0.5 * np.log1p(var * np.linalg.eigvalsh(z.T @ z / n)).sum())
            se = math.hypot(r["mi_se_nats"], np.std(vals) / math.sqrt(len(vals)))
            assert abs(r["mi_hat_nats"] - np.mean(vals)) / n < 4 * se / n

    def test_byte_identical(self, capsys, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for p in paths:
            run(capsys, "compare", "--prior", "bpsk", "--n", "4", "--delta", "1:2:0.5",
                "--trials", "200", "--seed", "11", "--out", str(p))
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_non_integer_m(self, capsys):
        code, _, err = run(capsys, "compare", "--prior", "bpsk", "--n", "3", "--delta", "0.5")
        assert code == 2 and "not an integer" in err

    def test_enumeration_limit_is_numeric_failure(self, capsys):
        code, _, err = run(capsys, "compare", "--prior", "bpsk", "--n", "30", "--m", "4", "--trials", "2")
        assert code == 3 and "exceed" in err


class TestErrors:
    def test_unknown_prior(self, capsys):
        code, _, err = run(capsys, "check", "--prior", "nope")
        assert code == 2 and err.startswith("error:")

    def test_bad_grid(self, capsys):
        assert run(capsys, "curve", "--prior", "bpsk", "--delta", "3:1:1")[0] == 2

    def test_bad_trials(self, capsys):
        assert run(capsys, "compare", "--prior", "bpsk", "--n", "2", "--m", "1", "--trials", "0")[0] == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2
