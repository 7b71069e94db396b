"""Tests for the fieldtriple command line."""

import argparse
import json

import pytest

from cli import main, parse_tolerance
from fieldtriple_core.config import reset_config
from tests.conftest import PROBLEMS_DIR

DIRICHLET = str(PROBLEMS_DIR / "dirichlet_2d.json")
BROKEN = str(PROBLEMS_DIR / "broken_sign.json")


def values(line: str) -> list[float]:
    _, _, rest = line.partition("=")
    return [float(v) for v in rest.strip().strip("[]").split(",")]


def lines_by_key(out: str) -> dict[str, str]:
    return {
        line.split(" = ")[0]: line for line in out.splitlines() if " = " in line
    }


class TestCheckCommand:
    def test_passing_problem(self, capsys):
        assert main(["check", DIRICHLET, "--samples", "2", "--workers", "1"]) == 0
        out = capsys.readouterr().out
        assert "el_residual" in out
        assert "kernel_dimension" in out

    def test_failing_problem(self, capsys):
        assert main(["check", BROKEN, "--samples", "2", "--checks", "el_residual"]) == 1
        assert "fail" in capsys.readouterr().out

    def test_missing_file(self, capsys, tmp_path):
        assert main(["check", str(tmp_path / "absent.json")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_malformed_file(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"schema": 1, "m": 2,')
        assert main(["check", str(path)]) == 2
        assert "bad.json" in capsys.readouterr().err

    def test_schema_violation(self, tmp_path):
        path = tmp_path / "wrong.json"
        path.write_text(json.dumps({"schema": 1, "m": 0, "n": 1, "lagrangian": "u1"}))
        assert main(["check", str(path)]) == 2

    def test_bundled_name(self, capsys):
        code = main(["check", "dirichlet_2d", "--samples", "2", "--checks", "el_residual"])
        assert code == 0
        assert "el_residual" in capsys.readouterr().out

    def test_name_resolves_in_problems_dir(self, monkeypatch, tmp_path):
        (tmp_path / "copy.json").write_text((PROBLEMS_DIR / "broken_sign.json").read_text())
        monkeypatch.setenv("FIELDTRIPLE_PROBLEMS_DIR", str(tmp_path))
        reset_config()
        assert main(["check", "copy", "--samples", "2", "--checks", "el_residual"]) == 1

    def test_zero_samples(self, capsys):
        assert main(["check", DIRICHLET, "--samples", "0"]) == 2
        assert "--samples" in capsys.readouterr().err

    def test_unknown_check(self, capsys):
        assert main(["check", DIRICHLET, "--checks", "el_residual,bogus"]) == 2
        assert "bogus" in capsys.readouterr().out

    def test_json_to_stdout(self, capsys):
        code = main([
            "check", DIRICHLET, "--samples", "2", "--json", "-",
            "--checks", "kernel_dimension,el_residual",
        ])
        assert code == 0
        out = capsys.readouterr().out
        payload = json.loads(out[out.index("[\n"):])
        assert [r["name"] for r in payload] == ["el_residual", "kernel_dimension"]
        assert {"status", "violation", "location", "seconds", "tolerance"} <= set(payload[0])

    def test_json_to_file(self, tmp_path):
        target = tmp_path / "reports.json"
        main(["check", DIRICHLET, "--samples", "2", "--checks", "torsion_inverse",
              "--json", str(target)])
        (report,) = json.loads(target.read_text())
        assert report["name"] == "torsion_inverse"

    def test_tolerance_override(self, tmp_path):
        target = tmp_path / "reports.json"
        main(["check", DIRICHLET, "--samples", "2", "--checks", "el_residual",
              "--tol", "pde=1e-3", "--json", str(target)])
        (report,) = json.loads(target.read_text())
        assert report["tolerance"] == 1e-3

    def test_bad_tolerance_is_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["check", DIRICHLET, "--tol", "speed=1"])
        assert excinfo.value.code == 2

    @pytest.mark.parametrize("text", ["eq", "pde=", "rank=fast"])
    def test_parse_tolerance_rejects(self, text):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_tolerance(text)


class TestResidualCommand:
    def test_harmonic_section(self, capsys):
        code = main(["residual", DIRICHLET, "--section", "harmonic", "--at", "0.3,0.7"])
        assert code == 0
        found = lines_by_key(capsys.readouterr().out)
        assert values(found["el_residual"]) == pytest.approx([0.0], abs=1e-12)
        assert values(found["hdw_residual"]) == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)

    def test_momentum_section(self, capsys):
        code = main([
            "residual", DIRICHLET, "--section", "harmonic_momentum", "--at", "0.3,0.7",
        ])
        assert code == 0
        found = lines_by_key(capsys.readouterr().out)
        assert values(found["hdw_residual"]) == pytest.approx([0.0] * 3, abs=1e-12)

    def test_source_term_residual(self, capsys):
        main(["residual", BROKEN, "--section", "paraboloid", "--at", "0.1,0.2"])
        found = lines_by_key(capsys.readouterr().out)
        # -(2 + 2) - 4
        assert values(found["el_residual"]) == pytest.approx([-8.0], abs=1e-12)

    def test_unknown_section(self, capsys):
        code = main(["residual", DIRICHLET, "--section", "nope", "--at", "0,0"])
        assert code == 2
        assert "harmonic" in capsys.readouterr().err

    def test_wrong_point_size(self):
        assert main(["residual", DIRICHLET, "--section", "harmonic", "--at", "0.3"]) == 2

    def test_at_is_required(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["residual", DIRICHLET, "--section", "harmonic"])
        assert excinfo.value.code == 2


class TestLegendreCommand:
    def test_dirichlet_point(self, capsys):
        assert main(["legendre", DIRICHLET, "--at", "0.3,0.7,1.0,3,4"]) == 0
        out = capsys.readouterr().out
        found = lines_by_key(out)
        assert "p = -12.5" in out
        assert values(found["pmom"]) == [3.0, 4.0]
        assert values(found["reduced"]) == [0.3, 0.7, 1.0, 3.0, 4.0]
        assert "regular = true" in out
        assert values(found["min_singular_value"]) == pytest.approx([1.0])

    def test_non_numeric_point(self, capsys):
        assert main(["legendre", DIRICHLET, "--at", "0.3,x,1,3,4"]) == 2
        assert "--at" in capsys.readouterr().err
