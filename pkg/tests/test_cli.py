import json
from importlib import resources

import pytest
from click.testing import CliRunner

from ruinrk.cli import main, parse_distribution, parse_points, run
from ruinrk import Gamma2, ModelParams

M2_PATH = str(resources.files("ruinrk.data").joinpath("tsrk6_m2.txt"))


@pytest.fixture
def runner():
    return CliRunner()


class TestDistributionGrammar:
    def test_known_forms(self):
        assert parse_distribution("gamma2:beta=2.4") == Gamma2(2.4)
        assert parse_distribution("pareto:m=2").m == 2
        assert parse_distribution("exponential:beta=1").beta == 1.0

    @pytest.mark.parametrize("bad", [
        "gauss:beta=1", "gamma2", "gamma2:rate=2", "gamma2:beta=2,junk=3",
        "pareto:m=2.5", "pareto:m=x", "gamma2:beta", "gamma2:beta=-1",
    ])
    def test_bad_specs_rejected(self, bad):
        with pytest.raises(Exception):
            parse_distribution(bad)

    def test_point_ranges(self):
        assert parse_points("1,2,3") == [1.0, 2.0, 3.0]
        assert parse_points("10:40:10") == [10.0, 20.0, 30.0, 40.0]


class TestSolveCommand:
    def test_csv_format_and_values(self, runner):
        res = runner.invoke(main, [
            "solve", "--dist", "exponential:beta=1", "--theta", "0.2",
            "--method", "rk4-s13", "--h", "0.01", "--umax", "1",
            "--report", "0,0.5,1"])
        assert res.exit_code == 0
        lines = res.output.strip().split("\n")
        assert lines[0] == "u,psi,survival,method,h,extra"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[1]) == pytest.approx(1 / 1.2, abs=1e-15)

    def test_json_round_trip_is_bit_exact(self, runner):
        res = runner.invoke(main, [
            "--format", "json", "solve", "--dist", "gamma2:beta=2.4",
            "--theta", "0.2", "--h", "0.01", "--umax", "1", "--report", "1"])
        assert res.exit_code == 0
        doc = json.loads(res.output)
        assert json.loads(json.dumps(doc)) == doc
        from ruinrk import solve_rk4
        model = ModelParams(theta=0.2, claims=Gamma2(2.4))
        expected = float(solve_rk4(model, 0.01, 1.0).values[100])
        assert doc["rows"][0]["psi"] == expected   # exact float equality

    def test_out_file(self, runner, tmp_path):
        out = tmp_path / "run.csv"
        res = runner.invoke(main, [
            "--out", str(out), "solve", "--dist", "exponential:beta=1",
            "--theta", "0.2", "--h", "0.01", "--umax", "0.5"])
        assert res.exit_code == 0
        text = out.read_text()
        assert text.startswith("u,psi,survival,method,h,extra\n")
        assert "\r" not in text

    def test_report_point_beyond_umax(self, runner):
        res = runner.invoke(main, [
            "solve", "--dist", "exponential:beta=1", "--theta", "0.2",
            "--h", "0.01", "--umax", "1", "--report", "0.5,1.75"])
        assert res.exit_code == 2
        assert "1.75" in res.output

    def test_method_distribution_mismatch(self, runner):
        res = runner.invoke(main, [
            "solve", "--dist", "pareto:m=1", "--theta", "1.0",
            "--method", "tsrk4-g", "--h", "0.01", "--umax", "1"])
        assert res.exit_code == 2

    def test_unstable_theta(self, runner):
        res = runner.invoke(main, [
            "solve", "--dist", "exponential:beta=1", "--theta", "-0.5",
            "--h", "0.01", "--umax", "1"])
        assert res.exit_code == 2

    def test_tsrk6_requires_table(self, runner):
        res = runner.invoke(main, [
            "solve", "--dist", "gamma2:beta=2.4", "--theta", "0.2",
            "--method", "tsrk6-g", "--h", "0.01", "--umax", "1"])
        assert res.exit_code == 2

    def test_tsrk6_with_packaged_table(self, runner):
        res = runner.invoke(main, [
            "solve", "--dist", "gamma2:beta=2.4", "--theta", "0.2",
            "--method", "tsrk6-g", "--h", "0.01", "--umax", "1",
            "--m2-coefficients", M2_PATH, "--report", "1"])
        assert res.exit_code == 0
        psi = float(res.output.strip().split("\n")[1].split(",")[1])
        model = ModelParams(theta=0.2, claims=Gamma2(2.4))
        from ruinrk import exact_gamma2
        assert psi == pytest.approx(exact_gamma2(model, 1.0), abs=1e-9)

    def test_phl_solve(self, runner):
        res = runner.invoke(main, [
            "solve", "--dist", "pareto:m=1", "--theta", "1.0",
            "--method", "tsrk4-phl", "--h", "0.01", "--umax", "2",
            "--report", "2"])
        assert res.exit_code == 0
        row = res.output.strip().split("\n")[1]
        assert "scheme=pareto-phl;q=2" in row


class TestTableCommand:
    def test_table1_passes(self, runner):
        res = runner.invoke(main, ["--quiet", "table", "1"])
        assert res.exit_code == 0

    def test_table_reports_checks(self, runner):
        res = runner.invoke(main, ["table", "1"])
        assert res.exit_code == 0
        assert "[ok]" in res.output
        assert "FAIL" not in res.output


class TestConvergeCommand:
    def test_single_step_size_rejected(self, runner):
        res = runner.invoke(main, [
            "converge", "--dist", "exponential:beta=1", "--theta", "0.2",
            "--method", "rk4-s13", "--h-list", "0.02"])
        assert res.exit_code == 2

    def test_tsrk_gamma_passes_order_floor(self, runner):
        res = runner.invoke(main, [
            "converge", "--dist", "gamma2:beta=2.4", "--theta", "0.2",
            "--method", "tsrk4-g", "--h-list", "0.02,0.01,0.005"])
        assert res.exit_code == 0
        assert "final order estimate" in res.output

    def test_rk4_order_three_fails_floor(self, runner):
        # the one-step scheme measures at order ~3; the command must
        # report the failed floor with exit code 4
        res = runner.invoke(main, [
            "converge", "--dist", "exponential:beta=1", "--theta", "0.2",
            "--method", "rk4-s13", "--h-list", "0.02,0.01,0.005",
            "--umax", "5"])
        assert res.exit_code == 4
        assert "below floor" in res.output


class TestMcCheckCommand:
    def test_zero_paths_rejected(self, runner):
        res = runner.invoke(main, [
            "mc-check", "--dist", "exponential:beta=1", "--theta", "0.2",
            "--u", "1", "--n-paths", "0"])
        assert res.exit_code == 2

    def test_exponential_sanity(self, runner):
        res = runner.invoke(main, [
            "mc-check", "--dist", "exponential:beta=1", "--theta", "0.2",
            "--u", "1", "--n-paths", "50000", "--horizon-start", "200",
            "--seed", "5"])
        assert res.exit_code == 0, res.output
        assert "DISAGREE" not in res.output


class TestExitCodeContract:
    def test_internal_errors_map_to_solver_failure(self, monkeypatch):
        import ruinrk.cli as cli_mod

        def boom(*a, **k):
            raise RuntimeError("blew up")

        monkeypatch.setattr(cli_mod, "solve_rk4", boom)
        with pytest.raises(SystemExit) as exc:
            run(["solve", "--dist", "exponential:beta=1", "--theta", "0.2",
                 "--h", "0.01", "--umax", "1"])
        assert exc.value.code == 3
