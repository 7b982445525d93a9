"""End-to-end command line tests: exit codes, emitted files, and the
report/stdout contract, all driven through main() in process."""

import json

import pytest

from psis.cli import _sweep_paths, main


def write_config(tmp_path, data, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def chain_data(**overrides):
    data = {
        "run_id": "chain2",
        "plant": {"type": "chain", "n": 2},
        "synthesis": {
            "c": 0.0,
            "T_p": 1.0,
            "stages": [
                {"kind": "linear", "eta": 3.0},
                {"kind": "linear", "eta": 2.0},
            ],
        },
        "sim": {"x0": [1.0, 0.0], "rtol": 1e-7, "atol": 1e-10},
    }
    data.update(overrides)
    return data


def pendulum_data(**overrides):
    data = {
        "run_id": "pend",
        "plant": {"type": "pendulum"},
        "synthesis": {
            "c": 0.15,
            "T_p": 0.5,
            "stages": [
                {"kind": "linear", "eta": 3.0},
                {"kind": "linear", "eta": 2.0},
            ],
        },
        "sim": {"x0": [0.09, 0.1]},
    }
    data.update(overrides)
    return data


class TestSynthesize:
    def test_prints_expressions_and_exits_zero(self, tmp_path, capsys):
        cfg = write_config(tmp_path, chain_data())
        assert main(["synthesize", "--config", cfg]) == 0
        text = capsys.readouterr().out
        assert "prescribed instant T_p=1" in text
        assert "u = " in text
        assert "z1 = " in text

    def test_writes_no_files(self, tmp_path):
        cfg = write_config(tmp_path, chain_data())
        main(["synthesize", "--config", cfg])
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {"exp.json"}


class TestSimulate:
    def test_writes_csv_svg_report(self, tmp_path, capsys):
        cfg = write_config(tmp_path, chain_data())
        assert main(["simulate", "--config", cfg]) == 0
        for suffix in (".csv", ".svg", ".json"):
            assert (tmp_path / f"chain2{suffix}").exists()
        text = capsys.readouterr().out
        assert "wall time:" in text
        assert text.count("wrote:") == 3

    def test_report_shape_omits_wall_time(self, tmp_path):
        cfg = write_config(tmp_path, chain_data())
        main(["simulate", "--config", cfg])
        report = json.loads((tmp_path / "chain2.json").read_text())
        assert set(report) == {
            "command", "run_id", "config", "integrator", "n_samples", "files",
        }
        assert set(report["integrator"]) == {
            "steps_accepted", "steps_rejected", "rhs_evals",
        }
        assert report["command"] == "simulate"
        assert report["run_id"] == "chain2"
        assert report["integrator"]["steps_accepted"] > 0
        assert report["n_samples"] > 500
        assert report["files"]["csv"] == str(tmp_path / "chain2.csv")
        assert report["config"]["sim"]["mode"] == "direct"

    def test_mode_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path, chain_data())
        assert main(["simulate", "--config", cfg, "--mode", "tau"]) == 0
        report = json.loads((tmp_path / "chain2.json").read_text())
        assert report["config"]["sim"]["mode"] == "tau"

    def test_null_outputs_are_skipped(self, tmp_path, capsys):
        data = chain_data(output={"svg": None, "report": None})
        cfg = write_config(tmp_path, data)
        assert main(["simulate", "--config", cfg]) == 0
        assert (tmp_path / "chain2.csv").exists()
        assert not (tmp_path / "chain2.svg").exists()
        assert not (tmp_path / "chain2.json").exists()
        assert capsys.readouterr().out.count("wrote:") == 1

    def test_no_clobber_refuses_existing(self, tmp_path, capsys):
        cfg = write_config(tmp_path, chain_data())
        (tmp_path / "chain2.csv").write_text("sentinel")
        assert main(["simulate", "--config", cfg, "--no-clobber"]) == 2
        err = capsys.readouterr().err
        assert "configuration error" in err
        assert "chain2.csv" in err
        assert (tmp_path / "chain2.csv").read_text() == "sentinel"

    def test_default_is_overwrite(self, tmp_path):
        cfg = write_config(tmp_path, chain_data())
        (tmp_path / "chain2.csv").write_text("sentinel")
        assert main(["simulate", "--config", cfg]) == 0
        assert (tmp_path / "chain2.csv").read_text() != "sentinel"

    def test_reruns_are_byte_identical_without_timestamp(self, tmp_path):
        cfg = write_config(tmp_path, chain_data())
        argv = ["simulate", "--config", cfg, "--no-timestamp"]
        assert main(argv) == 0
        first = {
            name: (tmp_path / name).read_bytes()
            for name in ("chain2.csv", "chain2.svg", "chain2.json")
        }
        assert main(argv) == 0
        for name, blob in first.items():
            assert (tmp_path / name).read_bytes() == blob


class TestConfigFailures:
    def test_missing_config_file(self, tmp_path, capsys):
        missing = str(tmp_path / "absent.json")
        assert main(["simulate", "--config", missing]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_bad_schema(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"plant": {"type": "chain", "n": 2}})
        assert main(["simulate", "--config", cfg]) == 2
        assert "synthesis" in capsys.readouterr().err

    def test_bad_scales_flag(self, tmp_path, capsys):
        cfg = write_config(tmp_path, chain_data())
        assert main(["sweep", "--config", cfg, "--scales", "a,b"]) == 2
        assert "--scales" in capsys.readouterr().err


class TestIntegrationFailure:
    def test_exit_three_with_partial_csv(self, tmp_path, capsys):
        data = {
            "run_id": "blow",
            "plant": {"type": "chain", "n": 1},
            "synthesis": {
                "c": 0.0,
                "T_p": 1.0,
                "stages": [{"kind": "tan", "eta": 2.0}],
            },
            "sim": {"x0": [1e200], "rtol": 1e-7, "atol": 1e-10},
        }
        cfg = write_config(tmp_path, data)
        assert main(["simulate", "--config", cfg]) == 3
        err = capsys.readouterr().err
        assert "integration failed at t=" in err
        partial = tmp_path / "blow.csv.partial"
        assert str(partial) in err
        lines = partial.read_text().splitlines()
        assert lines[0] == "t,x1,z1,u,V,dV"
        assert len(lines) >= 2
        assert not (tmp_path / "blow.csv").exists()


class TestVerify:
    def test_pendulum_passes(self, tmp_path, capsys):
        cfg = write_config(tmp_path, pendulum_data())
        assert main(["verify", "--config", cfg]) == 0
        text = capsys.readouterr().out
        assert "verdict: pass" in text
        report = json.loads((tmp_path / "pend.json").read_text())
        assert report["command"] == "verify"
        assert report["verdict"] == "pass"
        assert report["settling"]["two_sided"] is True
        assert report["lyapunov"]["violations"] == 0
        assert report["lyapunov"]["worst_residual"] < 1e-4
        assert report["control_vanishing"]["post_all_zero"] is True
        assert report["diagnostics"] == []

    def test_equilibrium_start_is_degenerate_not_a_failure(self, tmp_path, capsys):
        data = chain_data(run_id="eq")
        data["synthesis"]["c"] = 0.15
        data["sim"]["x0"] = [0.15, 0.0]
        cfg = write_config(tmp_path, data)
        assert main(["verify", "--config", cfg]) == 0
        assert "verdict: degenerate" in capsys.readouterr().out

    def test_open_loop_self_test_must_fail(self, tmp_path, capsys):
        data = chain_data(run_id="probe")
        data["sim"]["open_loop"] = True
        cfg = write_config(tmp_path, data)
        assert main(["verify", "--config", cfg]) == 4
        assert "verdict: fail" in capsys.readouterr().out
        report = json.loads((tmp_path / "probe.json").read_text())
        assert report["verdict"] == "fail"
        assert report["settling"]["t_settle"] is None
        assert report["config"]["sim"]["open_loop"] is True

    def test_unresolvable_tolerance_fails_with_diagnostic(self, tmp_path, capsys):
        data = pendulum_data(verify={"tol_abs": 1e-12, "tol_rel": 1e-15})
        data["sim"]["rtol"] = 1e-6
        data["sim"]["atol"] = 1e-9
        cfg = write_config(tmp_path, data)
        assert main(["verify", "--config", cfg]) == 4
        text = capsys.readouterr().out
        assert "diagnostic:" in text
        assert "accuracy" in text
        assert "verdict: fail" in text
        report = json.loads((tmp_path / "pend.json").read_text())
        assert report["verdict"] == "fail"
        assert len(report["diagnostics"]) == 1


class TestSweep:
    def test_paths_derived_from_csv_stem(self):
        summary, per_run = _sweep_paths("/out/run.csv", [0.5, 2.0])
        assert summary == "/out/run.sweep.csv"
        assert per_run == ["/out/run.scale_0.5.csv", "/out/run.scale_2.csv"]

    def test_passing_sweep_writes_everything(self, tmp_path, capsys):
        data = chain_data(verify={"scales": [0.5, 2.0]})
        cfg = write_config(tmp_path, data)
        assert main(["sweep", "--config", cfg]) == 0
        for name in ("chain2.sweep.csv", "chain2.scale_0.5.csv",
                     "chain2.scale_2.csv", "chain2.json"):
            assert (tmp_path / name).exists()
        text = capsys.readouterr().out
        assert "verdict: pass" in text
        assert "spread:" in text
        summary = (tmp_path / "chain2.sweep.csv").read_text().splitlines()
        assert summary[0] == "scale,t_settle,pre_norm_floor,norm_at_Tp,verdict"
        assert len(summary) == 3
        report = json.loads((tmp_path / "chain2.json").read_text())
        assert report["command"] == "sweep"
        assert report["verdict"] == "pass"
        assert [row["scale"] for row in report["rows"]] == [0.5, 2.0]
        assert report["spread"] <= report["spread_bound"]

    def test_scales_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path, chain_data())
        assert main(["sweep", "--config", cfg, "--scales", "0.25,4"]) == 0
        assert (tmp_path / "chain2.scale_0.25.csv").exists()
        assert (tmp_path / "chain2.scale_4.csv").exists()

    def test_tight_spread_bound_fails(self, tmp_path, capsys):
        data = chain_data(verify={"scales": [0.5, 2.0], "spread_bound": 1e-9})
        cfg = write_config(tmp_path, data)
        assert main(["sweep", "--config", cfg]) == 4
        assert "verdict: fail" in capsys.readouterr().out

    def test_error_row_fails_the_sweep(self, tmp_path, capsys):
        data = {
            "run_id": "mix",
            "plant": {"type": "chain", "n": 1},
            "synthesis": {
                "c": 0.0,
                "T_p": 1.0,
                "stages": [{"kind": "tan", "eta": 2.0}],
            },
            "sim": {"x0": [1.0], "rtol": 1e-7, "atol": 1e-10},
            "verify": {"scales": [1.0, 1e200]},
        }
        cfg = write_config(tmp_path, data)
        assert main(["sweep", "--config", cfg]) == 4
        text = capsys.readouterr().out
        assert "error DivergenceError" in text
        report = json.loads((tmp_path / "mix.json").read_text())
        assert report["rows"][1]["error"].startswith("DivergenceError")
        # the failed scale still leaves the good run's trajectory on disk
        assert (tmp_path / "mix.scale_1.csv").exists()
        assert not (tmp_path / "mix.scale_1e+200.csv").exists()

    def test_sweep_requires_a_csv_path(self, tmp_path, capsys):
        data = chain_data(output={"csv": None})
        cfg = write_config(tmp_path, data)
        assert main(["sweep", "--config", cfg]) == 2
        assert "output.csv" in capsys.readouterr().err
