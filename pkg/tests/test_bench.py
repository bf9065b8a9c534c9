import json
import math

import numpy as np
import pytest

import nashdyn as nd
from nashdyn import bench
from nashdyn.errors import ConfigError


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def toy_sweep_doc(tmp_path, **overrides):
    doc = {
        "problem": {"kind": "toy2d"},
        "algorithms": ["second", "dnd"],
        "init": {"mode": "uniform_box", "lo": [-5.0, -5.0], "hi": [5.0, 5.0], "count": 12},
        "seed": 7,
        "solver": {"alpha": 0.5, "max_iters": 400},
        "output": {},
    }
    doc.update(overrides)
    return doc


class TestConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            bench.load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            bench.load_config(path)

    def test_missing_problem_key(self, tmp_path):
        with pytest.raises(ConfigError, match="'<root>.problem'"):
            bench.load_config(write_config(tmp_path, {"init": {"mode": "fixed", "z0": [1, 1]}}))

    def test_malformed_numeric_field(self, tmp_path):
        doc = toy_sweep_doc(tmp_path, solver={"alpha": "fast"})
        with pytest.raises(ConfigError, match="solver"):
            bench.load_config(write_config(tmp_path, doc))

    def test_unknown_solver_key(self, tmp_path):
        doc = toy_sweep_doc(tmp_path, solver={"alfa": 0.5})
        with pytest.raises(ConfigError, match="solver.alfa"):
            bench.load_config(write_config(tmp_path, doc))

    def test_bad_algorithm_name(self, tmp_path):
        doc = toy_sweep_doc(tmp_path, algorithms=["sgd"])
        with pytest.raises(ConfigError, match="sgd"):
            bench.load_config(write_config(tmp_path, doc))

    def test_constrained_algorithms_restricted(self, tmp_path):
        doc = toy_sweep_doc(
            tmp_path,
            algorithms=["gda"],
            constraint={"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
        )
        with pytest.raises(ConfigError, match="gda"):
            bench.load_config(write_config(tmp_path, doc))

    def test_nested_solver_sections(self, tmp_path):
        doc = toy_sweep_doc(
            tmp_path,
            solver={
                "alpha": 0.25,
                "reg": {"b_x": 0.75, "b_y": -0.75, "lambda0": 2.0, "delta0": 1e-4},
                "lss": {"xi1": 1e-3, "xi2": 1e-3, "gamma1": 1e-3, "gamma2": 1e-4,
                        "lambda_sign_corrected": False},
            },
        )
        cfg = bench.load_config(write_config(tmp_path, doc))
        assert cfg.solver.alpha == 0.25
        assert cfg.solver.reg.lambda0 == 2.0
        assert not cfg.solver.lss.lambda_sign_corrected

    def test_init_box_validation(self, tmp_path):
        doc = toy_sweep_doc(
            tmp_path, init={"mode": "uniform_box", "lo": [1, 1], "hi": [0, 0], "count": 3}
        )
        with pytest.raises(ConfigError, match="lo < hi"):
            bench.load_config(write_config(tmp_path, doc))


class TestInitialPoints:
    def test_fixed_mode(self, tmp_path):
        doc = toy_sweep_doc(tmp_path, init={"mode": "fixed", "z0": [1.0, -2.0]})
        cfg = bench.load_config(write_config(tmp_path, doc))
        pts = bench.initial_points(cfg, 2)
        assert pts.shape == (1, 2)
        assert pts[0] == pytest.approx([1.0, -2.0])

    def test_counter_derived_points_are_deterministic(self, tmp_path):
        cfg = bench.load_config(write_config(tmp_path, toy_sweep_doc(tmp_path)))
        a = bench.initial_points(cfg, 2)
        b = bench.initial_points(cfg, 2)
        assert np.array_equal(a, b)
        assert bench.points_hash(a) == bench.points_hash(b)
        # run i depends only on (seed, i), not on the count
        cfg.init["count"] = 5
        c = bench.initial_points(cfg, 2)
        assert np.array_equal(a[:5], c)

    def test_points_within_box(self, tmp_path):
        cfg = bench.load_config(write_config(tmp_path, toy_sweep_doc(tmp_path)))
        pts = bench.initial_points(cfg, 2)
        assert np.all(pts >= -5.0) and np.all(pts <= 5.0)


class TestTraceCsv:
    def test_round_trip_full_precision(self, tmp_path, saddle):
        cfg = nd.SolverConfig(alpha=0.5, max_iters=200)
        tr = nd.run("dnd", saddle, [1.0, 1.0], cfg)
        path = tmp_path / "trace.csv"
        bench.emit_trace_csv(tr, path)
        data = bench.parse_trace_csv(path)
        assert data["status"] == "Converged"
        assert data["k"][-1] == tr.iterations()
        for i, s in enumerate(tr.steps):
            assert np.array_equal(data["z"][i], s.z)  # 17 digits round-trip exactly
            assert data["omega_norm"][i] == s.omega_norm

    def test_single_row_trace(self, tmp_path, saddle):
        tr = nd.integrate_euler(saddle, [1.0, 1.0], 0.1, 0, nd.RegularizerParams())
        path = tmp_path / "euler.csv"
        bench.emit_trace_csv(tr, path)
        data = bench.parse_trace_csv(path)
        assert len(data["k"]) == 1

    def test_header_schema(self, tmp_path, saddle):
        tr = nd.run("dnd", saddle, [1.0, 1.0], nd.SolverConfig(alpha=0.5, max_iters=5))
        path = tmp_path / "t.csv"
        bench.emit_trace_csv(tr, path)
        header = path.read_text().splitlines()[0]
        assert header == "k,mode,alpha,omega_norm,merit,z_0,z_1"
        assert path.read_text().splitlines()[-1].startswith("# status:")

    def test_bilinear_omega_halves_per_row(self, tmp_path, bilinear1):
        cfg = nd.SolverConfig(
            alpha=0.5, tol=1e-300, max_iters=15, epsilon_switch=1e-300,
            line_search=False, gn_lambda0=0.0,
        )
        tr = nd.run("second", bilinear1, [1.0, 1.0], cfg)
        path = tmp_path / "bil.csv"
        bench.emit_trace_csv(tr, path)
        w = bench.parse_trace_csv(path)["omega_norm"]
        for a, b in zip(w[:-1], w[1:]):
            assert b == pytest.approx(0.5 * a, rel=1e-12)


class TestSweep:
    def test_counts_verdicts_and_pairing(self, tmp_path):
        cfg = bench.load_config(write_config(tmp_path, toy_sweep_doc(tmp_path)))
        summary = bench.sweep(cfg)
        assert summary.reference_algorithm == "second"
        for algo, entry in summary.per_algorithm.items():
            total = (
                entry["n_converged"] + entry["n_diverged"] + entry["n_maxiter"] + entry["n_error"]
            )
            assert total == entry["n_runs"] == 12
            for rec in entry["runs"]:
                if rec["status"] == "Converged":
                    assert rec["verdict"] is not None
                    assert rec["report"] is not None
                    assert rec["cluster"] is not None
            for cluster in entry["clusters"]:
                assert cluster["verdict"] is not None
        diffs = summary.per_algorithm["dnd"]["iteration_diffs_vs_reference"]
        assert len(diffs) == 12

    def test_determinism_modulo_timestamp(self, tmp_path):
        cfg = bench.load_config(write_config(tmp_path, toy_sweep_doc(tmp_path)))
        a = bench.sweep(cfg).to_json_dict()
        b = bench.sweep(cfg).to_json_dict()
        a.pop("created_at")
        b.pop("created_at")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_parallel_matches_serial(self, tmp_path):
        doc = toy_sweep_doc(tmp_path)
        doc["init"]["count"] = 6
        cfg = bench.load_config(write_config(tmp_path, doc))
        serial = bench.sweep(cfg).to_json_dict()
        cfg.n_jobs = 2
        parallel = bench.sweep(cfg).to_json_dict()
        serial.pop("created_at")
        parallel.pop("created_at")
        assert json.dumps(serial, sort_keys=True) == json.dumps(parallel, sort_keys=True)

    def test_pairing_hash_algorithm_independent(self, tmp_path):
        doc_a = toy_sweep_doc(tmp_path, algorithms=["dnd"])
        doc_b = toy_sweep_doc(tmp_path, algorithms=["gda"], solver={"alpha": 0.01})
        ha = bench.sweep(bench.load_config(write_config(tmp_path, doc_a, "a.json")))
        hb = bench.sweep(bench.load_config(write_config(tmp_path, doc_b, "b.json")))
        assert ha.initial_points_hash == hb.initial_points_hash

    def test_single_fixed_init_degenerates_to_one_trace(self, tmp_path):
        doc = toy_sweep_doc(
            tmp_path, algorithms=["second"], init={"mode": "fixed", "z0": [-9.0, -12.0]}
        )
        summary = bench.sweep(bench.load_config(write_config(tmp_path, doc)))
        entry = summary.per_algorithm["second"]
        assert entry["n_runs"] == 1
        assert summary.n_runs == 1

    def test_run_failures_recorded_not_raised(self, tmp_path):
        # qre evaluated unconstrained walks off the entropy domain
        doc = {
            "problem": {"kind": "qre", "A": [[1.0, 0.0], [0.0, 1.0]]},
            "algorithms": ["gda"],
            "init": {"mode": "uniform_box", "lo": [0.01, 0.01, 0.01, 0.01],
                     "hi": [1.0, 1.0, 1.0, 1.0], "count": 8},
            "seed": 3,
            "solver": {"alpha": 1.0, "max_iters": 300},
        }
        summary = bench.sweep(bench.load_config(write_config(tmp_path, doc)))
        entry = summary.per_algorithm["gda"]
        assert entry["n_runs"] == 8  # nothing aborted the sweep


class TestRunExperiment:
    def test_missing_file_exit_2(self, tmp_path, capsys):
        assert bench.run_experiment(tmp_path / "absent.json") == 2
        assert "absent.json" in capsys.readouterr().err

    def test_malformed_field_exit_2(self, tmp_path, capsys):
        path = write_config(tmp_path, toy_sweep_doc(tmp_path, solver={"alpha": "x"}))
        assert bench.run_experiment(path) == 2

    def test_qre_experiment(self, tmp_path):
        doc = {
            "problem": {"kind": "qre", "A": [[1.0, 0.0], [0.0, 1.0]]},
            "constraint": {
                "kind": "product",
                "factors": [{"kind": "simplex", "dim": 2}, {"kind": "simplex", "dim": 2}],
            },
            "algorithms": ["second"],
            "init": {"mode": "fixed", "z0": [0.1, 0.9, 0.9, 0.1]},
            "seed": 0,
            "solver": {"alpha": 0.05, "tol": 1e-6, "max_iters": 15000},
            "output": {
                "trace_dir": str(tmp_path / "traces"),
                "summary_path": str(tmp_path / "summary.json"),
                "plot_data_path": str(tmp_path / "plot.csv"),
            },
        }
        assert bench.run_experiment(write_config(tmp_path, doc)) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        runs = summary["per_algorithm"]["second"]["runs"]
        assert runs[0]["status"] == "Converged"
        assert np.allclose(runs[0]["final"], 0.5, atol=1e-4)
        trace = bench.parse_trace_csv(tmp_path / "traces" / "trace_second_00000.csv")
        assert trace["status"] == "Converged"
        # 4-d problem: plot data is residual vs iteration
        header = (tmp_path / "plot.csv").read_text().splitlines()[0]
        assert header == "k,omega_norm"

    def test_constrained_toy_experiment_shows_boundary_contact(self, tmp_path):
        doc = {
            "problem": {"kind": "toy2d"},
            "constraint": {"kind": "ball", "center": [-5.0, -10.5], "radius": 5.0},
            "algorithms": ["second-constrained"],
            "init": {"mode": "fixed", "z0": [-5.0, -15.25]},
            "seed": 0,
            "solver": {"alpha": 0.5, "tol": 1e-6, "max_iters": 8000},
            "output": {
                "trace_dir": str(tmp_path / "traces"),
                "plot_data_path": str(tmp_path / "plot.csv"),
            },
        }
        assert bench.run_experiment(write_config(tmp_path, doc)) == 0
        trace = bench.parse_trace_csv(tmp_path / "traces" / "trace_second-constrained_00000.csv")
        assert trace["status"] == "Converged"
        assert "BOUNDARY" in trace["mode"]
        # 2-d problem: plot data carries the iterate coordinates
        header = (tmp_path / "plot.csv").read_text().splitlines()[0]
        assert header == "k,z_0,z_1"


class TestCli:
    def test_solve_and_classify_and_rate(self, tmp_path, capsys):
        doc = {
            "problem": {"kind": "bilinear", "A": [[1.0]]},
            "algorithms": ["second"],
            "init": {"mode": "fixed", "z0": [1.0, 1.0]},
            "seed": 0,
            "solver": {
                "alpha": 0.5, "tol": 1e-5, "max_iters": 100, "epsilon_switch": 1e-7,
                "line_search": False, "gn_lambda0": 0.0,
            },
            "output": {},
        }
        cfg_path = write_config(tmp_path, doc)
        out_dir = tmp_path / "out"
        assert bench.main(["solve", "--config", str(cfg_path), "--out", str(out_dir)]) == 0
        printed = capsys.readouterr().out
        assert "Converged after 18 iterations" in printed

        assert bench.main(["classify", "--config", str(cfg_path), "--point", "0,0"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["verdict"] == "NonNashCritical"  # bilinear saddle is not strict

        trace_path = out_dir / "trace_second_00000.csv"
        assert bench.main(
            ["rate", "--trace", str(trace_path), "--zstar", "0,0", "--tail", "12"]
        ) == 0
        est = json.loads(capsys.readouterr().out)
        assert est["order"] == "linear"
        assert est["factor"] == pytest.approx(0.5, rel=1e-6)

    def test_sweep_cli_overrides(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, toy_sweep_doc(tmp_path))
        out = tmp_path / "sum.json"
        code = bench.main(
            ["sweep", "--config", str(cfg_path), "--count", "4", "--seed", "11",
             "--out", str(out)]
        )
        assert code == 0
        summary = json.loads(out.read_text())
        assert summary["n_runs"] == 4

    def test_config_error_exit_code(self, tmp_path, capsys):
        assert bench.main(["solve", "--config", str(tmp_path / "missing.json")]) == 2

    def test_x0_override(self, tmp_path, capsys):
        doc = toy_sweep_doc(tmp_path, algorithms=["dnd"])
        cfg_path = write_config(tmp_path, doc)
        code = bench.main(
            ["solve", "--config", str(cfg_path), "--algo", "dnd", "--x0=-9.0,-12.0"]
        )
        assert code == 0
        assert "dnd:" in capsys.readouterr().out
