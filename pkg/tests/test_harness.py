"""Tests for the sweep runner, manufactured loads, table rendering, and CLI."""

import csv
import io
import json
import os

import numpy as np
import pytest

from porofem import cli
from porofem.harness import (
    COLUMNS,
    SweepConfig,
    build_case_system,
    emit_table,
    manufactured_rhs,
    run_sweep,
)
from porofem.krylov import minres


def small_sweep(**overrides):
    fields = dict(
        case="1",
        N_list=[4],
        lambda_list=[1.0, 1e4],
        alpha_list=[1.0],
        kappa_list=[1.0, 1e-8],
    )
    fields.update(overrides)
    return SweepConfig(**fields)


def strip_timing(rows):
    return [{k: v for k, v in row.items() if k != "wall_time_ms"} for row in rows]


class TestManufacturedRhs:
    def test_seed_zero_bit_identical(self):
        system = build_case_system("1", 4)
        a = manufactured_rhs(system, 0)
        b = manufactured_rhs(system, 0)
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("case", ["1", "2", "4", "ex1", "ex2a", "ex3"])
    def test_unit_preconditioner_norm(self, case):
        system = build_case_system(case, 4)
        rhs = manufactured_rhs(system, 0)
        assert abs(rhs @ system.precond(rhs) - 1.0) <= 1e-10

    def test_random_seed_unit_norm_and_distinct(self):
        system = build_case_system("1", 4)
        smooth = manufactured_rhs(system, 0)
        random_a = manufactured_rhs(system, 3)
        random_b = manufactured_rhs(system, 3)
        assert abs(random_a @ system.precond(random_a) - 1.0) <= 1e-10
        assert random_a.tobytes() == random_b.tobytes()
        assert np.linalg.norm(random_a - smooth) > 1e-3

    def test_zero_rhs_solves_in_zero_iterations(self):
        system = build_case_system("1", 4)
        x, report = minres(
            system.mat, system.precond, np.zeros(system.n), rtol=1e-6, max_iter=50
        )
        assert report.iterations == 0
        assert report.converged
        assert np.all(x == 0.0)

    def test_constrained_coordinates_vanish(self):
        system = build_case_system("2", 4)
        rhs = manufactured_rhs(system, 0)
        assert np.all(rhs[system.free_mask == 0.0] == 0.0)

    def test_null_components_projected_out(self):
        system = build_case_system("ex1", 4)
        rhs = manufactured_rhs(system, 0)
        for null in system.null_vectors:
            assert abs(null @ rhs) <= 1e-12


class TestSweepConfig:
    def test_empty_axis_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            small_sweep(N_list=[])

    def test_unknown_case_rejected(self):
        with pytest.raises(ValueError, match="unknown case"):
            small_sweep(case="5")

    def test_unswept_axis_must_stay_scalar(self):
        with pytest.raises(ValueError, match="does not sweep"):
            small_sweep(case="ex1", lambda_list=[1.0, 10.0], kappa_list=[1.0])

    def test_band_kappa_rejected_for_stokes_case(self):
        with pytest.raises(ValueError, match="constant kappa"):
            small_sweep(
                case="ex1",
                lambda_list=[1.0],
                kappa_list=[("band", 1e-2)],
            )

    def test_out_of_range_needs_override(self):
        with pytest.raises(ValueError, match="allow_out_of_range"):
            small_sweep(lambda_list=[0.5])
        config = small_sweep(lambda_list=[0.5], allow_out_of_range=True)
        assert config.lambda_list == [0.5]

    def test_alpha_and_kappa_ranges_gate(self):
        with pytest.raises(ValueError, match="alpha"):
            small_sweep(alpha_list=[2.0])
        with pytest.raises(ValueError, match="kappa"):
            small_sweep(kappa_list=[10.0])

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ValueError, match="unknown config fields: color"):
            SweepConfig.from_dict({"case": "1", "N_list": [4], "color": "red"})

    def test_from_dict_requires_case_and_N(self):
        with pytest.raises(ValueError, match="case"):
            SweepConfig.from_dict({"N_list": [4]})

    def test_grid_order(self):
        config = small_sweep(N_list=[4, 8])
        grid = config.grid()
        assert len(grid) == 2 * 2 * 1 * 2
        assert grid[0] == (4, 1.0, 1.0, (1.0, False))
        # kappa varies fastest, N slowest
        assert grid[1] == (4, 1.0, 1.0, (1e-8, False))
        assert grid[-1] == (8, 1e4, 1.0, (1e-8, False))

    def test_band_entry_normalized(self):
        config = small_sweep(kappa_list=[("band", 1e-2)])
        assert config.kappa_list == [(1e-2, True)]


class TestRunSweep:
    def test_row_per_point_in_grid_order(self):
        config = small_sweep()
        rows = run_sweep(config)
        assert len(rows) == len(config.grid())
        coords = [(r["N"], r["lam"], r["alpha"], r["kappa"]) for r in rows]
        expected = [(N, lam, a, k) for N, lam, a, (k, _) in config.grid()]
        assert coords == expected
        assert all(set(row) == set(COLUMNS) for row in rows)

    def test_deterministic_up_to_timing(self):
        config = small_sweep(estimate_cond=True)
        assert strip_timing(run_sweep(config)) == strip_timing(run_sweep(config))

    def test_workers_match_serial(self):
        serial = run_sweep(small_sweep())
        parallel = run_sweep(small_sweep(workers=4))
        assert strip_timing(serial) == strip_timing(parallel)

    def test_row_invariants(self):
        config = small_sweep(estimate_cond=True)
        for row in run_sweep(config):
            assert row["error"] is None
            assert row["converged"]
            assert row["iterations"] <= config.max_iter
            assert row["cond_estimate"] >= 1.0
            assert row["dof_count"] == build_case_system("1", row["N"]).n
            assert row["wall_time_ms"] > 0.0

    def test_failure_recorded_per_row(self, monkeypatch):
        import porofem.harness as harness

        original = harness.build_case_system

        def flaky(case, N, lam=1.0, alpha=1.0, kappa=1.0, kappa_band=False):
            if lam == 1e4:
                raise RuntimeError("synthetic failure")
            return original(case, N, lam, alpha, kappa, kappa_band)

        monkeypatch.setattr(harness, "build_case_system", flaky)
        rows = run_sweep(small_sweep())
        failed = [r for r in rows if r["error"] is not None]
        assert len(failed) == 2
        assert all("synthetic failure" in r["error"] for r in failed)
        assert all(not r["converged"] for r in failed)
        assert all(r["error"] is None for r in rows if r["lam"] == 1.0)

    def test_nonconvergence_flagged(self):
        rows = run_sweep(small_sweep(max_iter=2))
        assert all(not row["converged"] for row in rows)
        assert all(row["iterations"] == 2 for row in rows)

    def test_band_sweep_runs(self):
        config = SweepConfig(
            "1", [4], [1e4], [1.0], [("band", 1e-4)], estimate_cond=True
        )
        (row,) = run_sweep(config)
        assert row["kappa_band"] is True
        assert row["converged"]
        assert 1.0 <= row["cond_estimate"] <= 30.0


class TestEmitTable:
    def rows(self):
        return run_sweep(small_sweep())

    def test_flat_csv_header_and_records(self):
        rows = self.rows()[:2]
        text = emit_table(rows, format="csv", layout="Flat")
        parsed = list(csv.reader(io.StringIO(text)))
        assert parsed[0] == list(COLUMNS)
        assert len(parsed) == 3

    def test_json_round_trip(self):
        rows = self.rows()
        assert json.loads(emit_table(rows, format="json")) == rows

    def test_unknown_layout_and_format(self):
        with pytest.raises(ValueError, match="unknown layout"):
            emit_table([], layout="Table99")
        with pytest.raises(ValueError, match="unknown format"):
            emit_table([], format="xml")

    def test_full_grid_markdown_shape(self):
        config = SweepConfig(
            case="1",
            N_list=[2, 3, 4],
            lambda_list=[1.0, 1e4, 1e8],
            alpha_list=[1.0, 1e-2, 1e-4],
            kappa_list=[1.0, 1e-4, 1e-8, 1e-12],
        )
        rows = run_sweep(config)
        text = emit_table(rows, format="md", layout="Table6")
        lines = text.strip().split("\n")
        # header + separator + 27 body rows
        assert len(lines) == 2 + 27
        header = [c.strip() for c in lines[0].strip("|").split("|")]
        assert header[:3] == ["N", "lam", "alpha"]
        assert len(header) == 3 + 4
        body = [line.strip("|").split("|") for line in lines[2:]]
        assert all(len(cells) == 7 for cells in body)

    def test_nested_labels_blank_repeats(self):
        rows = run_sweep(small_sweep(alpha_list=[1.0, 1e-2], kappa_list=[1.0]))
        text = emit_table(rows, format="md", layout="Table6")
        body = text.strip().split("\n")[2:]
        labels = [
            [c.strip() for c in line.strip("|").split("|")][:3] for line in body
        ]
        assert labels[0] == ["4", "1", "1"]
        # same N and lam as the row above: only alpha is printed
        assert labels[1] == ["", "", "0.01"]
        # new lam group: lam and alpha reappear, N stays blank
        assert labels[2] == ["", "10000", "1"]

    def test_missing_cells_render_dash(self):
        rows = [r for r in self.rows() if r["kappa"] == 1.0]
        text = emit_table(rows, format="md", layout="Table6")
        assert "—" not in text
        partial = emit_table(
            rows + [dict(rows[0], lam=1e8, kappa=1e-8)], format="md", layout="Table6"
        )
        assert "—" in partial

    def test_iteration_only_layout(self):
        rows = run_sweep(small_sweep(estimate_cond=True))
        with_cond = emit_table(rows, format="md", layout="Table6")
        iters_only = emit_table(rows, format="md", layout="Table7")
        assert "(" in with_cond
        assert "(" not in iters_only.split("\n", 2)[2]

    def test_condition_layout(self):
        rows = run_sweep(small_sweep(estimate_cond=True, lambda_list=[1.0]))
        text = emit_table(rows, format="md", layout="Table1")
        header = text.split("\n", 1)[0]
        assert "kappa=1" in header and "kappa=1e-08" in header

    def test_unconverged_and_error_markers(self):
        rows = run_sweep(small_sweep(max_iter=2))
        assert "2* " in emit_table(rows, format="md", layout="Table6")
        rows[0]["error"] = "RuntimeError: boom"
        assert "err" in emit_table(rows, format="md", layout="Table6")

    def test_band_layout_uses_alpha_over_lambda(self):
        config = SweepConfig("1", [4], [1.0, 1e4], [1.0], [("band", 1e-2)])
        rows = run_sweep(config)
        text = emit_table(rows, format="md", layout="Table8")
        header = [c.strip() for c in text.split("\n")[0].strip("|").split("|")]
        assert header[:3] == ["N", "alpha", "lam"]


class TestCli:
    def test_check_command_passes(self, capsys):
        assert cli.main(["check"]) == 0
        out = capsys.readouterr().out
        lines = [l for l in out.strip().split("\n")]
        assert len(lines) == 7
        assert all(l.startswith("PASS") for l in lines)

    def test_table_writes_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = cli.main(
            [
                "table", "--case", "1", "--N", "4",
                "--lambda", "1", "--alpha", "1", "--kappa", "1",
                "--format", "csv", "--out", str(out),
            ]
        )
        assert code == 0
        parsed = list(csv.reader(out.open()))
        assert parsed[0] == list(COLUMNS)
        assert len(parsed) == 2

    def test_table_exit_two_on_nonconvergence(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = cli.main(
            [
                "table", "--case", "1", "--N", "4",
                "--lambda", "1", "--alpha", "1", "--kappa", "1",
                "--max-iter", "2", "--format", "csv", "--out", str(out),
            ]
        )
        assert code == 2

    def test_invalid_arguments_exit_one(self, capsys):
        assert cli.main(["table", "--case", "1", "--N", "0"]) == 1
        assert cli.main(["table", "--N", "4"]) == 1
        assert cli.main(["table", "--case", "1", "--format", "xml"]) == 1
        assert "error" in capsys.readouterr().err

    def test_config_file_with_cli_override(self, tmp_path, capsys):
        config = tmp_path / "sweep.json"
        config.write_text(
            json.dumps(
                {
                    "case": "1",
                    "N_list": [8],
                    "lambda_list": [1.0],
                    "alpha_list": [1.0],
                    "kappa_list": [1.0],
                }
            )
        )
        code = cli.main(
            ["table", "--config", str(config), "--N", "4", "--format", "json"]
        )
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert [row["N"] for row in rows] == [4]

    def test_config_file_unknown_field_exit_one(self, tmp_path, capsys):
        config = tmp_path / "sweep.json"
        config.write_text(json.dumps({"case": "1", "N_list": [4], "colour": 3}))
        assert cli.main(["table", "--config", str(config)]) == 1
        assert "unknown config fields" in capsys.readouterr().err

    def test_kappa_band_flag_maps_to_band_entries(self, capsys):
        code = cli.main(
            [
                "table", "--case", "1", "--N", "4", "--lambda", "1",
                "--alpha", "1", "--kappa-band", "0.01", "--format", "json",
            ]
        )
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["kappa_band"] is True
        assert rows[0]["kappa"] == 0.01

    def test_dump_command_writes_bundle(self, tmp_path, capsys):
        out_dir = tmp_path / "bundle"
        code = cli.main(
            ["dump", "--case", "2", "--N", "4", "--out-dir", str(out_dir)]
        )
        assert code == 0
        names = sorted(os.listdir(out_dir))
        assert "mat.mtx" in names
        assert "manifest.json" in names
        assert "rhs.txt" in names
        assert any(name.startswith("block_") for name in names)
        manifest = json.loads((out_dir / "manifest.json").read_text())
        rhs = np.loadtxt(out_dir / "rhs.txt")
        assert manifest["n"] == rhs.size

    def test_missing_subcommand_exit_one(self, capsys):
        assert cli.main([]) == 1
