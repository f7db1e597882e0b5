"""Grid sweeps, boundary extraction and serialization."""

import json

import numpy as np
import pytest

import lqgent.sweep as sweep_mod
from lqgent import (
    FeedbackConfig,
    GridSpec,
    InputError,
    PhysicalParams,
    SweepError,
    SweepSpec,
    entangled_cell_count,
    extract_boundary,
    run_sweep,
    threshold_conditional,
    write_sweep_csv,
    write_sweep_json,
)
from lqgent.sweep import sweep_to_json_dict


def fixed_params(**kw):
    defaults = dict(
        omega0=1.0, g=0.0, gamma=1e-10, gamma_th=0.0025, gamma_ba=0.05,
        eta=1.0, q1=3.0, q2=1.0,
    )
    defaults.update(kw)
    return PhysicalParams(**defaults)


def small_spec(**kw):
    defaults = dict(
        g_over_omega0=GridSpec(-0.245, -0.17, 9),
        eta=GridSpec(0.5, 1.0, 7),
        fixed=fixed_params(),
        fb=FeedbackConfig.independent(0.1),
        cost_kind="epr",
        theta=0.0,
        quantities=("cond_EN", "nu_cond"),
    )
    defaults.update(kw)
    return SweepSpec(**defaults)


class TestGridSpec:
    def test_values(self):
        assert np.allclose(GridSpec(0.0, 1.0, 5).values(), [0, 0.25, 0.5, 0.75, 1.0])
        assert GridSpec(0.3, 0.3, 1).values() == pytest.approx([0.3])

    def test_validation(self):
        with pytest.raises(InputError):
            GridSpec(0.0, 1.0, 0)
        with pytest.raises(InputError):
            GridSpec(1.0, 0.0, 3)


class TestSweepSpec:
    def test_stability_margin_enforced(self):
        with pytest.raises(InputError):
            small_spec(g_over_omega0=GridSpec(-0.25, 0.0, 5))
        with pytest.raises(InputError):
            small_spec(g_over_omega0=GridSpec(-0.24995, 0.0, 5))

    def test_eta_range_enforced(self):
        with pytest.raises(InputError):
            small_spec(eta=GridSpec(0.0, 1.0, 5))
        with pytest.raises(InputError):
            small_spec(eta=GridSpec(0.5, 1.1, 5))

    def test_unknown_quantity_rejected(self):
        with pytest.raises(InputError):
            small_spec(quantities=("cond_EN", "purity"))


class TestRunSweep:
    def test_conditional_grid_populates(self):
        res = run_sweep(small_spec())
        assert res.data["cond_EN"].shape == (9, 7)
        assert np.all(res.status == "ok")
        assert np.all(np.isfinite(res.data["nu_cond"]))
        assert entangled_cell_count(res) > 0
        assert res.metadata["max_solver_residual"] < 1e-10
        assert res.metadata["cells_ok"] == 63

    def test_determinism(self):
        r1 = run_sweep(small_spec())
        r2 = run_sweep(small_spec())
        assert json.dumps(sweep_to_json_dict(r1)) == json.dumps(sweep_to_json_dict(r2))

    def test_parallel_matches_serial(self):
        spec = small_spec(g_over_omega0=GridSpec(-0.24, -0.18, 4), eta=GridSpec(0.7, 1.0, 3))
        r1 = run_sweep(spec, threads=1)
        r2 = run_sweep(spec, threads=2)
        assert json.dumps(sweep_to_json_dict(r1)) == json.dumps(sweep_to_json_dict(r2))

    def test_monotone_nu_towards_repulsive_edge(self):
        res = run_sweep(small_spec())
        nu = res.data["nu_cond"]
        # g axis ascends from the stability edge, so nu must ascend with it
        for j in range(nu.shape[1]):
            assert np.all(np.diff(nu[:, j]) > 0)

    def test_nesting_of_unconditional_region(self):
        res = run_sweep(
            small_spec(quantities=("cond_EN", "nu_cond", "uncond_EN", "nu_uncond"))
        )
        cond = res.data["cond_EN"] > 0
        uncond = res.data["uncond_EN"] > 0
        assert np.all(~uncond | cond)
        assert np.all(res.data["uncond_EN"] <= res.data["cond_EN"] + 1e-12)

    def test_thresholds_quantity(self):
        res = run_sweep(small_spec(quantities=("cond_EN", "nu_cond", "thresholds")))
        th = res.thresholds
        assert th is not None
        assert th["g_minus"] == pytest.approx(-0.25 + (1 / 16) / 1.05**2)
        expect = 2 * 1.05 * np.sqrt(1 + 4 * res.g_values)
        assert np.allclose(th["eta_minus"], expect)

    def test_all_cells_failed_raises(self, monkeypatch):
        def always_fail(args):
            return {"status": "SolverError", "values": {}, "error": "boom", "residual": 0.0}

        monkeypatch.setattr(sweep_mod, "_eval_cell", always_fail)
        with pytest.raises(SweepError):
            run_sweep(small_spec())

    def test_partial_failure_recorded(self, monkeypatch):
        real = sweep_mod._eval_cell
        target = []

        def flaky(args):
            if not target:
                target.append(True)
                return {"status": "SolverError", "values": {}, "error": "boom", "residual": 0.0}
            return real(args)

        monkeypatch.setattr(sweep_mod, "_eval_cell", flaky)
        res = run_sweep(small_spec())
        assert (res.status == "SolverError").sum() == 1
        assert np.isnan(res.data["cond_EN"][res.status == "SolverError"]).all()
        assert (res.status == "ok").sum() == 62


class TestBoundaryExtraction:
    def test_linear_field_boundary(self):
        g = np.linspace(-1.0, 1.0, 21)
        eta = np.linspace(0.0, 1.0, 5)
        nu = 0.5 + g[:, None] + 0.0 * eta[None, :]
        lines = extract_boundary(g, eta, nu, level=0.5)
        assert len(lines) == 1
        pts = lines[0]
        assert np.allclose(pts[:, 0], 0.0, atol=1e-12)
        assert pts[:, 1].min() == 0.0 and pts[:, 1].max() == 1.0

    def test_no_crossing_no_boundary(self):
        g = np.linspace(0, 1, 5)
        eta = np.linspace(0, 1, 5)
        assert extract_boundary(g, eta, np.full((5, 5), 0.8)) == []

    def test_nan_cells_skipped(self):
        g = np.linspace(-1, 1, 5)
        eta = np.linspace(0, 1, 5)
        nu = 0.5 + g[:, None] + 0.0 * eta[None, :]
        nu[2, 2] = np.nan
        lines = extract_boundary(g, eta, nu)
        assert all(np.all(np.isfinite(line)) for line in lines)

    def test_real_sweep_boundary_close_to_analytic(self):
        res = run_sweep(
            small_spec(
                g_over_omega0=GridSpec(-0.245, -0.18, 40), eta=GridSpec(0.5, 1.0, 40)
            )
        )
        lines = res.boundaries["cond"]
        assert lines
        pts = np.vstack(lines)
        for g_s in (-0.23, -0.21):
            sel = np.abs(pts[:, 0] - g_s) < 0.002
            assert sel.any()
            eta_numeric = pts[sel, 1].mean()
            eta_analytic = 2 * 1.05 * np.sqrt(1 + 4 * g_s)
            assert eta_numeric == pytest.approx(eta_analytic, rel=0.15)


class TestSerialization:
    def test_csv_layout_and_byte_determinism(self, tmp_path):
        res = run_sweep(small_spec(quantities=("cond_EN", "nu_cond", "thresholds")))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_sweep_csv(res, p1)
        write_sweep_csv(res, p2)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert lines[0].startswith("schema_version,1")
        assert lines[1] == "g,eta,quantity,value,status"
        row = lines[2].split(",")
        assert row[2] == "cond_EN" and row[4] == "ok"
        assert float(row[0]) == res.g_values[0]
        assert any(",threshold_eta_minus," in ln for ln in lines)

    def test_json_mirrors_result(self, tmp_path):
        res = run_sweep(small_spec())
        path = tmp_path / "res.json"
        write_sweep_json(res, path)
        doc = json.loads(path.read_text())
        assert doc["schema_version"] == 1
        assert doc["metadata"]["feedback_mode"] == "independent"
        arr = np.asarray(doc["data"]["cond_EN"])
        assert arr.shape == (9, 7)
        assert np.allclose(arr, res.data["cond_EN"], equal_nan=True)
