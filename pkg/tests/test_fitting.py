import json
import math

import numpy as np
import pytest

from phasecoh.errors import DomainError
from phasecoh.fitting import (
    STALL_GRADIENT,
    FitResult,
    fit_r_vs_m,
    fit_surface,
    least_squares_fit,
    surface_params,
    surface_starts,
    svd_separability,
)
from phasecoh.laws import SurfaceParams, r_phenomenological, r_predicted_curve

import oracles

M_GRID = [2 ** k for k in range(13)]
OFFSETS = np.arange(0, 41, 4.0)
WINDOWS = np.arange(4, 101, 4.0)
GOLDEN = SurfaceParams(0.3, 37.0, 0.37, 105.0, 0.02)


def golden_grid(params=GOLDEN):
    tt, TT = np.meshgrid(OFFSETS, WINDOWS, indexing="ij")
    return r_phenomenological(tt, TT, params)


def expo(x, q):
    return q[0] * np.exp(-q[1] * x)


class TestLeastSquares:
    def test_exact_data_from_truth(self):
        x = np.linspace(0, 5, 40)
        res = least_squares_fit(expo, x, expo(x, [2.0, 0.7]), [2.0, 0.7], names=["a", "k"])
        assert res.converged
        assert res.residual_norm == 0.0
        assert res.parameter_estimates == {"a": 2.0, "k": 0.7}

    def test_linear_slope(self):
        x = np.array([1.0, 2.0, 3.0])
        y = 2.5 * x
        res = least_squares_fit(lambda x, q: q[0] * x, x, y, [0.1])
        assert abs(res["p0"] - 2.5) < 1e-12

    def test_against_reference_solver(self):
        rng = np.random.default_rng(3)
        x = np.linspace(-3, 3, 80)

        def peak(x, q):
            return q[0] * np.exp(-0.5 * ((x - q[1]) / q[2]) ** 2) + q[3]

        y = peak(x, [1.5, 0.4, 0.8, 0.1]) + 0.02 * rng.standard_normal(x.size)
        init = [1.0, 0.0, 1.0, 0.0]
        ours = least_squares_fit(peak, x, y, init)
        ref = oracles.reference_fit(peak, x, y, init)
        assert ours.converged
        np.testing.assert_allclose([ours[f"p{i}"] for i in range(4)], ref, rtol=1e-6, atol=1e-9)

    def test_bounded_against_reference_solver(self):
        x = np.linspace(0, 4, 50)
        y = 3.0 * np.exp(-1.2 * x) + 0.05 * np.cos(7 * x)
        b = [(0.0, 2.5), (0.0, None)]
        ours = least_squares_fit(expo, x, y, [1.0, 1.0], bounds=b)
        ref = oracles.reference_fit(expo, x, y, [1.0, 1.0], bounds=b)
        assert ours["p0"] <= 2.5
        np.testing.assert_allclose([ours["p0"], ours["p1"]], ref, rtol=1e-5)

    def test_noisy_exponential_coverage(self):
        # 1% noise, 200 points: the fitted rate should sit within 3 standard errors
        x = np.linspace(0, 5, 200)
        truth = np.array([1.0, 0.8])
        clean = expo(x, truth)
        inside = 0
        for seed in range(100):
            y = clean + 0.01 * np.random.default_rng(seed).standard_normal(x.size)
            res = least_squares_fit(expo, x, y, [0.5, 0.3])
            se = res.standard_errors()["p1"]
            inside += abs(res["p1"] - truth[1]) < 3 * se
        assert inside == 100

    def test_cost_never_increases(self):
        x = np.linspace(0, 5, 60)
        y = expo(x, [1.0, 0.8]) + 0.01 * np.sin(13 * x)
        res = least_squares_fit(expo, x, y, [10.0, 5.0])
        h = np.array(res.diagnostics["cost_history"])
        assert np.all(np.diff(h) <= 0)

    def test_converged_means_small_gradient(self):
        x = np.linspace(0, 5, 60)
        y = expo(x, [1.0, 0.8]) + 0.01 * np.sin(13 * x)
        res = least_squares_fit(expo, x, y, [10.0, 5.0])
        assert res.converged
        assert res.diagnostics["gradient_norm"] < STALL_GRADIENT

    def test_degenerate_model_does_not_raise(self):
        x = np.linspace(0, 1, 10)
        res = least_squares_fit(lambda x, q: np.full_like(x, np.nan), x, x, [1.0])
        assert not res.converged
        assert res.diagnostics["termination"] == "non-finite residual"

    def test_flat_direction(self):
        # q[1] has no effect: J is singular, damping still yields a fit of q[0]
        x = np.linspace(0, 1, 10)
        res = least_squares_fit(lambda x, q: q[0] * x + 0 * q[1], x, 3 * x, [1.0, 1.0])
        assert res["p0"] == pytest.approx(3.0, rel=1e-9)

    def test_init_outside_bounds(self):
        with pytest.raises(DomainError):
            least_squares_fit(expo, np.arange(3.0), np.ones(3), [-1.0, 1.0],
                              bounds=[(0, None), (None, None)])

    def test_empty_data(self):
        with pytest.raises(DomainError):
            least_squares_fit(expo, np.array([]), np.array([]), [1.0, 1.0])

    def test_max_iter(self):
        x = np.linspace(0, 5, 60)
        res = least_squares_fit(expo, x, expo(x, [1.0, 0.8]) + 0.01 * np.sin(9 * x),
                                [10.0, 5.0], max_iter=2)
        assert not res.converged and res.iterations == 2

    def test_weights(self):
        x = np.arange(4.0)
        y = np.array([0.0, 1.0, 2.0, 10.0])
        heavy = least_squares_fit(lambda x, q: q[0] * x, x, y, [1.0],
                                  sigma=np.array([1.0, 1.0, 1.0, 1e6]))
        assert heavy["p0"] == pytest.approx(1.0, rel=1e-6)


class TestFitRvsM:
    def test_round_trip(self):
        R = r_predicted_curve(M_GRID, 1.0, 0.05)
        res = fit_r_vs_m(M_GRID, R)
        assert res["p_eta"] == pytest.approx(0.05, rel=0.02)
        assert res.diagnostics["relative_residual"] < 1e-8

    def test_round_trip_from_stochastic_data(self):
        # data from p = 0.25, eta = 0.2 inside the collapse regime
        R = r_predicted_curve(M_GRID, 0.25, 0.2)
        assert fit_r_vs_m(M_GRID, R)["p_eta"] == pytest.approx(0.05, rel=0.02)

    def test_equal_products_agree(self):
        fits = [fit_r_vs_m(M_GRID, r_predicted_curve(M_GRID, p, 0.03 / p))["p_eta"]
                for p in (0.1, 0.3, 1.0)]
        assert max(fits) - min(fits) < 0.02 * 0.03

    def test_all_zero(self):
        res = fit_r_vs_m(M_GRID, np.zeros(len(M_GRID)))
        assert res["p_eta"] == pytest.approx(0.0, abs=1e-8)
        assert "p_eta_at_boundary" in res.flags

    def test_rejected_points(self):
        R = r_predicted_curve(M_GRID, 1.0, 0.05)
        R[3] = 1.2
        R[5] = np.nan
        res = fit_r_vs_m(M_GRID, R)
        assert [m for m, _ in res.diagnostics["rejected_points"]] == [M_GRID[3], M_GRID[5]]
        assert res["p_eta"] == pytest.approx(0.05, rel=0.02)

    def test_needs_four_m(self):
        with pytest.raises(DomainError):
            fit_r_vs_m([1, 2, 4], [0.1, 0.2, 0.3])
        with pytest.raises(DomainError):
            fit_r_vs_m([1, 1, 2, 2, 4], [0.1] * 5)

    def test_two_parameter(self):
        R = r_predicted_curve(M_GRID, 0.4, 2.0)
        res = fit_r_vs_m(M_GRID, R, two_parameter=True)
        assert res["p"] == pytest.approx(0.4, rel=1e-3)
        assert res["eta"] == pytest.approx(2.0, rel=1e-3)
        assert res["p_eta"] == pytest.approx(0.8, rel=1e-3)


class TestFitSurface:
    def test_golden_round_trip(self):
        res = fit_surface(OFFSETS, WINDOWS, golden_grid())
        assert res.converged
        assert res.residual_norm < 1e-8
        for name, truth in zip(("A", "tau1", "beta", "tau2", "C"), GOLDEN.as_tuple()):
            assert res[name] == pytest.approx(truth, rel=1e-6)
        assert surface_params(res).as_tuple() == pytest.approx(GOLDEN.as_tuple(), rel=1e-6)

    def test_other_noiseless_surfaces(self):
        for params in (SurfaceParams(0.05, 20.0, 0.5, 300.0, 0.0),
                       SurfaceParams(1.0, 80.0, 0.2, 60.0, 0.1)):
            res = fit_surface(OFFSETS, WINDOWS, golden_grid(params))
            assert res.residual_norm < 1e-8

    def test_perturbation_study(self):
        base = golden_grid()
        for seed in range(50):
            noisy = base * (1 + 0.01 * np.random.default_rng(seed).standard_normal(base.shape))
            res = fit_surface(OFFSETS, WINDOWS, noisy)
            assert abs(res["tau1"] / 37 - 1) < 0.10
            assert abs(res["tau2"] / 105 - 1) < 0.10
            assert abs(res["beta"] - 0.37) < 0.05

    def test_constant_grid(self):
        res = fit_surface(OFFSETS, WINDOWS, np.full((len(OFFSETS), len(WINDOWS)), 0.07))
        assert res["A"] == pytest.approx(0.0, abs=1e-9)
        assert res["C"] == pytest.approx(0.07)
        assert "tau1_not_identifiable" in res.flags and "tau2_not_identifiable" in res.flags

    def test_no_start_time_decay(self):
        # surface independent of t_start: tau1 runs to its cap and is flagged
        grid = np.tile(np.sqrt(WINDOWS) * np.exp(-WINDOWS / 200) * 0.01, (len(OFFSETS), 1))
        res = fit_surface(OFFSETS, WINDOWS, grid)
        assert "tau1_at_upper_bound" in res.flags
        assert res["beta"] == pytest.approx(0.5, abs=1e-6)

    def test_minimum_grid(self):
        with pytest.raises(DomainError):
            fit_surface(OFFSETS[:3], WINDOWS, np.zeros((3, len(WINDOWS))))
        with pytest.raises(DomainError):
            fit_surface(OFFSETS, WINDOWS, np.zeros((3, 3)))

    def test_eight_log_spaced_starts(self):
        starts = surface_starts(OFFSETS, WINDOWS)
        assert len(starts) == 8
        t1 = sorted({s[0] for s in starts})
        assert np.allclose(np.diff(np.log(t1)), np.log(t1[1] / t1[0]))

    def test_deterministic(self):
        g = golden_grid() + 0.003 * np.cos(np.arange(golden_grid().size)).reshape(golden_grid().shape)
        a = fit_surface(OFFSETS, WINDOWS, g)
        b = fit_surface(OFFSETS, WINDOWS, g)
        assert a.to_json() == b.to_json()

    def test_best_start_wins(self):
        g = golden_grid()
        bad = [(1e4, 5.0)]
        res = fit_surface(OFFSETS, WINDOWS, g, starts=bad + surface_starts(OFFSETS, WINDOWS))
        assert res.residual_norm < 1e-8


class TestSeparability:
    def test_outer_product(self):
        u = np.array([1.0, 2.0, 0.5])
        v = np.array([0.3, -1.0, 4.0, 2.0])
        assert abs(svd_separability(np.outer(u, v)) - 1) < 1e-12

    def test_identity(self):
        for n in (2, 5, 9):
            assert svd_separability(np.eye(n)) == pytest.approx(1 / n, rel=1e-12)

    def test_model_without_offset(self):
        g = golden_grid(SurfaceParams(0.3, 37.0, 0.37, 105.0, 0.0))
        assert abs(svd_separability(g) - 1) < 1e-10

    def test_offset_keeps_rank_two(self):
        g = golden_grid()
        s = np.linalg.svd(g, compute_uv=False)
        assert s[2] < 1e-12 * s[0]
        assert svd_separability(g) < 1.0

    def test_invariances(self):
        g = np.random.default_rng(0).random((6, 9))
        f = svd_separability(g)
        assert svd_separability(g.T) == pytest.approx(f, rel=1e-12)
        assert svd_separability(-3.7 * g) == pytest.approx(f, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            svd_separability(np.ones((1, 4)))
        with pytest.raises(DomainError):
            svd_separability(np.zeros((3, 3)))


def test_fit_result_json():
    x = np.linspace(0, 5, 40)
    res = least_squares_fit(expo, x, expo(x, [2.0, 0.7]) + 0.001 * np.sin(x), [1.0, 1.0])
    doc = json.loads(res.to_json())
    assert doc["parameters"] == pytest.approx(res.parameter_estimates)
    assert doc["converged"] is True
    assert len(doc["covariance_proxy"]) == 2
    assert isinstance(FitResult({"a": 1.0}, 0.0, 1, True).to_dict()["flags"], list)
