import numpy as np
import pytest

from borntomo.analysis import (
    PhantomSpec,
    Primitive,
    QualityMetrics,
    add_noise,
    lambda_grid,
    lcurve_sweep,
    named_phantom,
    psnr,
    render_phantom,
    ssim,
)
from borntomo.forward import MeasurementStack, dtot_apply
from borntomo.geometry import ExperimentConfig, build_node_set

from conftest import small_config_2d


class TestRenderPhantom:
    def test_empty_spec(self):
        cfg = small_config_2d(K=8)
        f = render_phantom(PhantomSpec(()), cfg)
        np.testing.assert_array_equal(f, 0.0)

    def test_unit_disk_indicator(self):
        cfg = ExperimentConfig(dim=2, k0=0.2, r_M=40.0, L_M=60.0, L_s=16.0,
                               K=32, N=8, M=1)
        spec = PhantomSpec((Primitive("disk", (0.0, 0.0), (10.0,), 0.5),),
                           cap=0.5)
        f = render_phantom(spec, cfg)
        grid = cfg.object_grid()
        expected = 0.5 * (np.sum(grid**2, axis=-1) <= 100.0)
        np.testing.assert_array_equal(f, expected)

    def test_mass_converges_to_analytic_area(self):
        radius, amp = 0.8, 0.5
        masses = []
        for K in (32, 64, 128):
            cfg = ExperimentConfig(dim=2, k0=0.5, r_M=10.0, L_M=4.0, L_s=2.0,
                                   K=K, N=4, M=1)
            spec = PhantomSpec((Primitive("disk", (0.0, 0.0), (radius,), amp),))
            f = render_phantom(spec, cfg)
            masses.append(f.sum() * cfg.object_spacing**2)
        target = amp * np.pi * radius**2
        errs = [abs(m - target) for m in masses]
        assert errs[2] < errs[0]
        assert errs[2] < 0.01 * target

    def test_overlap_sums_then_clamps(self):
        cfg = small_config_2d(K=8)
        L = cfg.L_s
        spec = PhantomSpec((
            Primitive("disk", (0.0, 0.0), (0.5 * L,), 0.4),
            Primitive("disk", (0.0, 0.0), (0.25 * L,), 0.4),
        ), cap=0.5)
        f = render_phantom(spec, cfg)
        assert f.max() == 0.5  # clamped, not 0.8

    def test_primitive_outside_box_rejected(self):
        cfg = small_config_2d(K=8)
        spec = PhantomSpec((Primitive("disk", (cfg.L_s, 0.0), (1.0,), 0.1),))
        with pytest.raises(ValueError, match="box"):
            render_phantom(spec, cfg)

    def test_named_mini_shapes(self):
        cfg = small_config_2d(K=32)
        f = render_phantom(named_phantom("mini-shapes", cfg), cfg)
        assert f.min() >= 0.0
        assert 0 < f.max() <= 0.5
        grid = cfg.object_grid()
        support = np.sqrt(np.sum(grid**2, axis=-1))
        assert support[f > 0].max() <= 0.94 * cfg.L_s
        with pytest.raises(ValueError):
            named_phantom("unknown", cfg)

    def test_named_mini_shapes_3d(self):
        from conftest import small_config_3d

        cfg = small_config_3d(K=16, N=8, M=2)
        f = render_phantom(named_phantom("mini-shapes", cfg), cfg)
        assert f.min() >= 0.0
        assert 0 < f.max() <= 1.0


class TestAddNoise:
    def _stack(self, rng, kind="total"):
        values = rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8))
        if kind == "magnitude":
            values = np.abs(values)
        return MeasurementStack(values, kind)

    def test_zero_level_identity(self, rng):
        stack = self._stack(rng)
        out = add_noise(stack, 0.0, seed=1)
        np.testing.assert_array_equal(out.values, stack.values)

    def test_exact_relative_level(self, rng):
        for kind, levels in (("total", (0.01, 0.05, 0.5)),
                             ("magnitude", (0.002, 0.01))):
            stack = self._stack(rng, kind)
            if kind == "magnitude":
                stack = MeasurementStack(stack.values + 1.0, kind)
            for level in levels:
                out = add_noise(stack, level, seed=3)
                achieved = np.linalg.norm(out.values - stack.values) \
                    / np.linalg.norm(stack.values)
                assert achieved == pytest.approx(level, rel=1e-14)

    def test_seeded_determinism_and_seed_variation(self, rng):
        stack = self._stack(rng)
        a = add_noise(stack, 0.05, seed=11)
        b = add_noise(stack, 0.05, seed=11)
        c = add_noise(stack, 0.05, seed=12)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.values.tobytes() != c.values.tobytes()
        na = np.linalg.norm(a.values - stack.values)
        nc = np.linalg.norm(c.values - stack.values)
        assert na == pytest.approx(nc, rel=1e-14)

    def test_negative_level_rejected(self, rng):
        with pytest.raises(ValueError):
            add_noise(self._stack(rng), -0.1, seed=0)


class TestPsnr:
    def test_identical_is_infinite(self, rng):
        f = rng.standard_normal((5, 5))
        assert psnr(f, f) == np.inf

    def test_single_pixel_error_on_constant(self):
        K = 8
        f = np.ones((K, K))
        g = f.copy()
        g[3, 5] += 1.0
        assert psnr(f, g) == pytest.approx(10 * np.log10(K * K), abs=1e-12)

    def test_formula_against_high_precision_oracle(self, rng):
        import mpmath as mp

        f = rng.standard_normal((4, 4))
        g = rng.standard_normal((4, 4))
        got = psnr(f, g)
        mp.mp.dps = 50
        peak = max(abs(mp.mpf(v)) for v in f.ravel()) ** 2
        mse = sum((mp.mpf(a) - mp.mpf(b)) ** 2 for a, b in zip(f.ravel(), g.ravel())) / 16
        expected = float(10 * mp.log10(peak / mse))
        assert got == pytest.approx(expected, rel=1e-10)

    def test_monotone_under_growing_noise(self, rng):
        f = np.abs(rng.standard_normal((12, 12)))
        vals = []
        for level in (0.01, 0.05, 0.25):
            g = f + level * np.linalg.norm(f) / np.sqrt(f.size) \
                * np.random.default_rng(4).standard_normal(f.shape)
            vals.append(psnr(f, g))
        assert vals[0] > vals[1] > vals[2]

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 3)), np.ones((3, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 3)), np.zeros((4, 4)))


class TestSsim:
    def test_identical_is_one(self, rng):
        f = np.abs(rng.standard_normal((20, 20)))
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_binary_strongly_dissimilar(self):
        rng = np.random.default_rng(5)
        f = (rng.uniform(size=(32, 32)) > 0.5).astype(float)
        # calibrated once and frozen: complementary binary images score < 0.1
        assert ssim(f, 1.0 - f) < 0.1

    def test_equal_range_swap_symmetry(self, rng):
        f = rng.uniform(0.0, 1.0, size=(24, 24))
        g = rng.uniform(0.0, 1.0, size=(24, 24))
        f[0, 0], g[0, 0] = 0.0, 0.0
        f[-1, -1], g[-1, -1] = 1.0, 1.0  # pin equal dynamic ranges
        assert ssim(f, g) == pytest.approx(ssim(g, f), abs=1e-10)

    def test_3d_window(self, rng):
        f = np.abs(rng.standard_normal((12, 12, 12)))
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-12)

    def test_constant_reference_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.ones((8, 8)), np.zeros((8, 8)))

    def test_quality_metrics_bundle(self, rng):
        f = np.abs(rng.standard_normal((16, 16)))
        m = QualityMetrics.compare(f, f)
        assert m.psnr == np.inf
        assert m.ssim == pytest.approx(1.0, abs=1e-12)


class TestLambdaGrid:
    def test_log_default(self):
        grid = lambda_grid(1e-3, 10.0, 5)
        assert grid[0] == pytest.approx(1e-3)
        assert grid[-1] == pytest.approx(10.0)
        ratios = grid[1:] / grid[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_lin(self):
        np.testing.assert_allclose(lambda_grid(1.0, 3.0, 3, "lin"), [1, 2, 3])

    def test_invalid(self):
        with pytest.raises(ValueError):
            lambda_grid(0.0, 1.0, 3)
        with pytest.raises(ValueError):
            lambda_grid(1.0, 0.5, 3)


class TestLcurve:
    def _setup(self, rng):
        cfg = small_config_2d(K=8, N=16, M=8)
        ns = build_node_set(cfg)
        grid = cfg.object_grid()
        f = 0.5 * (np.sum(grid**2, axis=-1) <= (0.4 * cfg.L_s) ** 2)
        stack = dtot_apply(f, cfg, ns)
        noisy = add_noise(stack, 0.05, seed=2)
        return cfg, ns, noisy

    def test_single_lambda_consistent_with_standalone(self, rng, tmp_path):
        from borntomo.inversion import measurements_to_fourier, pd_tv_solve

        cfg, ns, stack = self._setup(rng)
        g = measurements_to_fourier(stack, cfg, ns)

        def run_one(lam):
            report, _ = pd_tv_solve(g, ns, lam, 20)
            return report

        points = lcurve_sweep(run_one, [0.1])
        standalone, _ = pd_tv_solve(g, ns, 0.1, 20)
        assert points[0][1] == standalone.residuals[-1] ** 2
        assert points[0][3].potential.tobytes() == standalone.potential.tobytes()

    def test_residual_trend_and_outputs(self, rng, tmp_path):
        from borntomo.inversion import measurements_to_fourier, pd_tv_solve

        cfg, ns, stack = self._setup(rng)
        g = measurements_to_fourier(stack, cfg, ns)

        def run_one(lam):
            report, _ = pd_tv_solve(g, ns, lam, 150)
            return report

        lambdas = lambda_grid(1e-3, 10.0, 6)
        table = tmp_path / "lcurve.tsv"
        plot = tmp_path / "lcurve.png"
        points = lcurve_sweep(run_one, lambdas, table_path=table, plot_path=plot)
        residuals = np.array([p[1] for p in points])
        # data fit degrades (weakly) as regularization grows
        assert residuals[-1] >= residuals[0]
        spearman = np.corrcoef(np.argsort(np.argsort(residuals)),
                               np.arange(len(residuals)))[0, 1]
        assert spearman > 0.5

        lines = table.read_text().strip().splitlines()
        assert lines[0] == "lambda\tresidual_sq\ttv"
        assert len(lines) == 1 + len(lambdas)
        assert plot.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unsorted_lambdas_rejected(self):
        with pytest.raises(ValueError):
            lcurve_sweep(lambda lam: None, [0.1, 0.05])
