"""Phantoms, noise injection, image quality metrics, and the L-curve sweep."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .forward import MeasurementStack
from .geometry import ExperimentConfig

__all__ = [
    "Primitive",
    "PhantomSpec",
    "render_phantom",
    "named_phantom",
    "add_noise",
    "psnr",
    "ssim",
    "QualityMetrics",
    "lcurve_sweep",
    "lambda_grid",
]


@dataclass(frozen=True)
class Primitive:
    """One additive shape: disk/ball, rectangle/box, or ellipse/ellipsoid.

    ``size`` is the radius for disks, the per-axis half-widths for boxes,
    and the per-axis semi-axes for ellipses.  Negative amplitudes carve
    concave features out of previously placed shapes.
    """

    kind: str
    center: tuple
    size: tuple
    amplitude: float

    def __post_init__(self):
        if self.kind not in ("disk", "box", "ellipse"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")

    def extent(self):
        """Per-axis reach from the center (for the inside-the-box check)."""
        if self.kind == "disk":
            return tuple(self.size[0] for _ in self.center)
        return self.size

    def indicator(self, grid):
        delta = grid - np.asarray(self.center)
        if self.kind == "disk":
            return np.sum(delta**2, axis=-1) <= self.size[0] ** 2
        if self.kind == "box":
            return np.all(np.abs(delta) <= np.asarray(self.size), axis=-1)
        return np.sum((delta / np.asarray(self.size)) ** 2, axis=-1) <= 1.0


@dataclass(frozen=True)
class PhantomSpec:
    """List of primitives plus a global amplitude cap."""

    primitives: tuple
    cap: float = 0.5


def render_phantom(spec: PhantomSpec, config: ExperimentConfig):
    """Sample the primitives on the object grid; sum, then clamp to [0, cap].

    Raises when a primitive sticks out of the [-L_s, L_s]^d box.
    """
    grid = config.object_grid()
    f = np.zeros(config.object_shape)
    for prim in spec.primitives:
        if len(prim.center) != config.dim:
            raise ValueError(f"primitive center {prim.center} is not {config.dim}-d")
        reach = np.abs(np.asarray(prim.center)) + np.asarray(prim.extent())
        if np.any(reach > config.L_s):
            raise ValueError(
                f"{prim.kind} at {prim.center} leaves the object box +-{config.L_s:g}"
            )
        f += prim.amplitude * prim.indicator(grid)
    return np.clip(f, 0.0, spec.cap)


def named_phantom(name, config: ExperimentConfig) -> PhantomSpec:
    """Built-in phantom specs, scaled to the configured object box.

    'mini-shapes': one disk, one rectangle, and one concave crescent
    (disk minus disk); amplitudes capped at 0.5 in 2D and 1.0 in 3D.
    In 3D it reduces to one ball and one box (plus the carved notch).
    """
    L = config.L_s
    if name != "mini-shapes":
        raise ValueError(f"unknown phantom {name!r}")
    if config.dim == 2:
        # compact layout: features clear of the box edge keep the scattered
        # beam inside the detector window
        prims = (
            Primitive("disk", (-0.1216 * L, 0.0960 * L), (0.0896 * L,), 0.3),
            Primitive("box", (0.1120 * L, 0.1120 * L), (0.0704 * L, 0.0896 * L), 0.35),
            Primitive("disk", (0.0160 * L, -0.1216 * L), (0.1024 * L,), 0.4),
            Primitive("disk", (0.0576 * L, -0.1216 * L), (0.0704 * L,), -0.4),
        )
        return PhantomSpec(prims, cap=0.5)
    prims = (
        Primitive("disk", (-0.30 * L, 0.25 * L, 0.0), (0.32 * L,), 0.6),
        Primitive("box", (0.30 * L, -0.25 * L, 0.1 * L),
                  (0.25 * L, 0.28 * L, 0.30 * L), 0.7),
        Primitive("disk", (0.30 * L, -0.25 * L, 0.30 * L), (0.18 * L,), -0.7),
    )
    return PhantomSpec(prims, cap=1.0)


def add_noise(stack: MeasurementStack, level, seed) -> MeasurementStack:
    """Additive Gaussian noise with exact relative l2 level.

    Complex white noise for complex stacks, real for magnitude stacks,
    rescaled so that |eps|_2 / |stack|_2 equals ``level`` exactly.
    Deterministic for a fixed ``seed``.
    """
    if level < 0:
        raise ValueError("noise level must be >= 0")
    if level == 0:
        return MeasurementStack(stack.values.copy(), stack.kind)
    rng = np.random.default_rng(seed)
    shape = stack.values.shape
    if np.iscomplexobj(stack.values):
        eps = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    else:
        eps = rng.standard_normal(shape)
    eps *= level * np.linalg.norm(stack.values) / np.linalg.norm(eps)
    return MeasurementStack(stack.values + eps, stack.kind)


def psnr(reference, test):
    """Peak signal-to-noise ratio in dB, peak taken over the reference.

    10 log10( max_k |f_k|^2 / mean_k |f_k - g_k|^2 ).  Identical inputs
    give +inf; an all-zero reference is rejected.
    """
    f = np.asarray(reference, dtype=float)
    g = np.asarray(test, dtype=float)
    if f.shape != g.shape:
        raise ValueError("psnr requires equal shapes")
    peak = np.max(np.abs(f)) ** 2
    if peak == 0:
        raise ValueError("psnr undefined for an all-zero reference")
    mse = np.mean((f - g) ** 2)
    if mse == 0:
        return np.inf
    return float(10.0 * np.log10(peak / mse))


def _gaussian_window_1d(sigma=1.5, radius=5):
    x = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _local_mean(x, window):
    out = x
    for ax in range(x.ndim):
        out = ndimage.correlate1d(out, window, axis=ax, mode="reflect")
    return out


def ssim(reference, test, sigma=1.5, radius=5):
    """Mean structural similarity with a separable Gaussian window.

    Both images are first rescaled by the reference dynamic range (so the
    stabilizing constants are the standard C1=(0.01)^2, C2=(0.03)^2 of a
    unit range).  Window: sigma 1.5, 11 taps per axis, reflect boundary.
    Works in 2D and 3D.
    """
    f = np.asarray(reference, dtype=float)
    g = np.asarray(test, dtype=float)
    if f.shape != g.shape:
        raise ValueError("ssim requires equal shapes")
    lo, hi = float(f.min()), float(f.max())
    if hi <= lo:
        raise ValueError("ssim undefined for a constant reference")
    f = (f - lo) / (hi - lo)
    g = (g - lo) / (hi - lo)
    c1, c2 = 0.01**2, 0.03**2

    window = _gaussian_window_1d(sigma, radius)
    mu_f = _local_mean(f, window)
    mu_g = _local_mean(g, window)
    var_f = _local_mean(f * f, window) - mu_f**2
    var_g = _local_mean(g * g, window) - mu_g**2
    cov = _local_mean(f * g, window) - mu_f * mu_g
    num = (2 * mu_f * mu_g + c1) * (2 * cov + c2)
    den = (mu_f**2 + mu_g**2 + c1) * (var_f + var_g + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class QualityMetrics:
    psnr: float
    ssim: float

    @classmethod
    def compare(cls, reference, test):
        return cls(psnr=psnr(reference, test), ssim=ssim(reference, test))


def lambda_grid(start, stop, count, spacing="log"):
    """Sorted regularization-parameter grid, log-spaced by default."""
    if start <= 0 or stop <= start or count < 1:
        raise ValueError("need 0 < start < stop and count >= 1")
    if count == 1:
        return np.array([start])
    if spacing == "log":
        return np.geomspace(start, stop, count)
    if spacing == "lin":
        return np.linspace(start, stop, count)
    raise ValueError(f"unknown spacing {spacing!r}")


def lcurve_sweep(run_for_lambda, lambdas, table_path=None, plot_path=None):
    """Run a reconstruction pipeline per lambda and collect the L-curve.

    ``run_for_lambda(lam)`` must return a ReconstructionReport whose final
    residual entry is the data-fidelity axis value (weighted Fourier
    residual for known-phase pipelines, magnitude misfit for retrieval).
    Returns a list of (lam, residual_sq, tv, report); the two axes are the
    squared residual and the total variation of the final iterate, as in
    the bilogarithmic tip-selection plot.  No automatic corner detection
    is performed.

    Optionally writes a TSV table and a log-log PNG of the curve.
    """
    lambdas = np.asarray(list(lambdas), dtype=float)
    if np.any(lambdas <= 0) or np.any(np.diff(lambdas) <= 0):
        raise ValueError("lambdas must be positive and strictly increasing")
    points = []
    for lam in lambdas:
        report = run_for_lambda(float(lam))
        residual_sq = float(report.residuals[-1]) ** 2
        tv = float(report.tv_values[-1])
        points.append((float(lam), residual_sq, tv, report))

    if table_path is not None:
        lines = ["lambda\tresidual_sq\ttv"]
        for lam, res2, tv, _ in points:
            lines.append(f"{lam:.12g}\t{res2:.12g}\t{tv:.12g}")
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    if plot_path is not None:
        from .plots import save_lcurve_png

        save_lcurve_png(
            plot_path,
            [p[1] for p in points],
            [p[2] for p in points],
        )
    return points
