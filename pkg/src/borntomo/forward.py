"""Forward models for the scattered wave under the first Born approximation.

Two independent discretizations of the same continuous model:

* :func:`dtot_apply` factors the measurement operator through Fourier space
  (nonuniform DFT, diffraction coefficients, detector-plane inverse DFT).
  This is the model the reconstruction algorithms invert.
* :func:`born_convolution_forward` discretizes the defining convolution with
  the outgoing Helmholtz Green function by midpoint quadrature on the object
  grid.  Using it to generate test data avoids the inverse crime: data and
  reconstruction then come from different discretizations.

Also here: the free-space propagation multiplier used by the two-stage
phase retrieval, and a self-contained Hankel function evaluation for the
2D Green function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import ExperimentConfig, NodeSet, build_node_set, coefficient_vector
from .transforms import NdftOperator, idft

__all__ = [
    "MeasurementStack",
    "dtot_apply",
    "born_convolution_forward",
    "hankel_h1_0",
    "green_function",
    "incident_field",
    "rotate_object",
    "free_space_propagate",
]

_EULER_GAMMA = 0.5772156649015328606
# series/asymptotic switch for the Hankel evaluation
_HANKEL_SWITCH = 12.0


@dataclass
class MeasurementStack:
    """Detector fields over all time steps.

    ``values`` has shape (M,) + (N,)*(d-1).  ``kind`` is one of 'total'
    (complex total field), 'scattered' (complex scattered field), or
    'magnitude' (real non-negative |total field|).
    """

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("total", "scattered", "magnitude"):
            raise ValueError(f"unknown stack kind {self.kind!r}")
        if self.kind == "magnitude":
            if np.iscomplexobj(self.values):
                raise ValueError("magnitude stacks must be real")
            if np.any(self.values < 0):
                raise ValueError("magnitude stacks must be non-negative")

    @property
    def M(self):
        return self.values.shape[0]

    def magnitude(self):
        """Drop the phase, keeping |values|."""
        return MeasurementStack(np.abs(self.values), "magnitude")

    def check_config(self, config: ExperimentConfig):
        if self.values.shape != config.stack_shape:
            raise ValueError(
                f"stack shape {self.values.shape} does not match config "
                f"{config.stack_shape}"
            )


def incident_field(config: ExperimentConfig):
    """Plane wave e^{i k0 x_d} sampled on the object grid."""
    xd = config.object_grid()[..., -1]
    return np.exp(1j * config.k0 * xd)


def hankel_h1_0(x):
    """Zeroth-order Hankel function of the first kind, H0(x) = J0 + i Y0.

    Power series below x = 12, Hankel's asymptotic expansion above;
    absolute error stays below 1e-10 on the positive axis.  Scalar or
    array input, x > 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("hankel_h1_0 requires x > 0")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty(x.shape, dtype=complex)
    small = x <= _HANKEL_SWITCH
    if small.any():
        out[small] = _hankel_series(x[small])
    if (~small).any():
        out[~small] = _hankel_asymptotic(x[~small])
    return out[()] if not scalar else complex(out[0])


def _hankel_series(x):
    q = -0.25 * x * x
    j0 = np.ones_like(x)
    ysum = np.zeros_like(x)
    term = np.ones_like(x)
    harmonic = 0.0
    for m in range(1, 60):
        term = term * q / (m * m)
        harmonic += 1.0 / m
        j0 = j0 + term
        ysum = ysum - harmonic * term  # (-1)^(m+1) H_m (x^2/4)^m / (m!)^2
        if np.max(np.abs(term)) < 1e-18:
            break
    y0 = (2.0 / np.pi) * ((np.log(0.5 * x) + _EULER_GAMMA) * j0 + ysum)
    return j0 + 1j * y0


def _hankel_asymptotic(x):
    # H0(x) ~ sqrt(2/(pi x)) e^{i(x - pi/4)} sum_k (-i)^k b_k / (8x)^k,
    # b_k = prod_{j<=k} (2j-1)^2 / k!; truncated at the smallest term.
    z = 1.0 / (8.0 * x)
    total = np.ones_like(x, dtype=complex)
    term = np.ones_like(x, dtype=complex)
    last = np.full(x.shape, np.inf)
    for k in range(1, 24):
        term = term * (-1j) * (2 * k - 1) ** 2 / k * z
        mag = np.abs(term)
        grow = mag >= last
        if grow.all():
            break
        total = np.where(grow, total, total + term)
        last = mag
        if np.max(mag) < 1e-18:
            break
    return np.sqrt(2.0 / (np.pi * x)) * np.exp(1j * (x - 0.25 * np.pi)) * total


def green_function(r, config: ExperimentConfig):
    """Outgoing Helmholtz Green function G_d at distances ``r`` > 0."""
    r = np.asarray(r, dtype=float)
    if config.dim == 2:
        return 0.25j * hankel_h1_0(config.k0 * r)
    return np.exp(1j * config.k0 * r) / (4.0 * np.pi * r)


def rotate_object(f, t, config: ExperimentConfig):
    """Sample f(R_t x_k) on the object grid.

    Exact index permutation for t an exact multiple of pi/2 about a
    coordinate axis (with zero fill on the wrapped boundary row), bilinear
    or trilinear interpolation with zero fill otherwise.
    """
    f = np.asarray(f, dtype=float)
    quarter = t / (np.pi / 2.0)
    if abs(quarter - round(quarter)) < 1e-12:
        return _rotate_exact(f, int(round(quarter)) % 4, config)
    grid = config.object_grid()
    R = _rotation(t, config)
    pts = grid.reshape(-1, config.dim) @ R.T
    idx = pts.T / config.object_spacing + config.K // 2
    vals = ndimage.map_coordinates(f, idx, order=1, mode="constant", cval=0.0)
    return vals.reshape(f.shape)


def _rotation(t, config):
    from .geometry import rotation_matrix

    return rotation_matrix(t, config)


def _rotate_exact(f, quarter_turns, config):
    # At exact quarter turns the rotation permutes grid indices: gather
    # f at R k with integer R; the symmetric range I_K lacks +K/2, so
    # indices rotated onto that row are zero-filled.
    if quarter_turns == 0:
        return f.copy()
    K, d = config.K, config.dim
    R = np.round(_rotation(quarter_turns * np.pi / 2.0, config)).astype(np.int64)
    axes_idx = [np.arange(-(K // 2), K // 2)] * d
    k_idx = np.stack(np.meshgrid(*axes_idx, indexing="ij"), axis=-1).reshape(-1, d)
    src = k_idx @ R.T
    inside = np.all((src >= -(K // 2)) & (src <= K // 2 - 1), axis=1)
    out = np.zeros(f.size, dtype=f.dtype)
    pos = tuple((src[inside] + K // 2).T)
    out[inside] = f[pos]
    return out.reshape(f.shape)


def dtot_apply(
    f,
    config: ExperimentConfig,
    nodes: NodeSet | None = None,
    operator: NdftOperator | None = None,
) -> MeasurementStack:
    """Total-field measurement stack through the Fourier factorization.

    Per time step: nonuniform Fourier samples of f, multiplied by the
    diffraction coefficients on the masked detector frequencies (zero on
    the rest), inverse detector DFT, plus the incident plane wave value
    e^{i k0 r_M}.
    """
    f = np.asarray(f)
    if nodes is None:
        nodes = build_node_set(config)
    if f.shape != config.object_shape:
        raise ValueError(f"potential shape {f.shape} != {config.object_shape}")
    if operator is None:
        operator = NdftOperator(nodes)
    c = coefficient_vector(config, nodes)
    g = operator.forward(f).reshape(config.M, nodes.n_per_step)
    spectra = np.zeros(config.stack_shape, dtype=complex)
    spectra[:, nodes.mask] = c[None, :] * g
    det_axes = tuple(range(1, config.dim))
    v = idft(spectra, axes=det_axes) + np.exp(1j * config.k0 * config.r_M)
    return MeasurementStack(v, "total")


def born_convolution_forward(f, config: ExperimentConfig) -> MeasurementStack:
    """Total-field stack by direct quadrature of the Born convolution.

    u_sca(z', r_M) = (2 L_s/K)^d sum_k f(R_t x_k) e^{i k0 [x_k]_d}
                     G_d((z', r_M) - x_k)

    midpoint rule on the object grid, rotation applied by resampling the
    potential.  Requires r_M > L_s sqrt(d) so no quadrature point touches
    the evaluation plane.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != config.object_shape:
        raise ValueError(f"potential shape {f.shape} != {config.object_shape}")
    if config.r_M <= config.L_s * np.sqrt(config.dim):
        raise ValueError(
            "born_convolution_forward requires r_M > L_s*sqrt(d) to keep the "
            "Green function singularity away from the object box"
        )
    det = config.detector_grid().reshape(-1, config.dim - 1)
    det_pts = np.concatenate(
        [det, np.full((det.shape[0], 1), config.r_M)], axis=1
    )
    obj_pts = config.object_grid().reshape(-1, config.dim)
    dist = np.linalg.norm(det_pts[:, None, :] - obj_pts[None, :, :], axis=2)
    kernel = green_function(dist, config)  # (n_det, K^d)
    incident = incident_field(config).ravel()
    cell = config.object_spacing**config.dim
    uinc_plane = np.exp(1j * config.k0 * config.r_M)

    v = np.empty(config.stack_shape, dtype=complex)
    for i, t in enumerate(config.time_steps()):
        rotated = rotate_object(f, t, config).ravel()
        field = kernel @ (rotated * incident * cell)
        v[i] = field.reshape(config.detector_shape) + uinc_plane
    return MeasurementStack(v, "total")


def free_space_propagate(v, distance, config: ExperimentConfig, inverse=False):
    """Angular-spectrum propagation of a detector-plane field.

    DFT over the detector axes, multiply the propagating band
    (|y'| < k0) by e^{+-i kappa(y') distance}, zero the evanescent band,
    inverse DFT.  ``v`` may be a single field or a stack with leading axes.
    """
    from .transforms import dft

    v = np.asarray(v, dtype=complex)
    d_det = config.dim - 1
    if v.shape[-d_det:] != config.detector_shape:
        raise ValueError(
            f"field shape {v.shape} does not end in {config.detector_shape}"
        )
    axes = tuple(range(v.ndim - d_det, v.ndim))
    freqs = config.detector_frequencies()
    nrm2 = np.sum(freqs**2, axis=-1)
    band = nrm2 < config.k0**2
    kap = np.sqrt(np.where(band, config.k0**2 - nrm2, 0.0))
    phase = -1j if inverse else 1j
    multiplier = np.where(band, np.exp(phase * kap * distance), 0.0)
    spectrum = dft(v, axes=axes) * multiplier
    return idft(spectrum, axes=axes)


def free_space_multiplier(distance, config: ExperimentConfig, inverse=False):
    """The angular-spectrum multiplier itself (unit modulus on the band)."""
    freqs = config.detector_frequencies()
    nrm2 = np.sum(freqs**2, axis=-1)
    band = nrm2 < config.k0**2
    kap = np.sqrt(np.where(band, config.k0**2 - nrm2, 0.0))
    phase = -1j if inverse else 1j
    return np.where(band, np.exp(phase * kap * distance), 0.0)
