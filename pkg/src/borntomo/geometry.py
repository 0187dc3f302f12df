"""Experiment geometry: grids, rotations, frequency nodes, and weights.

Everything downstream (forward models, solvers, phase retrieval) consumes
the objects built here.  The scene is a compactly supported object inside
the box ``[-L_s, L_s]^d``, illuminated by a plane wave travelling along the
last axis, with a detector plane at distance ``r_M`` sampled on
``[-L_M, L_M]^(d-1)``.  The object rotates a full (or partial) turn over
``M`` time steps.

Index conventions follow the symmetric range ``I_K = {-K/2, ..., K/2-1}``;
array storage is 0-based with offset ``K/2`` per axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExperimentConfig",
    "NodeSet",
    "kappa",
    "h_map",
    "rotation_matrix",
    "build_node_set",
    "coefficient_vector",
    "sym_indices",
]

# Nodes with kappa below KAPPA_MIN_FACTOR*k0 are dropped: the Fourier
# multiplier 1/kappa blows up at the rim of the k0-ball.
KAPPA_MIN_FACTOR = 1e-6


def sym_indices(K):
    """Symmetric integer index range -K/2 .. K/2-1."""
    return np.arange(-(K // 2), K // 2)


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical and discretization parameters of one tomographic experiment.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    k0 : float
        Wave number of the incident plane wave (radians per length unit).
    r_M : float
        Distance of the measurement plane from the rotation center.
    L_M : float
        Detector half-width; samples live on ``[-L_M, L_M]^(d-1)``.
    L_s : float
        Object half-width; the potential is supported in ``[-L_s, L_s]^d``.
    K : int
        Object samples per axis (even).
    N : int
        Detector samples per axis (even).
    M : int
        Number of time steps; measurement times are ``t_m = T*m/M``,
        ``m = 1..M``.
    T : float
        Total rotation parameter, default one full turn ``2*pi``.
    rotation_axis : int or None
        For 3D, the coordinate axis of rotation given as 1 (x1) or 2 (x2).
        Must be None in 2D.  Rotation about the optical axis x3 carries no
        tomographic information and is rejected.
    """

    dim: int
    k0: float
    r_M: float
    L_M: float
    L_s: float
    K: int
    N: int
    M: int
    T: float = 2.0 * np.pi
    rotation_axis: int | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.K % 2 != 0 or self.K <= 0:
            raise ValueError(f"K must be a positive even integer, got {self.K}")
        if self.N % 2 != 0 or self.N <= 0:
            raise ValueError(f"N must be a positive even integer, got {self.N}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        for name in ("k0", "r_M", "L_M", "L_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.dim == 2:
            if self.rotation_axis is not None:
                raise ValueError("rotation_axis is only meaningful for dim=3")
        else:
            axis = 2 if self.rotation_axis is None else self.rotation_axis
            if axis not in (1, 2):
                raise ValueError(
                    "rotation_axis must be 1 (x1) or 2 (x2); rotation about "
                    "the optical axis x3 is not supported"
                )
            object.__setattr__(self, "rotation_axis", axis)

    # -- derived grids ----------------------------------------------------

    @property
    def object_spacing(self):
        return 2.0 * self.L_s / self.K

    @property
    def detector_spacing(self):
        return 2.0 * self.L_M / self.N

    def object_axes(self):
        """Per-axis physical coordinates x_k = (2 L_s / K) k, k in I_K."""
        return tuple(self.object_spacing * sym_indices(self.K) for _ in range(self.dim))

    def object_grid(self):
        """Object grid points as an array of shape (K, ..., K, d)."""
        axes = self.object_axes()
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def detector_axes(self):
        return tuple(
            self.detector_spacing * sym_indices(self.N) for _ in range(self.dim - 1)
        )

    def detector_grid(self):
        """Detector grid points z'_n of shape (N, ..., N, d-1)."""
        axes = self.detector_axes()
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def detector_frequencies(self):
        """Detector-plane frequency grid y'_l = (pi/L_M) l, shape (..., d-1)."""
        freqs = tuple((np.pi / self.L_M) * sym_indices(self.N) for _ in range(self.dim - 1))
        return np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1)

    def time_steps(self):
        """Measurement times t_m = T*m/M for m = 1..M."""
        return self.T * np.arange(1, self.M + 1) / self.M

    @property
    def detector_shape(self):
        return (self.N,) * (self.dim - 1)

    @property
    def object_shape(self):
        return (self.K,) * self.dim

    @property
    def stack_shape(self):
        return (self.M,) + self.detector_shape


def kappa(y_prime, k0):
    """Axial wave-number component sqrt(k0^2 - |y'|^2).

    ``y_prime`` is a single (d-1)-vector or an array of them (last axis is
    the vector axis for d=3; scalars/1D arrays are fine for d=2).  Raises
    for any point on or outside the k0-ball, where the forward multiplier
    degenerates.
    """
    y_prime = np.asarray(y_prime, dtype=float)
    nrm = np.sqrt(_squared_norm(y_prime))
    # factored form stays accurate near the rim |y'| -> k0
    arg = (k0 - nrm) * (k0 + nrm)
    if np.any(arg <= 0):
        raise ValueError("kappa requires |y'| < k0")
    return np.sqrt(arg)


def _squared_norm(y_prime):
    if y_prime.ndim == 0:
        return y_prime**2
    return np.sum(y_prime**2, axis=-1)


def h_map(y_prime, k0):
    """Point on the shifted semisphere, h(y') = (y', kappa(y') - k0).

    The result satisfies |h(y') + k0*e_d| = k0 exactly: these are the
    frequencies where the scattered far field carries samples of the
    object's Fourier transform.
    """
    y_prime = np.atleast_1d(np.asarray(y_prime, dtype=float))
    kap = kappa(y_prime, k0)
    return np.concatenate(
        [y_prime, np.atleast_1d(kap - k0).reshape(y_prime.shape[:-1] + (1,))]
        if y_prime.ndim > 1
        else [y_prime, np.atleast_1d(kap - k0)],
        axis=-1,
    )


def rotation_matrix(t, config: ExperimentConfig):
    """Rotation R_t in SO(d) for parameter t.

    2D: counterclockwise rotation by angle t.  3D: right-handed rotation by
    t about the configured coordinate axis.
    """
    c, s = np.cos(t), np.sin(t)
    if config.dim == 2:
        return np.array([[c, -s], [s, c]])
    if config.rotation_axis == 1:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    # axis x2
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class NodeSet:
    """Nonuniform frequency nodes with quadrature weights.

    ``nodes`` has shape (M*L, dim) where L is the number of detector
    frequency indices kept by ``mask``; ordering is m-major (m = 1..M),
    then detector indices in lexicographic order with negative indices
    first.  ``weights`` are the backpropagation quadrature weights, aligned
    with ``nodes``; they vanish on the rotation-axis frequency line where
    the substitution Jacobian is zero.  ``mask`` is the per-detector-index
    validity mask (shape (N,)*(dim-1)): True where |y'| < k0 and
    kappa(y') >= 1e-6 * k0.
    """

    config: ExperimentConfig
    nodes: np.ndarray
    weights: np.ndarray
    mask: np.ndarray
    kappas: np.ndarray = field(repr=False)
    y_masked: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.mask, self.kappas, self.y_masked):
            arr.setflags(write=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_per_step(self):
        """Number of detector indices kept per time step."""
        return int(self.mask.sum())

    def flat_index(self, m, detector_index):
        """Flat node position of time step m (1-based) and masked index.

        ``detector_index`` counts masked-True entries in lexicographic
        order within one time step.
        """
        L = self.n_per_step
        if not 1 <= m <= self.config.M:
            raise IndexError(f"time step m={m} outside 1..{self.config.M}")
        if not 0 <= detector_index < L:
            raise IndexError("detector index outside masked range")
        return (m - 1) * L + detector_index


def build_node_set(config: ExperimentConfig) -> NodeSet:
    """Build the rotated semisphere nodes R_{t_m} h(y'_l) and their weights.

    The weights realize the quadrature of the inverse Fourier integral over
    the covered frequency set: (time cell) x (frequency cell) x (rotation
    substitution Jacobian k0 |y'_perp| / kappa) x (1/2 for the double
    coverage of a full turn), times the normalization
    ``(2 pi)^-d (2 L_s / K)^d`` linking the discrete transform to the
    continuous one.  With these weights the discrete backpropagation
    ``Re[F* (w . g)]`` approximates the potential directly.

    Raises ``ValueError`` when no detector frequency survives the mask.
    Emits a warning when the node set can leave one periodicity interval
    of the discrete transform (aliasing risk).
    """
    d = config.dim
    k0 = config.k0
    yp = config.detector_frequencies().reshape(-1, d - 1)
    nrm2 = np.sum(yp * yp, axis=-1)
    kap2 = k0 * k0 - nrm2
    kappa_min = KAPPA_MIN_FACTOR * k0
    mask_flat = (nrm2 < k0 * k0) & (kap2 >= kappa_min * kappa_min)
    if not mask_flat.any():
        raise ValueError(
            "every detector frequency lies outside the k0-ball; "
            "increase L_M or k0 (frequency spacing pi/L_M is too coarse)"
        )

    # one-period check: |x_k . nu| per axis must stay below pi per sample
    if config.object_spacing * np.sqrt(2.0) * k0 > np.pi * (1.0 + 1e-12):
        warnings.warn(
            "frequency nodes exceed one periodicity interval of the NDFT "
            "(2*L_s*sqrt(2)*k0/K > pi); aliasing may occur",
            RuntimeWarning,
            stacklevel=2,
        )

    y_masked = yp[mask_flat]
    kap = np.sqrt(kap2[mask_flat])
    h = np.concatenate([y_masked, (kap - k0)[:, None]], axis=1)

    if d == 2:
        perp = np.abs(y_masked[:, 0])
    else:
        # detector coordinate orthogonal to the rotation axis
        perp_col = 1 if config.rotation_axis == 1 else 0
        perp = np.abs(y_masked[:, perp_col])
    jacobian = k0 * perp / kap
    w_per_step = (
        (config.T / config.M)
        * (np.pi / config.L_M) ** (d - 1)
        * jacobian
        * 0.5
        * (2.0 * np.pi) ** (-d)
        * config.object_spacing**d
    )

    times = config.time_steps()
    L = h.shape[0]
    nodes = np.empty((config.M * L, d))
    for i, t in enumerate(times):
        R = rotation_matrix(t, config)
        nodes[i * L : (i + 1) * L] = h @ R.T
    weights = np.tile(w_per_step, config.M)

    return NodeSet(
        config=config,
        nodes=nodes,
        weights=weights,
        mask=mask_flat.reshape(config.detector_shape),
        kappas=kap,
        y_masked=y_masked,
    )


def coefficient_vector(config: ExperimentConfig, nodes: NodeSet | None = None):
    """Diffraction coefficients c_l over the masked detector frequencies.

    c_l = (i / kappa(y'_l)) exp(i kappa(y'_l) r_M) (N/L_M)^(d-1) (L_s/K)^d

    relates the detector-plane DFT of the scattered field to the object's
    nonuniform Fourier samples.  Returned flat, aligned with the masked
    detector indices of ``nodes`` (one time step).
    """
    if nodes is None:
        nodes = build_node_set(config)
    d = config.dim
    kap = nodes.kappas
    amplitude = (config.N / config.L_M) ** (d - 1) * (config.L_s / config.K) ** d
    return (1j / kap) * np.exp(1j * kap * config.r_M) * amplitude
