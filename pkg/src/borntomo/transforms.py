"""Uniform and nonuniform discrete Fourier transforms on symmetric grids.

The uniform DFT follows the symmetric index convention: both signal and
spectrum live on ``I_N = {-N/2, ..., N/2-1}``, which maps onto the standard
FFT through pre/post index shifts.

The nonuniform transform evaluates

    g_j = sum_{k in I_K^d} f_k exp(-i x_k . nu_j),     x_k = spacing * k,

at arbitrary frequency vectors ``nu_j``.  Two implementations are provided:
a direct summation (the permanent test oracle, default for small grids) and
a gridding-based fast transform (oversampled FFT plus a compactly supported
Kaiser-Bessel window) with a relative l2 accuracy target of 1e-6 or better
at the default settings.
"""

from __future__ import annotations

import numpy as np

from .geometry import NodeSet

__all__ = [
    "dft",
    "idft",
    "ndft_direct",
    "ndft_adjoint_direct",
    "NfftPlan",
    "NdftOperator",
    "ndft",
    "ndft_adjoint",
    "real_inner",
]

# Grids up to this size per axis use the direct transform by default.
DIRECT_SIZE_LIMIT = 16

_NODE_CHUNK = 2048


def dft(signal, axes=None):
    """Symmetric-index DFT: hat_v_l = sum_{n in I_N} v_n e^{-2 pi i n.l/N}."""
    signal = np.asarray(signal)
    if axes is None:
        axes = tuple(range(signal.ndim))
    _check_even(signal, axes)
    x = np.fft.ifftshift(signal, axes=axes)
    x = np.fft.fftn(x, axes=axes)
    return np.fft.fftshift(x, axes=axes)


def idft(spectrum, axes=None):
    """Inverse of :func:`dft`, including the 1/N^d factor."""
    spectrum = np.asarray(spectrum)
    if axes is None:
        axes = tuple(range(spectrum.ndim))
    _check_even(spectrum, axes)
    x = np.fft.ifftshift(spectrum, axes=axes)
    x = np.fft.ifftn(x, axes=axes)
    return np.fft.fftshift(x, axes=axes)


def _check_even(arr, axes):
    for ax in axes:
        if arr.shape[ax] % 2 != 0:
            raise ValueError("symmetric-index transforms require even length")


def _node_array(nodes):
    if isinstance(nodes, NodeSet):
        return nodes.nodes, nodes.config.object_spacing
    arr = np.atleast_2d(np.asarray(nodes, dtype=float))
    return arr, None


def _resolve(f_shape, nodes, spacing):
    arr, node_spacing = _node_array(nodes)
    if spacing is None:
        spacing = node_spacing
    if spacing is None:
        raise ValueError("spacing is required when nodes is a bare array")
    d = arr.shape[1]
    if len(f_shape) != d:
        raise ValueError(
            f"object array is {len(f_shape)}-dimensional but nodes have {d} components"
        )
    if isinstance(nodes, NodeSet) and f_shape != nodes.config.object_shape:
        raise ValueError(
            f"object shape {f_shape} does not match node set grid {nodes.config.object_shape}"
        )
    return arr, spacing


def _object_coords(shape, spacing):
    axes = [spacing * np.arange(-(K // 2), K // 2) for K in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))


def ndft_direct(f, nodes, spacing=None):
    """Nonuniform DFT by direct summation; O(K^d * #nodes).

    ``nodes`` is a :class:`~borntomo.geometry.NodeSet` or a plain array of
    frequency vectors of shape (n, d).  For plain arrays the grid
    ``spacing`` (2*L_s/K) must be supplied.
    """
    f = np.asarray(f)
    arr, spacing = _resolve(f.shape, nodes, spacing)
    coords = _object_coords(f.shape, spacing)
    fv = f.ravel()
    out = np.empty(arr.shape[0], dtype=complex)
    for lo in range(0, arr.shape[0], _NODE_CHUNK):
        hi = min(lo + _NODE_CHUNK, arr.shape[0])
        kernel = np.exp(-1j * (coords @ arr[lo:hi].T))
        out[lo:hi] = kernel.T @ fv
    return out


def ndft_adjoint_direct(g, nodes, shape, spacing=None):
    """Adjoint NDFT by direct summation: (F* g)_k = sum_j g_j e^{+i x_k.nu_j}."""
    g = np.asarray(g, dtype=complex)
    arr, spacing = _resolve(shape, nodes, spacing)
    if g.shape != (arr.shape[0],):
        raise ValueError(f"expected {arr.shape[0]} samples, got {g.shape}")
    coords = _object_coords(shape, spacing)
    out = np.zeros(coords.shape[0], dtype=complex)
    for lo in range(0, arr.shape[0], _NODE_CHUNK):
        hi = min(lo + _NODE_CHUNK, arr.shape[0])
        kernel = np.exp(1j * (coords @ arr[lo:hi].T))
        out += kernel @ g[lo:hi]
    return out.reshape(shape)


def real_inner(x, y):
    """Real inner product sum Re[x conj(y)] used for adjoint identities."""
    return float(np.sum(np.real(x * np.conj(y))))


class NfftPlan:
    """Gridding plan for the fast NDFT and its adjoint on one node set.

    Oversampled-FFT / window approach: deconvolve by the window's Fourier
    coefficients, zero-padded FFT on an ``oversampling * K`` grid, then
    locally interpolate each node with a Kaiser-Bessel window of half-width
    ``cutoff`` grid cells.  The default cutoff (6 in 2D, 4 in 3D where the
    per-node work grows cubically) gives relative errors around 1e-11 and
    1e-8 respectively, below the 1e-6 contract.
    """

    def __init__(self, nodes, shape, spacing, oversampling=2, cutoff=None):
        arr, spacing = _resolve(shape, nodes, spacing)
        self.shape = tuple(shape)
        self.d = len(self.shape)
        if cutoff is None:
            cutoff = 6 if self.d <= 2 else 4
        self.K = self.shape[0]
        if any(s != self.K for s in self.shape):
            raise ValueError("fast transform expects a cubic grid")
        self.n_nodes = arr.shape[0]
        self.m = int(cutoff)
        self.n_over = int(oversampling * self.K)
        self.b = np.pi * (2.0 - 1.0 / oversampling)

        # nodes in units of the 1-periodic torus, wrapped to [-1/2, 1/2)
        xi = arr * (spacing / (2.0 * np.pi))
        xi -= np.round(xi)

        m, n = self.m, self.n_over
        u = n * xi  # oversampled-grid units, per axis
        base = np.round(u).astype(np.int64)
        offsets = np.arange(-m, m + 1)
        self._idx = []
        self._win = []
        for ax in range(self.d):
            taps = base[:, ax, None] + offsets[None, :]
            dist = u[:, ax, None] - taps
            self._idx.append(np.mod(taps, n))
            self._win.append(self._window(dist))
        # window Fourier coefficients for deconvolution, per axis
        k = np.arange(-(self.K // 2), self.K // 2)
        self._deconv1d = 1.0 / np.i0(m * np.sqrt(self.b**2 - (2.0 * np.pi * k / n) ** 2))
        deconv = self._deconv1d
        for _ in range(self.d - 1):
            deconv = deconv[..., None] * self._deconv1d
        self._deconv = deconv

    def _window(self, u):
        m, b = self.m, self.b
        out = np.zeros_like(u)
        inside = np.abs(u) < m
        root = np.sqrt(m * m - u[inside] ** 2)
        out[inside] = np.sinh(b * root) / (np.pi * root)
        edge = np.abs(u) == m
        out[edge] = b / np.pi
        return out

    def forward(self, f):
        f = np.asarray(f)
        if f.shape != self.shape:
            raise ValueError(f"expected shape {self.shape}, got {f.shape}")
        n, K = self.n_over, self.K
        padded = np.zeros((n,) * self.d, dtype=complex)
        center = tuple(slice(n // 2 - K // 2, n // 2 + K // 2) for _ in range(self.d))
        padded[center] = f * self._deconv
        # standard FFT order so that tap indices (mod n) address it directly
        grid = np.fft.fftn(np.fft.ifftshift(padded))
        out = np.empty(self.n_nodes, dtype=complex)
        for lo in range(0, self.n_nodes, _NODE_CHUNK):
            hi = min(lo + _NODE_CHUNK, self.n_nodes)
            vals = grid[self._gather_index(lo, hi)]
            out[lo:hi] = np.sum(vals * self._tap_weights(lo, hi), axis=tuple(range(1, self.d + 1)))
        return out

    def adjoint(self, g):
        g = np.asarray(g, dtype=complex)
        if g.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} samples, got {g.shape}")
        n, K = self.n_over, self.K
        acc = np.zeros(n**self.d, dtype=complex)
        for lo in range(0, self.n_nodes, _NODE_CHUNK):
            hi = min(lo + _NODE_CHUNK, self.n_nodes)
            w = self._tap_weights(lo, hi) * g[lo:hi].reshape((-1,) + (1,) * self.d)
            lin = self._linear_index(lo, hi)
            acc += np.bincount(lin.ravel(), weights=w.real.ravel(), minlength=n**self.d)
            acc += 1j * np.bincount(lin.ravel(), weights=w.imag.ravel(), minlength=n**self.d)
        grid = acc.reshape((n,) * self.d)
        # conjugate-kernel uniform transform: sum_l B_l e^{+2 pi i k l / n};
        # the accumulator is in standard FFT order (taps were taken mod n)
        spec = n**self.d * np.fft.fftshift(np.fft.ifftn(grid))
        center = tuple(slice(n // 2 - K // 2, n // 2 + K // 2) for _ in range(self.d))
        return spec[center] * self._deconv

    def _gather_index(self, lo, hi):
        idx = []
        for ax in range(self.d):
            shp = [hi - lo] + [1] * self.d
            shp[1 + ax] = 2 * self.m + 1
            idx.append(self._idx[ax][lo:hi].reshape(shp))
        return tuple(idx)

    def _tap_weights(self, lo, hi):
        w = None
        for ax in range(self.d):
            shp = [hi - lo] + [1] * self.d
            shp[1 + ax] = 2 * self.m + 1
            wa = self._win[ax][lo:hi].reshape(shp)
            w = wa if w is None else w * wa
        return w

    def _linear_index(self, lo, hi):
        idx = self._gather_index(lo, hi)
        lin = idx[0]
        for ax in range(1, self.d):
            lin = lin * self.n_over + idx[ax]
        return np.broadcast_to(lin, (hi - lo,) + (2 * self.m + 1,) * self.d)


class NdftOperator:
    """NDFT + adjoint bound to one node set, picking direct or fast path.

    ``mode`` is 'auto' (direct for K <= 16, fast otherwise), 'direct', or
    'fast'.  Instances are immutable and safe to share across solvers.
    """

    def __init__(self, nodes, shape=None, spacing=None, mode="auto"):
        if isinstance(nodes, NodeSet):
            shape = nodes.config.object_shape if shape is None else tuple(shape)
        elif shape is None:
            raise ValueError("shape is required when nodes is a bare array")
        else:
            shape = tuple(shape)
        self.nodes = nodes
        self.shape = shape
        arr, self.spacing = _resolve(shape, nodes, spacing)
        self.n_nodes = arr.shape[0]
        if mode == "auto":
            mode = "direct" if max(shape) <= DIRECT_SIZE_LIMIT else "fast"
        if mode not in ("direct", "fast"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self._plan = (
            NfftPlan(arr, shape, self.spacing) if mode == "fast" else None
        )
        self._arr = arr

    def forward(self, f):
        if self._plan is not None:
            return self._plan.forward(f)
        return ndft_direct(f, self._arr, self.spacing)

    def adjoint(self, g):
        if self._plan is not None:
            return self._plan.adjoint(g)
        return ndft_adjoint_direct(g, self._arr, self.shape, self.spacing)


def ndft(f, nodes, spacing=None, mode="auto"):
    """Nonuniform DFT of ``f``; see :class:`NdftOperator` for ``mode``."""
    return NdftOperator(nodes, np.asarray(f).shape, spacing, mode).forward(f)


def ndft_adjoint(g, nodes, shape, spacing=None, mode="auto"):
    """Adjoint nonuniform DFT of the samples ``g`` onto ``shape``."""
    return NdftOperator(nodes, shape, spacing, mode).adjoint(g)
