"""Inverse nonuniform Fourier solvers and the measurement-to-potential pipeline.

Three ways to invert ``F_NDFT f = g`` for a real potential:

* weighted discrete backpropagation (adjoint with quadrature weights),
* conjugate gradients on the weighted normal equations (CGNR), where the
  iteration count acts as regularization,
* a primal-dual splitting for the nonnegativity-constrained, total
  variation regularized least-squares problem, with the adaptive step-size
  backtracking and balancing rules.

Plus total variation denoising with the same machinery, the discrete
gradient/divergence pair, group shrinkage proximal maps, and
:func:`reconstruct`, which chains the detector-side inversion with a chosen
solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .forward import MeasurementStack
from .geometry import ExperimentConfig, NodeSet, build_node_set, coefficient_vector
from .transforms import NdftOperator, dft

__all__ = [
    "grad_op",
    "div_op",
    "tv_norm",
    "prox_group_shrink",
    "prox_dual_tv",
    "project_nonnegative",
    "backpropagation",
    "measurements_to_fourier",
    "cg_solve",
    "PdState",
    "pd_tv_solve",
    "tv_denoise",
    "ReconstructionReport",
    "reconstruct",
    "estimate_operator_norm",
]

# adaptive primal-dual constants
PD_RHO = 0.005
PD_C = 0.9
PD_BETA = 1.5
PD_ZETA = 0.25

TVD_ITERS_2D = 50
TVD_ITERS_3D = 20


# -- discrete differential operators --------------------------------------

def grad_op(f):
    """Forward-difference gradient with a zero row at the top index.

    Returns a vector field of shape ``f.shape + (d,)`` where component
    ``l`` is ``f[k+e_l] - f[k]`` for ``k_l < K/2-1`` and 0 at
    ``k_l = K/2-1``.
    """
    f = np.asarray(f)
    d = f.ndim
    out = np.zeros(f.shape + (d,), dtype=f.dtype)
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out[tuple(lo) + (ax,)] = f[tuple(hi)] - f[tuple(lo)]
    return out


def div_op(y):
    """Backward-difference divergence, the negative adjoint of grad_op.

    Componentwise: y_k at the bottom index, y_k - y_{k-e_l} inside, and
    -y_{k-e_l} at the top index, summed over components.
    """
    y = np.asarray(y)
    d = y.shape[-1]
    out = np.zeros(y.shape[:-1], dtype=y.dtype)
    for ax in range(d):
        comp = y[..., ax]
        first = [slice(None)] * d
        first[ax] = slice(0, 1)
        mid = [slice(None)] * d
        mid[ax] = slice(1, -1)
        midm = [slice(None)] * d
        midm[ax] = slice(0, -2)
        last = [slice(None)] * d
        last[ax] = slice(-1, None)
        lastm = [slice(None)] * d
        lastm[ax] = slice(-2, -1)
        out[tuple(first)] += comp[tuple(first)]
        out[tuple(mid)] += comp[tuple(mid)] - comp[tuple(midm)]
        out[tuple(last)] -= comp[tuple(lastm)]
    return out


def tv_norm(f):
    """Isotropic total variation sum_k |grad f_k|_2."""
    return float(np.sum(np.linalg.norm(grad_op(f), axis=-1)))


# -- proximal maps ----------------------------------------------------------

def prox_group_shrink(y, rho):
    """Per-voxel group soft shrinkage of a vector field.

    (1 - rho / max(|y_k|_2, rho)) y_k for every voxel k; vectors shorter
    than rho collapse to zero.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    y = np.asarray(y)
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    return (1.0 - rho / np.maximum(norms, rho)) * y


def prox_dual_tv(y, sigma, lam):
    """Proximal map of the conjugate TV term via the Moreau identity.

    y - sigma * prox_{(lam/sigma)|.|_{1,2}}(y/sigma); equals the per-voxel
    projection onto the l2 ball of radius lam, independent of sigma.
    """
    if sigma <= 0 or lam <= 0:
        raise ValueError("sigma and lam must be positive")
    y = np.asarray(y)
    return y - sigma * prox_group_shrink(y / sigma, lam / sigma)


def project_nonnegative(f):
    return np.maximum(f, 0.0)


# -- inverse NDFT ------------------------------------------------------------

def _operator_for(nodes, operator):
    if operator is not None:
        return operator
    return NdftOperator(nodes)


def backpropagation(g, nodes: NodeSet, operator: NdftOperator | None = None):
    """Discrete backpropagation Re[F*(w . g)] with quadrature weights.

    The weights built into the node set make this a direct approximation
    of the potential (inverse Fourier integral over the covered frequency
    set); the real part is taken since the potential is real.
    """
    op = _operator_for(nodes, operator)
    return op.adjoint(nodes.weights * np.asarray(g)).real


def measurements_to_fourier(stack: MeasurementStack, config: ExperimentConfig,
                            nodes: NodeSet):
    """Detector stack -> nonuniform Fourier samples g (node-ordered).

    Subtract the incident plane wave, DFT each time step, divide by the
    diffraction coefficients on the masked frequencies, drop the rest.
    Algebraically exact inverse of the detector-side half of the forward
    map.
    """
    if stack.kind == "magnitude":
        raise ValueError(
            "magnitude-only stack has no phase; use the phase_retrieval module"
        )
    if stack.kind != "total":
        raise ValueError("measurements_to_fourier expects a total-field stack")
    stack.check_config(config)
    c = coefficient_vector(config, nodes)
    det_axes = tuple(range(1, config.dim))
    scattered = stack.values - np.exp(1j * config.k0 * config.r_M)
    spectra = dft(scattered, axes=det_axes)
    return (spectra[:, nodes.mask] / c[None, :]).ravel()


def _weighted_norm(r, w):
    return float(np.sqrt(np.sum(w * np.abs(r) ** 2)))


@dataclass
class ReconstructionReport:
    """Result of one inversion run.

    ``residuals[j]`` is the weighted data residual |F f^(j) - g|_{2,w} of
    the j-th iterate (index 0 is the initial guess), so its length is
    iterations + 1.  ``tv_values`` tracks |grad f^(j)|_{1,2} alongside.
    """

    potential: np.ndarray
    residuals: np.ndarray
    tv_values: np.ndarray
    wall_time_s: float
    method: str
    params: dict
    taus: np.ndarray | None = None
    sigmas: np.ndarray | None = None
    stop_reason: str | None = None

    @property
    def iterations(self):
        return len(self.residuals) - 1

    def iteration_records(self):
        """Per-iteration dicts for JSON-lines reports."""
        records = []
        for j in range(len(self.residuals)):
            rec = {"iter": j, "residual": float(self.residuals[j]),
                   "tv": float(self.tv_values[j])}
            if self.taus is not None and j < len(self.taus):
                rec["tau"] = float(self.taus[j])
            if self.sigmas is not None and j < len(self.sigmas):
                rec["sigma"] = float(self.sigmas[j])
            records.append(rec)
        if records:
            records[-1]["wall_ms"] = 1e3 * self.wall_time_s
        return records


def cg_solve(g, nodes: NodeSet, weights_mode="quadrature", J_CG=20, f0=None,
             operator: NdftOperator | None = None) -> ReconstructionReport:
    """Conjugate gradients on the weighted normal equations (CGNR).

    Minimizes |F f - g|^2_{2,w} over real f, with w either the node-set
    quadrature weights or all ones.  The weighted residual is
    non-increasing; the iteration count is the regularization knob
    (J_CG=20 for exact data, about 5 under noise).
    """
    t0 = time.perf_counter()
    op = _operator_for(nodes, operator)
    g = np.asarray(g, dtype=complex)
    if weights_mode == "quadrature":
        w = nodes.weights
    elif weights_mode == "uniform":
        w = np.ones(len(g))
    else:
        raise ValueError(f"unknown weights_mode {weights_mode!r}")
    if J_CG < 1:
        raise ValueError("J_CG must be >= 1")

    f = np.zeros(op.shape) if f0 is None else np.asarray(f0, dtype=float).copy()
    r = g - op.forward(f) if f0 is not None else g.copy()
    s = op.adjoint(w * r).real
    p = s.copy()
    ss = float(np.sum(s * s))

    residuals = [_weighted_norm(r, w)]
    tvs = [tv_norm(f)]
    stop = None
    for _ in range(J_CG):
        q = op.forward(p)
        denom = float(np.real(np.vdot(q, w * q)))
        if denom == 0.0:
            if ss != 0.0:
                stop = "breakdown: q*(w q) = 0 with nonzero normal residual"
            break
        alpha = ss / denom
        f = f + alpha * p
        r = r - alpha * q
        s = op.adjoint(w * r).real
        ss_new = float(np.sum(s * s))
        beta = ss_new / ss if ss > 0 else 0.0
        p = s + beta * p
        ss = ss_new
        residuals.append(_weighted_norm(r, w))
        tvs.append(tv_norm(f))

    return ReconstructionReport(
        potential=f,
        residuals=np.array(residuals),
        tv_values=np.array(tvs),
        wall_time_s=time.perf_counter() - t0,
        method="cg",
        params={"J_CG": J_CG, "weights_mode": weights_mode},
        stop_reason=stop,
    )


def estimate_operator_norm(op: NdftOperator, iterations=10):
    """Power-method estimate of |F_NDFT| (deterministic all-ones start)."""
    v = np.ones(op.shape)
    v /= np.linalg.norm(v)
    norm2 = 1.0
    for _ in range(iterations):
        v = op.adjoint(op.forward(v)).real
        norm2 = np.linalg.norm(v)
        if norm2 == 0:
            return 0.0
        v /= norm2
    return float(np.sqrt(norm2))


@dataclass
class PdState:
    """Primal-dual iterate carried across warm restarts."""

    f: np.ndarray
    y: np.ndarray
    tau: float
    sigma: float
    iteration: int = 0


def _default_steps(w, op):
    opnorm = estimate_operator_norm(op)
    step = 1.0 / np.sqrt(8.0 + float(np.max(w)) * opnorm**2)
    return step, step


def pd_tv_solve(g, nodes: NodeSet, lam, J_PD, warm: PdState | None = None,
                operator: NdftOperator | None = None, f0=None,
                tau0=None, sigma0=None):
    """Primal-dual TV inversion of the NDFT with adaptive step sizes.

    Solves  min_f  X_{>=0}(f) + 1/2 |F f - g|^2_{2,w} + lam |grad f|_{1,2}
    by the relaxed primal-dual iteration with residual-driven backtracking
    (factors beta/zeta on the step sizes) and primal/dual balancing.
    Returns the report and the final state for warm restarts.
    """
    t0 = time.perf_counter()
    op = _operator_for(nodes, operator)
    w = nodes.weights
    g = np.asarray(g, dtype=complex)

    def data_grad(f):
        Ff = op.forward(f)
        return op.adjoint(w * (Ff - g)).real, _weighted_norm(Ff - g, w)

    if warm is not None:
        f = warm.f.copy()
        y = warm.y.copy()
        tau, sigma = warm.tau, warm.sigma
        base_iter = warm.iteration
    else:
        f = np.zeros(op.shape) if f0 is None else np.asarray(f0, dtype=float).copy()
        f = project_nonnegative(f)
        y = np.zeros(op.shape + (len(op.shape),))
        if tau0 is None or sigma0 is None:
            tau, sigma = _default_steps(w, op)
        else:
            tau, sigma = tau0, sigma0
        base_iter = 0

    report, state = _pd_core(f, y, tau, sigma, lam, J_PD, data_grad, base_iter)
    report.wall_time_s = time.perf_counter() - t0
    report.method = "pdtv"
    report.params = {"lambda": lam, "J_PD": J_PD, "warm": warm is not None}
    return report, state


def _pd_core(f, y, tau, sigma, lam, n_iter, data_grad, base_iter,
             adaptive=True):
    """Shared primal-dual loop for NDFT inversion and TV denoising.

    ``data_grad(f)`` returns (gradient of the data term, data residual).
    With ``adaptive`` the step sizes follow the residual-driven
    backtracking/balancing rules (with zero-norm guards); otherwise they
    stay fixed, which converges exactly on well-conditioned problems.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    residuals = []
    tvs = []
    taus = []
    sigmas = []

    gradient, res = data_grad(f)
    for _ in range(n_iter):
        taus.append(tau)
        sigmas.append(sigma)
        residuals.append(res)
        tvs.append(tv_norm(f))

        f_new = project_nonnegative(f - tau * (gradient - div_op(y)))
        y_new = prox_dual_tv(y + sigma * grad_op(2.0 * f_new - f), sigma, lam)
        gradient_new, res_new = data_grad(f_new)

        if adaptive:
            df = f - f_new
            dy = y - y_new
            # by linearity of the data term the Hessian action on df is the
            # gradient difference, saving a second operator application
            p_res = df / tau - (gradient - gradient_new) + div_op(dy)
            d_res = dy / sigma - grad_op(df)

            ndf = np.linalg.norm(df)
            npr = np.linalg.norm(p_res)
            if ndf > 0 and npr > 0:
                omega_p = float(np.sum(df * p_res)) / (ndf * npr)
                if omega_p > PD_C:
                    tau *= PD_BETA
                if omega_p < 0:
                    tau *= PD_ZETA
            ndy = np.linalg.norm(dy)
            ndr = np.linalg.norm(d_res)
            if ndy > 0 and ndr > 0:
                omega_d = float(np.sum(dy * d_res)) / (ndy * ndr)
                if omega_d > PD_C:
                    sigma *= PD_BETA
                if omega_d < 0:
                    sigma *= PD_ZETA
            ny = np.linalg.norm(y_new)
            if ny > 0:
                alpha = np.linalg.norm(f_new) / ny
                if alpha > 0:
                    tau = alpha**PD_RHO * tau
                    sigma = sigma / alpha**PD_RHO

        f, y = f_new, y_new
        gradient, res = gradient_new, res_new

    residuals.append(res)
    tvs.append(tv_norm(f))

    report = ReconstructionReport(
        potential=f,
        residuals=np.array(residuals),
        tv_values=np.array(tvs),
        wall_time_s=0.0,
        method="pd",
        params={},
        taus=np.array(taus),
        sigmas=np.array(sigmas),
    )
    state = PdState(f=f, y=y, tau=tau, sigma=sigma,
                    iteration=base_iter + n_iter)
    return report, state


def tv_denoise(f_in, lam, J_PD=None):
    """Nonnegative TV denoising: min 1/2 |f - f_in|^2 + lam |grad f|_{1,2}.

    Same primal-dual machinery with the identity data term but constant
    admissible step sizes: the backtracking/balancing device targets the
    ill-conditioned Fourier data term and otherwise prevents exact
    convergence on long runs.  Default iteration counts: 50 in 2D, 20 in
    3D.
    """
    f_in = np.asarray(f_in, dtype=float)
    if J_PD is None:
        J_PD = TVD_ITERS_2D if f_in.ndim == 2 else TVD_ITERS_3D

    def data_grad(f):
        return f - f_in, float(np.linalg.norm(f - f_in))

    f = project_nonnegative(f_in)
    y = np.zeros(f_in.shape + (f_in.ndim,))
    step = 1.0 / 3.0  # 1/sqrt(8 + 1) with identity data operator
    t0 = time.perf_counter()
    report, _ = _pd_core(f, y, step, step, lam, J_PD, data_grad, 0,
                         adaptive=False)
    report.wall_time_s = time.perf_counter() - t0
    report.method = "tvd"
    report.params = {"lambda": lam, "J_PD": J_PD}
    return report.potential


def reconstruct(stack: MeasurementStack, config: ExperimentConfig, method,
                nodes: NodeSet | None = None,
                operator: NdftOperator | None = None,
                lam=0.1, J_CG=20, J_PD=50, weights_mode="quadrature",
                f0=None, warm: PdState | None = None,
                tvd_lambda=None, tvd_iters=None) -> ReconstructionReport:
    """Full pipeline: detector stack -> Fourier samples -> chosen solver.

    ``method`` is 'bp', 'cg', or 'pdtv'.  For 'bp' and 'cg' an optional TV
    denoising step runs afterwards when ``tvd_lambda`` is given (the
    "BP & TVd" / "CG & TVd" variants).
    """
    if nodes is None:
        nodes = build_node_set(config)
    op = _operator_for(nodes, operator)
    g = measurements_to_fourier(stack, config, nodes)

    if method == "bp":
        t0 = time.perf_counter()
        f = backpropagation(g, nodes, op)
        res = _weighted_norm(op.forward(f) - g, nodes.weights)
        report = ReconstructionReport(
            potential=f,
            residuals=np.array([res]),
            tv_values=np.array([tv_norm(f)]),
            wall_time_s=time.perf_counter() - t0,
            method="bp",
            params={},
        )
    elif method == "cg":
        report = cg_solve(g, nodes, weights_mode=weights_mode, J_CG=J_CG,
                          f0=f0, operator=op)
    elif method == "pdtv":
        report, _ = pd_tv_solve(g, nodes, lam, J_PD, warm=warm, operator=op,
                                f0=f0)
        report.method = "pdtv"
    else:
        raise ValueError(f"unknown method {method!r}")

    if tvd_lambda is not None and method in ("bp", "cg"):
        denoised = tv_denoise(report.potential, tvd_lambda, tvd_iters)
        report.potential = denoised
        report.method = report.method + "+tvd"
        report.params = dict(report.params, tvd_lambda=tvd_lambda)
    return report
