"""Reconstruction from intensity-only detector data.

Two families:

* :func:`io_retrieve`: the general input-output loop around the full
  forward map (error-reduction or hybrid input-output variants).  Each
  outer iteration approximately inverts the forward map with CG or the
  primal-dual TV solver, projects onto the object constraints
  (non-negativity and a support ball), re-applies the forward map and
  replaces detector magnitudes by the measured ones.
* :func:`md_retrieve`: the two-stage propagation-backpropagation scheme.
  Stage one retrieves the detector-plane phase per time step using only
  free-space propagation and a support constraint on the scattered field
  at the object plane (no realness or positivity there); stage two is a
  standard known-phase inversion of the phase-completed stack.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .forward import MeasurementStack, dtot_apply, free_space_propagate
from .geometry import ExperimentConfig, NodeSet, build_node_set
from .inversion import (
    PdState,
    ReconstructionReport,
    cg_solve,
    measurements_to_fourier,
    pd_tv_solve,
    tv_norm,
)
from .transforms import NdftOperator

__all__ = [
    "sgn_cx",
    "SupportConstraint",
    "object_project",
    "hio_input",
    "io_retrieve",
    "md_retrieve",
]


def sgn_cx(z):
    """Complex sign z/|z| with sgn(0) = 1, applied elementwise.

    Pre-scaling by the largest component keeps the result accurate even on
    subnormal inputs.
    """
    z = np.asarray(z, dtype=complex)
    peak = np.maximum(np.abs(z.real), np.abs(z.imag))
    out = np.ones_like(z)
    nonzero = peak > 0
    # componentwise real division: complex division would underflow on
    # subnormal inputs
    re = z.real[nonzero] / peak[nonzero]
    im = z.imag[nonzero] / peak[nonzero]
    mag = np.hypot(re, im)
    out[nonzero] = re / mag + 1j * (im / mag)
    return out


@dataclass(frozen=True)
class SupportConstraint:
    """Ball support constraint on the object grid.

    ``mask`` marks grid points with |x_k| <= r_s.
    """

    r_s: float
    mask: np.ndarray

    def __post_init__(self):
        self.mask.setflags(write=False)
        if not self.mask.any():
            raise ValueError("support mask is empty; increase r_s")

    @classmethod
    def from_config(cls, config: ExperimentConfig, r_s=None):
        if r_s is None:
            r_s = 0.94 * config.L_s
        if r_s > config.L_s * np.sqrt(config.dim):
            raise ValueError("r_s exceeds the object box diagonal")
        grid = config.object_grid()
        mask = np.sqrt(np.sum(grid**2, axis=-1)) <= r_s
        return cls(r_s=float(r_s), mask=mask)


def object_project(f, support: SupportConstraint):
    """Enforce the object constraints: max(f,0) inside the support, 0 outside."""
    f = np.asarray(f)
    return np.where(support.mask, np.maximum(f, 0.0), 0.0)


def hio_input(f_j, f_tilde_j, f_prev_half, beta):
    """Hybrid input-output feedback rule.

    Where the iterate already satisfies the constraints (f_j == f~_j) keep
    it; elsewhere push the previous input against the constraint violation:
    f_prev_half - beta (f_j - f~_j).
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    feasible = f_j == f_tilde_j
    return np.where(feasible, f_j, f_prev_half - beta * (f_j - f_tilde_j))


def _magnitude_misfit(field_values, d):
    return float(np.linalg.norm(np.abs(field_values) - d))


def io_retrieve(
    d: MeasurementStack,
    config: ExperimentConfig,
    nodes: NodeSet | None = None,
    support: SupportConstraint | None = None,
    variant="hio",
    inner="pdtv",
    J_IO=None,
    beta=0.7,
    lam=0.01,
    J_CG=5,
    J_PD=5,
    warm_inner=True,
    cg_init=None,
    cg_weights_mode="quadrature",
    operator: NdftOperator | None = None,
    seed_phase=None,
) -> ReconstructionReport:
    """Input-output phase retrieval around the full diffraction model.

    ``d`` is a magnitude stack.  ``variant`` selects the input rule
    ('er' strict projection, 'hio' relaxed feedback with ``beta``);
    ``inner`` the approximate inverse ('cg' or 'pdtv').  With 'pdtv' the
    inner solver is warm-started across outer iterations (previous dual
    variable, step sizes and solution) unless ``warm_inner`` is False, and
    is by default preceded by a fast HIO/CG pass whose output seeds the
    loop (``cg_init``).  ``seed_phase`` optionally installs a phase on the
    initial Fourier-domain iterate instead of the default zero phase.

    Residuals in the returned report are the per-iteration magnitude
    misfits | |D f| - d |_2, with the final projected iterate's misfit
    appended.
    """
    if d.kind != "magnitude":
        raise ValueError("io_retrieve expects a magnitude stack")
    d.check_config(config)
    if variant not in ("er", "hio"):
        raise ValueError(f"unknown variant {variant!r}")
    if inner not in ("cg", "pdtv"):
        raise ValueError(f"unknown inner solver {inner!r}")
    if J_IO is None:
        J_IO = 20 if inner == "pdtv" else 10
    if cg_init is None:
        cg_init = inner == "pdtv"

    t0 = time.perf_counter()
    if nodes is None:
        nodes = build_node_set(config)
    if operator is None:
        operator = NdftOperator(nodes)
    dvals = d.values

    g = dvals.astype(complex)
    if seed_phase is not None:
        g = g * sgn_cx(np.exp(1j * np.asarray(seed_phase)))
    if support is None:
        support = SupportConstraint.from_config(config)

    f_prev_half = None
    pd_state: PdState | None = None
    f_cg_prev = None

    if cg_init:
        init = io_retrieve(
            d, config, nodes, support, variant="hio", inner="cg",
            J_IO=10, beta=beta, J_CG=J_CG, cg_weights_mode=cg_weights_mode,
            operator=operator,
        )
        f_prev_half = init.potential
        stack_half = dtot_apply(f_prev_half, config, nodes, operator)
        g = dvals * sgn_cx(stack_half.values)
        if warm_inner:
            pd_state = None  # dual restarts cleanly; primal seeded below
        f_cg_prev = f_prev_half

    misfits = []
    tvs = []
    magnitude_gap = 0.0
    f_proj = None
    for _ in range(J_IO):
        stack_j = MeasurementStack(g, "total")
        g_fourier = measurements_to_fourier(stack_j, config, nodes)
        if inner == "cg":
            rep = cg_solve(g_fourier, nodes, weights_mode=cg_weights_mode,
                           J_CG=J_CG, f0=f_cg_prev, operator=operator)
            f_j = rep.potential
            f_cg_prev = f_j
        else:
            if warm_inner and pd_state is not None:
                rep, pd_state = pd_tv_solve(g_fourier, nodes, lam, J_PD,
                                            warm=pd_state, operator=operator)
            else:
                f_seed = f_prev_half if f_prev_half is not None else None
                rep, pd_state = pd_tv_solve(g_fourier, nodes, lam, J_PD,
                                            operator=operator, f0=f_seed)
                if not warm_inner:
                    pd_state = None
            f_j = rep.potential

        f_proj = object_project(f_j, support)
        if variant == "er":
            f_input = f_proj
        else:
            prev = f_prev_half if f_prev_half is not None else f_proj
            f_input = hio_input(f_j, f_proj, prev, beta)
        f_prev_half = f_input

        stack_half = dtot_apply(f_input, config, nodes, operator)
        misfits.append(_magnitude_misfit(stack_half.values, dvals))
        tvs.append(tv_norm(f_proj))
        g = dvals * sgn_cx(stack_half.values)
        magnitude_gap = max(magnitude_gap, float(np.max(np.abs(np.abs(g) - dvals))))

    final = object_project(f_proj, support) if f_proj is not None else np.zeros(config.object_shape)
    final_stack = dtot_apply(final, config, nodes, operator)
    misfits.append(_magnitude_misfit(final_stack.values, dvals))
    tvs.append(tv_norm(final))

    return ReconstructionReport(
        potential=final,
        residuals=np.array(misfits),
        tv_values=np.array(tvs),
        wall_time_s=time.perf_counter() - t0,
        method=f"{variant}/{inner}",
        params={
            "variant": variant, "inner": inner, "J_IO": J_IO, "beta": beta,
            "lambda": lam, "J_CG": J_CG, "J_PD": J_PD,
            "warm_inner": warm_inner, "cg_init": cg_init,
            "magnitude_gap_max": magnitude_gap,
        },
    )


def md_retrieve(
    d: MeasurementStack,
    config: ExperimentConfig,
    r_s=None,
    J_IO=1000,
    stage1_variant="er",
    beta=0.7,
    method="pdtv",
    lam=0.05,
    J_PD=100,
    J_CG=20,
    nodes: NodeSet | None = None,
    operator: NdftOperator | None = None,
) -> ReconstructionReport:
    """Two-stage propagation-backpropagation phase retrieval.

    Stage one runs the input-output loop per time step with the forward
    map ``v -> P v + e^{i k0 r_M}`` (free-space propagation from the
    object plane to the detector), constraining the scattered field at
    the object plane to a disk of radius ``r_s`` (complex values allowed).
    Stage two inverts the phase-completed stack with a standard solver.

    The scheme relies on the thin-sample/far-detector assumption and only
    performs well for very large r_M; at small distances it falls behind
    the full-model input-output retrieval no matter the budget.
    """
    from .inversion import reconstruct

    if d.kind != "magnitude":
        raise ValueError("md_retrieve expects a magnitude stack")
    d.check_config(config)
    if r_s is None:
        r_s = 0.94 * config.L_s
    t0 = time.perf_counter()

    det = config.detector_grid()
    support_mask = np.sqrt(np.sum(det**2, axis=-1)) <= r_s
    e0 = np.exp(1j * config.k0 * config.r_M)
    dvals = d.values

    g = dvals.astype(complex)
    v_prev_half = None
    misfits = []
    for _ in range(J_IO):
        v = free_space_propagate(g - e0, config.r_M, config, inverse=True)
        v_tilde = np.where(support_mask, v, 0.0)
        if stage1_variant == "er":
            v_input = v_tilde
        elif stage1_variant == "hio":
            prev = v_prev_half if v_prev_half is not None else v_tilde
            feasible = v == v_tilde
            v_input = np.where(feasible, v, prev - beta * (v - v_tilde))
        else:
            raise ValueError(f"unknown stage1_variant {stage1_variant!r}")
        v_prev_half = v_input

        g_half = free_space_propagate(v_input, config.r_M, config) + e0
        misfits.append(_magnitude_misfit(g_half, dvals))
        g = dvals * sgn_cx(g_half)

    completed = MeasurementStack(g, "total")
    rep = reconstruct(completed, config, method, nodes=nodes,
                      operator=operator, lam=lam, J_PD=J_PD, J_CG=J_CG)
    return ReconstructionReport(
        potential=rep.potential,
        residuals=np.array(misfits + [rep.residuals[-1]]),
        tv_values=np.array([tv_norm(rep.potential)] * (len(misfits) + 1)),
        wall_time_s=time.perf_counter() - t0,
        method=f"md/{method}",
        params={"J_IO": J_IO, "r_s": r_s, "stage1_variant": stage1_variant,
                "lambda": lam, "J_PD": J_PD, "J_CG": J_CG},
    )
