"""Optical diffraction tomography under the Born approximation.

Forward simulation of scattered-wave measurements, regularized inversion
of the nonuniform discrete Fourier transform (backpropagation, conjugate
gradients, primal-dual total variation), and phase retrieval from
intensity-only data.
"""

from .analysis import (
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
from .forward import (
    MeasurementStack,
    born_convolution_forward,
    dtot_apply,
    free_space_propagate,
    hankel_h1_0,
)
from .geometry import (
    ExperimentConfig,
    NodeSet,
    build_node_set,
    coefficient_vector,
    h_map,
    kappa,
    rotation_matrix,
)
from .inversion import (
    PdState,
    ReconstructionReport,
    backpropagation,
    cg_solve,
    div_op,
    grad_op,
    measurements_to_fourier,
    pd_tv_solve,
    prox_dual_tv,
    prox_group_shrink,
    reconstruct,
    tv_denoise,
    tv_norm,
)
from .phase_retrieval import (
    SupportConstraint,
    hio_input,
    io_retrieve,
    md_retrieve,
    object_project,
    sgn_cx,
)
from .storage import RunConfig, load_config, parse_config, read_array, write_array
from .transforms import (
    NdftOperator,
    NfftPlan,
    dft,
    idft,
    ndft,
    ndft_adjoint,
    ndft_adjoint_direct,
    ndft_direct,
)

__version__ = "0.1.0"
