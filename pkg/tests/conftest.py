import numpy as np
import pytest

from borntomo.geometry import ExperimentConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def small_config_2d(K=16, N=32, M=12):
    k0 = 2 * np.pi
    return ExperimentConfig(
        dim=2, k0=k0, r_M=16.0, L_M=np.pi * N / (2 * k0),
        L_s=K / (4 * np.sqrt(2)), K=K, N=N, M=M,
    )


def small_config_3d(K=8, N=8, M=6):
    k0 = 2 * np.pi
    return ExperimentConfig(
        dim=3, k0=k0, r_M=6.0, L_M=np.pi * N / (2 * k0),
        L_s=K / (4 * np.sqrt(2)), K=K, N=N, M=M, rotation_axis=2,
    )


def desk_config_2d(r_M=16.0):
    """The calibrated desk-scale setting used by the acceptance suite."""
    K = N = M = 60
    return ExperimentConfig(
        dim=2, k0=2 * np.pi, r_M=r_M, L_M=19.5,
        L_s=K / (4 * np.sqrt(2)), K=K, N=N, M=M,
    )


def desk_config_3d():
    K = N = M = 24
    k0 = 2 * np.pi
    return ExperimentConfig(
        dim=3, k0=k0, r_M=12.0, L_M=np.pi * N / (2 * k0),
        L_s=K / (4 * np.sqrt(2)), K=K, N=N, M=M, rotation_axis=2,
    )
