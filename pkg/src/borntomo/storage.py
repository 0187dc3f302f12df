"""Bit-exact array files, run configuration parsing, and report emission.

The .odtb array container: 4-byte magic "ODTB", one version byte (1), one
dtype byte (0 = float64, 1 = complex128 stored as interleaved float64
pairs), one ndim byte, one reserved zero byte, then ndim little-endian
uint64 dimensions, then the payload in row-major order with the last axis
fastest.  Symmetric grid indices map to storage by an offset of K/2 per
axis.

Run configuration files are UTF-8 ``key = value`` lines with ``#``
comments; unknown keys are rejected.  Defaults reproduce the reference
experimental setting (K = N = M = 240, r_M = 40, L_M = 60, k0 = 2 pi,
L_s = K/(4 sqrt 2), beta = 0.7).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields

import numpy as np

from .geometry import ExperimentConfig

__all__ = [
    "OdtbError",
    "OdtbBadMagic",
    "OdtbBadVersion",
    "OdtbBadDtype",
    "OdtbTruncated",
    "write_array",
    "read_array",
    "RunConfig",
    "parse_config",
    "load_config",
    "write_report",
]

_MAGIC = b"ODTB"
_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


class OdtbError(Exception):
    """Base class for array-container errors; ``code`` names the failure."""

    code = "odtb-error"


class OdtbBadMagic(OdtbError):
    code = "bad-magic"


class OdtbBadVersion(OdtbError):
    code = "bad-version"


class OdtbBadDtype(OdtbError):
    code = "bad-dtype"


class OdtbTruncated(OdtbError):
    code = "truncated"


def write_array(path, array):
    """Write a real or complex array; roundtrips bitwise via read_array."""
    arr = np.asarray(array)
    if np.iscomplexobj(arr):
        arr = arr.astype("<c16", copy=False)
        dtype_code = 1
    else:
        arr = arr.astype("<f8", copy=False)
        dtype_code = 0
    header = _MAGIC + struct.pack(
        "<BBBB", _VERSION, dtype_code, arr.ndim, 0
    ) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_array(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise OdtbTruncated(f"{path}: header shorter than 8 bytes")
    if blob[:4] != _MAGIC:
        raise OdtbBadMagic(f"{path}: bad magic {blob[:4]!r}")
    version, dtype_code, ndim, reserved = struct.unpack("<BBBB", blob[4:8])
    if version != _VERSION:
        raise OdtbBadVersion(f"{path}: unsupported version {version}")
    if dtype_code not in _DTYPES:
        raise OdtbBadDtype(f"{path}: unknown dtype code {dtype_code}")
    need = 8 + 8 * ndim
    if len(blob) < need:
        raise OdtbTruncated(f"{path}: dimension block truncated")
    dims = struct.unpack(f"<{ndim}Q", blob[8:need])
    dtype = _DTYPES[dtype_code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = blob[need:]
    if len(payload) != count * dtype.itemsize:
        raise OdtbTruncated(
            f"{path}: payload is {len(payload)} bytes, expected "
            f"{count * dtype.itemsize}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


_INT_KEYS = {"dim", "K", "N", "M", "rotation_axis", "J_CG", "J_PD", "J_IO", "seed"}
_FLOAT_KEYS = {"k0", "r_M", "L_M", "L_s", "T", "lambda", "beta", "r_s",
               "noise_level"}
_STR_KEYS = {"method", "input", "output"}
_METHODS = {"bp", "cg", "pdtv"}


@dataclass
class RunConfig:
    """Everything a pipeline run needs: experiment plus solver settings."""

    dim: int = 2
    k0: float = 2.0 * np.pi
    r_M: float = 40.0
    L_M: float = 60.0
    L_s: float | None = None
    K: int = 240
    N: int = 240
    M: int = 240
    T: float = 2.0 * np.pi
    rotation_axis: int | None = None
    method: str | None = None
    lam: float = 0.1
    J_CG: int = 20
    J_PD: int = 50
    J_IO: int = 20
    beta: float = 0.7
    r_s: float | None = None
    noise_level: float = 0.0
    seed: int = 0
    input: str | None = None
    output: str | None = None

    def resolved_L_s(self):
        # the reference choice keeping nodes inside one periodicity interval
        return self.K / (4.0 * np.sqrt(2.0)) if self.L_s is None else self.L_s

    def resolved_r_s(self):
        return 0.94 * self.resolved_L_s() if self.r_s is None else self.r_s

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            dim=self.dim,
            k0=self.k0,
            r_M=self.r_M,
            L_M=self.L_M,
            L_s=self.resolved_L_s(),
            K=self.K,
            N=self.N,
            M=self.M,
            T=self.T,
            rotation_axis=self.rotation_axis if self.dim == 3 else None,
        )


def parse_config(text) -> RunConfig:
    """Parse ``key = value`` configuration text into a validated RunConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = (lineno, value)

    cfg = RunConfig()
    for key, (lineno, value) in values.items():
        attr = "lam" if key == "lambda" else key
        if key in _INT_KEYS:
            try:
                parsed = int(value)
            except ValueError:
                raise ValueError(f"{key}: expected an integer, got {value!r}") from None
        elif key in _FLOAT_KEYS:
            try:
                parsed = float(value)
            except ValueError:
                raise ValueError(f"{key}: expected a number, got {value!r}") from None
        elif key in _STR_KEYS:
            parsed = value
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, attr, parsed)

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.dim not in (2, 3):
        raise ValueError("dim: must be 2 or 3")
    for key in ("K", "N"):
        val = getattr(cfg, key)
        if val <= 0 or val % 2 != 0:
            raise ValueError(f"{key}: must be a positive even integer, got {val}")
    if cfg.M < 1:
        raise ValueError("M: must be >= 1")
    for key in ("k0", "r_M", "L_M", "T", "beta"):
        if getattr(cfg, key) <= 0:
            raise ValueError(f"{key}: must be positive")
    if cfg.L_s is not None and cfg.L_s <= 0:
        raise ValueError("L_s: must be positive")
    if not 0 < cfg.beta <= 1:
        raise ValueError("beta: must lie in (0, 1]")
    if cfg.lam <= 0:
        raise ValueError("lambda: must be positive")
    for key in ("J_CG", "J_PD", "J_IO"):
        if getattr(cfg, key) < 1:
            raise ValueError(f"{key}: must be >= 1")
    if cfg.noise_level < 0:
        raise ValueError("noise_level: must be >= 0")
    if cfg.method is not None and cfg.method not in _METHODS:
        raise ValueError(f"method: must be one of {sorted(_METHODS)}")
    if cfg.rotation_axis is not None and cfg.rotation_axis not in (1, 2):
        raise ValueError("rotation_axis: must be 1 or 2")
    if cfg.r_s is not None and cfg.r_s <= 0:
        raise ValueError("r_s: must be positive")


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def write_report(path, report):
    """Append-free JSON-lines report: one record per iteration."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in report.iteration_records():
            fh.write(json.dumps(record) + "\n")
