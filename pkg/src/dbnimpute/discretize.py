"""SAX discretisation of real-valued multivariate series.

Each dimension of each subject is z-normalised over its full series, reduced
with PAA to ``min(T', max_length)`` equal frames (a point straddling a frame
boundary contributes to both frames in proportion to the overlap), and mapped
to one of ``alphabet_size`` equiprobable standard-normal intervals. A value
equal to a breakpoint goes to the higher interval.
"""
from __future__ import annotations

import logging
import math
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DatasetError
from .model import AttributeSpec, Dataset

log = logging.getLogger(__name__)

# Acklam's rational approximation coefficients for the normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    if p > 1 - _P_LOW:
        return -_acklam(1 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)


def norm_ppf(p: float) -> float:
    """Standard-normal quantile: rational approximation plus one Halley step."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p > 0.5:
        # 1 - p is exact here; refining in the lower tail avoids cancellation.
        return -norm_ppf(1.0 - p)
    x = _acklam(p)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def breakpoints(alphabet_size: int) -> np.ndarray:
    """Cut points splitting the standard normal into ``alphabet_size`` equiprobable bins."""
    if alphabet_size < 2:
        raise ValueError("alphabet_size must be >= 2")
    return np.array([norm_ppf(k / alphabet_size) for k in range(1, alphabet_size)])


@dataclass(frozen=True)
class SaxConfig:
    alphabet_size: int = 4
    max_length: int = 100
    truncate: bool = False  # keep the first max_length points instead of PAA

    def __post_init__(self):
        if not 2 <= self.alphabet_size <= 26:
            raise ValueError("alphabet_size must be between 2 and 26")
        if self.max_length < 2:
            raise ValueError("max_length must be >= 2")

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(string.ascii_lowercase[: self.alphabet_size])


def paa(x: np.ndarray, frames: int) -> np.ndarray:
    """Piecewise aggregate approximation of a 1-d series to ``frames`` values."""
    x = np.asarray(x, dtype=float)
    if frames == len(x):
        return x.copy()
    # Repeating every point `frames` times makes each frame exactly len(x) copies.
    return np.repeat(x, frames).reshape(frames, len(x)).mean(axis=1)


def symbolize(values: np.ndarray, cuts: np.ndarray) -> np.ndarray:
    return np.searchsorted(cuts, values, side="right")


@dataclass
class SaxResult:
    dataset: Dataset
    constant_dimensions: list[tuple[str, str]] = field(default_factory=list)


def sax_discretize(
    series: Sequence[np.ndarray] | np.ndarray, config: SaxConfig = SaxConfig(),
    names: Sequence[str] | None = None, subject_ids: Sequence[str] | None = None,
) -> SaxResult:
    """Discretise a list of ``(T', n)`` real-valued arrays (one per subject)."""
    series = [np.asarray(s, dtype=float) for s in series]
    if not series:
        raise DatasetError("no series to discretise")
    n = series[0].shape[1] if series[0].ndim == 2 else 0
    names = list(names) if names is not None else [f"D{i + 1}" for i in range(n)]
    if subject_ids is None:
        subject_ids = [f"s{k + 1}" for k in range(len(series))]
    ids = list(subject_ids)
    cuts = breakpoints(config.alphabet_size)
    out, constant = [], []
    for sid, x in zip(ids, series):
        if x.ndim != 2 or x.shape[1] != n or x.shape[0] == 0:
            raise DatasetError(f"subject {sid!r}: empty or misshapen series {x.shape}")
        if np.isnan(x).any():
            raise DatasetError(f"subject {sid!r}: NaN in input series")
        length = min(x.shape[0], config.max_length)
        grid = np.empty((length, n), dtype=np.int16)
        for i in range(n):
            col = x[:, i]
            std = col.std()
            if not std > 1e-12 * max(1.0, abs(col.mean())):
                grid[:, i] = 0
                constant.append((sid, names[i]))
                continue
            z = (col - col.mean()) / std
            reduced = z[:length] if config.truncate else paa(z, length)
            grid[:, i] = symbolize(reduced, cuts)
        out.append(grid)
    if len({g.shape[0] for g in out}) != 1:
        raise DatasetError("discretised series have different lengths; all subjects must "
                           "have the same length or be at least max_length long")
    if constant:
        log.warning("SAX: %d constant dimension(s) mapped to symbol 0", len(constant))
    attributes = [AttributeSpec(name, config.symbols) for name in names]
    return SaxResult(Dataset(attributes, np.stack(out), tuple(ids)), constant)
