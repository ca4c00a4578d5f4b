"""Jacobian-norm bounds: the four-unfolding bound, strides, d dimensions.

The tensor-norm sandwich needs two companions to cover real architectures:

* ``f4_bound`` -- the classic competitor: sqrt(h*w) times the minimum
  spectral norm over four kernel unfoldings.  The tensor norm never exceeds
  the norm of any unfolding, so the TN upper bound is never worse.
* ``strided_kernel_transform`` / ``tn_bound_strided`` -- a stride-s
  convolution equals a stride-1 convolution with a zero-padded, regrouped
  kernel Q; the sandwich then applies to Q with the reduced spatial sizes.
* ``tn_bound_ddim`` -- the same sandwich for kernels with any number of
  spatial axes, with the product of spatial sizes under the square root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hopm import HopmConfig, TnBound, hopm, tn_bound
from .tensor_ops import as_dense_tensor, matrix_spectral_norm, unfold

__all__ = [
    "ConvConfig",
    "BoundReport",
    "f4_bound",
    "strided_kernel_transform",
    "tn_bound_strided",
    "tn_bound_ddim",
    "centered_offsets",
    "make_bound_report",
]


def centered_offsets(spatial_shape: Sequence[int]) -> tuple[tuple[int, int], ...]:
    """Size-preserving (before, after) padding per spatial axis: k//2, k-1-k//2."""
    return tuple((k // 2, k - 1 - k // 2) for k in spatial_shape)


def _normalize_offsets(offsets, d: int) -> tuple[tuple[int, int], ...]:
    items = list(offsets)
    if items and all(np.isscalar(x) for x in items):
        if len(items) != 2 * d:
            raise ValueError(
                f"flat offsets need {2 * d} integers for {d} spatial axes, "
                f"got {len(items)}"
            )
        items = [(items[2 * i], items[2 * i + 1]) for i in range(d)]
    if len(items) != d:
        raise ValueError(f"expected offsets for {d} spatial axes, got {len(items)}")
    out = []
    for axis, pair in enumerate(items):
        lo, hi = int(pair[0]), int(pair[1])
        if lo < 0 or hi < 0:
            raise ValueError(f"spatial axis {axis}: offsets must be nonnegative")
        out.append((lo, hi))
    return tuple(out)


@dataclass(frozen=True)
class ConvConfig:
    """Fixes which Jacobian is meant: padding mode, offsets, stride, input size.

    ``offsets`` holds one (before, after) pair per spatial axis with
    before + after + 1 equal to the kernel size on that axis; ``None`` means
    centered (size-preserving) padding.  A flat (h1, h2, w1, w2) tuple is
    accepted for two spatial axes.  The stride is uniform across spatial
    axes and must divide the input size; circular padding additionally
    requires the input size to be at least the largest kernel size, because
    a kernel wrapping onto itself has no unambiguous block-circulant form.
    """

    input_size: int
    padding: str = "zero"
    stride: int = 1
    offsets: tuple | None = None

    def __post_init__(self):
        if self.padding not in ("zero", "circular"):
            raise ValueError(f"padding must be 'zero' or 'circular', got {self.padding!r}")
        if self.input_size < 1:
            raise ValueError("input_size must be positive")
        if self.stride < 1:
            raise ValueError("stride must be positive")

    def spatial_offsets(self, spatial_shape: Sequence[int]) -> tuple[tuple[int, int], ...]:
        """Resolve offsets against a kernel's spatial shape, validating sizes."""
        d = len(spatial_shape)
        if self.offsets is None:
            return centered_offsets(spatial_shape)
        pairs = _normalize_offsets(self.offsets, d)
        for axis, ((lo, hi), k) in enumerate(zip(pairs, spatial_shape)):
            if lo + hi + 1 != k:
                raise ValueError(
                    f"spatial axis {axis}: offsets {(lo, hi)} imply kernel size "
                    f"{lo + hi + 1}, kernel has {k}"
                )
        return pairs

    def validate_for(self, kernel_shape: Sequence[int]) -> tuple[tuple[int, int], ...]:
        """Full consistency check of this config against a kernel shape."""
        if len(kernel_shape) < 3:
            raise ValueError(
                f"kernel needs at least one spatial axis, got shape {tuple(kernel_shape)}"
            )
        spatial = tuple(kernel_shape[2:])
        pairs = self.spatial_offsets(spatial)
        if self.padding == "circular" and self.input_size < max(spatial):
            raise ValueError(
                f"circular padding needs input_size >= max kernel size "
                f"({max(spatial)}), got {self.input_size}"
            )
        if self.input_size % self.stride != 0:
            raise ValueError(
                f"stride {self.stride} must divide input_size {self.input_size}"
            )
        return pairs


def f4_bound(k, iters: int = 300, tol: float = 1e-12, seed: int = 0) -> float:
    """sqrt(h*w) times the minimum spectral norm over four kernel unfoldings.

    The four unfoldings pair (out,h|in,w), (out,w|in,h), (out|rest), (in|rest);
    each upper-bounds the tensor norm, so this always dominates the TN bound.
    """
    arr = as_dense_tensor(k, "kernel")
    if arr.ndim != 4:
        raise ValueError(f"expected a 4-axis kernel, got {arr.ndim} axes")
    h, w = arr.shape[2], arr.shape[3]
    groups = (
        ([0, 2], [1, 3]),
        ([0, 3], [1, 2]),
        ([0], [1, 2, 3]),
        ([1], [0, 2, 3]),
    )
    norms = [
        matrix_spectral_norm(unfold(arr, rows, cols), iters=iters, tol=tol, seed=seed)
        for rows, cols in groups
    ]
    return math.sqrt(h * w) * min(norms)


def strided_kernel_transform(k, stride: int) -> np.ndarray:
    """Regroup a (c_out, c_in, h, w) kernel so stride-s becomes stride-1.

    Spatial axes are zero-padded at the end up to multiples of ``stride``,
    then each s x s cell of taps is folded into the channel axis:
    K[c, d, a, b] lands at Q[c, d*s^2 + s*(a % s) + (b % s), a // s, b // s].
    The result has shape (c_out, c_in*s^2, ceil(h/s), ceil(w/s)) and the same
    Frobenius norm (the map is a permutation of entries plus zeros).
    """
    arr = as_dense_tensor(k, "kernel")
    if arr.ndim != 4:
        raise ValueError(f"expected a 4-axis kernel, got {arr.ndim} axes")
    s = int(stride)
    if s < 1:
        raise ValueError("stride must be positive")
    if s == 1:
        return arr
    c_out, c_in, h, w = arr.shape
    pad_h = (-h) % s
    pad_w = (-w) % s
    if pad_h or pad_w:
        arr = np.pad(arr, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)))
    hq, wq = (h + pad_h) // s, (w + pad_w) // s
    q = arr.reshape(c_out, c_in, hq, s, wq, s)
    q = q.transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(q.reshape(c_out, c_in * s * s, hq, wq))


def tn_bound_strided(k, stride: int, config: HopmConfig | None = None) -> TnBound:
    """Sandwich for a stride-s Jacobian via the regrouped kernel Q.

    ``upper = sqrt(ceil(h/s) * ceil(w/s)) * sigma(Q)``; at stride 1 this is
    exactly :func:`tn_bound` (same seed gives bit-identical output).  When
    the padded kernel fits in a single s x s cell the spatial size of Q is
    1 x 1 and the sandwich is tight.
    """
    q = strided_kernel_transform(k, stride)
    est = hopm(q, config)
    hq, wq = q.shape[2], q.shape[3]
    return TnBound(lower=est.sigma, upper=math.sqrt(hq * wq) * est.sigma, estimate=est)


def tn_bound_ddim(k, config: HopmConfig | None = None) -> TnBound:
    """Sandwich for kernels with d >= 1 spatial axes at stride 1.

    ``upper = sqrt(k_1 * ... * k_d) * sigma`` on the (d+2)-axis tensor.  For
    d = 2 this coincides bit-for-bit with :func:`tn_bound` under the same
    config.
    """
    arr = as_dense_tensor(k, "kernel")
    if arr.ndim < 3:
        raise ValueError(
            f"expected a kernel with at least one spatial axis, got shape {arr.shape}"
        )
    est = hopm(arr, config)
    spatial_product = float(np.prod(arr.shape[2:], dtype=np.float64))
    return TnBound(lower=est.sigma, upper=math.sqrt(spatial_product) * est.sigma, estimate=est)


@dataclass
class BoundReport:
    """All bound values for one kernel, plus diagnostics and timings.

    Raw values only; ratios are derived on demand so stored reports never
    accumulate rounding.  ``oracle_norm`` stays None unless a reference was
    requested.
    """

    kernel_shape: tuple[int, ...]
    stride: int
    padding: str
    lower_sigma: float
    tn_upper: float
    f4_upper: float
    oracle_norm: float | None = None
    oracle_input_size: int | None = None
    iterations_used: int = 0
    restarts_used: int = 0
    converged: bool = False
    timings_ms: dict = field(default_factory=dict)

    def ratios(self) -> dict:
        out = {}
        if self.oracle_norm:
            out["tn_over_oracle"] = self.tn_upper / self.oracle_norm
            out["f4_over_oracle"] = self.f4_upper / self.oracle_norm
        return out


def make_bound_report(
    k,
    stride: int = 1,
    padding: str = "zero",
    hopm_config: HopmConfig | None = None,
    f4_seed: int = 0,
) -> BoundReport:
    """Compute lower/TN/F4 for one kernel (oracle column left for the caller)."""
    import time

    arr = as_dense_tensor(k, "kernel")
    t0 = time.perf_counter()
    if stride == 1:
        tn = tn_bound(arr, hopm_config)
    else:
        tn = tn_bound_strided(arr, stride, hopm_config)
    t1 = time.perf_counter()
    f4 = f4_bound(arr, seed=f4_seed)
    t2 = time.perf_counter()
    return BoundReport(
        kernel_shape=tuple(arr.shape),
        stride=stride,
        padding=padding,
        lower_sigma=tn.lower,
        tn_upper=tn.upper,
        f4_upper=f4,
        iterations_used=tn.estimate.iterations_used,
        restarts_used=tn.estimate.restarts_used,
        converged=tn.estimate.converged,
        timings_ms={"tn": (t1 - t0) * 1e3, "f4": (t2 - t1) * 1e3},
    )
