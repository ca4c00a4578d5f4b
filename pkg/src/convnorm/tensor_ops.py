"""Dense-tensor arithmetic: multilinear forms, unfoldings, spectral norms.

Every quantity in this package reduces to a handful of primitives on dense
float64 tensors and complex vectors, collected here.

Conventions
-----------
Tensors are numpy arrays stored row-major (C layout); entries must be finite.
An *unfolding* ``unfold(A, row_axes, col_axes)`` first permutes the axes into
the order ``row_axes + col_axes`` and then reshapes to a matrix in
column-major (Fortran) order, so the first axis listed in each group varies
fastest along that group.  A plain row-major ``A.reshape(r, -1)`` is the same
matrix as ``unfold(A, [0], [d-1, ..., 1])`` up to nothing at all: reversing
the column group converts between the two displays.  Both conventions appear
in the literature; ``fold`` inverts ``unfold`` exactly, and the test suite
pins the mapping on a concrete 2x2x2x2 example.

The multilinear form ``[[A; u1, ..., ud]]`` contracts one vector per axis
*without* conjugating anything; conjugation, where an algorithm needs it, is
applied explicitly by the caller.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_dense_tensor",
    "multilinear_form",
    "partial_contraction",
    "unfold",
    "fold",
    "matrix_spectral_norm",
    "frobenius",
    "frobenius_inner",
]


def as_dense_tensor(a, name: str = "tensor") -> np.ndarray:
    """Coerce to a C-contiguous float64 array and reject NaN/Inf entries."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_vectors(shape: tuple[int, ...], us, skip: int | None = None) -> list[np.ndarray]:
    if len(us) != len(shape):
        raise ValueError(
            f"expected {len(shape)} vectors (one per axis), got {len(us)}"
        )
    out: list[np.ndarray] = []
    for axis, u in enumerate(us):
        if axis == skip:
            out.append(None)  # type: ignore[arg-type]
            continue
        v = np.asarray(u)
        if v.ndim != 1 or v.shape[0] != shape[axis]:
            raise ValueError(
                f"axis {axis}: vector of length "
                f"{v.shape[0] if v.ndim == 1 else v.shape} does not match "
                f"tensor dimension {shape[axis]}"
            )
        out.append(v)
    return out


def multilinear_form(a, us) -> complex:
    """Contract one vector per axis: sum_i A[i1..id] * u1[i1] * ... * ud[id].

    No conjugation is applied.  Vectors may be real or complex; the result is
    returned as a Python complex number.
    """
    arr = as_dense_tensor(a)
    vs = _check_vectors(arr.shape, us)
    result = arr
    for axis in range(arr.ndim - 1, -1, -1):
        result = np.tensordot(result, vs[axis], axes=(axis, 0))
    return complex(result)


def partial_contraction(a, us, hole: int) -> np.ndarray:
    """Contract every axis except ``hole``; entry j is the form with e_j there.

    ``us`` must have one entry per axis; ``us[hole]`` is ignored (it may be
    None).  Returns a vector of length ``a.shape[hole]``.
    """
    arr = as_dense_tensor(a)
    if not 0 <= hole < arr.ndim:
        raise ValueError(f"hole axis {hole} out of range for {arr.ndim} axes")
    vs = _check_vectors(arr.shape, us, skip=hole)
    result = arr
    # Contracting highest axis first keeps original axis j at position j.
    for axis in range(arr.ndim - 1, -1, -1):
        if axis == hole:
            continue
        result = np.tensordot(result, vs[axis], axes=(axis, 0))
    return result


def _check_unfolding(ndim: int, row_axes, col_axes) -> tuple[list[int], list[int]]:
    rows = [int(x) for x in row_axes]
    cols = [int(x) for x in col_axes]
    if sorted(rows + cols) != list(range(ndim)):
        raise ValueError(
            f"row axes {rows} and column axes {cols} must partition "
            f"0..{ndim - 1} with no repeats"
        )
    return rows, cols


def unfold(a, row_axes, col_axes) -> np.ndarray:
    """Matrix unfolding: permute axes to ``row_axes + col_axes``, reshape
    column-major."""
    arr = as_dense_tensor(a)
    rows, cols = _check_unfolding(arr.ndim, row_axes, col_axes)
    shape = arr.shape
    nrows = int(np.prod([shape[i] for i in rows], dtype=np.int64)) if rows else 1
    ncols = int(np.prod([shape[i] for i in cols], dtype=np.int64)) if cols else 1
    return arr.transpose(rows + cols).reshape(nrows, ncols, order="F")


def fold(m, row_axes, col_axes, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for the given original ``shape``."""
    mat = np.asarray(m, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    rows, cols = _check_unfolding(len(shape), row_axes, col_axes)
    perm = rows + cols
    permuted = mat.reshape([shape[i] for i in perm], order="F")
    inverse = np.argsort(perm)
    return np.ascontiguousarray(permuted.transpose(inverse))


def matrix_spectral_norm(m, iters: int = 300, tol: float = 1e-12, seed: int = 0) -> float:
    """Largest singular value via power iteration on the Gram matrix M^H M.

    Starts from a seeded random vector (complex when ``m`` is complex) and
    stops when the singular-value estimate changes by at most ``tol``
    relative, or after ``iters`` iterations.  The estimate is the square root
    of the Rayleigh quotient at the current iterate, which is nondecreasing,
    so early termination can only under-report.  A zero matrix returns 0.
    """
    mat = np.asarray(m)
    if mat.ndim != 2 or mat.size == 0:
        raise ValueError(f"expected a nonempty matrix, got shape {mat.shape}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not mat.any():
        return 0.0
    rng = np.random.default_rng(seed)
    n = mat.shape[1]
    if np.iscomplexobj(mat):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        v = rng.standard_normal(n)
    v = v / np.linalg.norm(v)
    sigma_prev = 0.0
    sigma = 0.0
    for _ in range(iters):
        w = mat @ v
        sigma = float(np.linalg.norm(w))  # sqrt of Rayleigh quotient at unit v
        z = mat.conj().T @ w
        zn = np.linalg.norm(z)
        if zn == 0.0:
            break
        v = z / zn
        if abs(sigma - sigma_prev) <= tol * sigma:
            break
        sigma_prev = sigma
    return sigma


def frobenius(a) -> float:
    """Frobenius norm: square root of the sum of squared entries."""
    arr = as_dense_tensor(a)
    return float(np.linalg.norm(arr.ravel()))


def frobenius_inner(a, b) -> float:
    """Frobenius inner product of two real tensors of identical shape."""
    x = as_dense_tensor(a, "first tensor")
    y = as_dense_tensor(b, "second tensor")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.dot(x.ravel(), y.ravel()))
