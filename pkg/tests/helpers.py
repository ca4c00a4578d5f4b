"""Independent oracles for the test suite.

Everything here deliberately avoids the library code paths it is used to
check: nested loops instead of tensordot, LAPACK eigendecompositions and
SVDs instead of power iterations, damped simultaneous multi-start ascent
instead of alternating sweeps, and plain central differences for gradients.
"""

from __future__ import annotations

import itertools

import numpy as np


def multilinear_loop(a, us) -> complex:
    """Brute-force nested-loop evaluation of the multilinear form."""
    total = 0j
    for idx in itertools.product(*(range(n) for n in a.shape)):
        term = complex(a[idx])
        for axis, i in enumerate(idx):
            term *= complex(us[axis][i])
        total += term
    return total


def partial_loop(a, us, hole: int) -> np.ndarray:
    """Brute-force partial contraction leaving axis ``hole`` free."""
    out = np.zeros(a.shape[hole], dtype=complex)
    for j in range(a.shape[hole]):
        basis = [np.zeros(n, dtype=complex) for n in a.shape]
        filled = list(us)
        basis[hole][j] = 1.0
        filled[hole] = basis[hole]
        out[j] = multilinear_loop(a, filled)
    return out


def dense_norm(m) -> float:
    """Largest singular value via LAPACK SVD (exact small-matrix reference)."""
    return float(np.linalg.norm(np.asarray(m), 2))


def gram_eig_norm(m) -> float:
    """Largest singular value via eigendecomposition of the Gram matrix."""
    mat = np.asarray(m)
    gram = mat.conj().T @ mat
    return float(np.sqrt(max(np.max(np.linalg.eigvalsh(gram)), 0.0)))


def fd_gradient(loss, kernel: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss over every kernel entry."""
    grad = np.zeros_like(kernel)
    for idx in np.ndindex(kernel.shape):
        plus = kernel.copy()
        plus[idx] += step
        minus = kernel.copy()
        minus[idx] -= step
        grad[idx] = (loss(plus) - loss(minus)) / (2.0 * step)
    return grad


def rel_err_max(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest entry deviation relative to the gradient's max-abs scale.

    Central differences cannot resolve entries far below the gradient scale
    to any fixed entrywise precision, so the standard check normalizes by
    the scale; a zero analytic gradient falls back to the absolute error.
    """
    scale = float(np.max(np.abs(analytic)))
    if scale == 0.0:
        return float(np.max(np.abs(numeric)))
    return float(np.max(np.abs(numeric - analytic)) / scale)


def multistart_rank1(a, n_starts: int = 4096, iters: int = 400, damping: float = 0.7,
                     seed: int = 0) -> float:
    """Best rank-1 value by damped simultaneous ascent from many random starts.

    All starts advance in parallel (Jacobi-style: every axis updated from the
    same snapshot, then blended with the previous iterate), which has the
    same fixed points as coordinate sweeps but different dynamics.  Returns
    the largest final objective across starts.
    """
    rng = np.random.default_rng(seed)
    arr = np.asarray(a, dtype=np.float64)
    d = arr.ndim
    letters = "abcdefg"[:d]
    us = []
    for n in arr.shape:
        v = rng.standard_normal((n_starts, n)) + 1j * rng.standard_normal((n_starts, n))
        us.append(v / np.linalg.norm(v, axis=1, keepdims=True))
    for _ in range(iters):
        snapshot = us
        us = []
        for axis in range(d):
            operands, script = [arr], letters
            for j in range(d):
                if j != axis:
                    operands.append(snapshot[j])
                    script += f",B{letters[j]}"
            v = np.einsum(script + f"->B{letters[axis]}", *operands)
            nv = np.linalg.norm(v, axis=1, keepdims=True)
            nv[nv == 0.0] = 1.0
            mixed = (1.0 - damping) * snapshot[axis] + damping * np.conj(v) / nv
            mixed /= np.linalg.norm(mixed, axis=1, keepdims=True)
            us.append(mixed)
    script = letters + "".join(f",B{c}" for c in letters) + "->B"
    values = np.abs(np.einsum(script, arr, *us))
    return float(values.max())


def vec(field: np.ndarray) -> np.ndarray:
    """Flatten a (channels, spatial...) field channel-fastest (matches the
    dense Jacobian's vectorization order)."""
    d = field.ndim - 1
    perm = tuple(range(1, d + 1)) + (0,)
    return field.transpose(perm).ravel()


def random_kernel(rng: np.random.Generator, max_channels: int = 4,
                  max_spatial: int = 5, d: int = 2) -> np.ndarray:
    shape = (
        int(rng.integers(1, max_channels + 1)),
        int(rng.integers(1, max_channels + 1)),
    ) + tuple(int(rng.integers(1, max_spatial + 1)) for _ in range(d))
    return rng.standard_normal(shape)
