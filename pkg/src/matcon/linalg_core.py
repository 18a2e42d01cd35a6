"""Dense matrix and rank-4 tensor algebra.

Rank-4 tensors are plain ``numpy`` arrays of shape ``(m, n, p, q)`` acting on
``p x q`` matrices by contraction of the last two axes. Symmetric matrices are
plain 2-d arrays; every function returning one symmetrizes its output so that
``S[i, j] == S[j, i]`` holds exactly.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

DEFAULT_EXP_CAP = 700.0


class DimensionError(ValueError):
    """Raised when operand shapes do not conform."""


def _as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or min(a.shape) < 1:
        raise DimensionError(f"{name} must be a non-empty 2-d array, got shape {a.shape}")
    return a


def _as_tensor(t, name="tensor") -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 4 or min(t.shape) < 1:
        raise DimensionError(f"{name} must be a non-empty 4-d array, got shape {t.shape}")
    return t


def symmetrize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


# -- tensors ---------------------------------------------------------------


def tensor_apply(T, A) -> np.ndarray:
    """Contract ``T`` against ``A``: ``out[i, j] = sum_{k,l} T[i, j, k, l] A[k, l]``."""
    T = _as_tensor(T)
    A = _as_matrix(A, "A")
    if A.shape != T.shape[2:]:
        raise DimensionError(f"tensor expects a {T.shape[2:]} matrix, got {A.shape}")
    m, n, p, q = T.shape
    return (T.reshape(m * n, p * q) @ A.reshape(p * q)).reshape(m, n)


def tensor_transpose(T) -> np.ndarray:
    """Tensor whose action is the transpose of the action of ``T``."""
    T = _as_tensor(T)
    return np.ascontiguousarray(T.transpose(1, 0, 2, 3))


def tensor_compose(T, U) -> np.ndarray:
    """Slice-wise matrix product: ``out[:, :, k, l] = T[:, :, k, l] @ U[:, :, k, l]``."""
    T = _as_tensor(T, "T")
    U = _as_tensor(U, "U")
    if T.shape[1] != U.shape[0] or T.shape[2:] != U.shape[2:]:
        raise DimensionError(f"cannot compose tensors of shapes {T.shape} and {U.shape}")
    return np.einsum("iakl,ajkl->ijkl", T, U)


def tensor_slices(T) -> np.ndarray:
    """The ``p*q`` slices ``T[:, :, k, l]`` stacked as ``(p, q, m, n)``."""
    return np.ascontiguousarray(_as_tensor(T).transpose(2, 3, 0, 1))


def tensor_op_inf_norm(T) -> float:
    """Largest operator norm over the slices ``T[:, :, k, l]``."""
    slices = tensor_slices(T)
    p, q, m, n = slices.shape
    return float(max(op_norm(s) for s in slices.reshape(p * q, m, n)))


def slicewise_identity(p: int, q: int) -> np.ndarray:
    """Tensor of shape ``(p, q, p, q)`` acting as the identity map."""
    return np.eye(p * q).reshape(p, q, p, q)


def ab_tensor(A, B) -> np.ndarray:
    """Tensor with ``T[i, j, k, l] = A[i, k] B[l, j]``, i.e. ``X -> A X B``."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    return np.einsum("ik,lj->ijkl", A, B)


# -- entrywise operations and norms ----------------------------------------


def hadamard(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionError(f"Hadamard product of shapes {A.shape} and {B.shape}")
    return A * B


def hadamard_pow(A, k: int) -> np.ndarray:
    return np.asarray(A, dtype=float) ** k


def _check_p(p):
    if p not in (1, 2):
        raise ValueError(f"unsupported p={p!r}; expected 1 or 2")


def norm_p_inf(A, p: int) -> float:
    """Largest row l_p norm."""
    _check_p(p)
    return float(np.linalg.norm(_as_matrix(A), ord=p, axis=1).max())


def norm_inf_p(A, p: int) -> float:
    """Largest column l_p norm."""
    _check_p(p)
    return float(np.linalg.norm(_as_matrix(A), ord=p, axis=0).max())


def norm_entry_inf(A) -> float:
    return float(np.abs(np.asarray(A, dtype=float)).max())


def vec(X) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(X, dtype=float).reshape(-1, order="F")


# -- spectral ----------------------------------------------------------------


def sym_eig(S) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and matching orthonormal eigenvectors."""
    S = _as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"symmetric matrix must be square, got {S.shape}")
    if np.abs(S - S.T).max() > 1e-8 * max(1.0, np.abs(S).max()):
        raise ValueError("matrix is not symmetric")
    try:
        w, Q = np.linalg.eigh(symmetrize(S))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ArithmeticError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w[::-1].copy(), Q[:, ::-1].copy()


def lambda_max(S) -> float:
    return float(np.linalg.eigvalsh(symmetrize(_as_matrix(S, "S")))[-1])


def lambda_min(S) -> float:
    return float(np.linalg.eigvalsh(symmetrize(_as_matrix(S, "S")))[0])


def op_norm(X) -> float:
    """Largest singular value, from the smaller Gram matrix."""
    X = _as_matrix(X, "X")
    G = X @ X.T if X.shape[0] <= X.shape[1] else X.T @ X
    return math.sqrt(max(lambda_max(G), 0.0))


def sym_power(S, power: float, rel_clamp: float = 1e-12) -> np.ndarray:
    """Real power of a psd matrix via its eigendecomposition.

    Eigenvalues in ``[-rel_clamp * |S|, 0)`` are roundoff and are set to zero;
    anything more negative is an error for non-integer powers.
    """
    w, Q = sym_eig(S)
    scale = max(abs(w[0]), abs(w[-1]), 0.0)
    if float(power) != int(power):
        if w[-1] < -rel_clamp * max(scale, 1e-300):
            raise ValueError(f"fractional power of a matrix with eigenvalue {w[-1]:.3e}")
        w = np.clip(w, 0.0, None)
    return symmetrize((Q * w**power) @ Q.T)


def sym_exp(S) -> np.ndarray:
    w, Q = sym_eig(S)
    return symmetrize((Q * np.exp(w)) @ Q.T)


def trace_exp(S, cap: float = DEFAULT_EXP_CAP) -> float:
    """``tr exp(S)``; ``math.inf`` once the top eigenvalue exceeds ``cap``."""
    w = np.linalg.eigvalsh(symmetrize(_as_matrix(S, "S")))
    if w[-1] > cap:
        return math.inf
    return float(np.exp(w).sum())


def batch_trace_exp(S: np.ndarray, cap: float = DEFAULT_EXP_CAP) -> np.ndarray:
    """``tr exp`` of a stack of symmetric matrices, ``inf`` where capped."""
    w = np.linalg.eigvalsh(symmetrize(S))
    out = np.exp(np.minimum(w, cap)).sum(axis=-1)
    out[w[..., -1] > cap] = np.inf
    return out


def psd_dominates(A, B, tol: float = 1e-10) -> bool:
    """Whether ``A <= B`` in the psd order, up to ``tol * max(1, |B - A|)``."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape != B.shape:
        raise DimensionError(f"psd comparison of shapes {A.shape} and {B.shape}")
    w = np.linalg.eigvalsh(symmetrize(B - A))
    scale = max(1.0, abs(w[0]), abs(w[-1]))
    return bool(w[0] >= -tol * scale)


# -- dilation ----------------------------------------------------------------


def dilation(X) -> np.ndarray:
    """Symmetric dilation ``[[0, X], [X^T, 0]]``."""
    X = _as_matrix(X, "X")
    m, n = X.shape
    out = np.zeros((m + n, m + n))
    out[:m, m:] = X
    out[m:, :m] = X.T
    return out


def batch_dilation(Z: np.ndarray) -> np.ndarray:
    """Dilation of every matrix in a ``(R, m, n)`` stack."""
    R, m, n = Z.shape
    out = np.zeros((R, m + n, m + n))
    out[:, :m, m:] = Z
    out[:, m:, :m] = Z.transpose(0, 2, 1)
    return out


def batch_op_norm(Z: np.ndarray) -> np.ndarray:
    """Operator norms of a ``(R, m, n)`` stack, as top eigenvalues of dilations."""
    if Z.shape[0] == 0:
        return np.zeros(0)
    return np.maximum(np.linalg.eigvalsh(batch_dilation(Z))[:, -1], 0.0)


def block_diag(*blocks) -> np.ndarray:
    return scipy.linalg.block_diag(*blocks)
