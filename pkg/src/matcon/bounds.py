"""Analytic bound quantities: variance matrices, jump bounds and Freedman thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg_core as la
from .piecewise import PiecewiseProcess, pieces


def phi(x):
    """``e^x - 1 - x``."""
    x = np.asarray(x, dtype=float)
    out = np.expm1(x) - x
    # expm1(x) - x cancels for small |x|; the series is exact to rounding there
    small = np.abs(x) < 1e-2
    xs = x[small] if out.ndim else x
    series = xs * xs * (1 / 2 + xs * (1 / 6 + xs * (1 / 24 + xs * (1 / 120 + xs * (1 / 720 + xs / 5040)))))
    if out.ndim:
        out[small] = series
    elif small:
        out = series
    return float(out) if np.ndim(out) == 0 else out


def _psd_weights(lam, EJ2, shape):
    lam = np.ones(shape) if lam is None else np.asarray(lam, dtype=float)
    EJ2 = np.ones(shape) if EJ2 is None else np.asarray(EJ2, dtype=float)
    if lam.shape != shape or EJ2.shape != shape:
        raise la.DimensionError(
            f"intensity {lam.shape} and mark moments {EJ2.shape} must match C {shape}"
        )
    if np.any(lam < 0) or np.any(EJ2 < 0):
        raise ValueError("intensities and second mark moments must be nonnegative")
    return lam, EJ2


def w_discontinuous(T, C, lam, EJ2) -> np.ndarray:
    """``blockdiag(TT^T o X, T^T T o X)`` with ``X = E[J^2] * C^2 * lam``."""
    T = np.asarray(T, dtype=float)
    C = np.asarray(C, dtype=float)
    if T.ndim != 4 or T.shape[2:] != C.shape:
        raise la.DimensionError(f"tensor {T.shape} does not act on C of shape {C.shape}")
    lam, EJ2 = _psd_weights(lam, EJ2, C.shape)
    X = EJ2 * C**2 * lam
    Tt = la.tensor_transpose(T)
    top = la.tensor_apply(la.tensor_compose(T, Tt), X)
    bottom = la.tensor_apply(la.tensor_compose(Tt, T), X)
    return la.symmetrize(la.block_diag(top, bottom))


def w_continuous(T, C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    return w_discontinuous(T, C, np.ones(C.shape), np.ones(C.shape))


def _pieces_for(T_proc, C_proc, lam_proc, t):
    procs = [T_proc, C_proc] + ([lam_proc] if lam_proc is not None else [])
    if t is not None and t > min(p.horizon for p in procs):
        raise ValueError(f"time {t} beyond coefficient horizon")
    bp, vals = pieces(*procs, t=t)
    lams = vals[2] if lam_proc is not None else [None] * len(vals[0])
    return np.diff(bp), vals[0], vals[1], lams


def v_matrix(
    T_proc: PiecewiseProcess,
    C_proc: PiecewiseProcess,
    t: float,
    lam_proc: PiecewiseProcess | None = None,
    EJ2=None,
) -> np.ndarray:
    """``V_t = int_0^t W_s ds``; continuous-driver ``W`` when ``lam_proc`` is None."""
    m, n = T_proc.shape[:2]
    if t == 0:
        return np.zeros((m + n, m + n))
    V = np.zeros((m + n, m + n))
    for dt, T, C, lam in zip(*_pieces_for(T_proc, C_proc, lam_proc, t)):
        if lam is None:
            V += dt * w_continuous(T, C)
        else:
            V += dt * w_discontinuous(T, C, lam, EJ2)
    return la.symmetrize(V)


def sigma_sq(V) -> float:
    return max(la.lambda_max(V), 0.0)


def _max_tensor_norm(T) -> float:
    return max(la.tensor_op_inf_norm(T), la.tensor_op_inf_norm(la.tensor_transpose(T)))


def b_t(T_proc, C_proc, j_max: float, t: float) -> float:
    """``J_max * sup_s |C_s|_inf * max(|T_s|_{op;inf}, |T_s^T|_{op;inf})`` on ``[0, t]``."""
    _, Ts, Cs, _ = _pieces_for(T_proc, C_proc, None, t)
    return j_max * max(la.norm_entry_inf(C) * _max_tensor_norm(T) for T, C in zip(Ts, Cs))


def _phi_ratio(xi: float, beta: float) -> float:
    """``phi(xi * beta) / beta**2``, continued to ``xi**2 / 2`` at ``beta = 0``."""
    y = xi * beta
    if beta == 0.0:
        return 0.5 * xi**2
    if abs(y) < 1e-5:
        return xi**2 * (0.5 + y / 6.0 + y * y / 24.0)
    return phi(y) / beta**2


def integrability_integral(
    T_proc, C_proc, lam_proc, EJ2, j_max: float, t: float, xi: float = 3.0
) -> np.ndarray:
    """``int_0^t phi(xi beta_s) / beta_s^2 W_s ds`` with ``beta_s = J_max |C_s|_inf max|T_s|``."""
    m, n = T_proc.shape[:2]
    out = np.zeros((m + n, m + n))
    for dt, T, C, lam in zip(*_pieces_for(T_proc, C_proc, lam_proc, t)):
        beta = j_max * la.norm_entry_inf(C) * _max_tensor_norm(T)
        out += dt * _phi_ratio(xi, beta) * w_discontinuous(T, C, lam, EJ2)
    return la.symmetrize(out)


@dataclass(frozen=True)
class BoundQuery:
    x: float
    v: float
    b: float
    m: int
    n: int

    def __post_init__(self):
        if self.x <= 0:
            raise ValueError("x must be positive")
        if self.v < 0 or self.b < 0:
            raise ValueError("v and b must be nonnegative")


def freedman_threshold(q: BoundQuery, form: str = "theorem") -> float:
    """Deviation level of the Freedman bound.

    ``form="theorem"`` folds the dimension into the threshold,
    ``sqrt(2 v (x + log(m+n))) + b (x + log(m+n)) / 3`` with tail cap ``e^{-x}``;
    ``form="union"`` is ``sqrt(2 v x) + b x / 3`` with cap ``(m+n) e^{-x}``.
    """
    if form == "theorem":
        L = q.x + math.log(q.m + q.n)
    elif form == "union":
        L = q.x
    else:
        raise ValueError(f"unknown threshold form {form!r}")
    return math.sqrt(2.0 * q.v * L) + q.b * L / 3.0


def tail_cap(x: float, m: int, n: int, form: str = "theorem") -> float:
    if form == "theorem":
        return math.exp(-x)
    if form == "union":
        return (m + n) * math.exp(-x)
    raise ValueError(f"unknown threshold form {form!r}")


def mean_bound(sigma: float, b: float, m: int, n: int) -> float:
    L = math.log(m + n)
    return sigma * math.sqrt(2.0 * L) + b * L / 3.0


# -- discrete series ----------------------------------------------------------


def tropp_variance(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """``max(|sum E S S^T|, |sum E S^T S|)`` from ``(E S S^T, E S^T S)`` pairs."""
    left = sum(p[0] for p in pairs)
    right = sum(p[1] for p in pairs)
    return max(la.op_norm(left), la.op_norm(right))


def aw_variance(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """``max(sum |E S S^T|, sum |E S^T S|)``."""
    return max(
        math.fsum(la.op_norm(p[0]) for p in pairs), math.fsum(la.op_norm(p[1]) for p in pairs)
    )


def summand_covariances(T, C, dt: float = 1.0, lam=None, EJ2=None):
    """``(E S S^T, E S^T S)`` for ``S = T o (C * dM)`` over an interval of length ``dt``.

    Computed from the covariance of ``vec(S)``: the driver increments are
    uncorrelated with variances ``dt * E[J^2] * lam`` (``dt`` for Brownian).
    """
    T = np.asarray(T, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n, p, q = T.shape
    lam, EJ2 = _psd_weights(lam, EJ2, C.shape)
    # columns of L are vec(T o E^{kl}) scaled by C_kl
    L = np.stack(
        [la.vec(T[:, :, k, l] * C[k, l]) for l in range(q) for k in range(p)], axis=1
    )
    var = dt * np.stack([EJ2[k, l] * lam[k, l] for l in range(q) for k in range(p)])
    cov = (L * var) @ L.T  # Cov(vec S), index a*m + i <-> S[i, a]
    cov4 = cov.reshape(n, m, n, m)  # [a, i, b, j] = Cov(S_ia, S_jb)
    ssT = np.einsum("aiaj->ij", cov4)
    sTs = np.einsum("aibi->ab", cov4)
    return la.symmetrize(ssT), la.symmetrize(sTs)


# -- the A (C * dM) B form -----------------------------------------------------


def w_ab_form(A, B, C, lam, EJ2) -> np.ndarray:
    """Block formula ``P^T blockdiag(diag[X diag[BB^T] 1], diag[X^T diag[A^T A] 1]) P``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    p, q = C.shape
    if A.shape[1] != p or B.shape[0] != q:
        raise la.DimensionError(f"A {A.shape}, C {C.shape}, B {B.shape} do not conform")
    lam, EJ2 = _psd_weights(lam, EJ2, C.shape)
    X = EJ2 * C**2 * lam
    d_top = X @ np.diag(np.diag(B @ B.T)) @ np.ones(q)
    d_bottom = X.T @ np.diag(np.diag(A.T @ A)) @ np.ones(p)
    P = la.block_diag(A.T, B)
    return la.symmetrize(P.T @ la.block_diag(np.diag(d_top), np.diag(d_bottom)) @ P)


def b_t_ab(A_proc, B_proc, C_proc, j_max: float, t: float) -> float:
    """``J_max sup_s |A_s|_{inf,2} |B_s|_{2,inf} |C_s|_inf``."""
    bp, (As, Bs, Cs) = pieces(A_proc, B_proc, C_proc, t=t)
    return j_max * max(
        la.norm_inf_p(A, 2) * la.norm_p_inf(B, 2) * la.norm_entry_inf(C)
        for A, B, C in zip(As, Bs, Cs)
    )


# -- reports ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VarianceReport:
    V: np.ndarray
    sigma_sq: float
    b_t: float
    block_norms: tuple[float, float]
    integrability_value: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "sigma_sq": self.sigma_sq,
            "b_t": self.b_t,
            "block_norms": list(self.block_norms),
            "V_t": self.V.tolist(),
            "integrability_value": None
            if self.integrability_value is None
            else self.integrability_value.tolist(),
        }


def variance_report(
    T_proc, C_proc, t: float, lam_proc=None, EJ2=None, j_max: float | None = None
) -> VarianceReport:
    """All variance quantities for one scenario; ``lam_proc=None`` means Brownian."""
    m = T_proc.shape[0]
    V = v_matrix(T_proc, C_proc, t, lam_proc, EJ2)
    blocks = (la.op_norm(V[:m, :m]), la.op_norm(V[m:, m:]))
    if lam_proc is None:
        return VarianceReport(V, sigma_sq(V), 0.0, blocks)
    j_max = 1.0 if j_max is None else j_max
    return VarianceReport(
        V,
        sigma_sq(V),
        b_t(T_proc, C_proc, j_max, t),
        blocks,
        integrability_integral(T_proc, C_proc, lam_proc, EJ2, j_max, t),
    )


# -- corollary presets ----------------------------------------------------------

PRESETS = {
    "counting_matrix": "C * d(N - Lambda) for a matrix of independent counting processes",
    "scalar_point_process": "sum_k int A^(k) d(N^(k) - Lambda^(k)), a scalar martingale",
    "static_gaussian": "matrix of independent centered Gaussians with variances c_ij^2",
    "static_poisson": "centered matrix of independent Poisson(lambda_ij) entries",
    "tropp_continuous": "int A_s dM_s for a scalar driver M",
}


@dataclass(frozen=True, eq=False)
class CorollaryBound:
    """Closed-form variance, jump bound and threshold of one corollary."""

    name: str
    sigma_sq: float
    b_t: float
    dims: tuple[int, int]
    form: str
    V: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def threshold(self, x: float) -> float:
        m, n = self.dims
        return freedman_threshold(BoundQuery(x, self.sigma_sq, self.b_t, m, n), self.form)

    def cap(self, x: float) -> float:
        return tail_cap(x, *self.dims, form=self.form)


def _diag_rowcol(X):
    return la.block_diag(np.diag(X.sum(axis=1)), np.diag(X.sum(axis=0)))


def corollary_presets(name: str, **params) -> CorollaryBound:
    """Closed-form bound of a named corollary.

    ``counting_matrix``: ``C``, ``lam`` (p x q), ``t``.
    ``scalar_point_process``: vectors ``A``, ``lam``, ``t``.
    ``static_gaussian``: ``c`` (n x m matrix of standard deviations).
    ``static_poisson``: ``lam`` (n x m).
    ``tropp_continuous``: ``A`` (matrix or matrix-valued PiecewiseProcess),
    ``t``, ``driver`` in ``{"jump", "brownian"}``.
    """
    if name == "counting_matrix":
        C = np.atleast_2d(np.asarray(params["C"], dtype=float))
        lam = np.asarray(params["lam"], dtype=float) * np.ones(C.shape)
        X = params.get("t", 1.0) * C**2 * lam
        v = max(la.norm_p_inf(X, 1), la.norm_inf_p(X, 1))
        return CorollaryBound(name, v, la.norm_entry_inf(C), C.shape, "theorem", _diag_rowcol(X))
    if name == "scalar_point_process":
        A = np.asarray(params["A"], dtype=float).ravel()
        lam = np.asarray(params["lam"], dtype=float) * np.ones(A.shape)
        v = params.get("t", 1.0) * float(np.sum(A**2 * lam))
        return CorollaryBound(name, v, float(np.abs(A).max()), (1, 1), "union", np.diag([v, v]))
    if name == "static_gaussian":
        c = np.atleast_2d(np.asarray(params["c"], dtype=float))
        X = c**2
        v = max(float(X.sum(axis=1).max()), float(X.sum(axis=0).max()))
        return CorollaryBound(name, v, 0.0, c.shape, "theorem", _diag_rowcol(X))
    if name == "static_poisson":
        lam = np.atleast_2d(np.asarray(params["lam"], dtype=float))
        v = max(la.norm_p_inf(lam, 1), la.norm_inf_p(lam, 1))
        return CorollaryBound(name, v, 1.0, lam.shape, "union", _diag_rowcol(lam))
    if name == "tropp_continuous":
        A = params["A"]
        t = params.get("t")
        if not isinstance(A, PiecewiseProcess):
            A = PiecewiseProcess.constant(A, 1.0 if t is None else t)
        t = A.horizon if t is None else t
        AAt = PiecewiseProcess(A.breakpoints, np.einsum("kij,klj->kil", A.values, A.values))
        AtA = PiecewiseProcess(A.breakpoints, np.einsum("kji,kjl->kil", A.values, A.values))
        left, right = AAt.integral(t), AtA.integral(t)
        v = max(la.op_norm(left), la.op_norm(right))
        bp, (As,) = pieces(A, t=t)
        if params.get("driver", "jump") == "jump":
            b = max(la.op_norm(a) for a in As)
        else:
            b = 0.0
        printed = max(max(la.norm_p_inf(a, 2), la.norm_inf_p(a, 2)) for a in As)
        return CorollaryBound(
            name,
            v,
            b,
            A.shape,
            "union",
            la.block_diag(left, right),
            {"b_t_row_col_norms": printed},
        )
    raise KeyError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
