"""Pathwise construction of ``Z_t = int_0^t T_s o (C_s * dM_s)``.

Coefficients are deterministic and piecewise constant, so both drivers are
integrated without discretization error: jumps event by event with the
compensating drift in closed form, Brownian increments on a grid that
contains every breakpoint.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linalg_core as la
from .piecewise import PiecewiseProcess, common_breakpoints, pieces
from .process_sim import (
    BrownianPath,
    IntensitySpec,
    JumpMarkSpec,
    JumpStream,
    sample_brownian_increments,
    sample_jump_sums,
    simulate_brownian,
)
from .rng import TAG_BROWNIAN_BATCH, TAG_JUMP_BATCH, RngStream, blocks


@dataclass(frozen=True, eq=False)
class MartingalePath:
    """Values of ``Z`` at event times (jump driver) or grid times (Brownian driver).

    ``increments[i]`` is the martingale part of ``values[i+1] - values[i]``:
    the jump itself for a jump path (the drift is continuous and carries no
    quadratic variation), the full grid increment for a Brownian path.
    """

    kind: str
    times: np.ndarray
    values: np.ndarray
    increments: np.ndarray
    horizon: float

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape[1:]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


def _check_conform(T_proc: PiecewiseProcess, C_proc: PiecewiseProcess, pq):
    if len(T_proc.shape) != 4:
        raise la.DimensionError(f"tensor process must hold rank-4 tensors, got {T_proc.shape}")
    if T_proc.shape[2:] != tuple(pq) or C_proc.shape != tuple(pq):
        raise la.DimensionError(
            f"tensor {T_proc.shape}, C {C_proc.shape} and driver {tuple(pq)} do not conform"
        )


def drift_integral(T_proc, C_proc, rate: PiecewiseProcess, t: float) -> np.ndarray:
    """``int_0^t T_s o (C_s * rate_s) ds``, exact over constant pieces."""
    if t <= 0:
        return np.zeros(T_proc.shape[:2])
    bp, (Ts, Cs, Rs) = pieces(T_proc, C_proc, rate, t=t)
    out = np.zeros(T_proc.shape[:2])
    for dt, T, C, R in zip(np.diff(bp), Ts, Cs, Rs):
        out += dt * la.tensor_apply(T, C * R)
    return out


def integrate_jump(
    T_proc: PiecewiseProcess, C_proc: PiecewiseProcess, driver: JumpStream
) -> MartingalePath:
    _check_conform(T_proc, C_proc, driver.dims)
    horizon = driver.drift.horizon
    if min(T_proc.horizon, C_proc.horizon) < horizon:
        raise ValueError(
            f"coefficient horizon {min(T_proc.horizon, C_proc.horizon)} shorter than "
            f"driver horizon {horizon}"
        )
    m, n = T_proc.shape[:2]
    jump_sum = np.zeros((m, n))
    times, values, jumps = [0.0], [np.zeros((m, n))], []
    for tau, k, l, j in zip(driver.times, driver.rows, driver.cols, driver.marks):
        T = T_proc.value_before(tau)
        C = C_proc.value_before(tau)
        dz = T[:, :, k, l] * (C[k, l] * j)
        jump_sum = jump_sum + dz
        times.append(float(tau))
        values.append(jump_sum - drift_integral(T_proc, C_proc, driver.drift, tau))
        jumps.append(dz)
    times.append(horizon)
    values.append(jump_sum - drift_integral(T_proc, C_proc, driver.drift, horizon))
    jumps.append(np.zeros((m, n)))
    return MartingalePath(
        "jump", np.array(times), np.stack(values), np.stack(jumps), horizon
    )


def _check_grid(grid: np.ndarray, *procs: PiecewiseProcess):
    if grid.size < 2 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    for p in procs:
        if grid[-1] > p.horizon:
            raise ValueError(f"grid end {grid[-1]} beyond coefficient horizon {p.horizon}")
        inner = p.breakpoints[p.breakpoints <= grid[-1]]
        missing = np.setdiff1d(inner, grid)
        if missing.size:
            raise ValueError(f"grid is missing coefficient breakpoints {missing.tolist()}")


def integrate_brownian_path(
    T_proc: PiecewiseProcess, C_proc: PiecewiseProcess, driver: BrownianPath
) -> MartingalePath:
    _check_conform(T_proc, C_proc, driver.dims)
    grid = driver.grid
    _check_grid(grid, T_proc, C_proc)
    m, n = T_proc.shape[:2]
    incs = np.stack(
        [
            la.tensor_apply(T_proc.value_at(t0), C_proc.value_at(t0) * dM)
            for t0, dM in zip(grid[:-1], driver.increments)
        ]
    )
    values = np.concatenate([np.zeros((1, m, n)), np.cumsum(incs, axis=0)])
    return MartingalePath("continuous", grid.copy(), values, incs, float(grid[-1]))


def integrate_brownian(
    T_proc: PiecewiseProcess, C_proc: PiecewiseProcess, grid, stream: RngStream
) -> MartingalePath:
    grid = np.asarray(grid, dtype=float)
    _check_grid(grid, T_proc, C_proc)
    path = simulate_brownian(C_proc.shape, grid, stream)
    return integrate_brownian_path(T_proc, C_proc, path)


def refined_grid(breakpoints, resolution: float | None) -> np.ndarray:
    """Subdivide each piece into equal cells no longer than ``resolution``."""
    bp = np.asarray(breakpoints, dtype=float)
    if resolution is None:
        return bp
    if resolution <= 0:
        raise ValueError("grid resolution must be positive")
    parts = [bp[:1]]
    for a, b in zip(bp[:-1], bp[1:]):
        cells = max(1, int(np.ceil((b - a) / resolution - 1e-9)))
        parts.append(np.linspace(a, b, cells + 1)[1:])
    return np.concatenate(parts)


# -- specializations ----------------------------------------------------------


def specialize_AB(A_proc: PiecewiseProcess, B_proc: PiecewiseProcess) -> PiecewiseProcess:
    """Tensor process of ``X -> A_s X B_s``."""
    if len(A_proc.shape) != 2 or len(B_proc.shape) != 2:
        raise la.DimensionError("A and B must be matrix processes")
    bp, (As, Bs) = pieces(A_proc, B_proc)
    return PiecewiseProcess(bp, np.stack([la.ab_tensor(A, B) for A, B in zip(As, Bs)]))


def specialize_matrix_integrand(A_proc: PiecewiseProcess) -> PiecewiseProcess:
    """Tensor process of ``int A_s dM_s`` for a scalar driver (``p = q = 1``)."""
    if len(A_proc.shape) != 2:
        raise la.DimensionError("integrand must be a matrix process")
    return PiecewiseProcess(A_proc.breakpoints, A_proc.values[..., None, None])


# -- quadratic variation ----------------------------------------------------


def realized_column_row_covariations(path: MartingalePath):
    """``(sum_j [Z_{.,j}]_t, sum_j [Z_{j,.}]_t)`` as ``(m x m, n x n)`` matrices."""
    d = path.increments
    col = np.einsum("sij,skj->ik", d, d)
    row = np.einsum("sji,sjk->ik", d, d)
    return la.symmetrize(col), la.symmetrize(row)


# -- vectorized terminal sampling ----------------------------------------------


def _run_blocks(fn, replicates: int, threads: int):
    work = blocks(replicates)
    if threads > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, work))
    else:
        parts = [fn(w) for w in work]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _slice_grams(T: np.ndarray):
    """Per-slice ``T T^T`` and ``T^T T`` flattened to ``(p*q, m*m)`` and ``(p*q, n*n)``."""
    m, n, p, q = T.shape
    col = np.einsum("ajkl,bjkl->klab", T, T).reshape(p * q, m * m)
    row = np.einsum("jakl,jbkl->klab", T, T).reshape(p * q, n * n)
    return col, row


def terminal_jump_batch(
    T_proc: PiecewiseProcess,
    C_proc: PiecewiseProcess,
    intensity: IntensitySpec,
    marks: JumpMarkSpec,
    t: float,
    replicates: int,
    seed: int,
    threads: int = 1,
    with_qv: bool = False,
) -> dict[str, np.ndarray]:
    """``Z_t`` (and optionally its realized covariations) for many replicates.

    Only per-piece mark sums matter for ``Z_t`` when coefficients are
    piecewise constant, so events are aggregated piece by piece. Returns a dict
    with ``"Z"`` of shape ``(R, m, n)`` and, with ``with_qv``, ``"qv_col"``
    ``(R, m, m)`` and ``"qv_row"`` ``(R, n, n)``.
    """
    _check_conform(T_proc, C_proc, intensity.dims)
    bp, (Ts, Cs, Ls) = pieces(T_proc, C_proc, intensity.process, t=t)
    m, n, p, q = T_proc.shape
    dts = np.diff(bp)
    ej = marks.moment(1)
    G = [(T * C).reshape(m * n, p * q) for T, C in zip(Ts, Cs)]
    drift = [ej * L * dt for L, dt in zip(Ls, dts)]
    grams = [_slice_grams(T) for T in Ts] if with_qv else None
    root = RngStream(seed, (TAG_JUMP_BATCH,))

    def block(work):
        b, size = work
        S, Q = sample_jump_sums(intensity, marks, bp, size, root.child(b))
        Z = np.zeros((size, m * n))
        for i in range(len(dts)):
            Z += (S[:, i] - drift[i]).reshape(size, p * q) @ G[i].T
        out = {"Z": Z.reshape(size, m, n)}
        if with_qv:
            qc = np.zeros((size, m * m))
            qr = np.zeros((size, n * n))
            for i, C in enumerate(Cs):
                w = Q[:, i].reshape(size, p * q) * (C**2).reshape(p * q)
                qc += w @ grams[i][0]
                qr += w @ grams[i][1]
            out["qv_col"] = qc.reshape(size, m, m)
            out["qv_row"] = qr.reshape(size, n, n)
        return out

    return _run_blocks(block, replicates, threads)


def terminal_brownian_batch(
    T_proc: PiecewiseProcess,
    C_proc: PiecewiseProcess,
    t: float,
    replicates: int,
    seed: int,
    threads: int = 1,
    resolution: float | None = None,
    with_qv: bool = False,
) -> dict[str, np.ndarray]:
    """Brownian analogue of :func:`terminal_jump_batch`.

    Without ``resolution`` the grid is just the coefficient breakpoints, which
    already gives the exact law of ``Z_t``; a finer grid only matters for the
    realized covariations.
    """
    _check_conform(T_proc, C_proc, C_proc.shape)
    grid = refined_grid(common_breakpoints(T_proc, C_proc, t=t), resolution)
    mids = 0.5 * (grid[:-1] + grid[1:])
    m, n, p, q = T_proc.shape
    G = [
        (T_proc.value_at(s) * C_proc.value_at(s)).reshape(m * n, p * q) for s in mids
    ]
    root = RngStream(seed, (TAG_BROWNIAN_BATCH,))

    def block(work):
        b, size = work
        dM = sample_brownian_increments((p, q), grid, size, root.child(b))
        dZ = np.stack([dM[:, i].reshape(size, p * q) @ G[i].T for i in range(len(G))], axis=1)
        dZ = dZ.reshape(size, len(G), m, n)
        out = {"Z": dZ.sum(axis=1)}
        if with_qv:
            out["qv_col"] = np.einsum("rsij,rskj->rik", dZ, dZ)
            out["qv_row"] = np.einsum("rsji,rsjk->rik", dZ, dZ)
        return out

    return _run_blocks(block, replicates, threads)
