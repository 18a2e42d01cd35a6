"""Driver processes: marked matrix counting processes and Brownian matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .piecewise import PiecewiseProcess
from .rng import RngStream

MARK_LAWS = ("constant_one", "uniform", "rademacher_scaled", "two_point")


@dataclass(frozen=True)
class IntensitySpec:
    """Deterministic piecewise-constant intensity matrix of a ``p x q`` counting process."""

    process: PiecewiseProcess

    def __post_init__(self):
        if len(self.process.shape) != 2:
            raise ValueError(f"intensity values must be matrices, got shape {self.process.shape}")
        if np.any(self.process.values < 0):
            raise ValueError("intensities must be nonnegative")

    @classmethod
    def constant(cls, lam, horizon: float) -> "IntensitySpec":
        return cls(PiecewiseProcess.constant(np.atleast_2d(lam), horizon))

    @property
    def dims(self) -> tuple[int, int]:
        return self.process.shape

    @property
    def horizon(self) -> float:
        return self.process.horizon


@dataclass(frozen=True)
class JumpMarkSpec:
    """Bounded i.i.d. jump marks ``J_n``, the same law for every entry.

    Laws: ``constant_one`` (J = 1), ``uniform`` on ``(-a, a)``,
    ``rademacher_scaled`` (J = +-a with equal probability) and ``two_point``
    (J = a with probability ``prob``, else -a).
    """

    law: str = "constant_one"
    a: float = 1.0
    prob: float = 0.5

    def __post_init__(self):
        if self.law not in MARK_LAWS:
            raise ValueError(f"unknown mark law {self.law!r}; expected one of {MARK_LAWS}")
        if self.a <= 0:
            raise ValueError("mark scale a must be positive")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("two_point probability must lie in [0, 1]")

    @property
    def j_max(self) -> float:
        return 1.0 if self.law == "constant_one" else float(self.a)

    def moment(self, k: int) -> float:
        """``E[J^k]`` in closed form."""
        if k == 0:
            return 1.0
        if self.law == "constant_one":
            return 1.0
        a = float(self.a)
        if self.law == "uniform":
            return 0.0 if k % 2 else a**k / (k + 1)
        if self.law == "rademacher_scaled":
            return 0.0 if k % 2 else a**k
        # two_point
        return a**k if k % 2 == 0 else a**k * (2.0 * self.prob - 1.0)

    def moment_matrix(self, k: int, dims: tuple[int, int]) -> np.ndarray:
        return np.full(dims, self.moment(k))

    def mean_matrix(self, dims) -> np.ndarray:
        return self.moment_matrix(1, dims)

    def second_moment_matrix(self, dims) -> np.ndarray:
        return self.moment_matrix(2, dims)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.law == "constant_one":
            return np.ones(size)
        if self.law == "uniform":
            return rng.uniform(-self.a, self.a, size)
        p = 0.5 if self.law == "rademacher_scaled" else self.prob
        return np.where(rng.random(size) < p, self.a, -self.a)

    def to_dict(self) -> dict:
        d = {"law": self.law}
        if self.law != "constant_one":
            d["a"] = self.a
        if self.law == "two_point":
            d["prob"] = self.prob
        return d


@dataclass(frozen=True, eq=False)
class CountingPath:
    """Jump times and marks of each entry of a ``p x q`` counting process.

    ``times[e]`` and ``marks[e]`` belong to entry ``(e // q, e % q)``.
    """

    dims: tuple[int, int]
    horizon: float
    times: tuple[np.ndarray, ...]
    marks: tuple[np.ndarray, ...]

    def counts(self, t: float | None = None) -> np.ndarray:
        t = self.horizon if t is None else t
        p, q = self.dims
        return np.array([np.searchsorted(ts, t, side="right") for ts in self.times]).reshape(p, q)

    def events(self):
        """All events sorted by time as ``(times, rows, cols, marks)`` arrays."""
        p, q = self.dims
        ts = np.concatenate(self.times) if self.times else np.zeros(0)
        js = np.concatenate(self.marks) if self.marks else np.zeros(0)
        entry = np.concatenate([np.full(len(t), e) for e, t in enumerate(self.times)]).astype(int)
        order = np.argsort(ts, kind="stable")
        return ts[order], entry[order] // q, entry[order] % q, js[order]


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: np.ndarray
    increments: np.ndarray  # (len(grid) - 1, p, q)

    @property
    def dims(self) -> tuple[int, int]:
        return self.increments.shape[1:]

    def values(self) -> np.ndarray:
        p, q = self.increments.shape[1:]
        return np.concatenate([np.zeros((1, p, q)), np.cumsum(self.increments, axis=0)])


@dataclass(frozen=True, eq=False)
class JumpStream:
    """Events of ``M`` plus its deterministic compensating drift rate ``E[J] * lambda``."""

    times: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    marks: np.ndarray
    drift: PiecewiseProcess
    dims: tuple[int, int]

    def value(self, t: float) -> np.ndarray:
        M = np.zeros(self.dims)
        sel = self.times <= t
        np.add.at(M, (self.rows[sel], self.cols[sel]), self.marks[sel])
        return M - self.drift.integral(t)


def _entry_jump_times(rates, bp, rng) -> np.ndarray:
    """Exact jump times for one entry via time change of unit-rate arrivals."""
    cum = np.concatenate([[0.0], np.cumsum(rates * np.diff(bp))])
    total = cum[-1]
    if total <= 0:
        return np.zeros(0)
    arrivals = []
    s = 0.0
    chunk = max(16, int(total + 4 * np.sqrt(total)) + 1)
    while True:
        steps = np.cumsum(rng.exponential(1.0, chunk)) + s
        arrivals.append(steps[steps <= total])
        if steps[-1] > total:
            break
        s = steps[-1]
    s = np.concatenate(arrivals)
    i = np.searchsorted(cum, s, side="left") - 1
    return bp[i] + (s - cum[i]) / rates[i]


def simulate_counting(
    intensity: IntensitySpec, marks: JumpMarkSpec, stream: RngStream
) -> CountingPath:
    """Exact realization of a marked matrix counting process.

    Entry ``e`` draws from ``stream.child(e)``. Should two entries ever share
    a floating-point jump time, the later entry is redrawn from a fresh child
    stream so that no two entries jump together.
    """
    p, q = intensity.dims
    bp = intensity.process.breakpoints
    rates = intensity.process.values
    times, mks = [], []
    seen: set[float] = set()
    for e in range(p * q):
        k, l = divmod(e, q)
        attempt = 0
        while True:
            rng = stream.child(e, attempt).generator() if attempt else stream.child(e).generator()
            ts = _entry_jump_times(rates[:, k, l], bp, rng)
            if len(np.unique(ts)) == len(ts) and not seen.intersection(ts.tolist()):
                break
            attempt += 1
        seen.update(ts.tolist())
        times.append(ts)
        mks.append(marks.sample(rng, len(ts)))
    return CountingPath((p, q), intensity.horizon, tuple(times), tuple(mks))


def compensator_path(intensity: IntensitySpec, grid) -> np.ndarray:
    """``Lambda_t = int_0^t lambda_s ds`` at each grid time, shape ``(len(grid), p, q)``."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < 0 or grid.max() > intensity.horizon):
        raise ValueError(f"grid leaves [0, {intensity.horizon}]")
    return np.stack([intensity.process.integral(t) for t in grid]) if grid.size else np.zeros(
        (0,) + intensity.dims
    )


def martingale_jump_stream(
    path: CountingPath, marks: JumpMarkSpec, intensity: IntensitySpec
) -> JumpStream:
    """Compensated driver ``M_t = sum J dN - int E[J] lambda ds`` as events plus drift."""
    if path.dims != intensity.dims:
        raise ValueError(f"path dims {path.dims} differ from intensity dims {intensity.dims}")
    ts, rows, cols, js = path.events()
    ej = marks.moment(1)
    drift = intensity.process.map(lambda lam: ej * lam)
    return JumpStream(ts, rows, cols, js, drift, path.dims)


def simulate_brownian(dims, grid, stream: RngStream) -> BrownianPath:
    grid = np.asarray(grid, dtype=float)
    p, q = dims
    if grid.size == 0:
        return BrownianPath(grid, np.zeros((0, p, q)))
    if grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    dt = np.diff(grid)
    z = stream.generator().standard_normal((dt.size, p, q))
    return BrownianPath(grid, z * np.sqrt(dt)[:, None, None])


# -- vectorized replicate samplers -----------------------------------------


def sample_jump_sums(
    intensity: IntensitySpec,
    marks: JumpMarkSpec,
    breakpoints: np.ndarray,
    replicates: int,
    stream: RngStream,
):
    """Per-piece sums of marks and of squared marks for many replicates.

    ``breakpoints`` must refine the intensity partition on ``[0, t]``.
    Returns arrays of shape ``(replicates, K, p, q)`` where ``K`` is the number
    of pieces. Counts per piece are Poisson, which is the exact law of the
    number of events of the counting process in that piece.
    """
    p, q = intensity.dims
    bp = np.asarray(breakpoints, dtype=float)
    mids = 0.5 * (bp[:-1] + bp[1:])
    lam = intensity.process.values[
        np.searchsorted(intensity.process.breakpoints, mids, side="right") - 1
    ]
    mean_counts = lam * np.diff(bp)[:, None, None]
    K = bp.size - 1
    S = np.zeros((replicates, K, p, q))
    Q = np.zeros((replicates, K, p, q))
    for e in range(p * q):
        k, l = divmod(e, q)
        rng = stream.child(e).generator()
        counts = rng.poisson(mean_counts[:, k, l], size=(replicates, K))
        flat = counts.reshape(-1)
        if marks.law == "constant_one":
            S[:, :, k, l] = counts
            Q[:, :, k, l] = counts
            continue
        js = marks.sample(rng, int(flat.sum()))
        seg = np.repeat(np.arange(flat.size), flat)
        S[:, :, k, l] = np.bincount(seg, weights=js, minlength=flat.size).reshape(replicates, K)
        Q[:, :, k, l] = np.bincount(seg, weights=js**2, minlength=flat.size).reshape(replicates, K)
    return S, Q


def sample_brownian_increments(
    dims, grid: np.ndarray, replicates: int, stream: RngStream
) -> np.ndarray:
    """Gaussian increments of shape ``(replicates, len(grid) - 1, p, q)``."""
    p, q = dims
    dt = np.diff(np.asarray(grid, dtype=float))
    out = np.empty((replicates, dt.size, p, q))
    sd = np.sqrt(dt)
    for e in range(p * q):
        k, l = divmod(e, q)
        out[:, :, k, l] = stream.child(e).generator().standard_normal((replicates, dt.size)) * sd
    return out
