"""Deterministic piecewise-constant coefficient processes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class PiecewiseProcess:
    """A value held constant on each interval between consecutive breakpoints.

    ``values[i]`` is the value on ``[breakpoints[i], breakpoints[i+1])``.
    At a jump time the integrand is predictable, so integrators read the
    value through :meth:`value_before`.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise ValueError("need at least two breakpoints")
        if bp[0] != 0.0:
            raise ValueError(f"first breakpoint must be 0, got {bp[0]}")
        if not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(bp)):
            raise ValueError("breakpoints must be finite")
        if vals.shape[0] != bp.size - 1:
            raise ValueError(
                f"{bp.size - 1} intervals but {vals.shape[0]} values supplied"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("process values must be finite")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value, horizon: float) -> "PiecewiseProcess":
        return cls(np.array([0.0, float(horizon)]), np.asarray(value, dtype=float)[None])

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def n_pieces(self) -> int:
        return self.values.shape[0]

    def _check_time(self, t: float):
        if t < 0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")

    def value_at(self, t: float) -> np.ndarray:
        """Right-continuous value: the piece ``[t_k, t_{k+1})`` containing ``t``."""
        self._check_time(t)
        i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.values[min(i, self.n_pieces - 1)]

    def value_before(self, t: float) -> np.ndarray:
        """Left limit at ``t`` (the value at ``0`` for ``t == 0``)."""
        self._check_time(t)
        i = int(np.searchsorted(self.breakpoints, t, side="left")) - 1
        return self.values[max(i, 0)]

    def refine(self, breakpoints: Sequence[float]) -> "PiecewiseProcess":
        """Same process on a finer partition of ``[0, horizon]``."""
        bp = np.asarray(breakpoints, dtype=float)
        if bp[0] != 0.0 or bp[-1] != self.horizon:
            raise ValueError("refinement must span [0, horizon]")
        missing = np.setdiff1d(self.breakpoints, bp)
        if missing.size:
            raise ValueError(f"refinement drops breakpoints {missing.tolist()}")
        mids = 0.5 * (bp[:-1] + bp[1:])
        idx = np.searchsorted(self.breakpoints, mids, side="right") - 1
        return PiecewiseProcess(bp, self.values[idx])

    def integral(self, t: float | None = None) -> np.ndarray:
        """Exact ``int_0^t value ds``."""
        t = self.horizon if t is None else float(t)
        self._check_time(t)
        lengths = np.clip(np.minimum(self.breakpoints[1:], t) - self.breakpoints[:-1], 0.0, None)
        return np.tensordot(lengths, self.values, axes=1)

    def map(self, fn) -> "PiecewiseProcess":
        return PiecewiseProcess(self.breakpoints, np.stack([fn(v) for v in self.values]))


def common_breakpoints(*procs: PiecewiseProcess, t: float | None = None) -> np.ndarray:
    """Union of the breakpoints of ``procs`` restricted to ``[0, t]``, with ``t`` included."""
    horizon = min(p.horizon for p in procs)
    t = horizon if t is None else float(t)
    if t > horizon:
        raise ValueError(f"time {t} beyond process horizon {horizon}")
    if t <= 0:
        raise ValueError("need a positive time")
    bp = np.unique(np.concatenate([p.breakpoints for p in procs] + [[0.0, t]]))
    return bp[bp <= t]


def pieces(*procs: PiecewiseProcess, t: float | None = None):
    """Common constant pieces of ``procs`` on ``[0, t]``.

    Returns ``(breakpoints, [values_per_proc])`` where each values array has one
    row per piece.
    """
    bp = common_breakpoints(*procs, t=t)
    mids = 0.5 * (bp[:-1] + bp[1:])
    out = []
    for p in procs:
        idx = np.searchsorted(p.breakpoints, mids, side="right") - 1
        out.append(p.values[idx])
    return bp, out
