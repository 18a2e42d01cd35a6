"""Experiment scenarios: validated configuration, JSON round-trip and corollary presets.

A scenario file is JSON::

    {
      "name": "poisson-3x3",
      "driver": "jump",                 # or "brownian"
      "horizon": 5.0,
      "dims": {"m": 3, "n": 3, "p": 3, "q": 3},
      "T": <process>,                   # exactly one of T / AB / integrand
      "C": <process>,
      "intensity": <process>,           # jump driver only
      "marks": {"law": "constant_one"}, # jump driver only
      "grid_resolution": 0.01,          # brownian driver only, optional
      "preset": "counting_matrix"       # optional tag
    }

A ``<process>`` is either a nested array (constant on ``[0, horizon]``) or
``{"breakpoints": [0, t1, ..., horizon], "values": [v0, v1, ...]}``. Tensors
are nested ``[i][j][k][l]``. ``AB`` is ``{"A": <process>, "B": <process>}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds
from . import linalg_core as la
from .martingale_engine import (
    specialize_AB,
    specialize_matrix_integrand,
    terminal_brownian_batch,
    terminal_jump_batch,
)
from .piecewise import PiecewiseProcess
from .process_sim import MARK_LAWS, IntensitySpec, JumpMarkSpec

DRIVERS = ("jump", "brownian")
FORMS = ("T", "AB", "integrand")


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    driver: str
    horizon: float
    form: str
    coefficients: dict
    C: PiecewiseProcess
    intensity: IntensitySpec | None = None
    marks: JumpMarkSpec | None = None
    grid_resolution: float | None = None
    preset: str | None = None
    T: PiecewiseProcess = field(init=False)

    def __post_init__(self):
        if self.form == "T":
            T = self.coefficients["T"]
        elif self.form == "AB":
            T = specialize_AB(self.coefficients["A"], self.coefficients["B"])
        else:
            T = specialize_matrix_integrand(self.coefficients["A"])
        object.__setattr__(self, "T", T)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(self.T.shape)

    @property
    def is_jump(self) -> bool:
        return self.driver == "jump"

    @property
    def j_max(self) -> float:
        return self.marks.j_max if self.is_jump else 0.0

    @property
    def second_moment(self) -> np.ndarray | None:
        return self.marks.second_moment_matrix(self.C.shape) if self.is_jump else None

    def variance_report(self, t: float | None = None) -> bounds.VarianceReport:
        t = self.horizon if t is None else t
        if self.is_jump:
            return bounds.variance_report(
                self.T, self.C, t, self.intensity.process, self.second_moment, self.j_max
            )
        return bounds.variance_report(self.T, self.C, t)

    def sample_terminal(
        self, replicates: int, seed: int, threads: int = 1, with_qv: bool = False
    ) -> dict[str, np.ndarray]:
        if self.is_jump:
            return terminal_jump_batch(
                self.T, self.C, self.intensity, self.marks, self.horizon,
                replicates, seed, threads, with_qv,
            )
        return terminal_brownian_batch(
            self.T, self.C, self.horizon, replicates, seed, threads,
            self.grid_resolution if with_qv else None, with_qv,
        )

    def to_dict(self) -> dict:
        m, n, p, q = self.dims
        d = {
            "name": self.name,
            "driver": self.driver,
            "horizon": self.horizon,
            "dims": {"m": m, "n": n, "p": p, "q": q},
        }
        if self.form == "T":
            d["T"] = _proc_to_json(self.coefficients["T"], self.horizon)
        elif self.form == "AB":
            d["AB"] = {
                "A": _proc_to_json(self.coefficients["A"], self.horizon),
                "B": _proc_to_json(self.coefficients["B"], self.horizon),
            }
        else:
            d["integrand"] = _proc_to_json(self.coefficients["A"], self.horizon)
        d["C"] = _proc_to_json(self.C, self.horizon)
        if self.is_jump:
            d["intensity"] = _proc_to_json(self.intensity.process, self.horizon)
            d["marks"] = self.marks.to_dict()
        elif self.grid_resolution is not None:
            d["grid_resolution"] = self.grid_resolution
        if self.preset:
            d["preset"] = self.preset
        return d


# -- JSON -------------------------------------------------------------------------


def _proc_to_json(proc: PiecewiseProcess, horizon: float):
    if proc.n_pieces == 1 and proc.horizon == horizon:
        return proc.values[0].tolist()
    return {"breakpoints": proc.breakpoints.tolist(), "values": proc.values.tolist()}


def _parse_proc(raw, path: str, horizon: float, ndim: int) -> PiecewiseProcess:
    try:
        if isinstance(raw, dict):
            if set(raw) != {"breakpoints", "values"}:
                raise ScenarioError(path, "piecewise process needs exactly 'breakpoints' and 'values'")
            proc = PiecewiseProcess(np.asarray(raw["breakpoints"], float), np.asarray(raw["values"], float))
        else:
            proc = PiecewiseProcess.constant(np.asarray(raw, dtype=float), horizon)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None
    if len(proc.shape) != ndim:
        raise ScenarioError(path, f"expected {ndim}-d values, got shape {proc.shape}")
    if proc.horizon < horizon:
        raise ScenarioError(path, f"process ends at {proc.horizon}, before horizon {horizon}")
    return proc


def _expect_shape(proc, want, path, names):
    got = proc.shape
    for axis, (g, w, nm) in enumerate(zip(got, want, names)):
        if g != w:
            what = ("rows", "columns", "axis 2", "axis 3")[axis]
            raise ScenarioError(path, f"has {g} {what} but dims.{nm} = {w}")


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioError("name", "required non-empty string")
    driver = raw.get("driver")
    if driver not in DRIVERS:
        raise ScenarioError("driver", f"must be one of {DRIVERS}, got {driver!r}")
    horizon = raw.get("horizon")
    if not isinstance(horizon, (int, float)) or not math.isfinite(horizon) or horizon <= 0:
        raise ScenarioError("horizon", "must be a positive number")
    horizon = float(horizon)
    dims = raw.get("dims")
    if not isinstance(dims, dict) or set(dims) != {"m", "n", "p", "q"}:
        raise ScenarioError("dims", "must be an object with integer fields m, n, p, q")
    for k, v in dims.items():
        if not isinstance(v, int) or v < 1:
            raise ScenarioError(f"dims.{k}", "must be a positive integer")
    m, n, p, q = dims["m"], dims["n"], dims["p"], dims["q"]

    present = [f for f in FORMS if f in raw]
    if len(present) != 1:
        raise ScenarioError("T|AB|integrand", f"exactly one coefficient form required, found {present}")
    form = present[0]
    if form == "T":
        T = _parse_proc(raw["T"], "T", horizon, 4)
        _expect_shape(T, (m, n, p, q), "T", "mnpq")
        coeffs = {"T": T}
    elif form == "AB":
        ab = raw["AB"]
        if not isinstance(ab, dict) or set(ab) != {"A", "B"}:
            raise ScenarioError("AB", "must be an object with fields A and B")
        A = _parse_proc(ab["A"], "AB.A", horizon, 2)
        B = _parse_proc(ab["B"], "AB.B", horizon, 2)
        _expect_shape(A, (m, p), "AB.A", "mp")
        _expect_shape(B, (q, n), "AB.B", "qn")
        coeffs = {"A": A, "B": B}
    else:
        if (p, q) != (1, 1):
            raise ScenarioError("dims", "matrix-integrand form needs p = q = 1")
        A = _parse_proc(raw["integrand"], "integrand", horizon, 2)
        _expect_shape(A, (m, n), "integrand", "mn")
        coeffs = {"A": A}

    C = _parse_proc(raw.get("C"), "C", horizon, 2) if "C" in raw else None
    if C is None:
        raise ScenarioError("C", "required")
    _expect_shape(C, (p, q), "C", "pq")

    intensity = marks = None
    resolution = None
    if driver == "jump":
        if "intensity" not in raw:
            raise ScenarioError("intensity", "required for the jump driver")
        lam = _parse_proc(raw["intensity"], "intensity", horizon, 2)
        _expect_shape(lam, (p, q), "intensity", "pq")
        try:
            intensity = IntensitySpec(lam)
        except ValueError as exc:
            raise ScenarioError("intensity", str(exc)) from None
        mk = raw.get("marks", {"law": "constant_one"})
        if not isinstance(mk, dict) or mk.get("law") not in MARK_LAWS:
            raise ScenarioError("marks.law", f"must be one of {MARK_LAWS}")
        unknown = set(mk) - {"law", "a", "prob"}
        if unknown:
            raise ScenarioError("marks", f"unknown fields {sorted(unknown)}")
        try:
            marks = JumpMarkSpec(mk["law"], float(mk.get("a", 1.0)), float(mk.get("prob", 0.5)))
        except ValueError as exc:
            raise ScenarioError("marks", str(exc)) from None
    else:
        for key in ("intensity", "marks"):
            if key in raw:
                raise ScenarioError(key, "only valid for the jump driver")
        resolution = raw.get("grid_resolution")
        if resolution is not None and (not isinstance(resolution, (int, float)) or resolution <= 0):
            raise ScenarioError("grid_resolution", "must be a positive number")

    preset = raw.get("preset")
    if preset is not None and preset not in bounds.PRESETS:
        raise ScenarioError("preset", f"unknown preset {preset!r}")
    known = {"name", "driver", "horizon", "dims", "C", "intensity", "marks", "grid_resolution", "preset"}
    extra = set(raw) - known - set(FORMS)
    if extra:
        raise ScenarioError("<root>", f"unknown fields {sorted(extra)}")
    return Scenario(name, driver, horizon, form, coeffs, C, intensity, marks, resolution, preset)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(str(path), "file not found") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"malformed JSON: {exc}") from None
    return scenario_from_dict(raw)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


# -- presets -----------------------------------------------------------------------


def _const(value, horizon):
    return PiecewiseProcess.constant(np.asarray(value, dtype=float), horizon)


def preset_scenario(name: str, **params) -> Scenario:
    """Scenario realizing a named corollary through the general tensor pipeline.

    Parameters match :func:`matcon.bounds.corollary_presets`; omitted ones
    take the defaults used in the acceptance suite.
    """
    if name == "counting_matrix":
        C = np.atleast_2d(np.asarray(params.get("C", np.ones((3, 3))), dtype=float))
        lam = np.asarray(params.get("lam", 1.0), dtype=float) * np.ones(C.shape)
        t = float(params.get("t", 5.0))
        p, q = C.shape
        return Scenario(
            params.get("scenario_name", "counting_matrix"), "jump", t, "T",
            {"T": _const(la.slicewise_identity(p, q), t)}, _const(C, t),
            IntensitySpec(_const(lam, t)), JumpMarkSpec("constant_one"), preset=name,
        )
    if name == "scalar_point_process":
        A = np.asarray(params.get("A", [1.0, 0.5, 0.25]), dtype=float).ravel()
        lam = np.asarray(params.get("lam", [1.0, 2.0, 3.0]), dtype=float) * np.ones(A.shape)
        t = float(params.get("t", 2.0))
        k = A.size
        return Scenario(
            params.get("scenario_name", "scalar_point_process"), "jump", t, "AB",
            {"A": _const(A[None, :], t), "B": _const([[1.0]], t)}, _const(np.ones((k, 1)), t),
            IntensitySpec(_const(lam[:, None], t)), JumpMarkSpec("constant_one"), preset=name,
        )
    if name == "static_gaussian":
        c = params.get("c")
        if c is None:
            c = np.ones((params.get("n", 20), params.get("m", 20)))
        c = np.atleast_2d(np.asarray(c, dtype=float))
        p, q = c.shape
        return Scenario(
            params.get("scenario_name", "static_gaussian"), "brownian", 1.0, "T",
            {"T": _const(la.slicewise_identity(p, q), 1.0)}, _const(c, 1.0), preset=name,
        )
    if name == "static_poisson":
        lam = np.atleast_2d(np.asarray(params.get("lam", np.full((5, 5), 2.0)), dtype=float))
        p, q = lam.shape
        return Scenario(
            params.get("scenario_name", "static_poisson"), "jump", 1.0, "T",
            {"T": _const(la.slicewise_identity(p, q), 1.0)}, _const(np.ones((p, q)), 1.0),
            IntensitySpec(_const(lam, 1.0)), JumpMarkSpec("constant_one"), preset=name,
        )
    if name == "tropp_continuous":
        A = params.get("A")
        if A is None:
            rng = np.random.default_rng(params.get("coef_seed", 7))
            A = PiecewiseProcess(np.arange(5.0), rng.standard_normal((4, 3, 2)))
        elif not isinstance(A, PiecewiseProcess):
            A = _const(A, float(params.get("t", 1.0)))
        t = A.horizon
        driver = params.get("driver", "brownian")
        extra = {}
        if driver == "jump":
            extra = {
                "intensity": IntensitySpec(_const([[1.0]], t)),
                "marks": JumpMarkSpec("constant_one"),
            }
        return Scenario(
            params.get("scenario_name", "tropp_continuous"), driver, t, "integrand",
            {"A": A}, _const([[1.0]], t), preset=name, **extra,
        )
    raise KeyError(f"unknown preset {name!r}; expected one of {sorted(bounds.PRESETS)}")
