"""Monte Carlo and deterministic checks of the concentration inequalities.

All checks are one-sided: they test that an upper bound holds and never that
it is tight. Monte Carlo verdicts are deterministic functions of
``(scenario, seed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import bounds
from . import linalg_core as la
from .piecewise import pieces
from .rng import TAG_LEMMAS, RngStream
from .scenario import Scenario

CONFIDENCE = 0.99


@dataclass
class Verdict:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "details": self.details}


def clopper_pearson_upper(k: int, n: int, level: float = CONFIDENCE) -> float:
    """Exact one-sided upper confidence limit for a binomial proportion."""
    if not 0 <= k <= n or n < 1:
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    if k == n:
        return 1.0
    return float(stats.beta.ppf(level, k + 1, n - k))


def mean_and_se(values) -> tuple[float, float]:
    """Correctly rounded mean (order independent) and its standard error."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    mean = math.fsum(v) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def _entrywise_mean_se(stack: np.ndarray):
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    se = stack.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


# -- tail experiments --------------------------------------------------------------


@dataclass
class TailRow:
    x: float
    threshold: float
    exceed_count: int
    replicates: int
    upper_cl: float
    cap: float

    @property
    def emp_prob(self) -> float:
        return self.exceed_count / self.replicates

    @property
    def passed(self) -> bool:
        return self.upper_cl <= self.cap


@dataclass
class TailExperiment:
    scenario: str
    form: str
    replicates: int
    seed: int
    rows: list[TailRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "form": self.form,
            "replicates": self.replicates,
            "seed": self.seed,
            "passed": self.passed,
            "rows": [
                {
                    "x": r.x, "threshold": r.threshold, "exceed_count": r.exceed_count,
                    "emp_prob": r.emp_prob, "upper_cl": r.upper_cl, "cap": r.cap,
                    "verdict": "PASS" if r.passed else "FAIL",
                }
                for r in self.rows
            ],
        }


def run_tail_experiment(
    scenario: Scenario,
    x_values: Sequence[float],
    replicates: int,
    seed: int,
    form: str = "theorem",
    threads: int = 1,
    threshold: Callable[[float], tuple[float, float]] | None = None,
) -> TailExperiment:
    """Count replicates with ``|Z_t| >= threshold(x)``.

    By default the threshold is the Freedman level with plug-in ``v = sigma^2``
    and ``b = b_t`` of the scenario, in the given ``form``. A custom
    ``threshold(x) -> (level, cap)`` replaces both level and cap.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    m, n = scenario.dims[:2]
    if threshold is None:
        rep = scenario.variance_report()

        def threshold(x):
            q = bounds.BoundQuery(x, rep.sigma_sq, rep.b_t, m, n)
            return bounds.freedman_threshold(q, form), bounds.tail_cap(x, m, n, form)

        used_form = form
    else:
        used_form = "custom"
    norms = la.batch_op_norm(scenario.sample_terminal(replicates, seed, threads)["Z"])
    rows = []
    for x in x_values:
        level, cap = threshold(float(x))
        # a zero level only arises from v = b = 0, where the bound is the limit
        # of positive levels and the event becomes |Z| > 0
        hits = norms >= level if level > 0 else norms > 0
        k = int(np.count_nonzero(hits))
        rows.append(TailRow(float(x), level, k, replicates, clopper_pearson_upper(k, replicates), cap))
    return TailExperiment(scenario.name, used_form, replicates, seed, rows)


# -- supermartingale displays --------------------------------------------------------


@dataclass
class SupermartingaleCheck:
    xi: float
    values: np.ndarray
    mean: float
    se: float
    cap: float

    @property
    def passed(self) -> bool:
        return self.mean <= self.cap + 3.0 * self.se

    def to_dict(self) -> dict:
        return {
            "xi": self.xi, "mean": self.mean, "se": self.se, "cap": self.cap,
            "replicates": int(self.values.size), "min_value": float(self.values.min()),
            "verdict": "PASS" if self.passed else "FAIL",
        }


def _trace_exp_values(S: np.ndarray, xi: float) -> np.ndarray:
    values = la.batch_trace_exp(S)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"xi too large: exponent overflow at xi={xi}")
    return values


def check_supermartingale_continuous(
    scenario: Scenario, xi: float, replicates: int, seed: int, threads: int = 1
) -> SupermartingaleCheck:
    """``E tr exp(xi S(Z_t) - xi^2/2 V_t) <= m + n`` for a Brownian scenario."""
    if scenario.is_jump:
        raise ValueError("continuous supermartingale check needs a Brownian scenario")
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    m, n = scenario.dims[:2]
    V = scenario.variance_report().V
    Z = scenario.sample_terminal(replicates, seed, threads)["Z"]
    values = _trace_exp_values(xi * la.batch_dilation(Z) - 0.5 * xi**2 * V, xi)
    mean, se = mean_and_se(values)
    return SupermartingaleCheck(xi, values, mean, se, float(m + n))


def check_supermartingale_jump(
    scenario: Scenario, xi: float, replicates: int, seed: int, threads: int = 1
) -> SupermartingaleCheck:
    """``E tr exp((xi/b) S(Z_t) - int phi(xi beta_s / b) / beta_s^2 W_s ds) <= m + n``."""
    if not scenario.is_jump:
        raise ValueError("jump supermartingale check needs a jump scenario")
    if not 0 <= xi <= 3:
        raise ValueError("xi must lie in [0, 3]")
    m, n = scenario.dims[:2]
    b = scenario.variance_report().b_t
    if b == 0:
        raise ValueError("scenario has b_t = 0; the jump check needs a nonzero jump bound")
    comp = bounds.integrability_integral(
        scenario.T, scenario.C, scenario.intensity.process, scenario.second_moment,
        scenario.j_max, scenario.horizon, xi=xi / b,
    )
    Z = scenario.sample_terminal(replicates, seed, threads)["Z"]
    values = _trace_exp_values((xi / b) * la.batch_dilation(Z) - comp, xi)
    mean, se = mean_and_se(values)
    return SupermartingaleCheck(xi, values, mean, se, float(m + n))


# -- deterministic lemmas -----------------------------------------------------------


def deviation_pairs(kind: str, replicates: int, d: int, seed: int):
    """Symmetric ``(X, Y)`` sample stacks for the deviation lemma.

    ``identical``: X = Y, a fixed random symmetric matrix.
    ``noise``: X = Y + diag(N(0, 1)) with Y fixed.
    ``wigner``: Y = 0 and X a symmetric Gaussian matrix.
    """
    rng = RngStream(seed, (TAG_LEMMAS, 1)).generator()
    G = rng.standard_normal((d, d))
    Y0 = la.symmetrize(G)
    Y = np.broadcast_to(Y0, (replicates, d, d)).copy()
    if kind == "identical":
        return Y.copy(), Y
    if kind == "noise":
        D = rng.standard_normal((replicates, d))
        X = Y.copy()
        X[:, np.arange(d), np.arange(d)] += D
        return X, Y
    if kind == "wigner":
        X = la.symmetrize(rng.standard_normal((replicates, d, d)))
        return X, np.zeros_like(X)
    raise ValueError(f"unknown pair kind {kind!r}")


def check_deviation_lemma(X, Y, x_values: Sequence[float], slack: float = 0.0) -> Verdict:
    """``P[lmax(X) >= lmax(Y) + x] <= k e^{-x}`` with ``k = E tr exp(X - Y)``.

    The probability is taken at its exact upper confidence limit and ``k`` at
    its Monte Carlo mean plus three standard errors.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = X.shape[0]
    k_mean, k_se = mean_and_se(la.batch_trace_exp(X - Y))
    k_hi = k_mean + 3.0 * k_se
    gap = np.linalg.eigvalsh(la.symmetrize(X))[:, -1] - np.linalg.eigvalsh(la.symmetrize(Y))[:, -1]
    rows, ok = [], True
    for x in x_values:
        hits = int(np.count_nonzero(gap >= x))
        upper = clopper_pearson_upper(hits, n)
        bound = k_hi * math.exp(-x) * (1.0 + slack)
        rows.append({"x": x, "hits": hits, "upper_cl": upper, "bound": bound})
        ok &= upper <= bound
    return Verdict("deviation_lemma", ok, {"k_mean": k_mean, "k_se": k_se, "rows": rows})


def odd_power_margin(X, k: int) -> tuple[float, float]:
    """Smallest eigenvalue of ``blockdiag((XX^T)^{k+1/2}, (X^TX)^{k+1/2}) - S(X)^{2k+1}`` and the scale."""
    X = np.asarray(X, dtype=float)
    S = la.dilation(X)
    lhs = np.linalg.matrix_power(S, 2 * k + 1)
    rhs = la.block_diag(la.sym_power(X @ X.T, k + 0.5), la.sym_power(X.T @ X, k + 0.5))
    return la.lambda_min(rhs - lhs), la.op_norm(X) ** (2 * k + 1)


def check_odd_power_bound(
    trials: int, dims: tuple[int, int], k_values: Sequence[int], seed: int, tol: float = 1e-8
) -> Verdict:
    rng = RngStream(seed, (TAG_LEMMAS, 2)).generator()
    worst, ok = math.inf, True
    for _ in range(trials):
        X = rng.standard_normal(dims)
        for k in k_values:
            S = la.dilation(X)
            lhs = np.linalg.matrix_power(S, 2 * k + 1)
            rhs = la.block_diag(la.sym_power(X @ X.T, k + 0.5), la.sym_power(X.T @ X, k + 0.5))
            scale = la.op_norm(X) ** (2 * k + 1)
            ok &= la.psd_dominates(lhs, rhs, tol * max(scale, 1.0))
            worst = min(worst, la.lambda_min(rhs - lhs) / max(scale, 1.0))
    return Verdict(
        "odd_power_bound", bool(ok),
        {"trials": trials, "dims": list(dims), "k_values": list(k_values), "worst_relative_margin": worst},
    )


def check_golden_thompson(trials: int, dim: int, seed: int, rel_slack: float = 1e-9) -> Verdict:
    """``tr exp(A + B) <= tr(exp(A) exp(B))`` on random symmetric pairs."""
    rng = RngStream(seed, (TAG_LEMMAS, 3)).generator()
    worst, ok = math.inf, True
    for _ in range(trials):
        A = la.symmetrize(rng.standard_normal((dim, dim)))
        B = la.symmetrize(rng.standard_normal((dim, dim)))
        lhs = la.trace_exp(A + B)
        rhs = float(np.trace(la.sym_exp(A) @ la.sym_exp(B)))
        ok &= lhs <= rhs * (1.0 + rel_slack)
        worst = min(worst, (rhs - lhs) / rhs)
    return Verdict("golden_thompson", bool(ok), {"trials": trials, "dim": dim, "worst_relative_gap": worst})


def check_trace_exp_monotone(trials: int, dim: int, seed: int) -> Verdict:
    """``A <= B`` in psd order implies ``tr exp(A) <= tr exp(B)``."""
    rng = RngStream(seed, (TAG_LEMMAS, 4)).generator()
    ok = True
    for _ in range(trials):
        A = la.symmetrize(rng.standard_normal((dim, dim)))
        G = rng.standard_normal((dim, dim))
        B = A + G @ G.T
        ok &= la.trace_exp(A) <= la.trace_exp(B) * (1.0 + 1e-12)
    return Verdict("trace_exp_monotone", bool(ok), {"trials": trials, "dim": dim})


# -- compensator series ---------------------------------------------------------


@dataclass
class CompensatorSeries:
    K: int
    xi: float
    compensator: np.ndarray
    rhs: np.ndarray
    tail_estimate: float
    margin: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.margin >= -(self.tol + self.tail_estimate)

    def to_dict(self) -> dict:
        return {
            "K": self.K, "xi": self.xi, "tail_estimate": self.tail_estimate,
            "min_eigenvalue_gap": self.margin, "tolerance": self.tol,
            "compensator": self.compensator.tolist(), "rhs": self.rhs.tolist(),
            "verdict": "PASS" if self.passed else "FAIL",
        }


def dilation_power_blocks(X: np.ndarray, j: int) -> np.ndarray:
    """``S(X)^j`` assembled from its blocks.

    Even ``j = 2k``: ``blockdiag((XX^T)^k, (X^TX)^k)``; odd ``j = 2k+1``:
    off-diagonal ``(XX^T)^k X`` and ``X^T (XX^T)^k``.
    """
    m, n = X.shape
    k, odd = divmod(j, 2)
    XXt = np.linalg.matrix_power(X @ X.T, k)
    if not odd:
        return la.block_diag(XXt, np.linalg.matrix_power(X.T @ X, k))
    out = np.zeros((m + n, m + n))
    out[:m, m:] = XXt @ X
    out[m:, :m] = X.T @ XXt
    return out


def compensator_series(scenario: Scenario, xi: float, K: int = 25):
    """Truncated compensator of ``sum_s (e^{xi dS(Z_s)} - xi dS(Z_s) - I)`` and a tail bound.

    Sums the powers ``j = 2..K`` of the exponential series; each event on entry
    ``(a, b)`` contributes ``xi^j C_ab^j E[J^j] S(T_ab)^j / j!`` at rate
    ``lambda_ab``.
    """
    if K < 2:
        raise ValueError("truncation order K must be at least 2")
    if not scenario.is_jump:
        raise ValueError("compensator series needs a jump scenario")
    m, n, p, q = scenario.dims
    marks = scenario.marks
    moments = [marks.moment(j) for j in range(K + 1)]
    bp, (Ts, Cs, Ls) = pieces(scenario.T, scenario.C, scenario.intensity.process, t=scenario.horizon)
    total = np.zeros((m + n, m + n))
    tail = 0.0
    for dt, T, C, L in zip(np.diff(bp), Ts, Cs, Ls):
        for a in range(p):
            for b in range(q):
                if L[a, b] == 0:
                    continue
                X = T[:, :, a, b]
                for j in range(2, K + 1):
                    coef = xi**j * C[a, b] ** j * moments[j] / math.factorial(j)
                    if coef:
                        total += dt * L[a, b] * coef * dilation_power_blocks(X, j)
                y = xi * marks.j_max * abs(C[a, b]) * la.op_norm(X)
                tail += dt * L[a, b] * y ** (K + 1) / math.factorial(K + 1) * math.exp(y)
    return la.symmetrize(total), tail


def check_compensator_domination(
    scenario: Scenario, xi: float, K: int = 25, tol: float = 1e-10
) -> CompensatorSeries:
    comp, tail = compensator_series(scenario, xi, K)
    rhs = bounds.integrability_integral(
        scenario.T, scenario.C, scenario.intensity.process, scenario.second_moment,
        scenario.j_max, scenario.horizon, xi=xi,
    )
    gap = rhs - comp
    w = np.linalg.eigvalsh(la.symmetrize(gap))
    scale = max(1.0, abs(w[0]), abs(w[-1]))
    return CompensatorSeries(K, xi, comp, rhs, tail, float(w[0]), tol * scale)


# -- moment checks ------------------------------------------------------------


def _match_within(mean, se, target, rel_atol=1e-12):
    atol = rel_atol * max(1.0, float(np.abs(target).max()))
    return bool(np.all(np.abs(mean - target) <= 3.0 * se + atol))


def check_variance_consistency(
    scenario: Scenario, replicates: int, seed: int, threads: int = 1
) -> Verdict:
    """Realized covariations and second moments of ``Z_t`` against the blocks of ``V_t``.

    ``E sum_j [Z_{.,j}]_t`` and ``E Z_t Z_t^T`` both equal the upper block of
    ``V_t`` (lower block for the row versions) when coefficients are
    deterministic.
    """
    m, n = scenario.dims[:2]
    rep = scenario.variance_report()
    top, bottom = rep.V[:m, :m], rep.V[m:, m:]
    draws = scenario.sample_terminal(replicates, seed, threads, with_qv=True)
    Z = draws["Z"]
    qc_mean, qc_se = _entrywise_mean_se(draws["qv_col"])
    qr_mean, qr_se = _entrywise_mean_se(draws["qv_row"])
    zz_mean, zz_se = _entrywise_mean_se(np.einsum("rij,rkj->rik", Z, Z))
    ztz_mean, ztz_se = _entrywise_mean_se(np.einsum("rji,rjk->rik", Z, Z))
    qv_ok = _match_within(qc_mean, qc_se, top) and _match_within(qr_mean, qr_se, bottom)
    moment_ok = _match_within(zz_mean, zz_se, top) and _match_within(ztz_mean, ztz_se, bottom)
    details = {
        "replicates": replicates,
        "sigma_sq": rep.sigma_sq,
        "realized_covariation_ok": qv_ok,
        "second_moment_ok": moment_ok,
        "mc_sigma_sq": max(la.op_norm(zz_mean), la.op_norm(ztz_mean)),
        "max_abs_dev_qv_col": float(np.abs(qc_mean - top).max()),
        "max_abs_dev_qv_row": float(np.abs(qr_mean - bottom).max()),
    }
    return Verdict("variance_consistency", qv_ok and moment_ok, details)


def check_mean_bound(scenario: Scenario, replicates: int, seed: int, threads: int = 1) -> Verdict:
    """``E |Z_t| <= sigma sqrt(2 log(m+n)) + b_t log(m+n) / 3``."""
    m, n = scenario.dims[:2]
    rep = scenario.variance_report()
    bound = bounds.mean_bound(math.sqrt(rep.sigma_sq), rep.b_t, m, n)
    norms = la.batch_op_norm(scenario.sample_terminal(replicates, seed, threads)["Z"])
    mean, se = mean_and_se(norms)
    return Verdict(
        "mean_bound", mean <= bound + 3.0 * se,
        {"mc_mean": mean, "se": se, "bound": bound, "replicates": replicates},
    )
