"""Closed-form constants of the coupled dynamics and contour series bounds.

Everything here is a function of the local map (through kappa, D0 and the
branch geometry), the coupling width eps, and the single-site decay data
(c, varsigma) supplied by the transfer module or overridden by the user.
Floating point only; tolerances are stated per field, not certified.

Field tolerances (relative, for the canonical integer-slope family):
  lambda0, d0, d1, e_eps   exact float arithmetic (few ulp)
  lambda1                  ~1e-15 (one multiply-add)
  alpha0                   ~1e-14 (sqrt of a 2-term sum); exact at eps = 0
                           where the formula degenerates to lambda1
  theta0, k0, alpha_prime  ~1e-14 propagated
  sigma1                   ~1e-13 (powers and a 3-term sum)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .local_map import PiecewiseExpandingMap

ALPHA0_PHASE_THRESHOLD = 1.0 / 27.0
ALPHA0_CONVERGENCE_THRESHOLD = 1.0 / 81.0
KAPPA_PHASE_THRESHOLD = 108.0


class ParameterDomainError(ValueError):
    """A ledger input lies outside its admissible domain."""


class NoThresholdError(RuntimeError):
    """alpha0 already exceeds the target at eps = 0."""


class SeriesDivergenceError(ValueError):
    """Contour series evaluated outside its convergence region."""


@dataclass(frozen=True)
class ConstantsLedger:
    kappa: float
    eps: float
    lambda0: float
    d0: float
    e_eps: float
    lambda1: float
    d1: float
    alpha0: float
    theta0: float  # +inf at eps = 0
    k0: float | None  # None when alpha0 >= 1/27
    alpha_prime: float  # 3 * alpha0 (initial measures with alpha = 0)
    c: float
    varsigma: float
    gamma: int
    n_window: int
    sigma1: float
    decay_provenance: str
    kappa_above_108: bool
    alpha0_below_1_27: bool
    alpha0_below_1_81: bool
    theta0_lower_bound_ok: bool  # theta0 >= D0/(1 - lambda0) (>= 2)

    def to_dict(self) -> dict:
        d = {
            "kappa": self.kappa,
            "eps": self.eps,
            "lambda0": self.lambda0,
            "D0": self.d0,
            "E_eps_measure": self.e_eps,
            "lambda1": self.lambda1,
            "D1": self.d1,
            "alpha0": self.alpha0,
            "theta0": "inf" if math.isinf(self.theta0) else self.theta0,
            "K0": self.k0,
            "alpha_prime": self.alpha_prime,
            "c": self.c,
            "varsigma": self.varsigma,
            "gamma": self.gamma,
            "n_window": self.n_window,
            "sigma1": self.sigma1,
            "decay_provenance": self.decay_provenance,
            "flags": {
                "kappa_above_108": self.kappa_above_108,
                "alpha0_below_1_27": self.alpha0_below_1_27,
                "alpha0_below_1_81": self.alpha0_below_1_81,
                "theta0_lower_bound_ok": self.theta0_lower_bound_ok,
            },
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _alpha0_from(lambda1: float, d1: float, e_eps: float, d0: float, lambda0: float) -> float:
    if e_eps == 0.0:
        # sqrt(lambda1^2) collapses; keep the value exact in floats
        return lambda1
    arm1 = lambda1 + math.sqrt(lambda1 * lambda1 + 2.0 * d1 * e_eps)
    arm2 = d0 * e_eps / (1.0 - lambda0)
    return 0.5 * max(arm1, arm2)


def compute_ledger(
    lmap: PiecewiseExpandingMap,
    eps: float,
    c: float,
    varsigma: float,
    gamma: int,
    n_window: int,
    decay_provenance: str = "user supplied",
) -> ConstantsLedger:
    """Populate every derived constant for a (map, eps) pair.

    (c, varsigma) are single-site decay data: empirical fits from the
    transfer module or user overrides; their provenance is recorded.
    """
    if not 0.0 <= eps <= 1.0:
        raise ParameterDomainError(f"eps = {eps} outside [0, 1]")
    if not 0 < n_window < gamma:
        raise ParameterDomainError(
            f"window must satisfy 0 < n_window < gamma, got n_window={n_window}, gamma={gamma}"
        )
    consts = lmap.constants()
    lam0, d0 = consts.lambda0, consts.d0
    if not lam0 < varsigma < 1.0:
        raise ParameterDomainError(
            f"varsigma = {varsigma} must lie in (lambda0, 1) = ({lam0}, 1)"
        )
    if c < 0.0:
        raise ParameterDomainError(f"c = {c} must be >= 0")
    kappa = lmap.kappa
    e_eps = lmap.exceptional_set(eps).measure
    lambda1 = 4.0 / kappa + d0 * e_eps / 2.0
    d1 = 4.0 / (kappa * consts.min_branch_length)
    alpha0 = _alpha0_from(lambda1, d1, e_eps, d0, lam0)
    theta0 = math.inf if e_eps == 0.0 else 2.0 * alpha0 / e_eps
    k0 = None
    if alpha0 < ALPHA0_PHASE_THRESHOLD:
        k0 = 1.0 / (2.0 * (1.0 - 27.0 * alpha0) * (1.0 - 3.0 * alpha0))
    bfac = d0 / (1.0 - lam0)
    sigma1 = 2.0 * bfac * (
        lam0 ** (gamma - n_window) + lam0**gamma + c * varsigma**n_window
    ) + bfac**2 * ((1.0 + n_window * d0) / (1.0 - lam0)) * (4.0 * eps + e_eps)
    return ConstantsLedger(
        kappa=kappa,
        eps=eps,
        lambda0=lam0,
        d0=d0,
        e_eps=e_eps,
        lambda1=lambda1,
        d1=d1,
        alpha0=alpha0,
        theta0=theta0,
        k0=k0,
        alpha_prime=3.0 * alpha0,
        c=c,
        varsigma=varsigma,
        gamma=gamma,
        n_window=n_window,
        sigma1=sigma1,
        decay_provenance=decay_provenance,
        kappa_above_108=kappa > KAPPA_PHASE_THRESHOLD,
        alpha0_below_1_27=alpha0 < ALPHA0_PHASE_THRESHOLD,
        alpha0_below_1_81=alpha0 < ALPHA0_CONVERGENCE_THRESHOLD,
        theta0_lower_bound_ok=theta0 >= bfac - 1e-12,
    )


def alpha0_of_eps(lmap: PiecewiseExpandingMap, eps: float) -> float:
    """alpha0 as a function of eps alone (for threshold solving)."""
    consts = lmap.constants()
    kappa = lmap.kappa
    e_eps = lmap.exceptional_set(eps).measure
    lambda1 = 4.0 / kappa + consts.d0 * e_eps / 2.0
    d1 = 4.0 / (kappa * consts.min_branch_length)
    return _alpha0_from(lambda1, d1, e_eps, consts.d0, consts.lambda0)


def solve_epsilon0(
    lmap: PiecewiseExpandingMap,
    target: float = ALPHA0_PHASE_THRESHOLD,
    tol: float = 1e-10,
) -> float:
    """Largest eps with alpha0(eps) < target, by bisection.

    alpha0 is continuous and nondecreasing in eps, so the crossing is
    unique.  Fails when alpha0(0) = 4/kappa already reaches the target
    (for target 1/27 that is exactly kappa <= 108).
    """
    a0_zero = alpha0_of_eps(lmap, 0.0)
    if a0_zero >= target:
        raise NoThresholdError(
            f"alpha0(0) = {a0_zero} >= target {target}; no positive threshold "
            f"(kappa = {lmap.kappa})"
        )
    lo, hi = 0.0, 1.0
    if alpha0_of_eps(lmap, hi) < target:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if alpha0_of_eps(lmap, mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class SeriesBound:
    closed_form: float
    brute_sum: float
    tail_bound: float

    def to_dict(self) -> dict:
        return {
            "closed_form": self.closed_form,
            "brute_sum": self.brute_sum,
            "tail_bound": self.tail_bound,
        }


def peierls_series_bound(
    alpha_prime: float, lambda_size: int, k: float = 1.0
) -> SeriesBound:
    """Contour sum over (n_d, k, c) against its closed form.

    Summand: 3^(3*n_d + |Lambda| - c + j) * (alpha'/3)^(n_d + |Lambda| + j)
    over n_d >= 0, j >= 0, c >= 1.  Closed form:

        K * alpha'^|Lambda| / (2 * (1 - 9 alpha') * (1 - alpha'))

    The brute sum is truncated so the analytic geometric tail is below
    1e-12; both evaluations must agree within that tail.
    """
    if alpha_prime < 0.0 or lambda_size < 0:
        raise ParameterDomainError("alpha_prime and lambda_size must be >= 0")
    if alpha_prime >= 1.0 / 9.0:
        raise SeriesDivergenceError(
            f"alpha_prime = {alpha_prime} >= 1/9: the contour series diverges"
        )
    closed = (
        k
        * alpha_prime**lambda_size
        / (2.0 * (1.0 - 9.0 * alpha_prime) * (1.0 - alpha_prime))
    )
    if alpha_prime == 0.0:
        brute = k * (0.0 if lambda_size > 0 else 0.5)
        return SeriesBound(closed_form=closed, brute_sum=brute, tail_bound=0.0)

    def depth(ratio: float) -> int:
        # tail of sum r^m from N: r^N/(1-r); want well under 1e-13
        return max(4, int(math.ceil(math.log(1e-14 * (1.0 - ratio)) / math.log(ratio))))

    n_nd = depth(9.0 * alpha_prime)
    n_j = depth(alpha_prime)
    n_c = depth(1.0 / 3.0)
    nd = np.arange(n_nd)[:, None, None]
    jj = np.arange(n_j)[None, :, None]
    cc = np.arange(1, n_c + 1)[None, None, :]
    lam = lambda_size
    terms = 3.0 ** (3 * nd + lam - cc + jj) * (alpha_prime / 3.0) ** (nd + lam + jj)
    brute = k * float(terms.sum())
    # analytic remainders of the three geometric directions
    s_nd = 1.0 / (1.0 - 9.0 * alpha_prime)
    s_j = 1.0 / (1.0 - alpha_prime)
    s_c = 0.5
    t_nd = (9.0 * alpha_prime) ** n_nd * s_nd
    t_j = alpha_prime**n_j * s_j
    t_c = (1.0 / 3.0) ** n_c * 0.5 / (1.0 - 1.0 / 3.0)
    tail = k * alpha_prime**lam * (
        t_nd * s_j * s_c + s_nd * t_j * s_c + s_nd * s_j * t_c
    )
    tail = max(tail, 1e-15)
    if abs(closed - brute) > tail + 1e-12:
        raise AssertionError(
            f"series bound mismatch: closed={closed}, brute={brute}, tail={tail}"
        )
    return SeriesBound(closed_form=closed, brute_sum=brute, tail_bound=tail)


@dataclass(frozen=True)
class ConvergenceCondition:
    name: str
    lhs: float
    rhs: float
    ok: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "ok": self.ok}


@dataclass(frozen=True)
class ConvergenceReport:
    conditions: tuple[ConvergenceCondition, ...]
    overall: bool

    def to_dict(self) -> dict:
        return {
            "conditions": [c.to_dict() for c in self.conditions],
            "overall": self.overall,
        }


def check_convergence_conditions(ledger: ConstantsLedger, sigma: float) -> ConvergenceReport:
    """The three smallness conditions for exponential convergence.

    All sides are reported; gamma and n are taken from the ledger window.
    """
    if not 0.0 < sigma < 1.0:
        raise ParameterDomainError(f"sigma = {sigma} must lie in (0, 1)")
    gamma = ledger.gamma
    budget = sigma**gamma / (4.0 * gamma)
    bfac = ledger.d0 / (1.0 - ledger.lambda0)
    c1 = ConvergenceCondition(
        "alpha0 < 1/81",
        ledger.alpha0,
        ALPHA0_CONVERGENCE_THRESHOLD,
        ledger.alpha0 < ALPHA0_CONVERGENCE_THRESHOLD,
    )
    lhs2 = 18.0 * math.sqrt(ledger.alpha0)
    c2 = ConvergenceCondition("18*sqrt(alpha0) < sigma^gamma/(4*gamma)", lhs2, budget, lhs2 < budget)
    lhs3 = math.sqrt(2.0 * bfac * (ledger.lambda0 + bfac) * ledger.sigma1)
    c3 = ConvergenceCondition(
        "sqrt(2*(D0/(1-lambda0))*(lambda0 + D0/(1-lambda0))*sigma1) < sigma^gamma/(4*gamma)",
        lhs3,
        budget,
        lhs3 < budget,
    )
    conds = (c1, c2, c3)
    return ConvergenceReport(conditions=conds, overall=all(c.ok for c in conds))


def ledger_grid_csv(ledgers: list) -> str:
    """One CSV row per ledger, full round-trip precision."""
    cols = [
        "kappa", "eps", "lambda0", "D0", "E_eps_measure", "lambda1", "D1",
        "alpha0", "theta0", "K0", "alpha_prime", "sigma1",
        "kappa_above_108", "alpha0_below_1_27", "alpha0_below_1_81",
    ]
    lines = [",".join(cols)]
    for led in ledgers:
        d = led.to_dict()
        flags = d["flags"]
        row = [
            repr(d["kappa"]), repr(d["eps"]), repr(d["lambda0"]), repr(d["D0"]),
            repr(d["E_eps_measure"]), repr(d["lambda1"]), repr(d["D1"]),
            repr(d["alpha0"]),
            "inf" if d["theta0"] == "inf" else repr(d["theta0"]),
            "" if d["K0"] is None else repr(d["K0"]),
            repr(d["alpha_prime"]), repr(d["sigma1"]),
            str(flags["kappa_above_108"]), str(flags["alpha0_below_1_27"]),
            str(flags["alpha0_below_1_81"]),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
