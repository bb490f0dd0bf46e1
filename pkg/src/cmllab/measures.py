"""Variation functionals for translation-invariant product measures.

A product measure with site density h = alpha * h_plus + (1 - alpha) * h_minus
(h_plus a probability density on (0, 1], h_minus on [-1, 0]) satisfies

    Var_Omega 1_{(0,1]^Lambda} mu
        <= alpha^|Lambda| * V(h_plus)^|Omega ∩ Lambda| * V(h)^|Omega \ Lambda|

where V is the total variation with extension by zero beyond [-1, 1]
(jumps at -1, interior breakpoints including 0, and +1 all count; an
indicator of a half has V = 2).  Membership in the weighted-norm class
follows whenever the weight theta dominates both variations: the measure
then lies in the class with prefactor K = 1 and decay alpha.

Only product measures are represented; general coupled measures are out
of scope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .transfer import BVNorms, PiecewiseLinearDensity, density_from_json, uniform_half


@dataclass(frozen=True)
class ProductMeasureSpec:
    """Sitewise density h = alpha * h_plus + (1 - alpha) * h_minus."""

    alpha: float
    h_plus: PiecewiseLinearDensity
    h_minus: PiecewiseLinearDensity

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha = {self.alpha} outside [0, 1]")
        for name, h, lo, hi in (
            ("h_plus", self.h_plus, 0.0, 1.0),
            ("h_minus", self.h_minus, -1.0, 0.0),
        ):
            if abs(h.integral() - 1.0) > 1e-9:
                raise ValueError(f"{name} must integrate to 1")
            if _mass_outside(h, lo, hi) > 1e-9:
                raise ValueError(f"{name} must be supported on [{lo}, {hi}]")

    def site_density(self) -> PiecewiseLinearDensity:
        plus = self.h_plus.scaled(self.alpha)
        minus = self.h_minus.scaled(-(1.0 - self.alpha))
        return plus.subtract(minus).simplified()

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "h_plus": json.loads(self.h_plus.to_json()),
                "h_minus": json.loads(self.h_minus.to_json()),
            }
        )


def spec_from_json(text: str) -> ProductMeasureSpec:
    d = json.loads(text)
    return ProductMeasureSpec(
        alpha=float(d["alpha"]),
        h_plus=density_from_json(json.dumps(d["h_plus"])),
        h_minus=density_from_json(json.dumps(d["h_minus"])),
    )


def uniform_mixture(alpha: float) -> ProductMeasureSpec:
    return ProductMeasureSpec(alpha, uniform_half("positive"), uniform_half("negative"))


def _mass_outside(h: PiecewiseLinearDensity, lo: float, hi: float) -> float:
    total = 0.0
    for i in range(h.n_pieces):
        a, b = h.breakpoints[i], h.breakpoints[i + 1]
        if b <= lo or a >= hi:
            m, q = h.slopes[i], h.intercepts[i]
            total += abs(0.5 * m * (b * b - a * a) + q * (b - a))
    return total


def bv_norms(h: PiecewiseLinearDensity) -> BVNorms:
    """l1, extension-by-zero variation, and their sum for a density."""
    return h.norms()


def var_lambda_bound(
    spec: ProductMeasureSpec, lambda_size: int, omega_size: int, overlap: int
) -> float:
    """Upper bound on Var_Omega of the positive-cylinder restriction."""
    if overlap > min(lambda_size, omega_size) or overlap < 0:
        raise ValueError("overlap must not exceed min(|Lambda|, |Omega|)")
    v_plus = spec.h_plus.variation()
    v_h = spec.site_density().variation()
    return spec.alpha**lambda_size * v_plus**overlap * v_h ** (omega_size - overlap)


@dataclass(frozen=True)
class ThetaMembership:
    member: bool
    k: float
    alpha: float
    theta: float
    v_plus: float
    v_site: float

    def to_dict(self) -> dict:
        return {
            "member": self.member,
            "K": self.k,
            "alpha": self.alpha,
            "theta": self.theta,
            "variation_h_plus": self.v_plus,
            "variation_h": self.v_site,
        }


def theta_membership(spec: ProductMeasureSpec, theta: float) -> ThetaMembership:
    """Class membership certificate for the weighted variation norm.

    theta >= max(V(h_plus), V(h)) certifies the product measure lies in
    the class with K = 1 and decay alpha (non-strict: the bounding
    argument only needs the weight to dominate the per-site variation).
    """
    if theta < 1.0:
        raise ValueError("theta must be >= 1")
    v_plus = spec.h_plus.variation()
    v_site = spec.site_density().variation()
    member = theta >= max(v_plus, v_site)
    return ThetaMembership(
        member=member,
        k=1.0 if member else float("nan"),
        alpha=spec.alpha if member else float("nan"),
        theta=theta,
        v_plus=v_plus,
        v_site=v_site,
    )
