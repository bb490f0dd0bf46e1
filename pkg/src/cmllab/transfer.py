"""Exact single-site transfer operator on piecewise-linear densities.

For affine-branch maps the pushforward of a piecewise-linear density is
again piecewise linear, so the operator

    (P h)(y) = sum over branches b with y in tau(J_b) of h(tau_b^{-1}(y)) / |slope_b|

is computed symbolically: no binning, no discretization error.  An Ulam
matrix is provided only as a cross-check utility.

Norm conventions, reported with every inequality check:

* ``variation`` is the total variation of the density extended by zero
  beyond [-1, 1] (jumps at -1, at interior breakpoints including the
  gluing point 0, and at +1 all count).
* ``bv = variation + l1``.  The contraction inequality

      ||P^m h||_BV <= lambda0^m ||h||_BV + D0/(1 - lambda0) ||h||_L1

  is checked in this composite norm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .local_map import PiecewiseExpandingMap

_MERGE_TOL = 1e-14


class TransferError(RuntimeError):
    """Fixed-point iteration or decay fit failed."""


@dataclass(frozen=True)
class BVNorms:
    l1: float
    variation: float
    bv: float


@dataclass(frozen=True)
class PiecewiseLinearDensity:
    """Density on [-1, 1]: value slope_i * x + intercept_i on (b_i, b_{i+1}]."""

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]

    def __post_init__(self) -> None:
        bp = self.breakpoints
        if len(bp) != len(self.slopes) + 1 or len(self.slopes) != len(self.intercepts):
            raise ValueError("inconsistent piece arrays")
        if bp[0] != -1.0 or bp[-1] != 1.0:
            raise ValueError("pieces must tile [-1, 1]")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not all(math.isfinite(v) for v in self.slopes + self.intercepts):
            raise ValueError("non-finite coefficients")

    @property
    def n_pieces(self) -> int:
        return len(self.slopes)

    def __call__(self, x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        bp = np.asarray(self.breakpoints)
        idx = np.clip(np.searchsorted(bp, arr, side="left"), 1, self.n_pieces) - 1
        vals = np.asarray(self.slopes)[idx] * arr + np.asarray(self.intercepts)[idx]
        return float(vals[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else vals

    # -- exact integrals ---------------------------------------------------

    def integral(self) -> float:
        total = 0.0
        for i in range(self.n_pieces):
            a, b = self.breakpoints[i], self.breakpoints[i + 1]
            total += 0.5 * self.slopes[i] * (b * b - a * a) + self.intercepts[i] * (b - a)
        return total

    def l1_norm(self) -> float:
        total = 0.0
        for i in range(self.n_pieces):
            a, b = self.breakpoints[i], self.breakpoints[i + 1]
            m, q = self.slopes[i], self.intercepts[i]
            va, vb = m * a + q, m * b + q
            if va * vb >= 0.0 or m == 0.0:
                total += abs(0.5 * m * (b * b - a * a) + q * (b - a))
            else:
                r = -q / m  # sign change inside the piece
                total += abs(0.5 * m * (r * r - a * a) + q * (r - a))
                total += abs(0.5 * m * (b * b - r * r) + q * (b - r))
        return total

    def variation(self) -> float:
        """Total variation of the extension by zero beyond [-1, 1]."""
        bp, sl, ic = self.breakpoints, self.slopes, self.intercepts
        left_val = sl[0] * bp[0] + ic[0]
        right_val = sl[-1] * bp[-1] + ic[-1]
        var = abs(left_val) + abs(right_val)
        for i in range(self.n_pieces):
            var += abs(sl[i]) * (bp[i + 1] - bp[i])
        for i in range(1, self.n_pieces):
            b = bp[i]
            var += abs((sl[i] * b + ic[i]) - (sl[i - 1] * b + ic[i - 1]))
        return var

    def norms(self) -> BVNorms:
        l1 = self.l1_norm()
        var = self.variation()
        return BVNorms(l1=l1, variation=var, bv=var + l1)

    # -- algebra -----------------------------------------------------------

    def scaled(self, factor: float) -> "PiecewiseLinearDensity":
        return PiecewiseLinearDensity(
            self.breakpoints,
            tuple(factor * m for m in self.slopes),
            tuple(factor * q for q in self.intercepts),
        )

    def subtract(self, other: "PiecewiseLinearDensity") -> "PiecewiseLinearDensity":
        grid = _merge_grids(self.breakpoints, other.breakpoints)
        slopes, intercepts = [], []
        for a, b in zip(grid, grid[1:]):
            mid = 0.5 * (a + b)
            i = _piece_at(self, mid)
            j = _piece_at(other, mid)
            slopes.append(self.slopes[i] - other.slopes[j])
            intercepts.append(self.intercepts[i] - other.intercepts[j])
        return PiecewiseLinearDensity(tuple(grid), tuple(slopes), tuple(intercepts))

    def simplified(self, tol: float = 1e-13) -> "PiecewiseLinearDensity":
        """Merge adjacent pieces with identical coefficients."""
        bp = [self.breakpoints[0]]
        sl: list[float] = []
        ic: list[float] = []
        for i in range(self.n_pieces):
            if sl and abs(sl[-1] - self.slopes[i]) <= tol and abs(ic[-1] - self.intercepts[i]) <= tol:
                bp[-1] = self.breakpoints[i + 1]
                continue
            sl.append(self.slopes[i])
            ic.append(self.intercepts[i])
            bp.append(self.breakpoints[i + 1])
        return PiecewiseLinearDensity(tuple(bp), tuple(sl), tuple(ic))

    def to_json(self) -> str:
        return json.dumps(
            {
                "breakpoints": list(self.breakpoints),
                "slopes": list(self.slopes),
                "intercepts": list(self.intercepts),
            }
        )


def density_from_json(text: str) -> PiecewiseLinearDensity:
    d = json.loads(text)
    return PiecewiseLinearDensity(
        tuple(float(v) for v in d["breakpoints"]),
        tuple(float(v) for v in d["slopes"]),
        tuple(float(v) for v in d["intercepts"]),
    )


def _piece_at(h: PiecewiseLinearDensity, x: float) -> int:
    bp = h.breakpoints
    lo, hi = 0, h.n_pieces - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if x <= bp[mid + 1]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _merge_grids(*grids: tuple[float, ...]) -> list[float]:
    pts = sorted(set(p for g in grids for p in g))
    merged = [pts[0]]
    for p in pts[1:]:
        if p - merged[-1] > _MERGE_TOL:
            merged.append(p)
        else:
            merged[-1] = max(merged[-1], p)
    merged[0], merged[-1] = -1.0, 1.0
    return merged


def constant_density(
    value: float, lo: float = -1.0, hi: float = 1.0
) -> PiecewiseLinearDensity:
    """Constant `value` on (lo, hi], zero elsewhere on [-1, 1]."""
    bp = [-1.0]
    sl: list[float] = []
    ic: list[float] = []
    for a, b, v in ((-1.0, lo, 0.0), (lo, hi, value), (hi, 1.0, 0.0)):
        if b - a > 0:
            bp.append(b)
            sl.append(0.0)
            ic.append(v)
    return PiecewiseLinearDensity(tuple(bp), tuple(sl), tuple(ic))


def uniform_half(half: str) -> PiecewiseLinearDensity:
    if half == "positive":
        return constant_density(1.0, 0.0, 1.0)
    if half == "negative":
        return constant_density(1.0, -1.0, 0.0)
    raise ValueError(f"half must be 'negative' or 'positive', got {half!r}")


# -- the operator ------------------------------------------------------------


def apply_transfer(
    lmap: PiecewiseExpandingMap, h: PiecewiseLinearDensity
) -> PiecewiseLinearDensity:
    """Exact pushforward of h under the map; mass and positivity preserved."""
    cuts: set[float] = {-1.0, 0.0, 1.0}
    branch_data = []
    for i in range(lmap.n_branches):
        a, b = lmap.breakpoints[i], lmap.breakpoints[i + 1]
        m, q = lmap.slopes[i], lmap.intercepts[i]
        va, vb = m * a + q, m * b + q
        img_lo, img_hi = min(va, vb), max(va, vb)
        branch_data.append((a, b, m, q, img_lo, img_hi))
        cuts.add(img_lo)
        cuts.add(img_hi)
        for z in h.breakpoints:
            if a < z < b:
                y = m * z + q
                if img_lo < y < img_hi:
                    cuts.add(y)
    grid = _merge_grids(tuple(sorted(cuts)))
    slopes = [0.0] * (len(grid) - 1)
    intercepts = [0.0] * (len(grid) - 1)
    for k, (glo, ghi) in enumerate(zip(grid, grid[1:])):
        mid = 0.5 * (glo + ghi)
        for a, b, m, q, img_lo, img_hi in branch_data:
            if not (img_lo < mid < img_hi):
                continue
            x_mid = (mid - q) / m
            j = _piece_at(h, x_mid)
            sh, qh = h.slopes[j], h.intercepts[j]
            am = abs(m)
            # h((y - q)/m)/|m| as a linear function of y
            slopes[k] += sh / (m * am)
            intercepts[k] += (qh - sh * q / m) / am
    return PiecewiseLinearDensity(tuple(grid), tuple(slopes), tuple(intercepts))


def apply_transfer_power(
    lmap: PiecewiseExpandingMap, h: PiecewiseLinearDensity, m: int
) -> PiecewiseLinearDensity:
    out = h
    for _ in range(m):
        out = apply_transfer(lmap, out).simplified()
    return out


def invariant_density(
    lmap: PiecewiseExpandingMap,
    half: str,
    tol: float = 1e-13,
    max_iter: int = 200,
) -> PiecewiseLinearDensity:
    """Fixed point of P restricted to one half, normalized to mass 1."""
    h = uniform_half(half)
    for _ in range(max_iter):
        nxt = apply_transfer(lmap, h).simplified()
        if nxt.subtract(h).l1_norm() <= tol:
            mass = nxt.integral()
            return nxt.scaled(1.0 / mass)
        h = nxt
    raise TransferError(
        f"invariant density iteration did not converge within {max_iter} steps"
    )


@dataclass(frozen=True)
class LasotaYorkeReport:
    m: int
    lhs: float
    rhs: float
    holds: bool
    convention: str

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "holds": self.holds,
            "convention": self.convention,
        }


BV_CONVENTION = "bv = variation + l1; variation extends by zero beyond [-1, 1]"


def lasota_yorke_check(
    lmap: PiecewiseExpandingMap, h: PiecewiseLinearDensity, m: int
) -> LasotaYorkeReport:
    """Check ||P^m h||_BV <= lambda0^m ||h||_BV + D0/(1-lambda0) ||h||_L1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    consts = lmap.constants()
    lam0, d0 = consts.lambda0, consts.d0
    pm = apply_transfer_power(lmap, h, m)
    lhs = pm.norms().bv
    rhs = lam0**m * h.norms().bv + d0 / (1.0 - lam0) * h.l1_norm()
    return LasotaYorkeReport(
        m=m, lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-9, convention=BV_CONVENTION
    )


@dataclass(frozen=True)
class DecayFit:
    c: float
    varsigma: float
    m_max: int
    n_samples: int
    provenance: str

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "varsigma": self.varsigma,
            "m_max": self.m_max,
            "n_samples": self.n_samples,
            "provenance": self.provenance,
        }


def estimate_decay(
    lmap: PiecewiseExpandingMap,
    samples: list[PiecewiseLinearDensity],
    m_max: int,
) -> DecayFit:
    """Fit ||P^m h - (int h) h_inv||_L1 <= c * varsigma^m * ||h||_BV.

    Least squares on pooled log residuals gives varsigma (clamped above
    lambda0); c is then the smallest constant making the bound hold for
    every sample and every m <= m_max.  Residuals use exact piecewise
    integration.  The fit is empirical, not a certified bound.
    """
    if m_max < 2:
        raise ValueError("m_max must be >= 2")
    consts = lmap.constants()
    lam0 = consts.lambda0
    h_inv = {
        "negative": invariant_density(lmap, "negative"),
        "positive": invariant_density(lmap, "positive"),
    }
    points: list[tuple[int, float]] = []
    residuals: list[tuple[float, list[float]]] = []
    for h in samples:
        half = _support_half(h)
        target = h_inv[half].scaled(h.integral())
        res_h: list[float] = []
        cur = h
        for m in range(1, m_max + 1):
            cur = apply_transfer(lmap, cur).simplified()
            r = cur.subtract(target).l1_norm()
            res_h.append(r)
            if r > 1e-15:
                points.append((m, math.log(r)))
        residuals.append((h.norms().bv, res_h))
    if len(points) < 2:
        # every sample already at the fixed point after one application
        return DecayFit(
            c=0.0, varsigma=lam0 * 1.000001, m_max=m_max, n_samples=len(samples),
            provenance="degenerate: all residuals at machine zero",
        )
    ms = np.array([p[0] for p in points], dtype=float)
    logs = np.array([p[1] for p in points], dtype=float)
    slope, _ = np.polyfit(ms, logs, 1)
    if slope >= 0.0:
        raise TransferError("residuals do not decrease; configuration not mixing")
    varsigma = math.exp(slope)
    varsigma = min(max(varsigma, lam0 * (1.0 + 1e-9)), 1.0 - 1e-12)
    c = 0.0
    for bv, res_h in residuals:
        for m, r in enumerate(res_h, start=1):
            if bv > 0:
                c = max(c, r / (varsigma**m * bv))
    return DecayFit(
        c=c,
        varsigma=varsigma,
        m_max=m_max,
        n_samples=len(samples),
        provenance="least-squares fit of exact L1 residuals",
    )


def _support_half(h: PiecewiseLinearDensity) -> str:
    pos_mass = neg_mass = 0.0
    for i in range(h.n_pieces):
        a, b = h.breakpoints[i], h.breakpoints[i + 1]
        m, q = h.slopes[i], h.intercepts[i]
        chunk = abs(0.5 * m * (b * b - a * a) + q * (b - a))
        if b <= 0.0:
            neg_mass += chunk
        else:
            pos_mass += chunk
    if pos_mass > 1e-12 and neg_mass > 1e-12:
        raise ValueError("sample density must be supported on a single half")
    return "positive" if pos_mass > neg_mass else "negative"


def ulam_matrix(lmap: PiecewiseExpandingMap, n_bins: int) -> np.ndarray:
    """Column-stochastic Ulam discretization; cross-check only.

    M[j, i] = |bin_i intersect tau^{-1}(bin_j)| / |bin_i| over a uniform
    partition of [-1, 1].
    """
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    mat = np.zeros((n_bins, n_bins))
    width = 2.0 / n_bins
    for k in range(lmap.n_branches):
        a, b = lmap.breakpoints[k], lmap.breakpoints[k + 1]
        m, q = lmap.slopes[k], lmap.intercepts[k]
        for j in range(n_bins):
            ylo, yhi = edges[j], edges[j + 1]
            x1, x2 = (ylo - q) / m, (yhi - q) / m
            plo, phi = min(x1, x2), max(x1, x2)
            plo, phi = max(plo, a), min(phi, b)
            if phi <= plo:
                continue
            i_lo = int(np.clip((plo + 1.0) / width, 0, n_bins - 1))
            i_hi = int(np.clip((phi + 1.0) / width, 0, n_bins - 1))
            for i in range(i_lo, i_hi + 1):
                lo = max(plo, edges[i])
                hi = min(phi, edges[i + 1])
                if hi > lo:
                    mat[j, i] += (hi - lo) / width
    return mat
