"""Piecewise-expanding interval maps on [-1, 1] with two invariant halves.

The maps handled here are affine on finitely many branches, expand by a
factor kappa > 2, keep [-1, 0] and (0, 1] separately invariant, and are
translation-symmetric between the halves: tau(x - 1) = tau(x) - 1 for
x in (0, 1].  The canonical instance is the slope-s Bernoulli family.

Branch intervals are half-open, (zeta_i, zeta_{i+1}], so evaluation is a
total function; the left endpoint -1 is folded into the first branch.
Values within BREAKPOINT_TOL of a breakpoint are assigned to the branch
ending at that breakpoint (the left-closed side).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

BREAKPOINT_TOL = 1e-12


class MapDomainError(ValueError):
    """The requested map violates the structural assumptions."""


def _snap_half(v: float, tol: float = 1e-9) -> float:
    """Round a branch image endpoint onto the half boundary it targets."""
    for target in (-1.0, 0.0, 1.0):
        if abs(v - target) <= tol:
            return target
    return v


@dataclass(frozen=True)
class MapConstants:
    """Structural constants of a piecewise-expanding map.

    lambda0 = 2/kappa; d0 = 2/(kappa * min branch length) + curvature term
    (exactly zero for affine branches, retained for future C^2 branches).
    """

    lambda0: float
    d0: float
    min_branch_length: float


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class ExceptionalSet:
    """Preimage of the two width-eps windows below the half tops."""

    intervals: tuple[Interval, ...]
    measure: float


@dataclass(frozen=True)
class PiecewiseExpandingMap:
    """Affine-branch expanding map with two invariant halves.

    breakpoints: zeta_1 = -1 < ... < zeta_{N+1} = 1; branch i acts on
    (zeta_i, zeta_{i+1}] with tau(x) = slopes[i] * x + intercepts[i].
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    family: dict | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        bp = self.breakpoints
        n = len(self.slopes)
        if len(bp) != n + 1 or len(self.intercepts) != n or n < 2:
            raise MapDomainError("inconsistent branch arrays")
        if bp[0] != -1.0 or bp[-1] != 1.0:
            raise MapDomainError("breakpoints must start at -1 and end at 1")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise MapDomainError("breakpoints must be strictly increasing")
        if not any(abs(b) <= BREAKPOINT_TOL for b in bp):
            raise MapDomainError("0 must be a breakpoint (invariant halves)")
        if self.kappa <= 2.0:
            raise MapDomainError(f"kappa = {self.kappa} must exceed 2")
        self._check_halves()
        self._check_symmetry()
        if n > self.kappa * self.constants().d0 + 1e-9:
            raise MapDomainError("branch count exceeds kappa * D0")

    # -- structural checks -------------------------------------------------

    def _check_halves(self) -> None:
        tol = 1e-9
        for i in range(self.n_branches):
            a, b = self.breakpoints[i], self.breakpoints[i + 1]
            va = self.slopes[i] * a + self.intercepts[i]
            vb = self.slopes[i] * b + self.intercepts[i]
            lo, hi = min(va, vb), max(va, vb)
            if b <= tol:  # negative-half branch
                if lo < -1.0 - tol or hi > tol:
                    raise MapDomainError(f"branch {i} leaves [-1, 0]")
            else:
                if lo < -tol or hi > 1.0 + tol:
                    raise MapDomainError(f"branch {i} leaves [0, 1]")

    def _check_symmetry(self) -> None:
        # tau(x - 1) = tau(x) - 1: the branch over (a-1, b-1] must have the
        # same slope as the branch over (a, b] and intercept q + m - 1.
        tol = 1e-9
        pos = [
            (self.breakpoints[i], self.breakpoints[i + 1], self.slopes[i], self.intercepts[i])
            for i in range(self.n_branches)
            if self.breakpoints[i] >= -tol
        ]
        neg = [
            (self.breakpoints[i], self.breakpoints[i + 1], self.slopes[i], self.intercepts[i])
            for i in range(self.n_branches)
            if self.breakpoints[i + 1] <= tol
        ]
        if len(pos) != len(neg):
            raise MapDomainError("halves have different branch counts")
        for (a, b, m, q), (an, bn, mn, qn) in zip(pos, neg):
            if (
                abs(an - (a - 1.0)) > tol
                or abs(bn - (b - 1.0)) > tol
                or abs(mn - m) > tol
                or abs(qn - (q + m - 1.0)) > tol
            ):
                raise MapDomainError("halves are not translates of each other")

    # -- basic accessors ---------------------------------------------------

    @property
    def n_branches(self) -> int:
        return len(self.slopes)

    @property
    def kappa(self) -> float:
        return min(abs(s) for s in self.slopes)

    def constants(self) -> MapConstants:
        # curvature term |tau''/(tau')^2| is identically 0 for affine branches
        if self.family is not None and self.family.get("family") == "bernoulli":
            s = self.family["s"]
            # kappa = s and min|J_i| = 1/s cancel exactly
            return MapConstants(lambda0=2.0 / s, d0=2.0, min_branch_length=1.0 / s)
        min_len = min(
            self.breakpoints[i + 1] - self.breakpoints[i] for i in range(self.n_branches)
        )
        d0 = 2.0 / (self.kappa * min_len) + 0.0
        return MapConstants(lambda0=2.0 / self.kappa, d0=d0, min_branch_length=min_len)

    # -- evaluation --------------------------------------------------------

    def branch_index(self, x: np.ndarray) -> np.ndarray:
        """Half-open branch lookup with left-closed snapping at breakpoints."""
        bp = np.asarray(self.breakpoints)
        pos = np.searchsorted(bp, x, side="left")
        pos = np.clip(pos, 1, self.n_branches)
        idx = pos - 1
        # x just above a breakpoint belongs to the branch ending there
        snap = (x - bp[idx] <= BREAKPOINT_TOL) & (idx > 0)
        return np.where(snap, idx - 1, idx)

    def eval(self, x):
        """Apply the map; total on [-1, 1], preserves the sign halves."""
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any(arr < -1.0 - 1e-9) or np.any(arr > 1.0 + 1e-9):
            raise MapDomainError("input outside [-1, 1]")
        bp = np.asarray(self.breakpoints)
        idx = self.branch_index(arr)
        # snapped points are evaluated at the breakpoint itself so branch
        # tops land exactly on the half boundary
        right_end = bp[idx + 1]
        snapped = (arr - right_end <= BREAKPOINT_TOL) & (arr > right_end)
        x_eff = np.where(snapped, right_end, arr)
        slopes = np.asarray(self.slopes)[idx]
        intercepts = np.asarray(self.intercepts)[idx]
        y = slopes * x_eff + intercepts
        y = np.clip(y, -1.0, 1.0)
        return float(y[0]) if scalar else y

    # -- derived objects ---------------------------------------------------

    def exceptional_set(self, eps: float) -> ExceptionalSet:
        """Preimage of (-eps, 0] union (1-eps, 1] as disjoint intervals.

        Branch image endpoints are snapped to the half boundaries, and a
        branch whose image covers a whole window contributes eps/|slope|
        with no cancellation, keeping the total measure accurate to a few
        ulp even for very small eps.
        """
        if not 0.0 <= eps <= 1.0:
            raise MapDomainError(f"eps = {eps} outside [0, 1]")
        targets = ((-eps, 0.0), (1.0 - eps, 1.0))
        found: list[Interval] = []
        widths: list[float] = []
        for i in range(self.n_branches):
            a, b = self.breakpoints[i], self.breakpoints[i + 1]
            m, q = self.slopes[i], self.intercepts[i]
            va, vb = _snap_half(m * a + q), _snap_half(m * b + q)
            img_lo, img_hi = min(va, vb), max(va, vb)
            for t_lo, t_hi in targets:
                lo_v = max(t_lo, img_lo)
                hi_v = min(t_hi, img_hi)
                if hi_v <= lo_v:
                    continue
                if img_lo <= t_lo and img_hi >= t_hi:
                    width_v = eps
                else:
                    width_v = hi_v - lo_v
                x1 = (lo_v - q) / m
                x2 = (hi_v - q) / m
                lo_x, hi_x = (x1, x2) if x1 <= x2 else (x2, x1)
                found.append(Interval(lo_x, hi_x))
                widths.append(width_v / abs(m))
        order = sorted(range(len(found)), key=lambda k: found[k].lo)
        return ExceptionalSet(
            tuple(found[k] for k in order), math.fsum(widths)
        )

    def compose_square(self) -> "PiecewiseExpandingMap":
        """The twice-iterated map; kappa squares, branches refine."""
        new_bp: list[float] = [-1.0]
        new_m: list[float] = []
        new_q: list[float] = []
        inner_bp = self.breakpoints
        for i in range(self.n_branches):
            a, b = inner_bp[i], inner_bp[i + 1]
            m, q = self.slopes[i], self.intercepts[i]
            # split where the branch image crosses a breakpoint of the map
            cuts = [a, b]
            for z in inner_bp:
                x = (z - q) / m
                if a + 1e-15 < x < b - 1e-15:
                    cuts.append(x)
            cuts = sorted(set(cuts))
            for lo, hi in zip(cuts, cuts[1:]):
                mid_val = m * (0.5 * (lo + hi)) + q
                j = int(self.branch_index(np.asarray(mid_val)))
                new_bp.append(hi)
                new_m.append(self.slopes[j] * m)
                new_q.append(self.slopes[j] * q + self.intercepts[j])
        # guard against duplicated cut points across adjacent branches
        bp_clean = [new_bp[0]]
        m_clean: list[float] = []
        q_clean: list[float] = []
        for k in range(len(new_m)):
            if new_bp[k + 1] - bp_clean[-1] <= 1e-15:
                continue
            bp_clean.append(new_bp[k + 1])
            m_clean.append(new_m[k])
            q_clean.append(new_q[k])
        bp_clean[-1] = 1.0
        fam = None
        if self.family is not None and self.family.get("family") == "bernoulli":
            fam = {"family": "bernoulli", "s": self.family["s"] ** 2}
        return PiecewiseExpandingMap(
            tuple(bp_clean), tuple(m_clean), tuple(q_clean), family=fam
        )

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        if self.family is not None:
            return json.dumps(self.family, sort_keys=True)
        return json.dumps(
            {
                "breakpoints": list(self.breakpoints),
                "slopes": list(self.slopes),
                "intercepts": list(self.intercepts),
            },
            sort_keys=True,
        )


def make_bernoulli_family(s: int) -> PiecewiseExpandingMap:
    """Slope-s mod-one map on (0, 1], extended to [-1, 0] by translation.

    On (0, 1]: tau(x) = s*x - (ceil(s*x) - 1), with branch tops mapping to 1.
    kappa = s, D0 = 2, 2s branches of length 1/s each.  Requires s >= 3 so
    that kappa > 2.
    """
    if int(s) != s or s < 3:
        raise MapDomainError(f"slope s = {s} must be an integer >= 3")
    s = int(s)
    bp = [i / s - 1.0 for i in range(s)] + [i / s for i in range(s + 1)]
    bp[0] = -1.0
    bp[-1] = 1.0
    slopes = [float(s)] * (2 * s)
    intercepts = [float(s - i) for i in range(1, s + 1)] + [float(1 - i) for i in range(1, s + 1)]
    return PiecewiseExpandingMap(
        tuple(bp), tuple(slopes), tuple(intercepts), family={"family": "bernoulli", "s": s}
    )


def map_from_json(text: str) -> PiecewiseExpandingMap:
    data = json.loads(text)
    return map_from_spec(data)


def map_from_spec(data: dict) -> PiecewiseExpandingMap:
    """Build a map from {"family": "bernoulli", "s": n} or explicit arrays."""
    if "family" in data:
        if data["family"] != "bernoulli":
            raise MapDomainError(f"unknown family {data['family']!r}")
        return make_bernoulli_family(int(data["s"]))
    return PiecewiseExpandingMap(
        tuple(float(b) for b in data["breakpoints"]),
        tuple(float(m) for m in data["slopes"]),
        tuple(float(q) for q in data["intercepts"]),
    )
