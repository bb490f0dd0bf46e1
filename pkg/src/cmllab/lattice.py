"""Finite-ring lattice states, the one-sided coupling, and sign recording.

The full step is T = coupling o sitewise-map.  The coupling reads each
site's right neighbour (p+1 mod L) only:

    x_p          if x_p > 0 and x_{p+1} > 0
    x_p - 1 + eps if x_p > 0 and x_{p+1} <= 0
    x_p + eps     if x_p <= 0

A site is "positive" when its value exceeds 0.  All-positive
configurations are invariant under the sign dynamics for every eps.
The infinite lattice is truncated to a periodic ring; boundary effects
are probed by varying L.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .local_map import PiecewiseExpandingMap


@dataclass(frozen=True)
class CouplingParams:
    eps: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps = {self.eps} outside [0, 1]")


@dataclass(frozen=True)
class LatticeState:
    """Ring of site values in [-1, 1] at a given time."""

    sites: np.ndarray
    time: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", np.asarray(self.sites, dtype=float))
        if self.sites.ndim != 1 or self.sites.size == 0:
            raise ValueError("sites must be a non-empty 1-d array")

    @property
    def length(self) -> int:
        return self.sites.size

    def signs(self) -> np.ndarray:
        return self.sites > 0.0

    def validate_range(self) -> None:
        if np.any(self.sites < -1.0) or np.any(self.sites > 1.0):
            raise ValueError("site values left [-1, 1]")


@dataclass(frozen=True)
class SignField:
    """Boolean record signs[t, p] of an orbit's site signs, t = 0..n."""

    signs: np.ndarray = field()

    def __post_init__(self) -> None:
        object.__setattr__(self, "signs", np.asarray(self.signs, dtype=bool))
        if self.signs.ndim != 2:
            raise ValueError("sign field must be 2-d (time, site)")

    @property
    def horizon(self) -> int:
        return self.signs.shape[0] - 1

    @property
    def length(self) -> int:
        return self.signs.shape[1]


def apply_coupling(state: LatticeState, params: CouplingParams) -> LatticeState:
    """One coupling pass; reads p+1 modulo L, writes a fresh array."""
    x = state.sites
    xn = np.roll(x, -1)
    pos = x > 0.0
    pos_n = xn > 0.0
    out = np.where(pos & pos_n, x, np.where(pos, x - 1.0 + params.eps, x + params.eps))
    return replace(state, sites=out)


def step(
    state: LatticeState, lmap: PiecewiseExpandingMap, params: CouplingParams
) -> LatticeState:
    """Full update: sitewise map, then coupling; time advances by one."""
    y = lmap.eval(state.sites)
    coupled = apply_coupling(LatticeState(y, state.time), params)
    return LatticeState(coupled.sites, state.time + 1)


def record_signs(
    initial: LatticeState,
    lmap: PiecewiseExpandingMap,
    params: CouplingParams,
    n: int,
) -> SignField:
    """Signs of the orbit at times 0..n; row 0 is the initial signs."""
    if n < 0:
        raise ValueError("horizon n must be >= 0")
    rows = np.empty((n + 1, initial.length), dtype=bool)
    state = initial
    rows[0] = state.signs()
    for t in range(1, n + 1):
        state = step(state, lmap, params)
        rows[t] = state.signs()
    return SignField(rows)


# -- serialization ----------------------------------------------------------


def state_to_bytes(state: LatticeState) -> bytes:
    """Flat little-endian float64 image of the site array."""
    return state.sites.astype("<f8").tobytes()


def state_from_bytes(raw: bytes, time: int = 0) -> LatticeState:
    return LatticeState(np.frombuffer(raw, dtype="<f8").copy(), time)


def state_to_json(state: LatticeState) -> str:
    return json.dumps({"time": state.time, "sites": state.sites.tolist()})


def state_from_json(text: str) -> LatticeState:
    data = json.loads(text)
    return LatticeState(np.asarray(data["sites"], dtype=float), int(data["time"]))


def sign_field_to_rle(fld: SignField) -> str:
    """One line per time row: 'start_value run1,run2,...' with runs of equal signs."""
    lines = []
    for row in np.asarray(fld.signs, dtype=int):
        runs = []
        count = 1
        for a, b in zip(row, row[1:]):
            if a == b:
                count += 1
            else:
                runs.append(count)
                count = 1
        runs.append(count)
        lines.append(f"{row[0]} " + ",".join(str(r) for r in runs))
    return "\n".join(lines) + "\n"


def sign_field_from_rle(text: str) -> SignField:
    rows = []
    for line in text.strip().splitlines():
        head, runs = line.split(" ", 1)
        value = bool(int(head))
        row: list[bool] = []
        for r in runs.split(","):
            row.extend([value] * int(r))
            value = not value
        rows.append(row)
    return SignField(np.asarray(rows, dtype=bool))


def sign_field_to_pbm(fld: SignField) -> str:
    """Plain PBM (P1) bitmap; 1 = positive site, row 0 = time 0 at the top."""
    h, w = fld.signs.shape
    body = "\n".join(" ".join("1" if v else "0" for v in row) for row in fld.signs)
    return f"P1\n{w} {h}\n{body}\n"
