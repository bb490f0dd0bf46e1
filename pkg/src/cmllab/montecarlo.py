"""Ensemble simulation, order parameters, correlation fits, and the
reference probabilistic cellular automaton.

Replicas are seeded from a counter-based Philox stream spawned per
replica index, so runs are bit-reproducible regardless of worker
scheduling.  The reference automaton applies, sitewise on a ring,

    sigma'_p = 1               if sigma_p = 1 and sigma_{p+1} = 1
    sigma'_p = 1 with prob eps otherwise

which is the sign dynamics the coupled lattice emulates: at eps = 0 the
two sign processes agree path by path from matched initial signs, and
for small eps the lattice flips a not-both-positive site with empirical
frequency close to eps.

Fitted decay rates are empirical, never the rigorous contraction
constants of the analysis.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .lattice import LatticeState
from .local_map import PiecewiseExpandingMap, map_from_spec
from .transfer import PiecewiseLinearDensity, invariant_density

INITIAL_KINDS = ("all_negative_lebesgue", "all_positive_invariant", "mixture")


class ResourceBudgetError(RuntimeError):
    """Requested lattice volume exceeds the configured cap."""


class InsufficientSignalError(RuntimeError):
    """Too few correlation points above the noise floor to fit."""


@dataclass(frozen=True)
class EnsembleConfig:
    length: int
    horizon: int
    replicas: int
    seed: int
    map_spec: dict = field(default_factory=lambda: {"family": "bernoulli", "s": 4})
    eps: float = 0.1
    initial: str = "all_negative_lebesgue"
    mixture_alpha: float = 0.5
    burn_in: int = 0
    d_max: int = 0
    lag_max: int = 0
    corr_stride: int = 1
    threads: int = 1
    max_site_updates: float = 4e9

    def __post_init__(self) -> None:
        if self.length < 4:
            raise ValueError("ring length must be >= 4")
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if not 0 <= self.burn_in < self.horizon + 1:
            raise ValueError("burn_in must satisfy 0 <= burn_in < horizon")
        if self.initial not in INITIAL_KINDS:
            raise ValueError(f"initial must be one of {INITIAL_KINDS}")
        if self.d_max >= self.length // 2:
            raise ValueError("d_max must be below length/2")
        vol = float(self.length) * (self.horizon + 1) * self.replicas
        if vol > self.max_site_updates:
            raise ResourceBudgetError(
                f"L*T*R = {vol:.3g} exceeds the cap {self.max_site_updates:.3g}"
            )

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "horizon": self.horizon,
            "replicas": self.replicas,
            "seed": self.seed,
            "map_spec": self.map_spec,
            "eps": self.eps,
            "initial": self.initial,
            "mixture_alpha": self.mixture_alpha,
            "burn_in": self.burn_in,
            "d_max": self.d_max,
            "lag_max": self.lag_max,
            "corr_stride": self.corr_stride,
            "threads": self.threads,
            "max_site_updates": self.max_site_updates,
        }


@dataclass(frozen=True)
class DecayRateFit:
    rate: float
    rate_ci: float  # half-width, 1.96 * slope std error
    r2: float
    n_points: int
    window: tuple[int, int]
    decay_confirmed: bool

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "rate_ci": self.rate_ci,
            "r2": self.r2,
            "n_points": self.n_points,
            "window": list(self.window),
            "decay_confirmed": self.decay_confirmed,
        }


@dataclass(frozen=True)
class ObservableSeries:
    rho_mean: np.ndarray
    rho_stderr: np.ndarray
    distances: np.ndarray
    c_mean: np.ndarray
    c_stderr: np.ndarray
    lags: np.ndarray
    a_mean: np.ndarray
    a_stderr: np.ndarray
    flip_events: int
    flip_positives: int

    def to_dict(self) -> dict:
        return {
            "rho_mean": self.rho_mean.tolist(),
            "rho_stderr": self.rho_stderr.tolist(),
            "distances": self.distances.tolist(),
            "c_mean": self.c_mean.tolist(),
            "c_stderr": self.c_stderr.tolist(),
            "lags": self.lags.tolist(),
            "a_mean": self.a_mean.tolist(),
            "a_stderr": self.a_stderr.tolist(),
            "flip_events": self.flip_events,
            "flip_positives": self.flip_positives,
        }


# -- initial conditions -------------------------------------------------------


def sample_density(h: PiecewiseLinearDensity, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from a nonnegative piecewise-linear density."""
    bp = np.asarray(h.breakpoints)
    masses = np.empty(h.n_pieces)
    for i in range(h.n_pieces):
        a, b = bp[i], bp[i + 1]
        masses[i] = 0.5 * h.slopes[i] * (b * b - a * a) + h.intercepts[i] * (b - a)
    masses = np.clip(masses, 0.0, None)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    total = cum[-1]
    u = rng.random(size) * total
    idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, h.n_pieces - 1)
    rem = u - cum[idx]
    a = bp[idx]
    m = np.asarray(h.slopes)[idx]
    q = np.asarray(h.intercepts)[idx]
    out = np.empty(size)
    lin = np.abs(m) < 1e-15
    with np.errstate(divide="ignore", invalid="ignore"):
        out[lin] = a[lin] + rem[lin] / np.where(q[lin] == 0.0, 1.0, q[lin])
        # solve 0.5 m (x^2 - a^2) + q (x - a) = rem for x > a
        va = m[~lin] * a[~lin] + q[~lin]
        disc = np.sqrt(np.clip(va * va + 2.0 * m[~lin] * rem[~lin], 0.0, None))
        out[~lin] = a[~lin] + (disc - va) / m[~lin]
    return np.clip(out, bp[0], bp[-1])


def initial_state(
    config: EnsembleConfig, lmap: PiecewiseExpandingMap, rng: np.random.Generator
) -> LatticeState:
    n = config.length
    if config.initial == "all_negative_lebesgue":
        return LatticeState(-rng.random(n))
    if config.initial == "all_positive_invariant":
        h_plus = _invariant_cached(lmap, "positive")
        if _is_uniform_half(h_plus, 0.0, 1.0):
            return LatticeState(1.0 - rng.random(n))
        return LatticeState(sample_density(h_plus, n, rng))
    # independent mixture: alpha h_plus + (1 - alpha) h_minus per site
    mask = rng.random(n) < config.mixture_alpha
    h_plus = _invariant_cached(lmap, "positive")
    h_minus = _invariant_cached(lmap, "negative")
    if _is_uniform_half(h_plus, 0.0, 1.0):
        pos = 1.0 - rng.random(n)
    else:
        pos = sample_density(h_plus, n, rng)
    if _is_uniform_half(h_minus, -1.0, 0.0):
        neg = -rng.random(n)
    else:
        neg = sample_density(h_minus, n, rng)
    return LatticeState(np.where(mask, pos, neg))


_INVARIANT_CACHE: dict = {}


def _invariant_cached(lmap: PiecewiseExpandingMap, half: str) -> PiecewiseLinearDensity:
    key = (lmap.breakpoints, lmap.slopes, lmap.intercepts, half)
    if key not in _INVARIANT_CACHE:
        _INVARIANT_CACHE[key] = invariant_density(lmap, half)
    return _INVARIANT_CACHE[key]


def _is_uniform_half(h: PiecewiseLinearDensity, lo: float, hi: float) -> bool:
    for i in range(h.n_pieces):
        a, b = h.breakpoints[i], h.breakpoints[i + 1]
        mid = 0.5 * (a + b)
        want = 1.0 if lo < mid <= hi else 0.0
        if abs(h.slopes[i]) > 1e-12 or abs(h.intercepts[i] - want) > 1e-12:
            return False
    return True


# -- per-replica engines ------------------------------------------------------


def _replica_rngs(seed: int, replicas: int) -> list:
    children = np.random.SeedSequence(seed).spawn(replicas)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


# Integer-slope branches make every multiplication exact in binary floating
# point, so iterated orbits drain their low mantissa bits and collapse onto
# exactly representable cycles of the rounded map (flips then stop for
# good).  The ensemble engine therefore re-injects seeded noise at a scale
# far below every observable (window widths, correlations) but far above
# one ulp.  The guard keeps each site strictly inside its current half, so
# no sign, range, or eps = 0 path property is ever affected.  Exact
# single-step dynamics lives in lattice.step; this regularization belongs
# to the Monte Carlo estimator and is keyed by the replica stream, so runs
# remain bit-reproducible.
DITHER_SCALE = 2.0**-40


def _cml_field(config: EnsembleConfig, lmap: PiecewiseExpandingMap, rng) -> np.ndarray:
    n, t_max, eps = config.length, config.horizon, config.eps
    x = initial_state(config, lmap, rng).sites
    rows = np.empty((t_max + 1, n), dtype=bool)
    rows[0] = x > 0.0
    delta = DITHER_SCALE
    for t in range(1, t_max + 1):
        y = lmap.eval(x)
        yn = np.roll(y, -1)
        pos = y > 0.0
        x = np.where(pos & (yn > 0.0), y, np.where(pos, y - 1.0 + eps, y + eps))
        noise = (rng.random(n) * 2.0 - 1.0) * delta
        safe = ((x > 2.0 * delta) & (x < 1.0 - 2.0 * delta)) | (
            (x < -2.0 * delta) & (x > -1.0 + 2.0 * delta)
        )
        x = np.where(safe, x + noise, x)
        rows[t] = x > 0.0
    return rows


def _pca_field(config: EnsembleConfig, rng) -> np.ndarray:
    n, t_max = config.length, config.horizon
    if config.initial == "all_negative_lebesgue":
        sigma = np.zeros(n, dtype=bool)
    elif config.initial == "all_positive_invariant":
        sigma = np.ones(n, dtype=bool)
    else:
        sigma = rng.random(n) < config.mixture_alpha
    rows = np.empty((t_max + 1, n), dtype=bool)
    rows[0] = sigma
    for t in range(1, t_max + 1):
        stay = sigma & np.roll(sigma, -1)
        sigma = stay | (rng.random(n) < config.eps)
        rows[t] = sigma
    return rows


def _replica_summary(field: np.ndarray, config: EnsembleConfig) -> dict:
    rho = field.mean(axis=1)
    window = field[config.burn_in :: 1]
    out: dict = {"rho": rho}
    if config.d_max > 0:
        rows = window[:: config.corr_stride].astype(float)
        # demean by the window-global mean: the per-snapshot estimator
        # carries an O(C(0)/L) bias that swamps small correlations
        a = rows - rows.mean()
        f = np.fft.rfft(a, axis=1)
        cov = np.fft.irfft(f * np.conj(f), n=config.length, axis=1) / config.length
        out["c"] = cov.mean(axis=0)[: config.d_max + 1]
    if config.lag_max > 0:
        d = window.astype(float)
        d = d - d.mean(axis=0, keepdims=True)
        w = d.shape[0]
        acov = np.empty(config.lag_max + 1)
        for lag in range(config.lag_max + 1):
            acov[lag] = (d[: w - lag] * d[lag:]).sum() / ((w - lag) * config.length)
        out["a"] = acov
    # conditional sign-flip statistics: events where not both (p, p+1) positive
    cur = field[:-1]
    both = cur & np.roll(cur, -1, axis=1)
    events = ~both
    out["flip_events"] = int(events.sum())
    out["flip_positives"] = int((field[1:] & events).sum())
    return out


def _reduce(summaries: list, config: EnsembleConfig) -> ObservableSeries:
    def stack(key, length):
        if length <= 0:
            return np.zeros(0), np.zeros(0)
        block = np.stack([s[key] for s in summaries])
        mean = block.mean(axis=0)
        if len(summaries) > 1:
            stderr = block.std(axis=0, ddof=1) / np.sqrt(len(summaries))
        else:
            stderr = np.zeros_like(mean)
        return mean, stderr

    rho_mean, rho_stderr = stack("rho", config.horizon + 1)
    c_mean, c_stderr = stack("c", config.d_max + 1) if config.d_max > 0 else (np.zeros(0), np.zeros(0))
    a_mean, a_stderr = stack("a", config.lag_max + 1) if config.lag_max > 0 else (np.zeros(0), np.zeros(0))
    return ObservableSeries(
        rho_mean=rho_mean,
        rho_stderr=rho_stderr,
        distances=np.arange(config.d_max + 1) if config.d_max > 0 else np.zeros(0, dtype=int),
        c_mean=c_mean,
        c_stderr=c_stderr,
        lags=np.arange(config.lag_max + 1) if config.lag_max > 0 else np.zeros(0, dtype=int),
        a_mean=a_mean,
        a_stderr=a_stderr,
        flip_events=sum(s["flip_events"] for s in summaries),
        flip_positives=sum(s["flip_positives"] for s in summaries),
    )


def run_ensemble(config: EnsembleConfig) -> ObservableSeries:
    """Independent replicas of the coupled lattice, reduced observables."""
    lmap = map_from_spec(config.map_spec)
    rngs = _replica_rngs(config.seed, config.replicas)

    def job(rng):
        return _replica_summary(_cml_field(config, lmap, rng), config)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            summaries = list(pool.map(job, rngs))
    else:
        summaries = [job(rng) for rng in rngs]
    return _reduce(summaries, config)


def pca_run(config: EnsembleConfig) -> ObservableSeries:
    """Same observables for the reference cellular automaton."""
    rngs = _replica_rngs(config.seed, config.replicas)
    summaries = [_replica_summary(_pca_field(config, rng), config) for rng in rngs]
    return _reduce(summaries, config)


# -- stationary estimates and scans -------------------------------------------


def stationary_rho(series: ObservableSeries, burn_in: int) -> tuple[float, float]:
    window = series.rho_mean[burn_in:]
    err = series.rho_stderr[burn_in:]
    mean = float(window.mean())
    stderr = float(np.sqrt((err**2).mean() / len(err)))
    return mean, stderr


@dataclass(frozen=True)
class PhasePoint:
    eps: float
    rho_neg: float
    rho_neg_stderr: float
    rho_pos: float
    rho_pos_stderr: float

    @property
    def gap(self) -> float:
        return self.rho_pos - self.rho_neg


def scan_epsilon(base_config: EnsembleConfig, eps_grid) -> list:
    """Stationary order parameter from both phases across a coupling grid."""
    points = []
    for eps in eps_grid:
        cfg_neg = replace(base_config, eps=float(eps), initial="all_negative_lebesgue")
        cfg_pos = replace(base_config, eps=float(eps), initial="all_positive_invariant")
        neg = stationary_rho(run_ensemble(cfg_neg), base_config.burn_in)
        pos = stationary_rho(run_ensemble(cfg_pos), base_config.burn_in)
        points.append(
            PhasePoint(
                eps=float(eps),
                rho_neg=neg[0],
                rho_neg_stderr=neg[1],
                rho_pos=pos[0],
                rho_pos_stderr=pos[1],
            )
        )
    return points


# -- decay fits ----------------------------------------------------------------


def _fit_log_decay(xs, values, stderr) -> DecayRateFit:
    xs = np.asarray(xs, dtype=float)
    vals = np.asarray(values, dtype=float)
    errs = np.asarray(stderr, dtype=float)
    keep = []
    for i in range(len(xs)):
        if abs(vals[i]) > 3.0 * errs[i] and abs(vals[i]) > 0.0:
            keep.append(i)
        else:
            break  # contiguous signal window only
    if len(keep) < 4:
        raise InsufficientSignalError(
            f"only {len(keep)} points above 3x their standard error"
        )
    x = xs[keep]
    y = np.log(np.abs(vals[keep]))
    n = len(x)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(n - 2, 1)
    se = np.sqrt(ss_res / dof / ((x - x.mean()) ** 2).sum()) if n > 2 else np.inf
    rate = -float(slope)
    return DecayRateFit(
        rate=rate,
        rate_ci=1.96 * float(se),
        r2=r2,
        n_points=n,
        window=(int(x[0]), int(x[-1])),
        decay_confirmed=rate > 0.0,
    )


def fit_spatial_decay(series: ObservableSeries) -> DecayRateFit:
    """Log-linear fit of |C(d)| over the window above 3x its standard error."""
    if series.distances.size < 9:
        raise InsufficientSignalError("need C(d) up to d_max >= 8")
    return _fit_log_decay(series.distances[1:], series.c_mean[1:], series.c_stderr[1:])


def fit_temporal_decay(series: ObservableSeries) -> DecayRateFit:
    if series.lags.size < 5:
        raise InsufficientSignalError("need A(lag) up to lag_max >= 4")
    return _fit_log_decay(series.lags[1:], series.a_mean[1:], series.a_stderr[1:])


# -- cellular-automaton equivalence report -------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    eps: float
    flip_frequency: float
    flip_stderr: float
    n_events: int
    tolerance: float
    within_tolerance: bool
    curve: list

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "flip_frequency": self.flip_frequency,
            "flip_stderr": self.flip_stderr,
            "n_events": self.n_events,
            "tolerance": self.tolerance,
            "within_tolerance": self.within_tolerance,
            "curve": self.curve,
        }


def compare_cml_pca(config: EnsembleConfig, eps_grid=None) -> EquivalenceReport:
    """Conditional flip frequency of the lattice against the automaton rate,
    plus stationary order-parameter curves for both processes."""
    series = run_ensemble(config)
    n_events = series.flip_events
    p_hat = series.flip_positives / n_events if n_events else float("nan")
    stderr = (
        float(np.sqrt(p_hat * (1.0 - p_hat) / n_events)) if n_events else float("nan")
    )
    tol = max(3.0 * stderr, 5.0 * config.eps**2) if n_events else float("nan")
    curve = []
    for eps in eps_grid if eps_grid is not None else []:
        cfg = replace(config, eps=float(eps))
        cml = stationary_rho(run_ensemble(cfg), config.burn_in)
        pca = stationary_rho(pca_run(cfg), config.burn_in)
        curve.append(
            {
                "eps": float(eps),
                "cml_rho": cml[0],
                "cml_ci": 1.96 * cml[1],
                "pca_rho": pca[0],
                "pca_ci": 1.96 * pca[1],
            }
        )
    return EquivalenceReport(
        eps=config.eps,
        flip_frequency=p_hat,
        flip_stderr=stderr,
        n_events=n_events,
        tolerance=tol,
        within_tolerance=bool(abs(p_hat - config.eps) <= tol) if n_events else False,
        curve=curve,
    )


# -- emitters -------------------------------------------------------------------


def timeseries_csv(series: ObservableSeries) -> str:
    lines = ["t,rho_plus,stderr"]
    for t, (m, e) in enumerate(zip(series.rho_mean, series.rho_stderr)):
        lines.append(f"{t},{m!r},{e!r}")
    return "\n".join(lines) + "\n"


def correlations_csv(series: ObservableSeries) -> str:
    lines = ["kind,x,value,stderr"]
    for d, m, e in zip(series.distances, series.c_mean, series.c_stderr):
        lines.append(f"spatial,{d},{m!r},{e!r}")
    for g, m, e in zip(series.lags, series.a_mean, series.a_stderr):
        lines.append(f"temporal,{g},{m!r},{e!r}")
    return "\n".join(lines) + "\n"


def phase_csv(points: list) -> str:
    lines = ["eps,rho_neg,rho_neg_stderr,rho_pos,rho_pos_stderr,gap"]
    for p in points:
        lines.append(
            f"{p.eps!r},{p.rho_neg!r},{p.rho_neg_stderr!r},"
            f"{p.rho_pos!r},{p.rho_pos_stderr!r},{p.gap!r}"
        )
    return "\n".join(lines) + "\n"


def series_to_json(series: ObservableSeries) -> str:
    return json.dumps(series.to_dict())
