"""Command-line front end.

Subcommands: simulate | scan | pca-compare | clusters | constants |
transfer | correlations.  Configuration comes from defaults, then an
optional JSON config file, then flags (later wins).  Every subcommand
supports --dry-run (print the resolved config, compute nothing).  When
--out is given, data files plus a run manifest are written; the manifest
is emitted even on partial failure and is the only place wall-clock
fields live, so data files are byte-identical across reruns.

Exit codes: 0 success, 1 usage error, 2 numeric or domain error.
CMLLAB_SEED serves as the seed fallback when neither flag nor config
provides one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, clusters, constants, measures, montecarlo, transfer
from .clusters import BudgetExceededError, NotInEventError, TraceClosureError
from .constants import NoThresholdError, ParameterDomainError, SeriesDivergenceError
from .lattice import CouplingParams, LatticeState, record_signs
from .local_map import MapDomainError, make_bernoulli_family, map_from_spec
from .montecarlo import (
    EnsembleConfig,
    InsufficientSignalError,
    ResourceBudgetError,
)
from .transfer import TransferError

DOMAIN_ERRORS = (
    MapDomainError,
    ParameterDomainError,
    SeriesDivergenceError,
    NoThresholdError,
    BudgetExceededError,
    NotInEventError,
    TraceClosureError,
    ResourceBudgetError,
    InsufficientSignalError,
    TransferError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse hook
        raise UsageError(message)


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", help="output directory for data files and the manifest")
    p.add_argument("--dry-run", action="store_true", help="print resolved config only")
    p.add_argument("--seed", type=int, help="RNG seed (fallback: CMLLAB_SEED, then 0)")
    p.add_argument("--threads", type=int, help="worker threads (default: cpu count)")


def build_parser() -> _Parser:
    parser = _Parser(prog="cmllab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cmllab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("simulate", help="ensemble run; CSV columns: t,rho_plus,stderr")
    _add_common(p)
    p.add_argument("--s", type=int, help="slope of the canonical map")
    p.add_argument("--L", type=int, help="ring length")
    p.add_argument("--T", type=int, help="time horizon")
    p.add_argument("--R", type=int, help="replica count")
    p.add_argument("--eps", type=float)
    p.add_argument("--initial", choices=montecarlo.INITIAL_KINDS)
    p.add_argument("--mixture-alpha", type=float)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser(
        "correlations",
        help="ensemble run with correlation estimates; CSV columns: kind,x,value,stderr",
    )
    _add_common(p)
    p.add_argument("--s", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--initial", choices=montecarlo.INITIAL_KINDS)
    p.add_argument("--mixture-alpha", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--d-max", type=int)
    p.add_argument("--lag-max", type=int)

    p = sub.add_parser(
        "scan",
        help="coupling scan; CSV columns: eps,rho_neg,rho_neg_stderr,rho_pos,rho_pos_stderr,gap",
    )
    _add_common(p)
    p.add_argument("--s", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--eps-grid", help="comma-separated coupling values")

    p = sub.add_parser("pca-compare", help="lattice vs reference automaton report")
    _add_common(p)
    p.add_argument("--s", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--eps-grid", help="comma-separated grid for the curve comparison")

    p = sub.add_parser("clusters", help="cluster enumeration or orbit clusters")
    _add_common(p)
    p.add_argument("--enumerate", action="store_true", dest="do_enumerate")
    p.add_argument("--lambda-size", type=int)
    p.add_argument("--n", type=int, help="time horizon of the cluster")
    p.add_argument("--max-points", type=int)
    p.add_argument("--from-orbit", action="store_true")
    p.add_argument("--s", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--lambda-sites", help="comma-separated seed sites")

    p = sub.add_parser("constants", help="derived-constants ledger (JSON on stdout)")
    _add_common(p)
    p.add_argument("--s", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--c", type=float, help="single-site decay prefactor")
    p.add_argument("--varsigma", type=float, help="single-site decay rate")
    p.add_argument("--gamma", type=int)
    p.add_argument("--n-window", type=int)
    p.add_argument("--sigma", type=float, help="check convergence conditions at this sigma")
    p.add_argument("--epsilon0", action="store_true", help="solve the coupling threshold")
    p.add_argument("--grid", help="grid 's1,s2,..x e1,e2,..' emitting CSV")

    p = sub.add_parser("transfer", help="operator checks and decay fit")
    _add_common(p)
    p.add_argument("--s", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--n-samples", type=int)
    return parser


# -- config plumbing ----------------------------------------------------------

_DEFAULTS: dict[str, dict] = {
    "simulate": {
        "s": 4, "L": 128, "T": 500, "R": 8, "eps": 0.1,
        "initial": "all_negative_lebesgue", "mixture_alpha": 0.5, "burn_in": 100,
    },
    "correlations": {
        "s": 4, "L": 256, "T": 1500, "R": 16, "eps": 0.05,
        "initial": "all_negative_lebesgue", "mixture_alpha": 0.5, "burn_in": 500,
        "d_max": 16, "lag_max": 16,
    },
    "scan": {
        "s": 4, "L": 128, "T": 800, "R": 8, "burn_in": 300,
        "eps_grid": "0.0,0.05,0.1,0.2,0.3,0.5,0.7,0.9,1.0",
    },
    "pca-compare": {
        "s": 4, "L": 128, "T": 800, "R": 8, "eps": 0.05, "burn_in": 200,
        "eps_grid": "",
    },
    "clusters": {
        "do_enumerate": False, "lambda_size": 1, "n": 1, "max_points": 24,
        "from_orbit": False, "s": 4, "L": 64, "eps": 0.1, "lambda_sites": "",
    },
    "constants": {
        "s": 4, "eps": 0.1, "c": 1.0, "varsigma": 0.9, "gamma": 20, "n_window": 10,
        "sigma": None, "epsilon0": False, "grid": "",
    },
    "transfer": {"s": 4, "m_max": 6, "n_samples": 32},
}


def _resolve_config(args) -> dict:
    sub = args.subcommand
    cfg = dict(_DEFAULTS[sub])
    cfg["seed"] = int(os.environ.get("CMLLAB_SEED", "0"))
    cfg["threads"] = os.cpu_count() or 1
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        flag = getattr(args, key, None)
        if flag is not None and not (isinstance(flag, bool) and not flag):
            cfg[key] = flag
    return cfg


def _parse_grid(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


class _Outputs:
    """Collects written files; finalizes the manifest in all cases."""

    def __init__(self, outdir: str | None, subcommand: str, cfg: dict):
        self.dir = Path(outdir) if outdir else None
        self.subcommand = subcommand
        self.cfg = cfg
        self.files: list[str] = []
        self.t0 = time.monotonic()
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        if not self.dir:
            return
        path = self.dir / name
        path.write_text(text)
        self.files.append(name)

    def manifest(self, status: str, error: str | None = None) -> None:
        if not self.dir:
            return
        doc = {
            "subcommand": self.subcommand,
            "config": self.cfg,
            "seed": self.cfg.get("seed"),
            "version": __version__,
            "outputs": sorted(self.files),
            "duration_s": time.monotonic() - self.t0,
            "status": status,
        }
        if error:
            doc["error"] = error
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def _ensemble_config(cfg: dict, **extra) -> EnsembleConfig:
    return EnsembleConfig(
        length=int(cfg["L"]),
        horizon=int(cfg["T"]),
        replicas=int(cfg["R"]),
        seed=int(cfg["seed"]),
        map_spec={"family": "bernoulli", "s": int(cfg["s"])},
        eps=float(cfg.get("eps", 0.1)),
        initial=cfg.get("initial", "all_negative_lebesgue"),
        mixture_alpha=float(cfg.get("mixture_alpha", 0.5)),
        burn_in=int(cfg.get("burn_in", 0)),
        d_max=int(cfg.get("d_max", 0)),
        lag_max=int(cfg.get("lag_max", 0)),
        threads=int(cfg.get("threads", 1)),
        **extra,
    )


# -- subcommand bodies ----------------------------------------------------------


def _cmd_simulate(cfg: dict, out: _Outputs) -> int:
    series = montecarlo.run_ensemble(_ensemble_config(cfg))
    csv = montecarlo.timeseries_csv(series)
    out.write("timeseries.csv", csv)
    out.write("series.json", montecarlo.series_to_json(series))
    sys.stdout.write(csv)
    return 0


def _cmd_correlations(cfg: dict, out: _Outputs) -> int:
    series = montecarlo.run_ensemble(_ensemble_config(cfg))
    out.write("timeseries.csv", montecarlo.timeseries_csv(series))
    csv = montecarlo.correlations_csv(series)
    out.write("correlations.csv", csv)
    fits = {}
    for name, fit_fn in (
        ("spatial", montecarlo.fit_spatial_decay),
        ("temporal", montecarlo.fit_temporal_decay),
    ):
        try:
            fits[name] = fit_fn(series).to_dict()
        except InsufficientSignalError as exc:
            fits[name] = {"error": str(exc)}
    doc = json.dumps(fits, indent=2, sort_keys=True)
    out.write("fits.json", doc)
    sys.stdout.write(doc + "\n")
    return 0


def _cmd_scan(cfg: dict, out: _Outputs) -> int:
    grid = _parse_grid(cfg["eps_grid"])
    if not grid:
        raise UsageError("scan needs a non-empty --eps-grid")
    points = montecarlo.scan_epsilon(_ensemble_config({**cfg, "eps": grid[0]}), grid)
    csv = montecarlo.phase_csv(points)
    out.write("phase_curve.csv", csv)
    sys.stdout.write(csv)
    return 0


def _cmd_pca_compare(cfg: dict, out: _Outputs) -> int:
    grid = _parse_grid(cfg.get("eps_grid", ""))
    report = montecarlo.compare_cml_pca(_ensemble_config(cfg), grid or None)
    doc = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    out.write("pca_report.json", doc)
    sys.stdout.write(doc + "\n")
    return 0


def _cmd_clusters(cfg: dict, out: _Outputs) -> int:
    if cfg["do_enumerate"]:
        found = clusters.enumerate_clusters(
            int(cfg["lambda_size"]), int(cfg["n"]), int(cfg["max_points"])
        )
        docs = []
        for cl in found:
            geom = clusters.analyze_geometry(cl)
            docs.append(
                {
                    "seeds": list(cl.seeds),
                    "points": [[p, t] for p, t in cl.sorted_points()],
                    "n_d": geom.n_d,
                    "n_v": geom.n_v,
                    "n_h": geom.n_h,
                    "components": geom.component_count,
                    "boundary_size": len(clusters.boundary(cl).points),
                }
            )
        text = json.dumps({"count": len(found), "clusters": docs}, indent=2, sort_keys=True)
        out.write("clusters.json", text)
        sys.stdout.write(text + "\n")
        return 0
    if cfg["from_orbit"]:
        lmap = make_bernoulli_family(int(cfg["s"]))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(cfg["seed"]))))
        x0 = LatticeState(rng.random(int(cfg["L"])) * 2.0 - 1.0)
        field = record_signs(x0, lmap, CouplingParams(float(cfg["eps"])), int(cfg["n"]))
        sites = [int(t) for t in str(cfg["lambda_sites"]).split(",") if t.strip()]
        if not sites:
            positives = [int(p) for p in field.signs[int(cfg["n"])].nonzero()[0][:1]]
            if not positives:
                raise NotInEventError("orbit has no positive site at the horizon")
            sites = positives
        cl = clusters.build_cluster(field, sites, int(cfg["n"]))
        geom = clusters.analyze_geometry(cl)
        out.write("cluster.json", cl.to_json())
        out.write("overlay.txt", clusters.overlay_text(cl, field))
        doc = json.dumps(
            {
                "seeds": list(cl.seeds),
                "n_d": geom.n_d,
                "n_v": geom.n_v,
                "n_h": geom.n_h,
                "components": geom.component_count,
            },
            indent=2,
            sort_keys=True,
        )
        sys.stdout.write(doc + "\n")
        return 0
    raise UsageError("clusters needs --enumerate or --from-orbit")


def _cmd_constants(cfg: dict, out: _Outputs) -> int:
    if cfg["grid"]:
        try:
            s_part, e_part = cfg["grid"].split("x")
        except ValueError as exc:
            raise UsageError("grid format: 's1,s2x e1,e2'") from exc
        ledgers = []
        for s in [int(float(v)) for v in _parse_grid(s_part)]:
            lmap = make_bernoulli_family(s)
            for eps in _parse_grid(e_part):
                ledgers.append(
                    constants.compute_ledger(
                        lmap, eps, float(cfg["c"]), float(cfg["varsigma"]),
                        int(cfg["gamma"]), int(cfg["n_window"]),
                        decay_provenance="cli inputs",
                    )
                )
        csv = constants.ledger_grid_csv(ledgers)
        out.write("constants_grid.csv", csv)
        sys.stdout.write(csv)
        return 0
    lmap = make_bernoulli_family(int(cfg["s"]))
    ledger = constants.compute_ledger(
        lmap, float(cfg["eps"]), float(cfg["c"]), float(cfg["varsigma"]),
        int(cfg["gamma"]), int(cfg["n_window"]), decay_provenance="cli inputs",
    )
    doc = ledger.to_dict()
    if cfg.get("epsilon0"):
        doc["epsilon0"] = constants.solve_epsilon0(lmap)
    if cfg.get("sigma") is not None:
        doc["convergence"] = constants.check_convergence_conditions(
            ledger, float(cfg["sigma"])
        ).to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True)
    out.write("ledger.json", text)
    sys.stdout.write(text + "\n")
    return 0


def _cmd_transfer(cfg: dict, out: _Outputs) -> int:
    lmap = make_bernoulli_family(int(cfg["s"]))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(cfg["seed"]))))
    m_max = int(cfg["m_max"])
    h_minus = transfer.invariant_density(lmap, "negative")
    h_plus = transfer.invariant_density(lmap, "positive")
    samples = [_random_half_density(rng) for _ in range(int(cfg["n_samples"]))]
    ly_all = []
    for h in samples:
        ly_all.append(transfer.lasota_yorke_check(lmap, h, m_max).to_dict())
    fit = transfer.estimate_decay(lmap, samples, m_max)
    doc = {
        "map": json.loads(lmap.to_json()),
        "bv_convention": transfer.BV_CONVENTION,
        "invariant_negative": json.loads(h_minus.to_json()),
        "invariant_positive": json.loads(h_plus.to_json()),
        "lasota_yorke_m": m_max,
        "lasota_yorke_all_hold": all(r["holds"] for r in ly_all),
        "lasota_yorke_worst_margin": min(r["rhs"] - r["lhs"] for r in ly_all),
        "decay_fit": fit.to_dict(),
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    out.write("transfer_report.json", text)
    sys.stdout.write(text + "\n")
    return 0


def _random_half_density(rng) -> transfer.PiecewiseLinearDensity:
    """Random positive piecewise-linear probability density on [-1, 0]."""
    cuts = sorted(set([-1.0, 0.0, 1.0] + list(-rng.random(3))))
    slopes, intercepts = [], []
    for a, b in zip(cuts, cuts[1:]):
        if b <= 0.0:
            v1, v2 = rng.random() + 0.05, rng.random() + 0.05
            m = (v2 - v1) / (b - a)
            slopes.append(m)
            intercepts.append(v1 - m * a)
        else:
            slopes.append(0.0)
            intercepts.append(0.0)
    h = transfer.PiecewiseLinearDensity(tuple(cuts), tuple(slopes), tuple(intercepts))
    return h.scaled(1.0 / h.integral())


_COMMANDS = {
    "simulate": _cmd_simulate,
    "correlations": _cmd_correlations,
    "scan": _cmd_scan,
    "pca-compare": _cmd_pca_compare,
    "clusters": _cmd_clusters,
    "constants": _cmd_constants,
    "transfer": _cmd_transfer,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.subcommand:
            raise UsageError("a subcommand is required")
        cfg = _resolve_config(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    if args.dry_run:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return 0
    out = _Outputs(args.out, args.subcommand, cfg)
    try:
        code = _COMMANDS[args.subcommand](cfg, out)
        out.manifest("ok")
        return code
    except UsageError as exc:
        out.manifest("error", str(exc))
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DOMAIN_ERRORS as exc:
        out.manifest("error", str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
