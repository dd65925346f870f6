"""Command-line front end.

Subcommands map one-to-one onto the experiment harnesses plus a few
pure-numerics tables.  Options come from an optional TOML config file
and/or flags; flags win.  Every run writes a CSV of uniform rows and a
JSON summary echoing the full configuration and the library version,
and reruns with the same seed are byte-identical.

Replica fan-out across threads is capped by SLOWSSEP_THREADS (default
1); the thread count never affects results, only wall time.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from . import __version__
from .experiments import (CSV_COLUMNS, ExperimentResult, ExperimentSpec,
                          exact_stationary, hydro_mass_experiment,
                          hydro_profile_experiment, rare_event_is,
                          rare_event_naive, stationary_mc_experiment,
                          tilted_hydro_experiment)
from .lattice import SimParams, TimeScale
from .macroscopic import LAMBDA1, decay_check, heat_neumann
from .paths import ControlPath, DensityProfile
from .ratefunc import (anti_relaxation_control, entropy_S,
                       quasi_potential_V, reversed_relaxation_path)

EXPERIMENTS = ("hydro-mass", "hydro-profile", "tilted-hydro",
               "stationary-exact", "stationary-mc", "rare-naive",
               "rare-is", "rate-table", "quasi-potential", "pde-decay")


@dataclass
class RunConfig:
    experiment: str = "hydro-mass"
    N: int = 32
    alpha: float = 0.2
    beta: float = 0.8
    horizon: float = 3.0
    replicas: int = 100
    seed: int = 0
    initial: str = "empty"
    density: float = 0.5          # for initial = "product"
    m_star: float = 0.75
    sup_mode: bool = False
    tilt: float | None = None     # constant boundary control
    cells: int = 8
    grid_points: int = 31
    m: float = 0.75               # quasi-potential target
    output: str = "."
    format: str = "csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in the open interval (0, 1)")
        if not (0.0 < self.beta < 1.0):
            raise ValueError("beta must lie in the open interval (0, 1)")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be 'csv' or 'json'")

    @property
    def gamma(self):
        # always derived; never a config key
        return (self.alpha + self.beta) / 2.0


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def parse_config(path=None, overrides=None):
    """RunConfig from an optional TOML file plus flag overrides.

    Unknown keys are rejected in both sources; gamma in particular is
    computed from (alpha, beta) and may not be supplied.
    """
    data = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        bad = set(data) - set(_FIELDS)
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
    if overrides:
        bad = set(overrides) - set(_FIELDS)
        if bad:
            raise ValueError(f"unknown option keys: {sorted(bad)}")
        data.update(overrides)
    return RunConfig(**data)


def _initial_of(cfg):
    if cfg.initial == "product":
        return ("product", cfg.density)
    return cfg.initial


def _sim_params(cfg, scale=TimeScale.ACCELERATED, tilt=None):
    return SimParams(cfg.N, cfg.alpha, cfg.beta, scale, cfg.horizon,
                     tilt, cfg.seed)


def _grid(cfg):
    return np.linspace(0.0, cfg.horizon, cfg.grid_points)


def _run_experiment(cfg):
    name = cfg.experiment
    if name == "hydro-mass":
        spec = ExperimentSpec(name, _sim_params(cfg), cfg.replicas,
                              grid=_grid(cfg), initial=_initial_of(cfg))
        return hydro_mass_experiment(spec)

    if name == "tilted-hydro":
        g = cfg.tilt if cfg.tilt is not None else math.log(2.0)
        tilt = ControlPath.constant(g, cfg.horizon)
        spec = ExperimentSpec(name, _sim_params(cfg, tilt=tilt),
                              cfg.replicas, grid=_grid(cfg),
                              initial=_initial_of(cfg))
        return tilted_hydro_experiment(spec)

    if name == "hydro-profile":
        nsites = cfg.N - 1
        occ0 = np.zeros(nsites, dtype=np.uint8)
        occ0[:nsites // 2] = 1                     # step initial profile
        spec = ExperimentSpec(name,
                              _sim_params(cfg, scale=TimeScale.DIFFUSIVE),
                              cfg.replicas, initial=occ0, cells=cfg.cells)
        return hydro_profile_experiment(spec)

    if name == "stationary-mc":
        spec = ExperimentSpec(name, _sim_params(cfg), cfg.replicas,
                              initial=_initial_of(cfg))
        return stationary_mc_experiment(spec)

    if name == "stationary-exact":
        return _stationary_exact_result(cfg)

    if name == "rare-naive":
        spec = ExperimentSpec(name, _sim_params(cfg), cfg.replicas,
                              initial=_initial_of(cfg), m_star=cfg.m_star,
                              sup_mode=cfg.sup_mode)
        return rare_event_naive(spec)

    if name == "rare-is":
        if cfg.tilt is not None:
            control = ControlPath.constant(cfg.tilt, cfg.horizon)
        else:
            path = reversed_relaxation_path(cfg.m_star, cfg.gamma,
                                            cfg.horizon, n=801)
            control = anti_relaxation_control(path, cfg.gamma)
        spec = ExperimentSpec(name, _sim_params(cfg), cfg.replicas,
                              initial=_initial_of(cfg), m_star=cfg.m_star,
                              sup_mode=cfg.sup_mode)
        return rare_event_is(spec, control=control)

    if name == "rate-table":
        return _rate_table_result(cfg)

    if name == "quasi-potential":
        return _quasi_potential_result(cfg)

    if name == "pde-decay":
        return _pde_decay_result(cfg)

    raise ValueError(f"unknown experiment {name!r}")


def _stationary_exact_result(cfg):
    dist = exact_stationary(cfg.N, cfg.alpha, cfg.beta)
    means = dist.site_means()
    rows = [("stationary-exact", cfg.N, (x + 1) / cfg.N, float(mu_x),
             float(mu_x), float(mu_x), cfg.gamma, cfg.seed)
            for x, mu_x in enumerate(means)]
    summary = {"N": cfg.N, "residual": dist.residual,
               "site_means": means.tolist(),
               "mass_marginal": dist.mass_marginal().tolist(),
               "max_mean_deviation_from_gamma":
                   float(np.max(np.abs(means - cfg.gamma)))}
    return ExperimentResult("stationary-exact", rows, summary)


def _rate_table_result(cfg):
    rows, table = [], []
    for m in np.arange(0.1, 0.95, 0.1):
        m = round(float(m), 10)
        s = float(entropy_S(m, cfg.gamma))
        v = quasi_potential_V(m, cfg.gamma, "numeric_inf").value
        rel = abs(v - s) / max(abs(s), 1e-300) if s > 0 else abs(v - s)
        rows.append(("rate-table", cfg.N, m, v, v, v, s, cfg.seed))
        table.append({"m": m, "entropy": s, "numeric": v, "rel_err": rel})
    summary = {"gamma": cfg.gamma, "table": table,
               "max_rel_err": max(r["rel_err"] for r in table)}
    return ExperimentResult("rate-table", rows, summary)


def _quasi_potential_result(cfg):
    s = float(entropy_S(cfg.m, cfg.gamma))
    rep = quasi_potential_V(cfg.m, cfg.gamma, "numeric_inf")
    rows = [("quasi-potential", cfg.N, cfg.m, rep.value, rep.value,
             rep.value, s, cfg.seed)]
    summary = {"m": cfg.m, "gamma": cfg.gamma, "numeric": rep.value,
               "entropy": s, "meta": {k: float(v) if isinstance(v, float)
                                      else v for k, v in rep.meta.items()}}
    return ExperimentResult("quasi-potential", rows, summary)


def _pde_decay_result(cfg):
    rho0 = DensityProfile.from_function(
        lambda x: 0.5 + 0.4 * np.cos(np.pi * x), cells=200)
    sol = heat_neumann(rho0, t_end=0.15, store_every=10)
    rate, resid = decay_check(sol)
    ref = 2.0 * LAMBDA1
    rows = [("pde-decay", cfg.N, 0.15, rate, rate, rate, ref, cfg.seed)]
    summary = {"fitted_rate": rate, "reference_rate": ref,
               "fit_residual": resid,
               "rel_err": abs(rate - ref) / ref}
    return ExperimentResult("pde-decay", rows, summary)


def run(cfg):
    """Execute one configured experiment and write its outputs.

    Returns the process exit code (0 on success)."""
    result = _run_experiment(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    payload = result.summary_payload(config=asdict(cfg))
    base = os.path.join(cfg.output, cfg.experiment)
    if cfg.format == "csv":
        result.to_csv(base + ".csv")
    else:
        with open(base + "-rows.json", "w") as fh:
            json.dump([dict(zip(CSV_COLUMNS, row)) for row in result.rows],
                      fh, indent=1, sort_keys=True)
            fh.write("\n")
    with open(base + ".json", "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="slowssep",
        description="exclusion process with slow reservoirs: simulation "
                    "and large-deviation numerics")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("-N", type=int, dest="N")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--horizon", "-T", type=float)
        p.add_argument("--replicas", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--initial", choices=("empty", "full", "product"))
        p.add_argument("--density", type=float)
        p.add_argument("--m-star", type=float, dest="m_star")
        p.add_argument("--sup-mode", action="store_const", const=True,
                       dest="sup_mode")
        p.add_argument("--tilt", type=float)
        p.add_argument("--cells", type=int)
        p.add_argument("--grid-points", type=int, dest="grid_points")
        p.add_argument("--m", type=float)
        p.add_argument("--output", "-o")
        p.add_argument("--format", choices=("csv", "json"))
    return parser


def main(argv=None):
    parser = _build_parser()
    ns = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(ns).items()
                 if v is not None and k != "config"}
    try:
        cfg = parse_config(ns.config, overrides)
        return run(cfg)
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
