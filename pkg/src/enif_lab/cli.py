"""Command-line entry point.

    enif-lab run <config.yaml> [--outdir DIR]
    enif-lab simulate <model> [model options] --out FILE
    enif-lab assimilate --method METHOD --prior FILE [...] --out FILE

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
Output locations default under the directory named by the ENIF_LAB_OUTPUT
environment variable (else ./enif_runs).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import assimilate as asm
from . import formats
from . import regress as rg
from . import simulators as sim
from . import transport as tr
from .configs import load_config
from .errors import ConfigError, EnifError
from .experiments import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enif-lab",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("config", help="YAML experiment config")
    p_run.add_argument("--outdir", default=None)

    p_sim = sub.add_parser("simulate", help="draw an ensemble from a model")
    p_sim.add_argument("model", choices=["ar1", "ou-euler", "lorenz96", "grf2d"])
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--format", choices=["csv", "bin"], default=None)
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--p", type=int, default=100, help="state length (ar1)")
    p_sim.add_argument("--phi", type=float, default=0.5)
    p_sim.add_argument("--kappa", type=float, default=1.0)
    p_sim.add_argument("--dt", type=float, default=0.1)
    p_sim.add_argument("--steps", type=int, default=100)
    p_sim.add_argument("--m", type=int, default=40, help="state count (lorenz96)")
    p_sim.add_argument("--forcing", type=float, default=8.0)
    p_sim.add_argument("--t-end", type=float, default=4.0)
    p_sim.add_argument("--scheme", choices=["euler", "rk4"], default="rk4")
    p_sim.add_argument("--rows", type=int, default=10)
    p_sim.add_argument("--cols", type=int, default=10)
    p_sim.add_argument("--range-x", type=float, default=0.3)
    p_sim.add_argument("--range-y", type=float, default=0.1)
    p_sim.add_argument("--angle", type=float, default=30.0)
    p_sim.add_argument("--write-graph", default=None,
                       help="also write the matching dependence graph")

    p_asm = sub.add_parser("assimilate", help="update an ensemble with observations")
    p_asm.add_argument("--method", required=True,
                       choices=["enif", "enif-mda", "es", "es-dist", "es-adaptive"])
    p_asm.add_argument("--prior", required=True, help="prior ensemble file")
    p_asm.add_argument("--responses", required=True,
                       help="CSV of member responses (n rows, m columns)")
    p_asm.add_argument("--obs", required=True,
                       help="CSV with the m observed values")
    p_asm.add_argument("--noise-var", required=True,
                       help="scalar, or CSV with m variances")
    p_asm.add_argument("--out", required=True)
    p_asm.add_argument("--format", choices=["csv", "bin"], default=None)
    p_asm.add_argument("--seed", type=int, default=0)
    p_asm.add_argument("--graph", default=None,
                       help="edge-list file with the state dependence graph "
                            "(required for enif methods)")
    p_asm.add_argument("--h", dest="h_file", default=None,
                       help="known observation matrix in rectangular triplet form")
    p_asm.add_argument("--h-method", choices=["monotone_lasso", "lls"],
                       default="monotone_lasso",
                       help="estimator used when no known matrix is given")
    p_asm.add_argument("--alphas", default=None,
                       help="comma-separated MDA weights summing to 1")
    p_asm.add_argument("--radius", type=float, default=None,
                       help="distance-taper coefficient (es-dist)")
    p_asm.add_argument("--distances", default=None,
                       help="CSV with the p-by-m state/observation distances")
    p_asm.add_argument("--threshold", type=float, default=None,
                       help="correlation threshold (es-adaptive); default 3/sqrt(n)")
    p_asm.add_argument("--diagnostics", default=None,
                       help="write update diagnostics to this JSON file")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    results = run_experiment(cfg, Path(args.outdir) if args.outdir else None)
    print(json.dumps(results, indent=2, default=str))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.model == "ar1":
        oracle = sim.ar1_oracle(args.p, args.phi)
        ens = sim.ar1_sample(oracle, args.n, args.seed)
        graph_out = None
        if args.write_graph:
            from .graph import chain_graph
            graph_out = chain_graph(args.p)
    elif args.model == "ou-euler":
        res = sim.ou_euler_sample(args.kappa, args.dt, args.steps, args.n,
                                  args.seed)
        ens = res.ensemble
        graph_out = None
        if args.write_graph:
            from .graph import chain_graph
            graph_out = chain_graph(args.steps)
    elif args.model == "lorenz96":
        ens = sim.lorenz96_ensemble(args.m, args.n, args.forcing, args.dt,
                                    args.t_end, args.scheme, args.seed)
        graph_out = None
        if args.write_graph:
            from .graph import lorenz96_stencil_graph
            graph_out = lorenz96_stencil_graph(args.m, args.scheme)
    else:
        ens, _ = sim.grf2d_anisotropic_exponential(
            args.rows, args.cols, args.range_x, args.range_y, args.angle,
            args.n, args.seed)
        graph_out = None
        if args.write_graph:
            from .graph import lattice_graph
            graph_out = lattice_graph(args.rows, args.cols, "8-connected")
    formats.write_ensemble(ens, args.out, args.format)
    if graph_out is not None:
        formats.write_graph(graph_out, args.write_graph)
    print(f"wrote {ens.n} x {ens.p} ensemble to {args.out}")
    return EXIT_OK


def _load_noise(spec: str, m: int):
    path = Path(spec)
    if path.exists():
        var = np.loadtxt(path, delimiter=",").ravel()
        if var.size != m:
            raise ConfigError(f"noise file has {var.size} entries, need {m}")
        return var
    try:
        return float(spec)
    except ValueError as exc:
        raise ConfigError(f"--noise-var must be a number or a file: {spec}") from exc


def _cmd_assimilate(args) -> int:
    prior = formats.read_ensemble(args.prior)
    responses = np.loadtxt(args.responses, delimiter=",", ndmin=2)
    d = np.loadtxt(args.obs, delimiter=",").ravel()
    m = d.size
    if responses.shape != (prior.n, m):
        raise ConfigError(
            f"responses must be {prior.n} x {m}, got {responses.shape}")
    noise = _load_noise(args.noise_var, m)

    h_matrix = None
    h_resid_var = None
    if args.h_file:
        h_matrix = formats.read_rect(args.h_file)
    elif args.method in ("enif", "enif-mda"):
        est = rg.estimate_H(prior, responses, args.h_method)
        h_matrix = est.matrix
        h_resid_var = est.residual_variances

    obs = asm.ObservationSpec.build(d=d, Y=responses, noise=noise,
                                    seed=args.seed, H=h_matrix,
                                    h_residual_var=h_resid_var)

    if args.method in ("enif", "enif-mda"):
        if not args.graph:
            raise ConfigError("enif methods need --graph")
        graph = formats.read_graph(args.graph)
        krmap = tr.fit_affine_kr(prior, graph)
        prec = tr.unwrap_precision(krmap)
        if args.method == "enif":
            result = asm.enif_update(prior, prec, obs)
        else:
            if not args.alphas:
                raise ConfigError("enif-mda needs --alphas")
            alphas = [float(a) for a in args.alphas.split(",")]
            result = asm.enif_mda(prior, prec, obs, alphas)
    elif args.method == "es":
        result = asm.enkf_update(prior, obs)
    elif args.method == "es-dist":
        if args.radius is None or not args.distances:
            raise ConfigError("es-dist needs --radius and --distances")
        delta = np.loadtxt(args.distances, delimiter=",", ndmin=2)
        result = asm.enkf_update(prior, obs,
                                 asm.DistanceLocalisation(args.radius, delta))
    else:
        result = asm.enkf_update(prior, obs,
                                 asm.AdaptiveLocalisation(args.threshold))

    formats.write_ensemble(result.posterior, args.out, args.format)
    if args.diagnostics:
        diag = {k: np.asarray(v).tolist()
                for k, v in result.diagnostics.items()}
        Path(args.diagnostics).write_text(json.dumps(diag, indent=2))
    print(f"wrote posterior ensemble to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_assimilate(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EnifError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
