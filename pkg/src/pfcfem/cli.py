"""Command line front end.

Subcommands:

  run    fixed-mesh time integration from a config file or named preset
  adapt  time integration with refinement/coarsening between steps
  study  time or space convergence study against a fine reference

Outputs land in one directory per invocation: the resolved config, an
energy trace CSV, the final field snapshot, an optional adaptation log,
optional periodic snapshots, and a summary JSON.  Exit codes: 0 on
success, 2 for configuration problems, 3 when the linear solver fails.

Heavy imports happen inside the handlers so the thread-count environment
variables set from --threads take effect before the numerics stack loads.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pfcfem",
        description="Finite element solver for a phase field crystal model "
                    "with energy-stable time stepping.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_snapshots=True):
        p.add_argument("config", nargs="?", default=None,
                       help="YAML run configuration")
        p.add_argument("--preset", default=None, metavar="NAME",
                       help="named built-in experiment instead of a config file")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="BLAS/OpenMP thread count (default 1, for "
                            "reproducible output)")
        if with_snapshots:
            p.add_argument("--snapshot-every", type=int, default=0,
                           metavar="N", dest="snapshot_every",
                           help="write a field snapshot every N steps")
            p.add_argument("--vtk", action="store_true",
                           help="also export the final state as legacy VTK")

    p_run = sub.add_parser("run", help="fixed-mesh time integration")
    add_common(p_run)
    p_adapt = sub.add_parser("adapt", help="adaptive time integration")
    add_common(p_adapt)
    p_study = sub.add_parser("study", help="convergence study")
    p_study.add_argument("mode", choices=("time", "space"),
                         help="refine the time step or the mesh")
    add_common(p_study, with_snapshots=False)
    return parser


def _load_config(args):
    from .config import load_config, preset
    from .errors import ConfigError
    if args.config is not None and args.preset is not None:
        raise ConfigError("give either a config file or --preset, not both")
    if args.config is None and args.preset is None:
        raise ConfigError("a config file or --preset is required")
    if args.preset is not None:
        cfg = preset(args.preset)
    else:
        cfg = load_config(args.config)
    if args.out is not None:
        from dataclasses import replace
        cfg = replace(cfg, output=args.out)
    return cfg


def _prepare_outdir(cfg, snapshot_every):
    os.makedirs(cfg.output, exist_ok=True)
    snapdir = os.path.join(cfg.output, "snapshots")
    if snapshot_every > 0:
        os.makedirs(snapdir, exist_ok=True)
    return snapdir


def _write_config(cfg):
    from .config import render_config
    with open(os.path.join(cfg.output, "config.yaml"), "w",
              encoding="utf-8") as stream:
        stream.write(render_config(cfg))


def _snapshot_observer(snapdir, every):
    if every <= 0:
        return None
    import numpy as np
    from .io import write_field

    def observer(state):
        if state.step_index % every == 0:
            path = os.path.join(snapdir, "step_%06d.field" % state.step_index)
            write_field(path, state.mesh, np.asarray(state.phi))
    return observer


def _finalize(cfg, args, mesh, final, reports, summary, started):
    import numpy as np
    from .io import (write_energy_trace, write_field, write_summary,
                     write_vtk)
    write_energy_trace(os.path.join(cfg.output, "energy.csv"), reports)
    write_field(os.path.join(cfg.output, "final.field"),
                final.mesh, np.asarray(final.phi))
    if getattr(args, "vtk", False):
        write_vtk(os.path.join(cfg.output, "final.vtk"), final.mesh,
                  {"phi": np.asarray(final.phi),
                   "psi": np.asarray(final.psi)})
    summary = dict(summary)
    summary.update({
        "steps": final.step_index,
        "final_time": final.time,
        "final_energy": reports[-1].original_energy,
        "final_modified_energy": reports[-1].modified_energy,
        "n_nodes": final.mesh.n_nodes,
        "n_elements": final.mesh.n_elements,
        "wall_seconds": time.time() - started,
    })
    write_summary(os.path.join(cfg.output, "summary.json"), summary)
    print("wrote %s: %d steps to t=%g, modified energy %.6g"
          % (cfg.output, final.step_index, final.time,
             reports[-1].modified_energy))


def cmd_run(args):
    from .config import build_mesh, initial_values
    from .errors import ConfigError
    from .stepper import build_operators, init_state, run
    cfg = _load_config(args)
    if cfg.schedule is None:
        raise ConfigError("command 'run' needs a schedule section")
    started = time.time()
    snapdir = _prepare_outdir(cfg, args.snapshot_every)
    _write_config(cfg)
    mesh = build_mesh(cfg)
    ops = build_operators(mesh, cfg.model, tol=cfg.solver_tol)
    state0 = init_state(mesh, initial_values(cfg, mesh), cfg.model, ops=ops)
    observer = _snapshot_observer(snapdir, args.snapshot_every)
    reports, final = run(state0, cfg.model, cfg.schedule, ops=ops,
                         observer=observer)
    _finalize(cfg, args, mesh, final, reports, {"command": "run"}, started)
    return EXIT_OK


def cmd_adapt(args):
    from .adapt import adapt_run
    from .config import build_mesh, initial_values
    from .errors import ConfigError
    from .io import write_adapt_log
    cfg = _load_config(args)
    if cfg.adapt is None:
        raise ConfigError("command 'adapt' needs an adapt section")
    started = time.time()
    snapdir = _prepare_outdir(cfg, args.snapshot_every)
    _write_config(cfg)
    mesh = build_mesh(cfg)
    observer = _snapshot_observer(snapdir, args.snapshot_every)
    reports, records, final = adapt_run(
        mesh, initial_values(cfg, mesh), cfg.model, cfg.adapt,
        tol=cfg.solver_tol, observer=observer)
    write_adapt_log(os.path.join(cfg.output, "adapt.csv"), records)
    events = sum(1 for r in records if r.refined or r.coarsened)
    _finalize(cfg, args, mesh, final, reports,
              {"command": "adapt", "adapt_events": events}, started)
    return EXIT_OK


def cmd_study(args):
    from .errors import ConfigError
    from .io import write_summary
    from .studies import (render_table, space_study, time_study,
                          write_study_csv)
    started = time.time()
    kwargs = {}
    outdir = args.out if args.out is not None else "out"
    if args.config is not None or args.preset is not None:
        cfg = _load_config(args)
        if cfg.domain.kind != "interval":
            raise ConfigError("convergence studies need an interval domain")
        from .expressions import parse_expression
        fn = parse_expression(cfg.initial)
        kwargs["params"] = cfg.model
        kwargs["length"] = cfg.domain.length
        kwargs["u0"] = lambda x: fn(x)
        kwargs["tol"] = cfg.solver_tol
        outdir = cfg.output if args.out is None else args.out
    result = time_study(**kwargs) if args.mode == "time" \
        else space_study(**kwargs)
    print(render_table(result))
    os.makedirs(outdir, exist_ok=True)
    write_study_csv(os.path.join(outdir, "study_%s.csv" % args.mode), result)
    last = result.rows[-1]
    write_summary(os.path.join(outdir, "summary.json"), {
        "command": "study",
        "mode": args.mode,
        "rate_phi": last.rate_phi,
        "rate_psi": last.rate_psi,
        "rate_s": last.rate_s,
        "wall_seconds": time.time() - started,
    })
    return EXIT_OK


_HANDLERS = {"run": cmd_run, "adapt": cmd_adapt, "study": cmd_study}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    for var in _THREAD_VARS:
        os.environ[var] = str(args.threads)
    import logging
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .errors import (ConfigError, ExpressionError, ModelViolationError,
                         SingularSystemError, SolverFailureError)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, ExpressionError, ModelViolationError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailureError, SingularSystemError) as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
