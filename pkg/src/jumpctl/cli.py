"""Command-line entry point: ``jumpctl <command> --config run.yaml --output out/``."""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import hybrid, linops, liouville, mcwf, model, sens, xens
from .config import RunConfig
from .errors import ConfigError, NumericalError
from .output import write_csv, write_jsonl

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = ("steady", "survival", "occupations", "scgf", "gx", "rate", "traj", "hist",
            "hybrid", "sweep-dt")


class Context:
    def __init__(self, command, cfg: RunConfig, outdir):
        self.command = command
        self.cfg = cfg
        self.outdir = outdir
        self.params = cfg.params()
        self.policy = cfg.control()
        self.workers = cfg.threads or os.cpu_count() or 1
        self._yaml = cfg.to_yaml()

    def block(self, name):
        return self.cfg.blocks[name]

    def csv(self, name, columns, rows):
        path = os.path.join(self.outdir, name)
        write_csv(path, columns, rows, self.command, self._yaml)
        return path


def cmd_steady(ctx):
    rho = liouville.devectorize(linops.null_state(liouville.lindbladian(ctx.params)))
    rows = [(f"rho_{i}{j}", rho[i, j].real, rho[i, j].imag) for i in range(3) for j in range(3)]
    rows.append(("k", ctx.params.gamma * rho[1, 1].real, 0.0))
    return [ctx.csv("steady.csv", ["name", "re", "im"], rows)]


def cmd_survival(ctx):
    dyn = xens.ControlledDynamics(ctx.policy, ctx.params)
    t = ctx.cfg.grid("survival", "t_grid")
    return [ctx.csv("survival.csv", ["t", "survival"], [(x, dyn.survival(x)) for x in t])]


def cmd_occupations(ctx):
    t = ctx.cfg.grid("occupations", "t_grid")
    rows = [(x, *mcwf.occupations(ctx.params, x)) for x in t]
    return [ctx.csv("occupations.csv", ["t", "p0", "p1", "p2"], rows)]


def cmd_scgf(ctx):
    grid = ctx.cfg.grid("scgf", "s_grid")
    curve = sens.ld_curve(ctx.params, grid, ctx.policy, ctx.workers)
    return [ctx.csv("scgf.csv", ["s", "theta", "k", "chi"], curve.rows())]


def cmd_gx(ctx):
    grid = ctx.cfg.grid("gx", "x_grid")
    g = xens.g_curve(ctx.policy, ctx.params, grid)
    return [ctx.csv("gx.csv", ["x", "g"], zip(grid, g))]


def cmd_rate(ctx):
    b = ctx.block("rate")
    rate = sens.rate_function(ctx.params, ctx.cfg.grid("rate", "k_grid"), ctx.policy,
                              tuple(float(v) for v in b["s_bounds"]))
    return [ctx.csv("rate.csv", ["k", "phi", "s_star", "at_boundary"], rate.rows())]


def cmd_traj(ctx):
    b = ctx.block("traj")
    records = mcwf.sample_trajectories(ctx.params, ctx.policy, float(b["t_max"]), b["n_traj"],
                                       ctx.cfg.seed, float(b["micro_step"]), b["start"])
    jsonl = os.path.join(ctx.outdir, "traj.jsonl")
    write_jsonl(jsonl, records, ctx.command, ctx._yaml)
    rows = []
    for r in records:
        starts, counts = mcwf.binned_counts(r, float(b["bin_width"]))
        rows += [(r.index, t0, c) for t0, c in zip(starts, counts)]
    return [jsonl, ctx.csv("traj_bins.csv", ["index", "t_start", "count"], rows)]


def cmd_hist(ctx):
    b = ctx.block("hist")
    h = mcwf.emission_histogram(ctx.params, ctx.policy, float(b["t_max"]), b["n_traj"],
                                ctx.cfg.seed, float(b["micro_step"]), b["start"], ctx.workers)
    return [ctx.csv("hist.csv", ["K", "count", "scaled_log_prob"], h.rows())]


def cmd_hybrid(ctx):
    if ctx.policy.kind is not model.PolicyKind.REPEAT_RESET or ctx.policy.repeats != math.inf:
        raise ConfigError("policy: the hybrid command needs kind repeat_reset with repeats .inf")
    dts = [ctx.policy.delta_t / d for d in ctx.cfg.grid("hybrid", "dt_divisors")]
    study = hybrid.convergence_study(ctx.params, ctx.policy, ctx.cfg.grid("hybrid", "s_grid"),
                                     dts, ctx.workers)
    table = ctx.csv("hybrid.csv", ["s", "delta_t", "theta_discrete", "theta_reference",
                                   "abs_err", "rel_err"], study.rows())
    order, mono = study.empirical_order(), study.monotone()
    # s = 0 has zero error at every dt, so no order can be fitted there
    rows = [(s, order[s], mono[s]) for s in order if math.isfinite(order[s])]
    return [table, ctx.csv("hybrid_order.csv", ["s", "empirical_order", "monotone"], rows)]


def cmd_sweep_dt(ctx):
    if not ctx.policy.controlled:
        raise ConfigError("policy.kind: sweep-dt needs a controlled policy")
    k0, chi0 = xens.typical_statistics(model.ControlPolicy.none(), ctx.params)
    rows = []
    for dt in ctx.cfg.grid("sweep_dt", "delta_t_list"):
        k, chi = xens.typical_statistics(ctx.cfg.control(float(dt)), ctx.params)
        rows.append((dt, k, chi, k0, chi0))
    return [ctx.csv("sweep_dt.csv", ["delta_t", "k", "chi", "k_uncontrolled", "chi_uncontrolled"],
                    rows)]


HANDLERS = {
    "steady": cmd_steady, "survival": cmd_survival, "occupations": cmd_occupations,
    "scgf": cmd_scgf, "gx": cmd_gx, "rate": cmd_rate, "traj": cmd_traj, "hist": cmd_hist,
    "hybrid": cmd_hybrid, "sweep-dt": cmd_sweep_dt,
}


def run(command: str, cfg: RunConfig, outdir: str):
    """Execute one command; returns the list of files written."""
    cfg.require_seed(command)
    return HANDLERS[command](Context(command, cfg, outdir))


def build_parser():
    ap = argparse.ArgumentParser(prog="jumpctl", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML run configuration (defaults are used when omitted)")
    ap.add_argument("--output", default=".", help="directory for output files")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--threads", type=int, help="worker threads, 0 = one per CPU")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed: expected a non-negative integer")
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 0:
                raise ConfigError("--threads: expected a non-negative integer")
            cfg.threads = args.threads
        paths = run(args.command, cfg, args.output)
    except ConfigError as exc:
        print(f"jumpctl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"jumpctl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
