"""Batch command line: seedbank-lab <subcommand> --config c.json --out dir.

Subcommands: forward, dual, criteria, fss, renewal. Each reads one JSON
config, writes its results into the output directory, and exits 0 on
success, 2 on a config error, 3 on a budget refusal, 4 on a numerical
diagnostic failure. Outputs are byte-identical for a fixed config and seed
no matter how many threads run; run_info.json carries the wall-clock facts
and is the one file excluded from that guarantee.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time

import numpy as np

from . import __version__, config as cfgmod, criteria as crit, dual as dualmod
from . import experiments as exp
from . import forward as fwd
from . import output as out
from .errors import BudgetError, ConfigError, DiagnosticError
from .streams import spawn_rng


def _observe_times(fcfg):
    if fcfg.observe_times:
        return np.asarray(fcfg.observe_times, dtype=float)
    return np.linspace(0.0, fcfg.horizon, fcfg.observations + 1)[1:]


def _trajectory_columns(times, ens):
    reps, steps = ens.theta_hat.shape
    replica = np.repeat(np.arange(reps), steps)
    return ["replica", "time", "theta_hat", "theta_x", "diversity", "qvar"], [
        replica,
        np.tile(times, reps),
        ens.theta_hat.reshape(-1),
        ens.theta_x.reshape(-1),
        ens.diversity.reshape(-1),
        ens.qvar.reshape(-1),
    ]


def _emit_or_die(written, formats):
    if not written:
        raise ConfigError(
            f"outputs {sorted(formats)}: nothing this subcommand emits matches; "
            "widen the outputs selection")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_forward(cfg, out_dir):
    if cfg.forward is None:
        raise ConfigError("forward: section required for the forward subcommand")
    system = cfgmod.build_system(cfg)
    times = _observe_times(cfg.forward)
    ens = exp.run_ensemble(system, cfg.theta0, cfg.replicas, times,
                           master_seed=cfg.seed, label="forward", dt=cfg.dt,
                           block_size=cfg.block_size, workers=cfg.threads,
                           init=cfg.init, budget=cfg.budget,
                           keep_final=cfg.forward.snapshot != "none")
    written = []
    if "csv" in cfg.outputs:
        header, cols = _trajectory_columns(times, ens)
        out.write_csv(os.path.join(out_dir, "trajectories.csv"), header, cols)
        written.append("trajectories.csv")
    if cfg.forward.snapshot == "csv" and "csv" in cfg.outputs:
        reps = ens.final_x.shape[0]
        size = ens.final_x.shape[-1]
        colours = ens.final_y.shape[-2]
        flat = np.concatenate([ens.final_x[:, None, :], ens.final_y], axis=1)
        replica = np.repeat(np.arange(reps), (colours + 1) * size)
        layer = np.tile(np.repeat(np.arange(-1, colours), size), reps)
        site = np.tile(np.arange(size), reps * (colours + 1))
        out.write_csv(os.path.join(out_dir, "snapshot.csv"),
                      ["replica", "layer", "site", "value"],
                      [replica, layer, site, flat.reshape(-1)])
        written.append("snapshot.csv")
    elif cfg.forward.snapshot == "binary":
        with open(os.path.join(out_dir, "snapshot_x.npy"), "wb") as fh:
            np.save(fh, ens.final_x, allow_pickle=False)
        with open(os.path.join(out_dir, "snapshot_y.npy"), "wb") as fh:
            np.save(fh, ens.final_y, allow_pickle=False)
        written += ["snapshot_x.npy", "snapshot_y.npy"]
    if "svg" in cfg.outputs:
        out.line_plot(os.path.join(out_dir, "theta_paths.svg"), times,
                      list(ens.theta_hat[:16]), xlabel="time",
                      ylabel="conserved mean", title="macroscopic paths")
        written.append("theta_paths.svg")
    _emit_or_die(written, cfg.outputs)
    return written


def _cmd_dual(cfg, out_dir):
    if cfg.dual is None:
        raise ConfigError("dual: section required for the dual subcommand")
    dcfg = cfg.dual
    system = cfgmod.build_system(cfg)
    kernel, profile = system.kernel, system.profile
    displacement = system.displacement if cfg.model == "M3" else None
    initial = [(0, dualmod.ACTIVE)] * dcfg.lineages
    written = []

    def one_replica(k):
        rng = spawn_rng(cfg.seed, "dual", "replica", k)
        return dualmod.run_coalescent(initial, kernel, profile, dcfg.d, dcfg.horizon,
                                      rng, model=cfg.model, displacement=displacement,
                                      log_events=dcfg.log_events)
    from .streams import parallel_map
    histories = parallel_map(one_replica, list(range(dcfg.replicas)), cfg.threads)

    if dcfg.log_events and "jsonl" in cfg.outputs:
        for k, hist in enumerate(histories):
            name = f"events_r{k:03d}.jsonl"
            out.write_jsonl(os.path.join(out_dir, name),
                            [{"t": ev.t, "type": ev.type, "ids": list(ev.ids),
                              "site": ev.site, "colour": ev.colour}
                             for ev in hist.events])
            written.append(name)
    if "csv" in cfg.outputs:
        out.write_csv(os.path.join(out_dir, "partition.csv"),
                      ["replica", "initial", "blocks", "events"],
                      [np.arange(dcfg.replicas),
                       np.full(dcfg.replicas, dcfg.lineages),
                       np.array([len(h.blocks) for h in histories]),
                       np.array([len(h.events) for h in histories])])
        written.append("partition.csv")

    if dcfg.hazard:
        rng = spawn_rng(cfg.seed, "dual", "hazard")
        est = dualmod.estimate_hazard(kernel, profile, dcfg.hazard_horizon,
                                      dcfg.hazard_replicas, rng, model=cfg.model,
                                      displacement=displacement)
        summary = {
            "value": est.value, "se": est.se, "converged": est.converged,
            "plateau_time": est.plateau_time,
            "equilibrium_rate": est.equilibrium_rate, "replicas": est.replicas,
        }
        if dcfg.exact:
            ex = dualmod.hazard_exact(kernel, profile, dcfg.hazard_horizon)
            summary["exact_value"] = ex.value
            summary["exact_converged"] = ex.converged
        out.write_json(os.path.join(out_dir, "hazard.json"), summary)
        written.append("hazard.json")
        if "csv" in cfg.outputs:
            out.write_csv(os.path.join(out_dir, "hazard.csv"),
                          ["time", "joint_time", "corrected"],
                          [est.grid, est.curve, est.corrected])
            written.append("hazard.csv")
        if "svg" in cfg.outputs:
            out.line_plot(os.path.join(out_dir, "hazard.svg"), est.grid,
                          [est.curve, est.corrected], xlabel="time",
                          ylabel="mean joint active time",
                          title="co-location hazard")
            written.append("hazard.svg")
    _emit_or_die(written, cfg.outputs)
    return written


def _case_verdict(case, cfg):
    if case.family == "euclidean":
        return crit.classify_example(crit.EuclideanSetting(case.d, case.gamma))
    if case.family == "heavy_tail":
        return crit.classify_example(crit.HeavyTailSetting(case.q, case.gamma))
    if case.family == "hierarchical":
        return crit.classify_example(
            crit.HierarchicalSetting(case.N, case.c, case.K, case.e))
    # integral: run the integral test on this config's kernel
    geography = cfgmod.build_geography(cfg.geography)
    kernel = cfgmod.build_kernel(cfg.kernel, geography)
    mode = crit.FiniteRho() if case.mode == "finite" else crit.InfiniteRho(case.gamma)
    return crit.coexistence_integral(kernel, mode, horizon=case.horizon)


def _cmd_criteria(cfg, out_dir):
    if not cfg.criteria:
        raise ConfigError("criteria: a nonempty case list is required")
    rows = []
    for k, case in enumerate(cfg.criteria):
        verdict = _case_verdict(case, cfg)
        label = case.label or f"case{k}"
        rows.append((label, case.family, verdict.verdict, verdict.value,
                     verdict.tail_exponent))
    width = max(len(r[0]) for r in rows)
    for label, family, verdict, value, _ in rows:
        print(f"{label:<{width}}  {family:<13} {verdict:<12} "
              f"{'' if value != value else format(value, '.6g')}")
    written = []
    if "csv" in cfg.outputs:
        out.write_csv(os.path.join(out_dir, "verdicts.csv"),
                      ["label", "family", "verdict", "value", "tail_exponent"],
                      [np.array([r[0] for r in rows]),
                       np.array([r[1] for r in rows]),
                       np.array([r[2] for r in rows]),
                       np.array([r[3] for r in rows], dtype=float),
                       np.array([r[4] if r[4] is not None else float("nan")
                                 for r in rows], dtype=float)])
        written.append("verdicts.csv")
    _emit_or_die(written, cfg.outputs)
    return written


def _cmd_fss(cfg, out_dir):
    if cfg.fss is None:
        raise ConfigError("fss: section required for the fss subcommand")
    fcfg = cfg.fss

    def build(n):
        depth = fcfg.m_rule.depth(n, cfg.seedbank.M)
        return cfgmod.build_system(cfg, n=n, M=depth)

    levels = exp.finite_systems_run(build, list(fcfg.ladder), fcfg.s_grid,
                                    cfg.theta0, fcfg.replicas,
                                    master_seed=cfg.seed, label="fss",
                                    workers=cfg.threads, dt=cfg.dt,
                                    block_size=cfg.block_size, init=cfg.init,
                                    budget=cfg.budget)
    written = []
    s_grid = np.asarray(fcfg.s_grid, dtype=float)
    if "csv" in cfg.outputs:
        for level in levels:
            name = f"ensemble_n{level.n}.csv"
            header, cols = _trajectory_columns(level.ensemble.times, level.ensemble)
            out.write_csv(os.path.join(out_dir, name), header, cols)
            written.append(name)
        out.write_csv(
            os.path.join(out_dir, "timescales.csv"),
            ["n", "size", "kappa", "beta", "gamma", "beta_star", "beta_star2",
             "ratio", "regime"],
            [np.array([lv.n for lv in levels]),
             np.array([lv.report.size for lv in levels]),
             np.array([lv.report.kappa for lv in levels]),
             np.array([lv.report.beta for lv in levels]),
             np.array([_nan(lv.report.gamma) for lv in levels]),
             np.array([_nan(lv.report.beta_star) for lv in levels]),
             np.array([_nan(lv.report.beta_star2) for lv in levels]),
             np.array([_nan(lv.report.ratio) for lv in levels]),
             np.array([lv.report.regime for lv in levels])])
        written.append("timescales.csv")
    if "svg" in cfg.outputs:
        top = levels[-1]
        out.line_plot(os.path.join(out_dir, "theta_paths.svg"), s_grid,
                      list(top.ensemble.theta_hat[:16]),
                      xlabel="macroscopic time s", ylabel="conserved mean",
                      title=f"paths at n={top.n}")
        written.append("theta_paths.svg")

    report = {"levels": [{"n": lv.n, "regime": lv.report.regime,
                          "beta": lv.report.beta} for lv in levels]}

    largest = levels[-1]
    top_system = cfgmod.build_system(cfg, n=largest.n,
                                     M=fcfg.m_rule.depth(largest.n, cfg.seedbank.M))

    bhat = None
    if fcfg.fg is not None:
        if fcfg.fg.bhat == "exact":
            bhat = dualmod.hazard_exact(top_system.kernel, top_system.profile,
                                        50.0 * exp.relaxation_time(top_system)).value
        elif fcfg.fg.bhat == "mc":
            rng = spawn_rng(cfg.seed, "fss", "hazard")
            bhat = dualmod.estimate_hazard(
                top_system.kernel, top_system.profile,
                50.0 * exp.relaxation_time(top_system), 20000, rng).value
        fg = exp.estimate_Fg(top_system, fcfg.fg.thetas, master_seed=cfg.seed,
                             label=("fss", "fg"), replicas=fcfg.fg.replicas,
                             workers=cfg.threads, dt=cfg.dt,
                             burn_mult=fcfg.fg.burn_mult,
                             sample_count=fcfg.fg.sample_count, bhat=bhat)
        report["fg"] = {"relax_time": fg.relax_time, "burn_in": fg.burn_in,
                        "bhat": bhat}
        if "csv" in cfg.outputs:
            cols = [fg.thetas, fg.value, fg.se, fg.equilibrated.astype(int)]
            names = ["theta", "fg", "se", "equilibrated"]
            if fg.var_route is not None:
                names.append("fg_variance_route")
                cols.append(fg.var_route)
            out.write_csv(os.path.join(out_dir, "fg.csv"), names, cols)
            written.append("fg.csv")
        if "svg" in cfg.outputs:
            out.line_plot(os.path.join(out_dir, "fg.svg"), fg.thetas, [fg.value],
                          xlabel="theta", ylabel="renormalised g",
                          title="volatility map")
            written.append("fg.svg")

    if fcfg.reference:
        if bhat is None:
            bhat = dualmod.hazard_exact(top_system.kernel, top_system.profile,
                                        50.0 * exp.relaxation_time(top_system)).value
        d_eff = crit.renormalize_fw(cfg.g.d, bhat)
        ref = exp.fg_diffusion_reference(fwd.FisherWright(d_eff), cfg.theta0,
                                         s_grid, fcfg.replicas,
                                         master_seed=cfg.seed,
                                         label=("fss", "reference"))
        report["reference"] = {"d_eff": d_eff, "bhat": bhat}
        if "csv" in cfg.outputs:
            reps = ref.shape[0]
            out.write_csv(os.path.join(out_dir, "reference.csv"),
                          ["replica", "s", "theta"],
                          [np.repeat(np.arange(reps), s_grid.size),
                           np.tile(s_grid, reps), ref.reshape(-1)])
            written.append("reference.csv")

    if fcfg.trapping is not None:
        rows = {"n": [], "replica": [], "time": [], "scaled": [], "censored": []}
        for level in levels:
            system = cfgmod.build_system(cfg, n=level.n,
                                         M=fcfg.m_rule.depth(level.n, cfg.seedbank.M))
            tr = exp.trapping_time(system, cfg.theta0, fcfg.trapping.replicas,
                                   master_seed=cfg.seed,
                                   label=("fss", "trapping", f"n{level.n}"),
                                   horizon=fcfg.trapping.horizon_beta * level.report.beta,
                                   eps=fcfg.trapping.eps, dt=cfg.dt,
                                   block_size=cfg.block_size, workers=cfg.threads,
                                   init=cfg.init)
            rows["n"] += [level.n] * tr.times.size
            rows["replica"] += list(range(tr.times.size))
            rows["time"] += list(tr.times)
            rows["scaled"] += list(tr.times / level.report.beta)
            rows["censored"] += list(tr.censored.astype(int))
            report.setdefault("trapping", {})[str(level.n)] = {
                "median_scaled": float(np.median(tr.times / level.report.beta)),
                "censored_fraction": float(tr.censored.mean()),
                "accessible": tr.accessible,
            }
        if "csv" in cfg.outputs:
            out.write_csv(os.path.join(out_dir, "trapping.csv"),
                          ["n", "replica", "time", "scaled", "censored"],
                          [np.array(rows["n"]), np.array(rows["replica"]),
                           np.array(rows["time"]), np.array(rows["scaled"]),
                           np.array(rows["censored"])])
            written.append("trapping.csv")
        if "svg" in cfg.outputs:
            out.histogram(os.path.join(out_dir, "trapping.svg"),
                          np.array(rows["scaled"]), xlabel="trapping time / beta",
                          title="trapping times")
            written.append("trapping.svg")

    if fcfg.diagnostics is not None:
        diag = exp.clustering_diagnostics(
            top_system, cfg.theta0, fcfg.diagnostics.probe_times,
            fcfg.diagnostics.replicas, master_seed=cfg.seed,
            label=("fss", "diagnostics"), dt=cfg.dt, block_size=cfg.block_size,
            workers=cfg.threads, init=cfg.init)
        report["diagnostics_warnings"] = diag.warnings
        if "csv" in cfg.outputs:
            out.write_csv(
                os.path.join(out_dir, "diagnostics.csv"),
                ["time", "depth", "shallow_diag", "full_diag", "upsilon_freq",
                 "x_mean", "deep_mean"],
                [np.array([p.time for p in diag.probes]),
                 np.array([p.depth for p in diag.probes]),
                 np.array([p.shallow_diag.mean() for p in diag.probes]),
                 np.array([p.full_diag.mean() for p in diag.probes]),
                 np.array([p.upsilon.mean() for p in diag.probes]),
                 np.array([p.x_mean.mean() for p in diag.probes]),
                 np.array([p.y_mean[:, -1].mean() if p.y_mean.shape[1] else
                           float("nan") for p in diag.probes])])
            written.append("diagnostics.csv")

    out.write_json(os.path.join(out_dir, "report.json"), report)
    written.append("report.json")
    _emit_or_die(written, cfg.outputs)
    return written


def _nan(v):
    return float("nan") if v is None else float(v)


def _cmd_renewal(cfg, out_dir):
    if cfg.renewal is None:
        raise ConfigError("renewal: section required for the renewal subcommand")
    rcfg = cfg.renewal
    res = exp.renewal_intersection(rcfg.gamma, horizon=rcfg.horizon,
                                   replicas=rcfg.replicas, master_seed=cfg.seed,
                                   group_size=rcfg.group_size)
    out.write_json(os.path.join(out_dir, "renewal.json"), {
        "gamma": res.gamma, "gamma_star_target": res.gamma_star_target,
        "gamma_star_hat": res.gamma_star_hat, "fit_sigma": res.fit_sigma,
        "gap_count": res.gap_count, "laplace_D": res.laplace_D,
        "group_size": res.group_size,
    })
    written = ["renewal.json"]
    if "csv" in cfg.outputs:
        out.write_csv(os.path.join(out_dir, "ccdf.csv"), ["gap", "ccdf"],
                      [res.ccdf_x, res.ccdf_y])
        out.write_csv(os.path.join(out_dir, "laplace.csv"),
                      ["lambda", "empirical", "fitted"],
                      [res.laplace_lambda, res.laplace_empirical, res.laplace_curve])
        written += ["ccdf.csv", "laplace.csv"]
    if "svg" in cfg.outputs:
        out.line_plot(os.path.join(out_dir, "ccdf.svg"), np.log10(res.ccdf_x),
                      [np.log10(res.ccdf_y)], xlabel="log10 gap",
                      ylabel="log10 tail", title="intersection gap tail")
        written.append("ccdf.svg")
    return written


_COMMANDS = {
    "forward": _cmd_forward,
    "dual": _cmd_dual,
    "criteria": _cmd_criteria,
    "fss": _cmd_fss,
    "renewal": _cmd_renewal,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="seedbank-lab",
        description="spatial population models with dormancy: batch runs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="override the config worker count")
    args = parser.parse_args(argv)

    started = time.time()
    started_utc = datetime.datetime.now(datetime.timezone.utc).isoformat()
    try:
        cfg = cfgmod.parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed: must fit in an unsigned 64-bit integer")
            cfg = _replace(cfg, seed=args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads: must be at least 1")
            cfg = _replace(cfg, threads=args.threads)
        os.makedirs(args.out, exist_ok=True)
        written = _COMMANDS[args.command](cfg, args.out)
        # worker count never changes results, so it is not part of the run's
        # identity; the actual value lives in run_info.json
        out.write_manifest(args.out, config_echo=cfgmod.echo(_replace(cfg, threads=1)),
                           master_seed=cfg.seed, version=__version__,
                           outputs=written)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except BudgetError as err:
        print(f"budget refusal: {err}", file=sys.stderr)
        return 3
    except DiagnosticError as err:
        print(f"numerical diagnostic: {err}", file=sys.stderr)
        return 4
    out.write_json(os.path.join(args.out, "run_info.json"), {
        "started_utc": started_utc,
        "finished_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "elapsed_seconds": time.time() - started,
        "threads": cfg.threads,
        "command": args.command,
    })
    return 0


def _replace(cfg, **kw):
    import dataclasses
    return dataclasses.replace(cfg, **kw)


if __name__ == "__main__":
    raise SystemExit(main())
