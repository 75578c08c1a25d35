"""Command-line front door: validate, run, emit JSON + CSV + figures.

Every experiment is driven by one JSON config document.  CLI flags can
override the seed, the slack factor, and the output directory (the
KAMTORI_OUT environment variable also overrides the latter).  Outputs are
deterministic for identical configs and seeds; nonzero exit codes identify
the error family.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import duffing as duf
from . import plots
from .config import RunConfig, load_config, parse_and_validate
from .diophantine import derive_params, FrequencyMap, measure_estimate
from .engine import EngineConfig, run
from .errors import (AnchorLost, ConfigError, KamtoriError, NormBlowup,
                     ScheduleError, SmallDivisorViolation, StepTooLarge)
from .reporting import config_hash, write_csv, write_json
from .schedule import make_schedule
from .series import FourierTaylorSeries
from .smoothing import (DecompositionSchedule, SmoothingKernel, decompose,
                        validate_kernel_decay)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVISOR = 3
EXIT_STEP = 4
EXIT_ANCHOR = 5

_PRESENTATION_KEYS = ("out_dir", "figures")


def _effective_hash(payload: dict) -> str:
    doc = {k: v for k, v in payload.items() if k not in _PRESENTATION_KEYS}
    return config_hash(doc)


def _default_H0(d: int) -> list:
    return [{"alpha": [2 if j == i else 0 for j in range(d)], "c": 0.5}
            for i in range(d)]


def _build_H0(payload: dict, center, degree: int) -> FourierTaylorSeries:
    entries = payload.get("H0") or _default_H0(payload["d"])
    poly = {}
    for ent in entries:
        alpha = tuple(int(x) for x in ent["alpha"])
        poly[alpha] = poly.get(alpha, 0.0) + ent["c"]
    return FourierTaylorSeries.from_absolute_polynomial(
        poly, payload["d"], center, taylor_degree=degree)


def _build_P(payload: dict, center, degree: int) -> FourierTaylorSeries:
    d = payload["d"]
    P = FourierTaylorSeries.zero(d, center, degree)
    for ent in payload.get("P_modes") or []:
        coeff = complex(ent["re"], ent["im"])
        P = P + FourierTaylorSeries.harmonic(ent["k"], ent["l"], coeff, d, center,
                                             degree, conjugate_pair=True)
    return P


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------

def _run_schedule(cfg: RunConfig, out: str) -> dict:
    pl = cfg.payload
    h = _effective_hash(pl)
    p = derive_params(pl["a"], pl["b"], pl["d"], pl["mu"], pl["eps"])
    sched = make_schedule(p, m0_override=pl.get("m0_override"))
    echo = sched.echo(pl["depth"])
    summary = {
        "params": {"a": p.a, "b": p.b, "d": p.d, "mu": p.mu, "eps": p.eps,
                   "B": p.B, "ell": p.ell, "gamma": p.gamma,
                   "tau1": p.tau1, "tau2": p.tau2, "cutoff": p.cutoff},
        "schedule": echo,
    }
    files = {"summary": write_json(os.path.join(out, "schedule_summary.json"),
                                   summary, h)}
    rows = [(j, echo["eps_j"][j], echo["s_j"][j], echo["r_j"][j], echo["K_j"][j],
             echo["eps_tilde_j"][j], echo["s_tilde_j"][j], echo["r_tilde_j"][j],
             echo["K_tilde_j"][j]) for j in range(pl["depth"])]
    files["sequences"] = write_csv(
        os.path.join(out, "schedule_sequences.csv"),
        ["j", "eps_j", "s_j", "r_j", "K_j", "eps_tilde_j", "s_tilde_j",
         "r_tilde_j", "K_tilde_j"], rows, h)
    if pl["figures"]:
        files["figure"] = plots.schedule_figure(
            echo, os.path.join(out, "schedule_ladder.png"), h)
    print(f"schedule: m0={sched.m0} (theoretical {sched.m0_theoretical}), "
          f"B={p.B:g}, ell={p.ell:g}")
    return files


def _run_smooth_demo(cfg: RunConfig, out: str) -> dict:
    pl = cfg.payload
    h = _effective_hash(pl)
    kernel = SmoothingKernel(a1=pl["kernel"]["a1"], plateau=pl["kernel"]["plateau"])
    report = validate_kernel_decay(kernel, pl["j"], pl["p"])
    rows = [(x, y, beta, val, report.c_fit * shape)
            for (x, y, beta, val, shape) in report.rows]
    files = {"decay_csv": write_csv(
        os.path.join(out, "kernel_decay.csv"),
        ["x", "y", "beta", "abs_K", "bound"], rows, h)}

    # decay-law demo on algebraically decaying inputs
    slopes = {}
    for ell in pl["decay_ells"]:
        depth = pl["decay_depth"] + 3
        sched = DecompositionSchedule.geometric(0.25, 0.55, depth, target_ell=ell)
        coeffs = {}
        center = [1.5]
        max_order = 100
        for k in range(-max_order, max_order + 1):
            for l in range(-max_order, max_order + 1):
                order = abs(k) + abs(l)
                if order == 0 or order > max_order:
                    continue
                coeffs[((k,), l)] = {(0,): float(order) ** (-ell - 2.0)}
        f = FourierTaylorSeries(1, center, 2, coeffs)
        pieces = decompose(f, sched, kernel)
        xs, ys = [], []
        for nu in range(1, min(1 + pl["decay_depth"], len(pieces) - 1)):
            nrm = pieces[nu].majorant_norm(s=2.0 * sched.s_list[nu + 1], r=0.0)
            if nrm > 0:
                xs.append(math.log(sched.s_list[nu]))
                ys.append(math.log(nrm))
        slope = float(np.polyfit(xs, ys, 1)[0]) if len(xs) >= 3 else math.nan
        slopes[f"ell_{ell:g}"] = slope
    summary = {
        "kernel": {"a1": kernel.a1, "plateau": kernel.plateau},
        "c_fit": report.c_fit,
        "passes": report.passes,
        "normalization": report.normalization,
        "decay_slopes": slopes,
    }
    files["summary"] = write_json(os.path.join(out, "smoothing_summary.json"),
                                  summary, h)
    if pl["figures"]:
        files["figure"] = plots.kernel_figure(
            report.rows, kernel.a1, report.c_fit, pl["p"],
            os.path.join(out, "kernel_decay.png"), h)
    print(f"smooth-demo: envelope c={report.c_fit:.4g} "
          f"passes={report.passes} slopes={slopes}")
    return files


def _run_dio(cfg: RunConfig, out: str) -> dict:
    pl = cfg.payload
    h = _effective_hash(pl)
    eps_list = pl.get("eps_list") or [pl["eps"]]
    results = []
    for eps in eps_list:
        p = derive_params(pl["a"], pl["b"], pl["d"], pl["mu"], eps)
        H0 = _build_H0(pl, center=[1.5] * pl["d"], degree=2)
        fmap = FrequencyMap(H0)
        est = measure_estimate(fmap, p, pl["n_samples"], pl["seed"],
                               k_max=pl.get("k_max"))
        results.append((eps, p, est))
    # fit the floor constant at the largest eps, then apply it across the list
    eps0, p0, est0 = results[0]
    C_fit = (1.0 - est0.fraction) * math.log(1.0 / eps0) ** 2
    entries = []
    rows = []
    for eps, p, est in results:
        floor = 1.0 - C_fit / math.log(1.0 / eps) ** 2
        entries.append({
            "eps": eps,
            "gamma": p.gamma,
            "cutoff": p.cutoff,
            "fraction": est.fraction,
            "ci": [est.ci_low, est.ci_high],
            "fitted_floor": floor,
            "k_max": est.k_max,
            "c5": est.c5,
            "worst_witness": est.worst_witness,
        })
        rows.append((eps, est.fraction, est.ci_low, est.ci_high, floor))
    summary = {
        "params": {"a": pl["a"], "b": pl["b"], "d": pl["d"], "mu": pl["mu"]},
        "n_samples": pl["n_samples"],
        "seed": pl["seed"],
        "C_fit": C_fit,
        "results": entries,
    }
    files = {"summary": write_json(os.path.join(out, "dio_summary.json"),
                                   summary, h),
             "curve": write_csv(os.path.join(out, "dio_measure.csv"),
                                ["eps", "fraction", "ci_low", "ci_high",
                                 "fitted_floor"], rows, h)}
    if pl["figures"]:
        files["figure"] = plots.measure_figure(
            [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows],
            [r[3] for r in rows], [r[4] for r in rows],
            os.path.join(out, "dio_measure.png"), h)
    print("dio: " + "; ".join(f"eps={e:g} fraction={est.fraction:.4f}"
                              for e, _, est in results))
    return files


def _run_kam(cfg: RunConfig, out: str) -> dict:
    pl = cfg.payload
    h = _effective_hash(pl)
    p = derive_params(pl["a"], pl["b"], pl["d"], pl["mu"], pl["eps"])
    deg = pl["taylor_degree"]
    I0 = np.asarray(pl["I0"], dtype=float)
    H0 = _build_H0(pl, center=I0, degree=deg)
    P = _build_P(pl, center=I0, degree=deg)
    tol = pl["tolerances"]
    ecfg = EngineConfig(
        m0_override=pl.get("m0_override"),
        max_main_steps=pl["max_main_steps"],
        min_main_steps=pl["min_main_steps"],
        target_norm=tol["target_norm"],
        slack=pl["slack"],
        enforce_norms=pl["enforce_norms"],
        verify_steps=pl["verify_steps"],
        composition_rtol=tol["composition_rtol"],
        divisor_safety=tol["divisor_safety"],
        fixed_point_tol=tol["fixed_point_tol"],
        compose_tol=tol["compose_tol"],
        prune_rel=tol["prune_rel"],
        kernel_a1=pl["kernel"]["a1"],
        kernel_plateau=pl["kernel"]["plateau"],
        torus_grid=tuple(pl["torus_grid"]),
        anchor_tol=tol["anchor_tol"],
        taylor_degree=deg,
        seed=pl["seed"],
    )
    torus = run(H0, P, p, ecfg, I0)
    anchors = [rep["anchor"] for rep in torus.decay_log if rep["anchor"]]
    summary = {
        "params": {"a": p.a, "b": p.b, "d": p.d, "mu": p.mu, "eps": p.eps,
                   "B": p.B, "ell": p.ell, "gamma": p.gamma, "cutoff": p.cutoff},
        "I0": [float(x) for x in I0],
        "schedule": torus.schedule_echo,
        "diophantine": torus.diophantine,
        "steps": torus.decay_log,
        "anchor_trajectory": anchors,
        "anchor_limit": [float(x) for x in torus.anchor_limit],
        "omega_internal": [float(x) for x in torus.omega_internal],
        "invariance_residual": torus.invariance_residual,
        "transform_deviation": torus.transform_deviation,
        "deviation_bound": torus.deviation_bound,
        "warnings": torus.warnings,
    }
    files = {"summary": write_json(os.path.join(out, "kam_summary.json"),
                                   summary, h)}
    rows = [(i, rep["phase"], rep["index"], rep["p_norm_before"],
             rep["p_norm_after"], rep["scheduled_eps"], rep["min_divisor"],
             rep["homological_residual"],
             rep["composition_defect"] if rep["composition_defect"] is not None
             else math.nan,
             rep["deriv_bound"]) for i, rep in enumerate(torus.decay_log)]
    files["decay"] = write_csv(
        os.path.join(out, "kam_decay.csv"),
        ["step", "phase", "index", "p_norm_before", "p_norm_after",
         "scheduled_eps", "min_divisor", "homological_residual",
         "composition_defect", "deriv_bound"], rows, h)
    emb_rows = []
    n_phi, n_t = torus.theta_embedding.shape[1:]
    for i in range(n_phi):
        for j in range(n_t):
            emb_rows.append((torus.phi_grid[i], torus.t_grid[j],
                             torus.theta_embedding[0, i, j],
                             torus.action_embedding[0, i, j]))
    files["embedding"] = write_csv(os.path.join(out, "kam_torus.csv"),
                                   ["phi", "t", "theta", "action"], emb_rows, h)
    if pl["figures"]:
        files["decay_figure"] = plots.decay_figure(
            torus.decay_log, os.path.join(out, "kam_decay.png"), h)
        files["torus_figure"] = plots.torus_figure(
            torus.phi_grid, torus.theta_embedding[0, :, 0],
            torus.action_embedding[0, :, 0], float(torus.anchor_limit[0]),
            os.path.join(out, "kam_torus.png"), h)
    print(f"kam: residual={torus.invariance_residual:.3e} "
          f"deviation={torus.transform_deviation:.3e} "
          f"(bound {torus.deviation_bound:.3e})")
    return files


def _build_network(pl: dict) -> duf.DuffingNetwork:
    terms = {}
    for ent in pl["F_terms"]:
        cos_terms = tuple((int(l), float(a)) for l, a in sorted(ent["cos"].items()))
        sin_terms = tuple((int(l), float(a)) for l, a in sorted(ent["sin"].items()))
        terms[tuple(ent["alpha"])] = duf.TrigTable(cos_terms, sin_terms)
    return duf.DuffingNetwork(m=pl["m"], n=pl["n"], F_terms=terms)


def _run_duffing(cfg: RunConfig, out: str) -> dict:
    pl = cfg.payload
    h = _effective_hash(pl)
    net = _build_network(pl)
    amp_hi = (pl["c4"] * pl["A"]) ** (1.0 / (2 * net.n + 2))
    T = pl.get("T") or 120.0 * duf.exact_period(net.n, max(amp_hi, 1e-6))
    result = duf.stability_fraction(net, pl["A"], pl["n_samples"], T,
                                    seed=pl["seed"], c4=pl["c4"],
                                    dt=pl.get("dt"), bound_mult=pl["bound_mult"],
                                    qp_tol=pl["qp_tol"], store_stride=4)
    files = {}
    # replay the first few samples to dump full trajectories
    n_store = min(pl["store_trajectories"], pl["n_samples"])
    freq_estimates = []
    if n_store:
        rng = np.random.Generator(np.random.Philox(pl["seed"]))
        ref = duf._ReferenceOrbit(net.n)
        dt = pl.get("dt") or 0.09 / (duf.exact_frequency(net.n, amp_hi)
                                     + math.sqrt(sum(t.max_abs() for t in
                                                     net.F_terms.values()) + 1.0))
        for i in range(n_store):
            x0, v0 = duf.sample_shell(net, pl["A"], pl["c4"], rng, ref)
            traj = duf.simulate(net, x0, v0, T, dt, store_stride=4)
            rows = [(traj.times[s],
                     *traj.x[s], *traj.v[s], *traj.actions[s])
                    for s in range(len(traj.times))]
            header = (["t"] + [f"x{j + 1}" for j in range(net.m)]
                      + [f"xdot{j + 1}" for j in range(net.m)]
                      + [f"I{j + 1}" for j in range(net.m)])
            files[f"trajectory_{i}"] = write_csv(
                os.path.join(out, f"duffing_traj_{i}.csv"), header, rows, h)
            try:
                freqs = [duf.frequency_extract(traj, j) for j in range(net.m)]
            except KamtoriError:
                freqs = []
            freq_estimates.append(freqs)
            if i == 0 and pl["figures"]:
                files["trajectory_figure"] = plots.trajectory_figure(
                    traj.times, traj.x, traj.actions,
                    os.path.join(out, "duffing_traj.png"), h)
    sups = [rec["sup"] for rec in result.records]
    summary = {
        "network": {"m": net.m, "n": net.n,
                    "n_coupling_terms": len(net.F_terms)},
        "A": result.A, "c4": result.c4, "T": T,
        "n_samples": result.n_samples, "seed": result.seed,
        "fraction": result.fraction,
        "ci": [result.ci_low, result.ci_high],
        "sup_stats": {"min": min(sups), "max": max(sups),
                      "mean": sum(sups) / len(sups)},
        "n_escaped": sum(rec["escaped"] for rec in result.records),
        "frequency_estimates": freq_estimates,
        "records": result.records,
    }
    files["summary"] = write_json(os.path.join(out, "duffing_summary.json"),
                                  summary, h)
    print(f"duffing: A={result.A:g} fraction={result.fraction:.4f} "
          f"[{result.ci_low:.4f}, {result.ci_high:.4f}]")
    return files


_RUNNERS = {
    "schedule": _run_schedule,
    "smooth-demo": _run_smooth_demo,
    "dio": _run_dio,
    "kam": _run_kam,
    "duffing": _run_duffing,
}


def run_experiment(cfg: RunConfig, out_dir: str | None = None) -> dict:
    out = out_dir or cfg.payload.get("out_dir") or "."
    os.makedirs(out, exist_ok=True)
    return _RUNNERS[cfg.subcommand](cfg, out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kamtori",
        description="invariant-torus engine: schedules, smoothing, divisor "
                    "checks, normal-form runs, oscillator networks")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config document")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="seed override")
        sp.add_argument("--slack", type=float, default=None,
                        help="norm-check slack override")
        sp.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand)
        if args.seed is not None:
            cfg.payload["seed"] = args.seed
        if args.slack is not None:
            cfg.payload["slack"] = args.slack
        if args.no_figures:
            cfg.payload["figures"] = False
        out = args.out or os.environ.get("KAMTORI_OUT") or None
        run_experiment(cfg, out)
        return EXIT_OK
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except SmallDivisorViolation as exc:
        print(f"small-divisor violation: {exc}", file=sys.stderr)
        return EXIT_DIVISOR
    except (StepTooLarge, NormBlowup, ScheduleError) as exc:
        print(f"iteration failure: {exc}", file=sys.stderr)
        return EXIT_STEP
    except AnchorLost as exc:
        print(f"anchoring failure: {exc}", file=sys.stderr)
        return EXIT_ANCHOR
    except KamtoriError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
