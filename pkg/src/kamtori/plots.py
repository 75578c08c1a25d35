"""Figure rendering for the report path; every figure lands next to its CSV."""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_DPI = 150


def _save(fig, path: str, cfg_hash: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=_DPI, metadata={"Comment": f"config_sha256={cfg_hash}"})
    plt.close(fig)
    return path


def schedule_figure(echo: dict, path: str, cfg_hash: str) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    idx = np.arange(len(echo["eps_j"]))
    for key, marker in (("eps_j", "o"), ("s_j", "s"), ("r_j", "^"),
                        ("eps_tilde_j", "x")):
        ax.semilogy(idx, echo[key], marker=marker, label=key, lw=1)
    ax.set_xlabel("step j")
    ax.set_ylabel("scheduled value")
    ax.set_title(f"schedule ladder (m0={echo['m0']})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, cfg_hash)


def kernel_figure(rows: list, a1: float, c_fit: float, p: int, path: str,
                  cfg_hash: str) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = sorted({r[0] for r in rows if r[1] == 0.0 and r[2] == 0})
    vals = [next(r[3] for r in rows if r[0] == x and r[1] == 0.0 and r[2] == 0)
            for x in xs]
    env = [c_fit * (1.0 + abs(x)) ** (-p) for x in xs]
    ax.semilogy(xs, np.maximum(vals, 1e-300), "o-", label="|K(x)|")
    ax.semilogy(xs, env, "--", label="fitted envelope")
    ax.set_xlabel("x")
    ax.set_ylabel("magnitude")
    ax.set_title("kernel decay on the real axis")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, cfg_hash)


def measure_figure(eps_list: list, fractions: list, ci_los: list, ci_his: list,
                   bound: list, path: str, cfg_hash: str) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = -np.log10(np.asarray(eps_list))
    fr = np.asarray(fractions)
    lo = fr - np.asarray(ci_los)
    hi = np.asarray(ci_his) - fr
    ax.errorbar(x, fr, yerr=[lo, hi], fmt="o-", capsize=3, label="passing fraction")
    ax.plot(x, bound, "--", label="fitted floor")
    ax.set_xlabel("-log10 eps")
    ax.set_ylabel("fraction of good frequencies")
    ax.set_ylim(min(0.9, float(np.min(fr)) - 0.02), 1.005)
    ax.set_title("measure of the admissible set")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, cfg_hash)


def decay_figure(decay_log: list, path: str, cfg_hash: str) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    steps = np.arange(len(decay_log))
    norms = [max(rep["p_norm_after"], 1e-300) for rep in decay_log]
    sched = [max(rep["scheduled_eps"], 1e-300) for rep in decay_log]
    phases = [rep["phase"] for rep in decay_log]
    ax.semilogy(steps, norms, "o-", label="perturbation majorant")
    ax.semilogy(steps, sched, "--", label="scheduled size")
    for i, ph in enumerate(phases):
        if ph == "averaged":
            ax.axvline(i, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("step")
    ax.set_ylabel("norm")
    ax.set_title("perturbation decay")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, cfg_hash)


def torus_figure(phi_grid, theta_slice, action_slice, anchor: float, path: str,
                 cfg_hash: str) -> str:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.5, 3.6))
    ax1.plot(phi_grid, theta_slice - phi_grid, lw=1)
    ax1.set_xlabel("phi")
    ax1.set_ylabel("theta - phi")
    ax1.set_title("angle correction at t = 0")
    ax2.plot(phi_grid, action_slice, lw=1)
    ax2.axhline(anchor, color="gray", ls="--", lw=0.8)
    ax2.set_xlabel("phi")
    ax2.set_ylabel("action")
    ax2.set_title("torus action at t = 0")
    fig.tight_layout()
    return _save(fig, path, cfg_hash)


def trajectory_figure(times, x, actions, path: str, cfg_hash: str) -> str:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.0, 5.0), sharex=True)
    for i in range(x.shape[1]):
        ax1.plot(times, x[:, i], lw=0.7, label=f"x{i + 1}")
        ax2.plot(times, actions[:, i], lw=0.7, label=f"I{i + 1}")
    ax1.set_ylabel("position")
    ax2.set_ylabel("action")
    ax2.set_xlabel("t")
    ax1.legend(fontsize=7, ncol=4)
    fig.tight_layout()
    return _save(fig, path, cfg_hash)


def stability_figure(A_values, fractions, ci_los, ci_his, path: str,
                     cfg_hash: str) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = np.log10(np.asarray(A_values, dtype=float))
    fr = np.asarray(fractions)
    ax.errorbar(x, fr, yerr=[fr - np.asarray(ci_los), np.asarray(ci_his) - fr],
                fmt="o-", capsize=3)
    ax.set_xlabel("log10 shell size A")
    ax.set_ylabel("stable fraction")
    ax.set_ylim(-0.02, 1.05)
    ax.set_title("stability fraction across shells")
    fig.tight_layout()
    return _save(fig, path, cfg_hash)
