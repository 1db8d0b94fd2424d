"""Figure rendering for the command-line reports.

Imported lazily by the CLI so library users never pay for matplotlib.
Selects the Agg backend: everything here draws straight to files.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _save(fig, path):
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)


def simulate_figure(cols: dict, path):
    """Energy/enstrophy traces and the per-interval budget residual."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(cols["t"], cols["energy"], label="energy")
    ax1.plot(cols["t"], cols["enstrophy"], label="enstrophy")
    ax1.set_ylabel("norm squared")
    ax1.legend(loc="best")
    ax1.grid(alpha=0.3)
    ax2.plot(cols["t"], np.abs(cols["budget_residual"]), color="tab:red")
    ax2.set_yscale("log")
    ax2.set_xlabel("t")
    ax2.set_ylabel("|budget residual|")
    ax2.grid(alpha=0.3)
    _save(fig, path)


def convergence_figure(table, path):
    """Error against eps on log-log axes with the fitted order."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    eps = np.array(table.eps_values)
    err = np.array(table.errors)
    ok = ~np.array(table.flagged) & (eps > 0) & np.isfinite(err) & (err > 0)
    ax.loglog(eps[ok], err[ok], "o-", label="measured")
    if table.order is not None and np.any(ok):
        anchor = err[ok][0] / eps[ok][0] ** table.order
        ax.loglog(
            eps[ok],
            anchor * eps[ok] ** table.order,
            "k--",
            label=f"slope {table.order:.3f}",
        )
    ax.set_xlabel("eps")
    ax.set_ylabel("L2(0,T;V0) error")
    ax.legend(loc="best")
    ax.grid(alpha=0.3, which="both")
    _save(fig, path)


def dimension_figure(report, path):
    """Cumulative trace averages q_m with the m_star crossing."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ms = np.arange(1, len(report.q) + 1)
    ax.errorbar(ms, report.q, yerr=report.q_se, fmt="o-", capsize=3)
    ax.axhline(0.0, color="k", lw=0.8)
    if report.m_star is not None:
        ax.axvline(report.m_star, color="tab:red", ls="--", label=f"m* = {report.m_star}")
        ax.legend(loc="best")
    ax.set_xlabel("m")
    ax.set_ylabel("q_m")
    ax.grid(alpha=0.3)
    _save(fig, path)


def sweep_figure(table, path):
    """m_star and the DOF bound columns against G."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    rows = [r for r in table.rows if not r.flagged and r.G > 0]
    if rows:
        g = np.array([r.G for r in rows])
        ax.loglog(g, [max(r.m_star or 1, 1) for r in rows], "o-", label="m*")
        ax.loglog(g, [r.dof_grashof for r in rows], "s--", label="G^1.05")
        landau = np.array([r.dof_landau for r in rows])
        if np.all(landau > 0):
            ax.loglog(g, landau, "^--", label="(l0/l_eps)^3")
    ax.set_xlabel("G")
    ax.set_ylabel("degrees of freedom")
    ax.legend(loc="best")
    ax.grid(alpha=0.3, which="both")
    _save(fig, path)


def audit_figure(report, probe, path):
    """Max observed ratios per inequality plus the family-size probe."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    names = [e.name for e in report.entries]
    ax1.barh(names, [e.max_ratio for e in report.entries], color="tab:blue")
    ax1.set_xlabel("max observed ratio")
    ax1.grid(alpha=0.3, axis="x")
    if probe is not None:
        ax2.plot(probe.family_sizes, probe.ratios, "o-")
        ax2.set_xlabel("family size")
        ax2.set_ylabel(f"ratio (q={probe.q:g})")
        ax2.set_xscale("log", base=2)
        ax2.grid(alpha=0.3)
    _save(fig, path)


def bounds_figure(cols: dict, report, params, path):
    """Energy trace against the decaying envelope and the ball radius."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    t = cols["t"]
    energy = cols["energy"]
    ax.plot(t, energy, label="energy")
    rho_sq = report.rho0 ** 2
    decay = np.exp(-params.nu * params.box.lambda1 * (t - t[0]))
    envelope = energy[0] * decay + rho_sq * (1.0 - decay)
    ax.plot(t, envelope, "k--", label="envelope")
    ax.axhline(rho_sq, color="tab:red", ls=":", label="rho0^2")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(loc="best")
    ax.grid(alpha=0.3)
    _save(fig, path)
