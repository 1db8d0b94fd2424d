"""Command line front end.

Five subcommands, each driven by one INI config:

  simulate   integrate and stream diagnostics to CSV, checkpoint at the end
  converge   error-vs-eps table against a reference run
  dimension  ensemble trace estimate (or a G sweep when g_values is set)
  audit      randomized inequality checks plus the orthonormal-family probe
  bounds     absorbing-ball, dissipation, and degrees-of-freedom report

Every run writes manifest.json (config digest, build, seed, wall time,
output list) into the output directory.  Exit status: 0 when every
asserted invariant held, 1 when the run finished but an invariant
failed, 2 for unusable inputs.  The only environment override is
HVNS_OUT for the output directory; --out wins over it.
"""

import argparse
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, parse_config
from .diagnostics import (
    absorbing_check,
    dissipation_bounds,
    dissipation_rate,
    dof_bounds,
    enstrophy_bound,
    grashof,
    records_to_arrays,
    tail_statistics,
)
from .dynamics import BlowUpError, simulate
from .harness import (
    AUDIT_NAMES,
    convergence_study,
    dimension_vs_bound_sweep,
    inequality_audit,
    lieb_thirring_admissible_q,
    lieb_thirring_probe,
)
from .io import (
    CheckpointError,
    RecordWriter,
    RunManifest,
    load_checkpoint,
    save_checkpoint,
    write_manifest,
    write_records_csv,
    write_table,
)
from .tangent import evolve_ensemble


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hvns",
        description="pseudo-spectral hyperviscous Navier-Stokes runs and studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate the configured run and stream diagnostics",
        "converge": "table of errors against the reference as eps -> 0",
        "dimension": "ensemble trace averages and the dimension bound",
        "audit": "randomized inequality audit and orthonormal-family probe",
        "bounds": "absorbing-ball and degrees-of-freedom report",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", default=None, help="output directory (default: HVNS_OUT or .)")
        p.add_argument("--seed", type=int, default=0, help="seed for random fields and samplers")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        if name == "simulate":
            p.add_argument("--resume", default=None, help="checkpoint file to continue from")
    return parser


def _params_match(a, b) -> bool:
    return (
        a.nu == b.nu
        and a.eps == b.eps
        and a.l == b.l
        and np.array_equal(a.forcing.coeffs, b.forcing.coeffs)
    )


def _cmd_simulate(args, spec, out):
    sim = spec.sim
    start = None
    append = False
    csv_path = out / "diagnostics.csv"
    if args.resume:
        state, ck_params = load_checkpoint(args.resume, box=sim.box)
        if not _params_match(ck_params, sim.params):
            raise CheckpointError(
                f"{args.resume}: checkpoint parameters (nu, eps, l, forcing) "
                "differ from the config"
            )
        if state.t >= sim.t_end:
            raise CheckpointError(
                f"{args.resume}: checkpoint t={state.t:g} is already at or "
                f"beyond time.t_end={sim.t_end:g}"
            )
        start = state
        append = csv_path.exists()

    records = []
    states = []
    passed = True
    note = None
    writer = RecordWriter(csv_path, append=append)
    skip_overlap = append

    def sink(rec):
        nonlocal skip_overlap
        records.append(rec)
        if skip_overlap:
            skip_overlap = False
            return
        writer.write(rec)

    try:
        simulate(sim, record_sink=sink, state_sink=states.append, start=start)
    except BlowUpError as exc:
        passed = False
        note = str(exc)
    finally:
        writer.close()

    outputs = ["diagnostics.csv"]
    if states:
        save_checkpoint(out / "state.ckpt", states[-1], sim.params)
        outputs.append("state.ckpt")
    if not args.no_figures and records:
        from . import figures

        figures.simulate_figure(records_to_arrays(records), out / "diagnostics.png")
        outputs.append("diagnostics.png")
    summary = [f"simulate: {len(records)} records, scheme {sim.scheme}, dt {sim.dt:g}"]
    if records:
        summary.append(
            f"t in [{records[0].t:g}, {records[-1].t:g}], "
            f"final energy {records[-1].energy:.6g}"
        )
    if note:
        summary.append(f"FAILED: {note}")
    return outputs, passed, summary


def _cmd_converge(args, spec, out):
    if spec.study.eps_list is None:
        raise ConfigError(["study.eps_list is required for the converge command"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tab = convergence_study(spec.sim, spec.study.eps_list, spec.study.reference_eps)
    rows = list(zip(tab.eps_values, tab.errors, tab.flagged))
    write_table(out / "convergence.csv", ("eps", "error", "flagged"), rows)
    outputs = ["convergence.csv"]
    if not args.no_figures:
        from . import figures

        figures.convergence_figure(tab, out / "convergence.png")
        outputs.append("convergence.png")
    passed = not any(tab.flagged) and bool(np.all(np.isfinite(tab.errors)))
    summary = [
        f"converge: {len(tab.eps_values)} eps values over T={tab.t_end:g}, {tab.note}",
        "errors: " + ", ".join(f"{e:.6g}" for e in tab.errors),
    ]
    if tab.order is not None:
        summary.append(f"fitted order in eps: {tab.order:.4f}")
    summary.extend(f"warning: {w.message}" for w in caught)
    if not passed:
        summary.append("FAILED: flagged or non-finite rows in the table")
    return outputs, passed, summary


def _cmd_dimension(args, spec, out):
    st = spec.study
    if st.g_values is not None:
        tab = dimension_vs_bound_sweep(
            st.g_values,
            spec.sim,
            m=st.m,
            t_avg=st.t_avg,
            t_burn=st.t_burn,
            ortho_every=st.ortho_every,
        )
        names = (
            "G",
            "q1",
            "m_star",
            "dim_F_bound",
            "eps_diss",
            "dof_landau",
            "dof_paper",
            "dof_grashof",
            "laminar",
            "flagged",
        )
        rows = [tuple(getattr(r, n) for n in names) for r in tab.rows]
        write_table(out / "dimension.csv", names, rows)
        outputs = ["dimension.csv"]
        if not args.no_figures:
            from . import figures

            figures.sweep_figure(tab, out / "dimension.png")
            outputs.append("dimension.png")
        passed = not any(r.flagged for r in tab.rows)
        summary = [f"dimension sweep: {len(tab.rows)} G values, ensemble size {tab.m}"]
        if tab.fit_slope is not None:
            summary.append(f"log-log slope of m_star vs G: {tab.fit_slope:.4f}")
        summary.extend(tab.notes)
        if not passed:
            summary.append("FAILED: flagged sweep rows")
        return outputs, passed, summary

    rep = evolve_ensemble(
        spec.sim, m=st.m, t_avg=st.t_avg, t_burn=st.t_burn, ortho_every=st.ortho_every
    )
    rows = [(j + 1, rep.q[j], rep.q_se[j]) for j in range(len(rep.q))]
    write_table(out / "dimension.csv", ("m", "q_m", "q_se"), rows)
    outputs = ["dimension.csv"]
    if not args.no_figures:
        from . import figures

        figures.dimension_figure(rep, out / "dimension.png")
        outputs.append("dimension.png")
    passed = not rep.aborted
    summary = [
        f"dimension: ensemble size {rep.m}, {rep.samples} samples over "
        f"t_avg={rep.t_avg:g} after t_burn={rep.t_burn:g}"
    ]
    if rep.m_star is not None:
        summary.append(
            f"m_star = {rep.m_star}, dim_F bound {rep.dim_F_bound:.4g}, "
            f"dim_H bound {rep.dim_H_bound:.4g}"
        )
    else:
        summary.append("q_m never crossed zero; raise study.m to resolve the bound")
    summary.extend(rep.notes)
    if not passed:
        summary.append("FAILED: ensemble run aborted")
    return outputs, passed, summary


def _cmd_audit(args, spec, out):
    st = spec.study
    box = spec.sim.box
    params = spec.sim.params
    problems = []
    names = st.inequalities if st.inequalities is not None else AUDIT_NAMES
    for name in names:
        if name not in AUDIT_NAMES:
            problems.append(f"study.inequalities: unknown name {name!r}")
    if st.samples < 100:
        problems.append("study.samples must be >= 100 for the audit command")
    if any(sz < 1 for sz in st.family_sizes):
        problems.append("study.family_sizes entries must be >= 1")
    lo, hi = lieb_thirring_admissible_q(params.l)
    if st.q is not None and not (lo < st.q <= hi):
        problems.append(f"study.q must lie in ({lo:g}, {hi:g}] for l={params.l:g}")
    if problems:
        raise ConfigError(problems)

    rep = inequality_audit(box, samples=st.samples, seed=args.seed, inequalities=names)
    probe = lieb_thirring_probe(box, st.family_sizes, l=params.l, q=st.q, seed=args.seed)
    rows = [(e.name, e.max_ratio, e.samples, e.worst_seed) for e in rep.entries]
    rows += [
        (f"lieb_thirring_m{sz}", ratio, sz, probe.seed)
        for sz, ratio in zip(probe.family_sizes, probe.ratios)
    ]
    write_table(out / "audit.csv", ("name", "max_ratio", "samples", "worst_seed"), rows)
    outputs = ["audit.csv"]
    if not args.no_figures:
        from . import figures

        figures.audit_figure(rep, probe, out / "audit.png")
        outputs.append("audit.png")
    spread = max(probe.ratios) / min(probe.ratios)
    passed = (
        rep.poincare_violations == 0
        and all(np.isfinite(e.max_ratio) for e in rep.entries)
        and bool(np.all(np.isfinite(probe.ratios)))
    )
    summary = [
        f"audit: {st.samples} samples, seed {args.seed}, "
        f"poincare violations {rep.poincare_violations}, "
        f"eigenmode equality gap {rep.eigenmode_equality_gap:.3g}",
        "max ratios: "
        + ", ".join(f"{e.name}={e.max_ratio:.6g}" for e in rep.entries),
        f"family probe at q={probe.q:g}: sizes {list(probe.family_sizes)}, "
        f"ratios " + ", ".join(f"{r:.6g}" for r in probe.ratios)
        + f", spread {spread:.3f}x",
    ]
    if not passed:
        summary.append("FAILED: inequality violation or non-finite ratio")
    return outputs, passed, summary


def _cmd_bounds(args, spec, out):
    sim = spec.sim
    params = sim.params
    records = []
    passed = True
    notes = []
    try:
        simulate(sim, record_sink=records.append)
    except BlowUpError as exc:
        passed = False
        notes.append(f"FAILED: {exc}")
    write_records_csv(out / "diagnostics.csv", records)
    rep = absorbing_check(records, params)
    passed = passed and rep.passed
    forced = params.forcing_norm() > 0.0

    eps_diss = eps_se = None
    ens_mean = ens_se = None
    try:
        ens_mean, ens_se, _ = tail_statistics(records, rep.tail_start)
        eps_diss, eps_se = dissipation_rate(records, sim.box, params)
    except ValueError as exc:
        notes.append(f"tail statistics unavailable: {exc}")
    flux_bound, grashof_form = dissipation_bounds(params)
    ens_bound = enstrophy_bound(params)

    rows = [
        ("G", grashof(params)),
        ("rho0", rep.rho0),
        ("envelope_violations", rep.violations),
        ("max_rel_excess", rep.max_rel_excess),
        ("tail_start", rep.tail_start),
        ("tail_max_energy", rep.tail_max_energy),
        ("enstrophy_tail_mean", ens_mean),
        ("enstrophy_tail_se", ens_se),
        ("enstrophy_bound", ens_bound),
        ("eps_diss", eps_diss),
        ("eps_diss_se", eps_se),
        ("eps_diss_bound", flux_bound),
        ("eps_diss_bound_grashof_form", grashof_form),
    ]
    if eps_diss is not None:
        br = dof_bounds(eps_diss, params, tail_max_energy=rep.tail_max_energy)
        rows += [
            ("l0", br.l0),
            ("l_eps", br.l_eps),
            ("dof_landau", br.dof_landau),
            ("dof_paper", br.dof_paper),
            ("dof_grashof", br.dof_grashof),
            ("laminar", br.laminar),
        ]
        if forced:
            if not rep.tail_passed:
                passed = False
                notes.append("FAILED: tail energy left the absorbing ball")
            if ens_mean > ens_bound * 1.05:
                passed = False
                notes.append("FAILED: tail-average enstrophy exceeds its bound")
            if eps_diss > flux_bound * 1.05:
                passed = False
                notes.append("FAILED: dissipation rate exceeds its bound")
    write_table(out / "bounds.csv", ("name", "value"), rows)
    outputs = ["bounds.csv", "diagnostics.csv"]
    if not args.no_figures and records:
        from . import figures

        figures.bounds_figure(records_to_arrays(records), rep, params, out / "bounds.png")
        outputs.append("bounds.png")
    summary = [
        f"bounds: G={grashof(params):.6g}, rho0={rep.rho0:.6g}, "
        f"envelope violations {rep.violations} (max excess {rep.max_rel_excess:.3g})",
    ]
    if eps_diss is not None:
        summary.append(
            f"eps_diss={eps_diss:.6g} (bound {flux_bound:.6g}), "
            f"enstrophy tail mean {ens_mean:.6g} (bound {ens_bound:.6g})"
        )
        summary.append(
            f"dof: landau {br.dof_landau:.6g}, paper {br.dof_paper:.6g}, "
            f"grashof {br.dof_grashof:.6g}"
        )
    summary.extend(notes)
    return outputs, passed, summary


_COMMANDS = {
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "dimension": _cmd_dimension,
    "audit": _cmd_audit,
    "bounds": _cmd_bounds,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        spec = parse_config(text, seed=args.seed)
    except ConfigError as exc:
        for item in exc.errors:
            print(f"config error: {item}", file=sys.stderr)
        return 2
    out = Path(args.out or os.environ.get("HVNS_OUT") or ".")
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        outputs, passed, summary = _COMMANDS[args.command](args, spec, out)
    except ConfigError as exc:
        for item in exc.errors:
            print(f"config error: {item}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = [line for line in summary if line]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    outputs = list(outputs) + ["summary.txt"]
    manifest = RunManifest(
        command=args.command,
        config_digest=spec.digest,
        build=__version__,
        seed=args.seed,
        started=started,
        finished=time.time(),
        outputs=tuple(outputs),
        defaults_applied=spec.defaults_applied,
        invariants_passed=passed,
    )
    write_manifest(out / "manifest.json", manifest)
    for line in summary:
        print(line)
    print("outputs in %s: %s" % (out, ", ".join(outputs + ["manifest.json"])))
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
