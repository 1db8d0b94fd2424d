"""Pseudo-spectral hyperviscous incompressible flow on periodic boxes.

Library layout:

  spectral     grids, fields, projections, norms, the bilinear term
  dynamics     integrating-factor and ETDRK4 time stepping
  diagnostics  energy budget records, absorbing-ball and DOF bounds
  tangent      coupled tangent ensembles, trace formula, derivative check
  harness      convergence, audit, probe, and sweep studies
  config / io  INI run configs, CSV streams, binary checkpoints
  cli          the `hvns` console entry point
  figures      PNG rendering for the CLI reports (imports matplotlib)

Importing `hvns` stays numpy-only; matplotlib loads only with figures.
"""

__version__ = "0.1.0"

from .config import ConfigError, RunSpec, StudySpec, config_digest, parse_config
from .diagnostics import (
    AbsorbingReport,
    BoundsReport,
    DiagnosticsRecord,
    RECORD_COLUMNS,
    absorbing_check,
    absorbing_radius,
    default_burn_in,
    dissipation_bounds,
    dissipation_rate,
    dof_bounds,
    energy_budget,
    enstrophy_bound,
    grashof,
    make_record,
    records_to_arrays,
    tail_statistics,
    total_budget_residual,
)
from .dynamics import (
    BlowUpError,
    CFLWarning,
    SCHEMES,
    SimConfig,
    SimState,
    linear_symbol,
    rhs,
    simulate,
    step,
)
from .harness import (
    AUDIT_NAMES,
    AuditEntry,
    ConvergenceTable,
    InequalityAuditReport,
    LiebThirringTable,
    SweepRow,
    SweepTable,
    convergence_study,
    dimension_vs_bound_sweep,
    inequality_audit,
    lieb_thirring_admissible_q,
    lieb_thirring_probe,
    lieb_thirring_ratio,
)
from .io import (
    CheckpointError,
    RecordWriter,
    RunManifest,
    load_checkpoint,
    read_records_csv,
    save_checkpoint,
    write_manifest,
    write_records_csv,
)
from .spectral import (
    BoxMismatchError,
    BoxSpec,
    PhysicalParams,
    SpectralField,
    coeff_norm_sq,
    dealias,
    gram_matrix,
    inner_product,
    leray_project,
    max_speed,
    mgs_orthonormalize,
    nonlinear_B,
    random_solenoidal,
    single_mode_field,
    sobolev_norm,
    stokes_eigenfields,
    trilinear_b,
)
from .tangent import (
    DimensionReport,
    FrechetReport,
    evolve_ensemble,
    frechet_check,
    linearized_rhs,
    resolved_mode_budget,
    trace_contributions,
    trace_increment,
)
