"""Diagnostic CSV emission and parsing, binary checkpoints, run manifests.

CSV: one header row carrying bracketed unit tags, then one row per
record with 17 significant digits, comma separated, "\\n" line ends,
flushed record by record so a killed run keeps everything written.
U denotes a velocity scale, L length, T time; d is the space dimension
and l the dissipation exponent.

Checkpoint: fixed 68-byte little-endian header
(magic "HVNSCKPT", version, d, N, L, nu, eps, l, t, step_index) followed
by two C-order complex128 little-endian arrays of shape (d, N, ..., N):
the velocity coefficients, then the forcing coefficients.  Component
axis first, then one axis per space dimension in numpy FFT frequency
order (0, 1, ..., N/2-1, -N/2, ..., -1).  Round trips are bit exact.
"""

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .diagnostics import RECORD_COLUMNS, DiagnosticsRecord
from .dynamics import SimState
from .spectral import BoxSpec, PhysicalParams, SpectralField

COLUMN_UNITS = {
    "t": "T",
    "energy": "U^2 L^d",
    "enstrophy": "U^2 L^(d-2)",
    "hyper": "U^2 L^(d-2l)",
    "injection": "U^2 L^d / T",
    "budget_residual": "U^2 L^d / T",
}

CSV_HEADER = ",".join(f"{name} [{COLUMN_UNITS[name]}]" for name in RECORD_COLUMNS)


class RecordWriter:
    """Streaming CSV sink for diagnostics records.

    Opens the file immediately; every write() is flushed.  With
    append=True no header is emitted and rows are added to an existing
    file (the caller is responsible for skipping an overlap record when
    resuming).
    """

    def __init__(self, path, append: bool = False):
        self.path = str(path)
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8", newline="")
        if not append:
            self._fh.write(CSV_HEADER + "\n")
            self._fh.flush()

    def write(self, record: DiagnosticsRecord):
        vals = ("%.17g" % getattr(record, name) for name in RECORD_COLUMNS)
        self._fh.write(",".join(vals) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def write_records_csv(path, records) -> int:
    """Write an iterable of records to `path`; returns the row count."""
    count = 0
    with RecordWriter(path) as writer:
        for rec in records:
            writer.write(rec)
            count += 1
    return count


def read_records_csv(path) -> dict:
    """Parse a diagnostics CSV back into {column: float array}.

    Values round-trip to the last digit against what write() emitted.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file, expected a header row")
    names = tuple(tok.split(" [")[0] for tok in lines[0].split(","))
    if names != RECORD_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {names}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        toks = line.split(",")
        if len(toks) != len(names):
            raise ValueError(f"{path}: line {i}: expected {len(names)} fields")
        try:
            rows.append([float(tok) for tok in toks])
        except ValueError as exc:
            raise ValueError(f"{path}: line {i}: {exc}") from exc
    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(names)))
    return {name: data[:, j].copy() for j, name in enumerate(names)}


def write_table(path, names, rows):
    """Small generic CSV for study outputs (floats at 17 digits)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in rows:
            toks = []
            for val in row:
                if isinstance(val, bool):
                    toks.append("1" if val else "0")
                elif isinstance(val, (int, np.integer)):
                    toks.append("%d" % val)
                elif val is None:
                    toks.append("")
                elif isinstance(val, str):
                    toks.append(val)
                else:
                    toks.append("%.17g" % val)
            fh.write(",".join(toks) + "\n")


CKPT_MAGIC = b"HVNSCKPT"
CKPT_VERSION = 1
_HEADER = struct.Struct("<8sIIIdddddQ")


class CheckpointError(ValueError):
    """A checkpoint file is unreadable or inconsistent with the run."""


def save_checkpoint(path, state: SimState, params: PhysicalParams):
    """Persist (state, params) to `path`; see the module docstring for layout."""
    box = state.u.box
    if params.box != box:
        raise CheckpointError("state and forcing live on different boxes")
    header = _HEADER.pack(
        CKPT_MAGIC,
        CKPT_VERSION,
        box.d,
        box.N,
        float(box.L),
        params.nu,
        params.eps,
        params.l,
        state.t,
        state.step_index,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.u.coeffs, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(params.forcing.coeffs, dtype="<c16").tobytes())


def load_checkpoint(path, box: BoxSpec | None = None):
    """Read a checkpoint; returns (SimState, PhysicalParams).

    If `box` is given the stored box must match it exactly; a mismatch
    is an error, never a resample.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: shorter than the {_HEADER.size}-byte header")
    magic, version, d, n, length, nu, eps, ell, t, step = _HEADER.unpack_from(data)
    if magic != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        file_box = BoxSpec(int(d), float(length), int(n))
    except ValueError as exc:
        raise CheckpointError(f"{path}: invalid header: {exc}") from exc
    if box is not None and file_box != box:
        raise CheckpointError(
            f"{path}: checkpoint box (d={file_box.d}, N={file_box.N}, "
            f"L={file_box.L:g}) does not match the run box (d={box.d}, "
            f"N={box.N}, L={box.L:g})"
        )
    count = file_box.d * file_box.N ** file_box.d
    need = _HEADER.size + 2 * count * 16
    if len(data) != need:
        raise CheckpointError(f"{path}: expected {need} bytes, found {len(data)}")
    shape = (file_box.d,) + file_box.grid_shape
    u = (
        np.frombuffer(data, dtype="<c16", count=count, offset=_HEADER.size)
        .reshape(shape)
        .astype(np.complex128)
    )
    f = (
        np.frombuffer(data, dtype="<c16", count=count, offset=_HEADER.size + 16 * count)
        .reshape(shape)
        .astype(np.complex128)
    )
    try:
        params = PhysicalParams(nu=nu, eps=eps, l=ell, forcing=SpectralField(file_box, f))
    except ValueError as exc:
        raise CheckpointError(f"{path}: invalid stored parameters: {exc}") from exc
    state = SimState(t=t, u=SpectralField(file_box, u), step_index=int(step))
    return state, params


@dataclass(frozen=True)
class RunManifest:
    """Provenance for one command invocation."""

    command: str
    config_digest: str
    build: str
    seed: int
    started: float
    finished: float
    outputs: tuple
    defaults_applied: tuple
    invariants_passed: bool


def write_manifest(path, manifest: RunManifest):
    body = asdict(manifest)
    body["outputs"] = list(manifest.outputs)
    body["defaults_applied"] = list(manifest.defaults_applied)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
