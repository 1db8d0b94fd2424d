"""Run configuration: INI parsing, validation, and a canonical digest.

A run is described by one INI file with sections [box], [params],
[time], [forcing], and [study].  Parsing collects every problem it
finds (unknown keys, bad types, failed physical validation) and raises
a single ConfigError naming all of them, so a config can be fixed in
one pass.  The digest is a sha256 over canonicalized "section.key=value"
lines: insensitive to whitespace, comments, and key order.
"""

import configparser
import hashlib
import math
from dataclasses import dataclass

from .dynamics import SCHEMES, SimConfig
from .spectral import (
    BoxSpec,
    PhysicalParams,
    SpectralField,
    max_speed,
    random_solenoidal,
    single_mode_field,
)

SECTION_KEYS = {
    "box": ("d", "n", "l"),
    "params": ("nu", "eps", "l"),
    "time": ("dt", "t_end", "output_every", "scheme"),
    "forcing": ("kind", "mode", "amplitude", "gamma", "k_cut"),
    "study": (
        "u0",
        "u0_amplitude",
        "u0_mode",
        "u0_gamma",
        "u0_kcut",
        "eps_list",
        "reference_eps",
        "m",
        "t_avg",
        "t_burn",
        "ortho_every",
        "g_values",
        "samples",
        "inequalities",
        "family_sizes",
        "q",
    ),
}

FORCING_KINDS = ("zero", "single_mode", "random")
U0_KINDS = ("zero", "single_mode", "random")


class ConfigError(ValueError):
    """Raised with the full list of config problems in .errors."""

    def __init__(self, errors):
        self.errors = tuple(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class StudySpec:
    """Knobs for the study commands, already type-checked.

    Fields unused by a given command are simply ignored by it.
    """

    eps_list: tuple | None
    reference_eps: float | None
    m: int
    t_avg: float
    t_burn: float | None
    ortho_every: int
    g_values: tuple | None
    samples: int
    inequalities: tuple | None
    family_sizes: tuple
    q: float | None


@dataclass(frozen=True)
class RunSpec:
    """Everything a command needs: the simulation config plus study knobs."""

    sim: SimConfig
    study: StudySpec
    digest: str
    defaults_applied: tuple


def config_digest(text: str) -> str:
    """sha256 of the canonicalized key-value content of `text`.

    Raw INI text is reduced to sorted "section.key=value" lines with
    runs of whitespace inside values collapsed, so formatting changes
    do not move the digest.
    """
    parser = _fresh_parser()
    parser.read_string(text)
    lines = []
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            lines.append(f"{sec}.{key}={' '.join(raw.split())}")
    payload = "\n".join(sorted(lines))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _fresh_parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(
        strict=True,
        inline_comment_prefixes=("#", ";"),
        interpolation=None,
    )


class _Reader:
    """Typed key access over parsed INI data with error accumulation."""

    def __init__(self, parser: configparser.ConfigParser):
        self.data = {s: dict(parser.items(s)) for s in parser.sections()}
        self.errors = []
        self.defaults = []

    def check_shape(self):
        for sec, keys in self.data.items():
            if sec not in SECTION_KEYS:
                self.errors.append(f"unknown section [{sec}]")
                continue
            for key in keys:
                if key not in SECTION_KEYS[sec]:
                    self.errors.append(f"unknown key {sec}.{key}")

    def raw(self, sec, key, default=None, required=False):
        val = self.data.get(sec, {}).get(key)
        if val is None or val.strip() == "":
            if required:
                self.errors.append(f"{sec}.{key} is required")
                return None
            if default is not None:
                self.defaults.append(f"{sec}.{key}")
            return default
        return val.strip()

    def _typed(self, sec, key, conv, typename, default, required):
        raw = self.raw(sec, key, required=required)
        if raw is None:
            if not required and default is not None:
                self.defaults.append(f"{sec}.{key}")
            return default
        try:
            return conv(raw)
        except ValueError:
            self.errors.append(f"{sec}.{key} must be {typename} (got {raw!r})")
            return None

    def floatval(self, sec, key, default=None, required=False):
        return self._typed(sec, key, float, "a number", default, required)

    def intval(self, sec, key, default=None, required=False):
        return self._typed(sec, key, _strict_int, "an integer", default, required)

    def choice(self, sec, key, options, default=None):
        raw = self.raw(sec, key, default=default)
        if raw is not None and raw not in options:
            self.errors.append(
                f"{sec}.{key} must be one of {', '.join(options)} (got {raw!r})"
            )
            return None
        return raw

    def float_list(self, sec, key):
        raw = self.raw(sec, key)
        if raw is None:
            return None
        try:
            vals = tuple(float(tok) for tok in raw.replace(",", " ").split())
        except ValueError:
            self.errors.append(f"{sec}.{key} must be a list of numbers (got {raw!r})")
            return None
        if not vals:
            self.errors.append(f"{sec}.{key} must not be empty")
            return None
        return vals

    def int_list(self, sec, key):
        raw = self.raw(sec, key)
        if raw is None:
            return None
        try:
            vals = tuple(_strict_int(tok) for tok in raw.replace(",", " ").split())
        except ValueError:
            self.errors.append(f"{sec}.{key} must be a list of integers (got {raw!r})")
            return None
        return vals or None

    def str_list(self, sec, key):
        raw = self.raw(sec, key)
        if raw is None:
            return None
        return tuple(tok for tok in raw.replace(",", " ").split())

    def mode(self, sec, key, d, default):
        vals = self.int_list(sec, key)
        if vals is None:
            if self.raw(sec, key) is None:
                self.defaults.append(f"{sec}.{key}")
                return default
            return None
        if d is not None and len(vals) != d:
            self.errors.append(f"{sec}.{key} must have {d} components (got {vals})")
            return None
        return vals


def _strict_int(tok: str) -> int:
    val = float(tok)
    if not val.is_integer():
        raise ValueError(tok)
    return int(val)


def parse_config(text: str, seed: int = 0) -> RunSpec:
    """Parse and validate INI `text` into a RunSpec.

    `seed` feeds the random field constructors (forcing kind=random,
    study u0=random); it is a command-line input, not part of the
    config text, so it never moves the digest.  Raises ConfigError
    listing every offending key.
    """
    parser = _fresh_parser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"config text is not valid INI: {exc}"]) from exc
    digest = config_digest(text)
    r = _Reader(parser)
    r.check_shape()

    d = r.intval("box", "d", required=True)
    n = r.intval("box", "n", required=True)
    box_l = r.floatval("box", "l", default=2.0 * math.pi)
    box = None
    if d is not None and n is not None and box_l is not None:
        try:
            box = BoxSpec(d, float(box_l), n)
        except ValueError as exc:
            r.errors.extend(str(exc).split("; "))

    nu = r.floatval("params", "nu", required=True)
    eps = r.floatval("params", "eps", default=0.0)
    ell = r.floatval("params", "l", default=2.0)
    scalars_ok = True
    if nu is not None and not nu > 0:
        r.errors.append("params.nu must be positive")
        scalars_ok = False
    if eps is not None and eps < 0:
        r.errors.append("params.eps must be >= 0")
        scalars_ok = False
    if ell is not None and ell < 1:
        r.errors.append("params.l must be >= 1")
        scalars_ok = False

    forcing = None
    if box is not None:
        kind = r.choice("forcing", "kind", FORCING_KINDS, default="zero")
        amp = r.floatval("forcing", "amplitude", default=1.0)
        gamma = r.floatval("forcing", "gamma", default=2.0)
        k_cut = r.floatval("forcing", "k_cut")
        fmode = r.mode("forcing", "mode", box.d, (0,) * (box.d - 1) + (4,))
        try:
            forcing = _build_field(box, kind, fmode, amp, gamma, k_cut, seed * 2 + 1)
        except ValueError as exc:
            r.errors.append(f"forcing: {exc}")

    params = None
    if forcing is not None and scalars_ok and None not in (nu, eps, ell):
        try:
            params = PhysicalParams(nu=nu, eps=eps, l=ell, forcing=forcing)
        except ValueError as exc:
            r.errors.extend(str(exc).split("; "))

    u0 = None
    if box is not None:
        u0_kind = r.choice("study", "u0", U0_KINDS, default="zero")
        u0_amp = r.floatval("study", "u0_amplitude", default=1.0)
        u0_gamma = r.floatval("study", "u0_gamma", default=2.0)
        u0_kcut = r.floatval("study", "u0_kcut")
        u0_mode = r.mode("study", "u0_mode", box.d, (0,) * (box.d - 1) + (1,))
        try:
            u0 = _build_field(box, u0_kind, u0_mode, u0_amp, u0_gamma, u0_kcut, seed)
        except ValueError as exc:
            r.errors.append(f"study.u0: {exc}")

    t_end = r.floatval("time", "t_end", required=True)
    dt = r.floatval("time", "dt")
    output_every = r.intval("time", "output_every", default=1)
    scheme = r.raw("time", "scheme", default="if_rk2")
    time_ok = True
    if dt is not None and not dt > 0:
        r.errors.append("time.dt must be positive")
        time_ok = False
    if t_end is not None and t_end < 0:
        r.errors.append("time.t_end must be >= 0")
        time_ok = False
    if output_every is not None and output_every < 1:
        r.errors.append("time.output_every must be a positive integer")
        time_ok = False
    if scheme is not None and scheme not in SCHEMES:
        r.errors.append(f"time.scheme must be one of {SCHEMES}")
        time_ok = False
    if (
        time_ok
        and dt is None
        and r.raw("time", "dt") is None
        and None not in (box, u0, t_end)
    ):
        dt = _auto_dt(box, u0, t_end)
        r.defaults.append("time.dt")

    sim = None
    if time_ok and None not in (params, u0, dt, t_end, output_every, scheme):
        try:
            sim = SimConfig(
                params=params,
                u0=u0,
                dt=dt,
                t_end=t_end,
                output_every=output_every,
                scheme=scheme,
            )
        except ValueError as exc:
            r.errors.extend(str(exc).split("; "))

    study = _parse_study(r)
    if r.errors:
        raise ConfigError(sorted(set(r.errors)))
    return RunSpec(
        sim=sim,
        study=study,
        digest=digest,
        defaults_applied=tuple(sorted(set(r.defaults))),
    )


def _parse_study(r: _Reader) -> StudySpec:
    eps_list = r.float_list("study", "eps_list")
    reference_eps = r.floatval("study", "reference_eps")
    m = r.intval("study", "m", default=6)
    t_avg = r.floatval("study", "t_avg", default=40.0)
    t_burn = r.floatval("study", "t_burn")
    ortho_every = r.intval("study", "ortho_every", default=10)
    g_values = r.float_list("study", "g_values")
    samples = r.intval("study", "samples", default=1000)
    inequalities = r.str_list("study", "inequalities")
    family_sizes = r.int_list("study", "family_sizes")
    if family_sizes is None:
        if r.raw("study", "family_sizes") is None:
            r.defaults.append("study.family_sizes")
        family_sizes = (1, 4, 16)
    q = r.floatval("study", "q")
    if m is not None and m < 1:
        r.errors.append("study.m must be >= 1")
    if samples is not None and samples < 1:
        r.errors.append("study.samples must be >= 1")
    return StudySpec(
        eps_list=eps_list,
        reference_eps=reference_eps,
        m=m if m else 6,
        t_avg=t_avg if t_avg else 40.0,
        t_burn=t_burn,
        ortho_every=ortho_every if ortho_every else 10,
        g_values=g_values,
        samples=samples if samples else 1000,
        inequalities=inequalities,
        family_sizes=family_sizes,
        q=q,
    )


def _build_field(box, kind, mode, amplitude, gamma, k_cut, seed):
    if None in (kind, amplitude):
        return None
    if kind == "zero":
        return SpectralField.zeros(box)
    if kind == "single_mode":
        if mode is None:
            return None
        return single_mode_field(box, mode, amplitude=amplitude)
    if gamma is None:
        return None
    return random_solenoidal(
        box, seed=seed, gamma=gamma, k_cut=k_cut, amplitude=amplitude
    )


def _auto_dt(box, u0, t_end: float) -> float:
    """Default step: advective CFL 0.5 against k_max, snapped to divide t_end."""
    speed = max(1.0, max_speed(u0))
    dt0 = 0.5 / (box.k_max * speed)
    if t_end <= 0.0:
        return dt0
    n = max(1, math.ceil(t_end / dt0 - 1e-12))
    return t_end / n
