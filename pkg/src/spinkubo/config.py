"""Run configuration: a sectioned key-value file read with ``configparser``."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid
from .lattice_model import HoppingKernel, KaneMeleParams, SwitchFunction, build_kane_mele

MODEL_TYPES = ("kane_mele", "hoppings")
SWEEP_PARAMETERS = ("t", "lambda_v", "lambda_so", "lambda_r")


@dataclass(frozen=True)
class ModelConfig:
    type: str = "kane_mele"
    params: KaneMeleParams = field(default_factory=KaneMeleParams)
    n_orbitals: int = 2
    entries: tuple = ()

    def kernel(self) -> HoppingKernel:
        if self.type == "kane_mele":
            return build_kane_mele(self.params)
        return HoppingKernel.from_entries(self.n_orbitals, self.entries)

    def snapshot(self) -> dict:
        if self.type == "kane_mele":
            p = self.params
            return {"type": self.type, "t": p.t, "lambda_v": p.lambda_v,
                    "lambda_so": p.lambda_so, "lambda_r": p.lambda_r}
        return {"type": self.type, "n_orbitals": self.n_orbitals, "entries": len(self.entries)}


@dataclass(frozen=True)
class NumericsConfig:
    M: int = 48
    R: int | None = None
    L_max: int = 41
    transverse_cutoff: int | None = None
    filled_bands: int | None = None
    mu: float | None = None
    scheme: str = "analytic"
    l: int = 7
    oracle_L: int = 15
    tol_abs: float = 1e-9


@dataclass(frozen=True)
class SwitchConfig:
    lambda1: SwitchFunction = field(default_factory=lambda: SwitchFunction.sharp(1))
    lambda2: SwitchFunction = field(default_factory=lambda: SwitchFunction.sharp(2))


@dataclass(frozen=True)
class SweepConfig:
    parameter: str | None = None
    values: tuple[float, ...] = ()
    parameter2: str | None = None
    values2: tuple[float, ...] = ()


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "spinkubo_out"
    formats: tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    numerics: NumericsConfig
    switches: SwitchConfig
    output: OutputConfig
    sweep: SweepConfig

    def with_model_value(self, name: str, value: float) -> "RunConfig":
        if self.model.type != "kane_mele":
            raise ConfigInvalid("sweeps require the kane_mele model")
        params = replace(self.model.params, **{name: float(value)})
        return replace(self, model=replace(self.model, params=params))


# ---------------------------------------------------------------- parsing


def _get(section, key, conv, default, what):
    if section is None or key not in section:
        return default
    raw = section[key].strip()
    if raw == "" or raw.lower() in ("auto", "none"):
        return None if default is None or conv is not str else default
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"[{what}] {key}: cannot parse {raw!r}") from exc


def _parse_int(raw: str) -> int:
    v = float(raw)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _parse_values(raw: str) -> tuple[float, ...]:
    """``a, b, c`` or ``start:stop:count`` (inclusive, evenly spaced)."""
    raw = raw.strip()
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), _parse_int(parts[2])
        if count < 1:
            raise ValueError("count must be positive")
        return tuple(float(x) for x in np.linspace(start, stop, count))
    return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())


def _parse_entries(raw: str) -> tuple:
    entries = []
    for line in raw.strip().splitlines():
        line = line.split("#")[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"hopping line needs 'd1 d2 row col value': {line!r}")
        d1, d2, row, col = (_parse_int(x) for x in parts[:4])
        entries.append(((d1, d2), row, col, complex(parts[4].replace("i", "j"))))
    return tuple(entries)


def _switch(section, name: str, axis: int) -> SwitchFunction:
    kind = _get(section, name, str, "sharp", "switches") or "sharp"
    kind = kind.lower()
    if kind == "sharp":
        at = _get(section, f"{name}_at", _parse_int, 0, "switches")
        return SwitchFunction.sharp(axis, 0 if at is None else at)
    if kind == "ramp":
        win = _get(section, f"{name}_window", str, "-5, 6", "switches") or "-5, 6"
        try:
            lo, hi = (_parse_int(x) for x in win.split(","))
        except ValueError as exc:
            raise ConfigInvalid(f"[switches] {name}_window must be 'lo, hi'") from exc
        if hi <= lo:
            raise ConfigInvalid(f"[switches] {name}_window must satisfy lo < hi")
        return SwitchFunction.linear_ramp(axis, lo, hi)
    raise ConfigInvalid(f"[switches] {name}: unknown profile {kind!r} (sharp or ramp)")


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigInvalid
        On syntax errors, unknown values or violated constraints.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid(f"malformed configuration: {exc}") from exc
    sec = lambda name: cp[name] if cp.has_section(name) else None

    m = sec("model")
    if m is None:
        raise ConfigInvalid("missing [model] section")
    mtype = (_get(m, "type", str, "kane_mele", "model") or "kane_mele").lower()
    if mtype not in MODEL_TYPES:
        raise ConfigInvalid(f"[model] type must be one of {MODEL_TYPES}")
    try:
        params = KaneMeleParams(
            t=_get(m, "t", float, 1.0, "model"),
            lambda_v=_get(m, "lambda_v", float, 0.0, "model"),
            lambda_so=_get(m, "lambda_so", float, 0.0, "model"),
            lambda_r=_get(m, "lambda_r", float, 0.0, "model"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"[model] {exc}") from exc
    n_orb = _get(m, "n_orbitals", _parse_int, 2, "model")
    entries = ()
    if mtype == "hoppings":
        if "hoppings" not in m:
            raise ConfigInvalid("[model] type = hoppings needs a 'hoppings' block")
        try:
            entries = _parse_entries(m["hoppings"])
        except ValueError as exc:
            raise ConfigInvalid(f"[model] hoppings: {exc}") from exc
        if n_orb is None or n_orb < 1:
            raise ConfigInvalid("[model] n_orbitals must be positive")
    model = ModelConfig(mtype, params, n_orb or 2, entries)

    n = sec("numerics")
    M = _get(n, "M", _parse_int, 48, "numerics")
    R = _get(n, "R", _parse_int, None, "numerics")
    L_max = _get(n, "L_max", _parse_int, 41, "numerics")
    tc = _get(n, "transverse_cutoff", _parse_int, None, "numerics")
    fb = _get(n, "filled_bands", _parse_int, None, "numerics")
    mu = _get(n, "mu", float, None, "numerics")
    scheme = (_get(n, "scheme", str, "analytic", "numerics") or "analytic").lower()
    l = _get(n, "l", _parse_int, 7, "numerics")
    oracle_L = _get(n, "oracle_L", _parse_int, 15, "numerics")
    tol = _get(n, "tol_abs", float, 1e-9, "numerics")
    if M is None or M < 3:
        raise ConfigInvalid("[numerics] M must be an integer >= 3")
    if R is not None and (R < 1 or 2 * R >= M):
        raise ConfigInvalid("[numerics] R must satisfy 1 <= R and 2R < M")
    if L_max is None or L_max < 1 or L_max % 2 == 0:
        raise ConfigInvalid("[numerics] L_max must be a positive odd integer")
    if tc is not None and tc < 1:
        raise ConfigInvalid("[numerics] transverse_cutoff must be positive")
    if fb is not None and fb < 1:
        raise ConfigInvalid("[numerics] filled_bands must be positive")
    if scheme not in ("analytic", "grid", "kernel"):
        raise ConfigInvalid("[numerics] scheme must be analytic, grid or kernel")
    if l is None or l < 1:
        raise ConfigInvalid("[numerics] l must be a positive integer")
    if oracle_L is None or oracle_L < 3 or oracle_L % 2 == 0:
        raise ConfigInvalid("[numerics] oracle_L must be an odd integer >= 3")
    if tol is None or tol <= 0:
        raise ConfigInvalid("[numerics] tol_abs must be positive")
    numerics = NumericsConfig(M, R, L_max, tc, fb, mu, scheme, l, oracle_L, tol)

    s = sec("switches")
    switches = SwitchConfig(_switch(s, "lambda1", 1), _switch(s, "lambda2", 2))

    o = sec("output")
    directory = _get(o, "directory", str, "spinkubo_out", "output") or "spinkubo_out"
    fmts = _get(o, "formats", str, "csv, json", "output") or "csv, json"
    formats = tuple(sorted({f.strip().lower() for f in fmts.split(",") if f.strip()}))
    if not set(formats) <= {"csv", "json"}:
        raise ConfigInvalid("[output] formats may list csv and json only")
    output = OutputConfig(directory, formats)

    w = sec("sweep")
    sweep = SweepConfig()
    if w is not None:
        p1 = _get(w, "parameter", str, None, "sweep")
        p2 = _get(w, "parameter2", str, None, "sweep")
        for p in (p1, p2):
            if p is not None and p not in SWEEP_PARAMETERS:
                raise ConfigInvalid(f"[sweep] parameter must be one of {SWEEP_PARAMETERS}")
        v1 = _get(w, "values", _parse_values, (), "sweep") or ()
        v2 = _get(w, "values2", _parse_values, (), "sweep") or ()
        if p1 is not None and not v1:
            raise ConfigInvalid("[sweep] values must not be empty")
        if p2 is not None and not v2:
            raise ConfigInvalid("[sweep] values2 must not be empty")
        sweep = SweepConfig(p1, v1, p2, v2)
    return RunConfig(model, numerics, switches, output, sweep)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)
