"""Run configuration, initial data and snapshot persistence.

Config files are INI-style with sections ``[grid]``, ``[exponents]``,
``[scenario]``, ``[run]``, ``[tolerances]`` and ``[picard]``.  Every key
has a default, so an empty file is a valid configuration.
"""
from __future__ import annotations

import configparser
import hashlib
import math
import os
import re
import tempfile
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .errors import (
    CorruptPayload, HypothesisViolation, IoFailure, ParseError, UnknownScenario, VersionMismatch,
)
from .fields import Background, FieldState, e1_from_density, potential_A
from .kinetic import SimState
from .phase_space import DistField, ExponentSet, PhaseGrid, moment_density

SCENARIOS = ("maxwellian", "beam", "vacuum-wave", "tanh")


@dataclass(frozen=True)
class GridConfig:
    nx: int = 64
    x_len: float = 16.0
    nv: int = 64
    v_max: float = 8.0


@dataclass(frozen=True)
class ExponentConfig:
    a: float = 9.0
    eps: float = 0.5
    delta: float = 12.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "maxwellian"
    amplitude: float = 0.1
    k: int = 1
    theta: float = 1.0
    u2: float = 1.0
    e2_amp: float = 0.0
    b_amp: float = 0.0
    mass: float = 0.0
    static_background: bool = False
    tanh_radius: float = 2.0
    tanh_width: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    T: float = 1.0
    cadence: int = 1
    friction: bool = False
    cutoff_R: float = 0.0
    threads: int = 1


@dataclass(frozen=True)
class ToleranceConfig:
    neutral_tol: float = 1e-12
    gauss_tol: float = 1e-10
    cfl_guard: float = 1.0


@dataclass(frozen=True)
class PicardConfig:
    T: float = 0.1
    n_max: int = 12
    tol: float = 1e-8


@dataclass(frozen=True)
class Config:
    grid: GridConfig = GridConfig()
    exponents: ExponentConfig = ExponentConfig()
    scenario: ScenarioConfig = ScenarioConfig()
    run: RunConfig = RunConfig()
    tolerances: ToleranceConfig = ToleranceConfig()
    picard: PicardConfig = PicardConfig()

    @property
    def phase_grid(self) -> PhaseGrid:
        g = self.grid
        return PhaseGrid(g.nx, g.x_len, g.nv, g.v_max)

    @property
    def exponent_set(self) -> ExponentSet:
        e = self.exponents
        return ExponentSet(e.a, e.eps, e.delta)

    @property
    def cutoff(self) -> Optional[float]:
        return self.run.cutoff_R if self.run.cutoff_R > 0 else None

    def to_text(self) -> str:
        out = []
        for f in fields(self):
            out.append(f"[{f.name}]")
            for k, v in asdict(getattr(self, f.name)).items():
                out.append(f"{k} = {_fmt(v)}")
            out.append("")
        return "\n".join(out)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_SECTION_TYPES = {
    "grid": GridConfig, "exponents": ExponentConfig, "scenario": ScenarioConfig,
    "run": RunConfig, "tolerances": ToleranceConfig, "picard": PicardConfig,
}


def _line_of(text: str, section: str, key: Optional[str]) -> Optional[int]:
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            if k == key:
                return no
    return None


def _convert(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {raw!r}")
        return v
    return raw


def parse_config(text: str, overrides: Iterable[str] = ()) -> Config:
    """Parse and validate a config.

    ``overrides`` are ``section.key=value`` strings applied after the file.
    Raises :class:`ParseError` (with line and field) for malformed input and
    :class:`HypothesisViolation` when the exponents break the standing
    assumptions.
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError(f"line {exc.lineno}: key outside any section", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError(f"line {lineno}: malformed entry", line=lineno) from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(f"line {exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}", line=exc.lineno) from exc

    over: Dict[Tuple[str, str], str] = {}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ParseError(f"override {item!r} is not section.key=value", field=item)
        lhs, val = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        over[(sec, key.strip())] = val

    for sec in cp.sections():
        if sec not in _SECTION_TYPES:
            line = _line_of(text, sec, None)
            raise ParseError(f"line {line}: unknown section [{sec}]", line=line, field=sec)
    for sec, key in over:
        if sec not in _SECTION_TYPES:
            raise ParseError(f"unknown section in override {sec}.{key}", field=f"{sec}.{key}")

    parts = {}
    for sec, cls in _SECTION_TYPES.items():
        types = {f.name: f.type for f in fields(cls)}
        types = {k: {"int": int, "float": float, "bool": bool, "str": str}[t] if isinstance(t, str) else t
                 for k, t in types.items()}
        values = {}
        items = list(cp.items(sec)) if cp.has_section(sec) else []
        items += [(k, v) for (s, k), v in over.items() if s == sec]
        for key, raw in items:
            if key not in types:
                line = _line_of(text, sec, key)
                raise ParseError(f"line {line}: unknown field {sec}.{key}", line=line, field=f"{sec}.{key}")
            try:
                values[key] = _convert(types[key], raw)
            except ValueError as exc:
                line = None if (sec, key) in over else _line_of(text, sec, key)
                raise ParseError(f"line {line}: field {sec}.{key}: {exc}", line=line, field=f"{sec}.{key}") from exc
        try:
            parts[sec] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"section [{sec}]: {exc}", field=sec) from exc

    cfg = Config(**parts)
    _validate(cfg)
    return cfg


def _validate(cfg: Config) -> None:
    bad = cfg.exponent_set.violations()
    if bad:
        raise HypothesisViolation(bad[0])
    g = cfg.grid
    try:
        cfg.phase_grid
    except ValueError as exc:
        raise ParseError(f"[grid]: {exc}", field="grid") from exc
    checks = [
        (cfg.run.T > 0, "run.T", "must be positive"),
        (cfg.run.cadence >= 1, "run.cadence", "must be >= 1"),
        (cfg.run.threads >= 1, "run.threads", "must be >= 1"),
        (cfg.run.cutoff_R == 0 or cfg.run.cutoff_R >= 1, "run.cutoff_R", "must be 0 (off) or >= 1"),
        (cfg.scenario.theta > 0, "scenario.theta", "must be positive"),
        (cfg.scenario.mass >= 0, "scenario.mass", "must be >= 0 (0 keeps the natural mass)"),
        (abs(cfg.scenario.amplitude) < 1, "scenario.amplitude", "must satisfy |A| < 1 for f >= 0"),
        (cfg.scenario.tanh_width > 0, "scenario.tanh_width", "must be positive"),
        (2 * abs(cfg.scenario.k) < g.nx, "scenario.k", "mode must be resolved by the x-grid"),
        (cfg.tolerances.cfl_guard > 0, "tolerances.cfl_guard", "must be positive"),
        (cfg.picard.T > 0, "picard.T", "must be positive"),
        (cfg.picard.n_max >= 2, "picard.n_max", "must be >= 2"),
        (cfg.picard.tol > 0, "picard.tol", "must be positive"),
    ]
    for ok, name, msg in checks:
        if not ok:
            raise ParseError(f"field {name} {msg}", field=name)


def load_config(path, overrides: Iterable[str] = ()) -> Config:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)


# --------------------------------------------------------------------------
# initial data


def _normalized_profile(grid: PhaseGrid, prof: np.ndarray) -> np.ndarray:
    """Scale a velocity profile to unit discrete mass ``sum prof dv^2 = 1``."""
    return prof / (np.sum(prof) * grid.dv**2)


def make_initial(cfg: Config) -> SimState:
    """Build ``f0``, the neutralising background and consistent fields.

    ``vacuum-wave`` with both field amplitudes left at zero falls back to a
    unit ``E2`` sine so that the scenario is never trivial.
    """
    sc = cfg.scenario
    grid = cfg.phase_grid
    v1, v2 = grid.vmesh()
    x = grid.x
    kx = 2.0 * np.pi * sc.k * x / grid.x_len
    n = 1.0 + sc.amplitude * np.cos(kx)

    if sc.name == "maxwellian":
        prof = np.exp(-(v1 * v1 + v2 * v2) / (2.0 * sc.theta)) * np.ones((grid.nv, grid.nv))
    elif sc.name == "beam":
        prof = np.exp(-(v1 * v1 + (v2 - sc.u2) ** 2) / (2.0 * sc.theta))
    elif sc.name == "tanh":
        r = np.hypot(v1, v2)
        prof = 0.5 * (1.0 - np.tanh((r - sc.tanh_radius) / sc.tanh_width))
    elif sc.name == "vacuum-wave":
        prof = None
    else:
        raise UnknownScenario(f"unknown scenario {sc.name!r}; expected one of {', '.join(SCENARIOS)}")

    if prof is None:
        values = np.zeros(grid.shape)
    else:
        values = n[:, None, None] * _normalized_profile(grid, prof)[None]
        if sc.mass > 0:
            values *= sc.mass / (np.sum(values) * grid.cell_volume)
    f = DistField(grid, values)

    density = moment_density(f, 1.0)
    if sc.static_background:
        phi = np.full(grid.nx, np.sum(density) / grid.nx)
    else:
        phi = density.copy()
    E1 = e1_from_density(density - phi, grid.dx, cfg.tolerances.neutral_tol)

    E2 = sc.e2_amp * np.sin(kx)
    B = sc.b_amp * np.cos(kx)
    if prof is None and sc.e2_amp == 0 and sc.b_amp == 0:
        E2 = np.sin(kx)
    # enforce the zero-mean contract exactly and check it
    B = B - np.mean(B)
    potential_A(B, grid.dx)
    return SimState(0.0, f, FieldState(E1, E2, B), Background(phi), 0.0)


# --------------------------------------------------------------------------
# snapshots

MAGIC = b"VMFP1"
_VERSION = 1


def _hexlist(a: np.ndarray) -> str:
    return ",".join(float(v).hex() for v in np.asarray(a, dtype=float))


def save_snapshot(s: SimState, path, exps: ExponentSet = ExponentSet(), scenario_hash: str = "") -> None:
    """Atomically write ``s``: magic line, ``key = value`` header, blank line, ``<f8`` payload."""
    g = s.f.grid
    header = [
        ("version", str(_VERSION)),
        ("nx", str(g.nx)),
        ("x_len", float(g.x_len).hex()),
        ("nv", str(g.nv)),
        ("v_max", float(g.v_max).hex()),
        ("a", float(exps.a).hex()),
        ("eps", float(exps.eps).hex()),
        ("delta", float(exps.delta).hex()),
        ("t", float(s.t).hex()),
        ("leak", float(s.leak).hex()),
        ("scenario_hash", scenario_hash or "-"),
        ("order", "f[x,v1,v2],E1,E2,B"),
        ("phi", _hexlist(s.bg.phi)),
    ]
    head = MAGIC + b"\n" + "".join(f"{k} = {v}\n" for k, v in header).encode() + b"\n"
    payload = np.concatenate([
        s.f.values.ravel(order="C"), s.fields.E1, s.fields.E2, s.fields.B,
    ]).astype("<f8").tobytes()
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".snap-", dir=directory)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(head)
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot {path}: {exc}") from exc


def load_snapshot(path):
    """Return ``(state, header_dict)``; bit-exact inverse of :func:`save_snapshot`."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read snapshot {path}: {exc}") from exc
    first, sep, rest = blob.partition(b"\n")
    if not sep or not first.startswith(b"VMFP"):
        raise CorruptPayload(f"{path}: missing snapshot magic")
    if first != MAGIC:
        raise VersionMismatch(f"{path}: format {first.decode(errors='replace')!r}, expected {MAGIC.decode()}")
    head, sep, payload = rest.partition(b"\n\n")
    if not sep:
        raise CorruptPayload(f"{path}: header not terminated")
    hdr = {}
    for line in head.decode(errors="replace").splitlines():
        k, eq, v = line.partition("=")
        if not eq:
            raise CorruptPayload(f"{path}: malformed header line {line!r}")
        hdr[k.strip()] = v.strip()
    try:
        if int(hdr["version"]) != _VERSION:
            raise VersionMismatch(f"{path}: header version {hdr['version']}, expected {_VERSION}")
        grid = PhaseGrid(int(hdr["nx"]), float.fromhex(hdr["x_len"]), int(hdr["nv"]), float.fromhex(hdr["v_max"]))
        t = float.fromhex(hdr["t"])
        leak = float.fromhex(hdr["leak"])
        phi = np.array([float.fromhex(v) for v in hdr["phi"].split(",")]) if hdr["phi"] else np.zeros(0)
    except (KeyError, ValueError) as exc:
        raise CorruptPayload(f"{path}: bad header ({exc})") from exc
    n_f = grid.nx * grid.nv * grid.nv
    expected = 8 * (n_f + 3 * grid.nx)
    if len(payload) != expected or phi.shape != (grid.nx,):
        raise CorruptPayload(f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f8").astype(float)
    f = DistField(grid, data[:n_f].reshape(grid.shape))
    E1, E2, B = (data[n_f + i * grid.nx: n_f + (i + 1) * grid.nx].copy() for i in range(3))
    return SimState(t, f, FieldState(E1, E2, B), Background(phi), leak), hdr
