"""Run configuration, history CSV, state-file and report serialization.

Config files are line-based ``key = value`` text with dotted section keys;
unknown keys are errors so typos cannot pass silently.  State files carry
magic ``QSEV1`` then little-endian u64 Ng, u64 N and Ng*N float64 values
column-major, for cross-implementation exchange.  All file writes are
atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError
from .scheme import RunHistory

__all__ = [
    "RunConfig",
    "parse_config",
    "parse_config_text",
    "serialize_config",
    "load_config",
    "save_config",
    "write_state",
    "read_state",
    "write_history_csv",
    "CSV_HEADER",
    "atomic_write_text",
]

_STATE_MAGIC = b"QSEV1"

CSV_HEADER = "step,energy,orth_error,grad_norm_l2,grad_norm_a,err_u,lambda_min_gram,green_solves"


@dataclass
class RunConfig:
    # problem
    lower: tuple[float, ...] = (-5.5, -5.5)
    upper: tuple[float, ...] = (5.5, 5.5)
    points: tuple[int, ...] = (79, 79)
    potential: str = "harmonic"  # zero | harmonic | soft_coulomb
    harmonic_coeff: float = 0.5
    coulomb_charge: float = 1.0
    coulomb_softening: float = 0.8
    c_lap: float = 0.5
    sigma: float = 0.0
    # solver
    method: str = "auto"  # auto | direct | cg
    inner_tol: float = 1e-12
    max_iter: int = 20000
    preconditioner: str = "jacobi"
    # scheme
    tau: float = 0.1
    eps: float = 1e-5
    max_steps: int = 100000
    init: str = "quasi_stiefel_scaled"
    seed: int = 42
    init_state_path: str = ""
    enforce_bounds: str = "warn"
    # outputs
    history_csv: str = "history.csv"
    report: str = "report.txt"
    emit_summary: bool = True
    err_u: bool = True
    reference_csv: str = "reference.csv"
    reference_state: str = "reference.state"
    # reference
    reference_kind: str = "oracle"  # oracle | none | file
    reference_tol: float = 1e-10
    reference_path: str = ""
    # sweep
    error_floor: float = 1e-11
    sweep_csv: str = "tau_sweep.csv"
    # top level
    n_eig: int = 8

    def validate(self):
        if len(self.lower) != len(self.upper) or len(self.lower) != len(self.points):
            raise ConfigError("problem.lower/upper/points lengths disagree")
        if self.potential not in ("zero", "harmonic", "soft_coulomb"):
            raise ConfigError(f"unknown potential {self.potential!r}")
        if self.method not in ("auto", "direct", "cg"):
            raise ConfigError(f"unknown solver method {self.method!r}")
        if self.init not in ("raw_random", "quasi_stiefel_scaled", "orthonormal", "from_state"):
            raise ConfigError(f"unknown init mode {self.init!r}")
        if self.init == "from_state" and not self.init_state_path:
            raise ConfigError("scheme.init = from_state requires scheme.init_state_path")
        if self.enforce_bounds not in ("warn", "reject"):
            raise ConfigError("scheme.enforce_bounds must be warn or reject")
        if self.reference_kind not in ("oracle", "none", "file"):
            raise ConfigError(f"unknown reference kind {self.reference_kind!r}")
        if self.reference_kind == "file" and not self.reference_path:
            raise ConfigError("reference.kind = file requires reference.path")
        if self.n_eig < 1:
            raise ConfigError("n_eig must be >= 1")
        if self.tau <= 0 or self.eps <= 0 or self.max_steps < 1:
            raise ConfigError("scheme.tau/eps must be positive, max_steps >= 1")
        return self


# dotted config key -> (dataclass field, type tag)
_KEYMAP = {
    "problem.lower": ("lower", "floats"),
    "problem.upper": ("upper", "floats"),
    "problem.points": ("points", "ints"),
    "problem.potential": ("potential", "str"),
    "problem.harmonic_coeff": ("harmonic_coeff", "float"),
    "problem.coulomb_charge": ("coulomb_charge", "float"),
    "problem.coulomb_softening": ("coulomb_softening", "float"),
    "problem.c_lap": ("c_lap", "float"),
    "problem.sigma": ("sigma", "float"),
    "solver.method": ("method", "str"),
    "solver.inner_tol": ("inner_tol", "float"),
    "solver.max_iter": ("max_iter", "int"),
    "solver.preconditioner": ("preconditioner", "str"),
    "scheme.tau": ("tau", "float"),
    "scheme.eps": ("eps", "float"),
    "scheme.max_steps": ("max_steps", "int"),
    "scheme.init": ("init", "str"),
    "scheme.seed": ("seed", "int"),
    "scheme.init_state_path": ("init_state_path", "str"),
    "scheme.enforce_bounds": ("enforce_bounds", "str"),
    "outputs.history_csv": ("history_csv", "str"),
    "outputs.report": ("report", "str"),
    "outputs.emit_summary": ("emit_summary", "bool"),
    "outputs.err_u": ("err_u", "bool"),
    "outputs.reference_csv": ("reference_csv", "str"),
    "outputs.reference_state": ("reference_state", "str"),
    "reference.kind": ("reference_kind", "str"),
    "reference.tol": ("reference_tol", "float"),
    "reference.path": ("reference_path", "str"),
    "sweep.error_floor": ("error_floor", "float"),
    "sweep.csv": ("sweep_csv", "str"),
    "n_eig": ("n_eig", "int"),
}

_FIELD_TO_KEY = {f: k for k, (f, _) in _KEYMAP.items()}


def _parse_value(raw: str, kind: str, key: str):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(p) for p in raw.split(","))
        if kind == "ints":
            return tuple(int(p) for p in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {kind}") from exc
    raise ConfigError(f"unknown value kind {kind}")


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _KEYMAP:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        attr, kind = _KEYMAP[key]
        setattr(cfg, attr, _parse_value(raw, kind, key))
    return cfg.validate()


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        key = _FIELD_TO_KEY[f.name]
        lines.append(f"{key} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def save_config(cfg: RunConfig, path: str):
    atomic_write_text(path, serialize_config(cfg))


def atomic_write_text(path: str, text: str):
    _atomic_write(path, text.encode("utf-8"))


def _atomic_write(path: str, payload: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qseig-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_state(path: str, U: np.ndarray):
    U = np.asarray(U, dtype="<f8")
    header = _STATE_MAGIC + struct.pack("<QQ", U.shape[0], U.shape[1])
    _atomic_write(path, header + U.ravel(order="F").tobytes())


def read_state(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read state file {path}: {exc}") from exc
    if blob[:5] != _STATE_MAGIC:
        raise ConfigError(f"{path}: bad state-file magic")
    ng, n = struct.unpack("<QQ", blob[5:21])
    data = np.frombuffer(blob[21:], dtype="<f8")
    if data.size != ng * n:
        raise ConfigError(f"{path}: truncated state file")
    return data.reshape((ng, n), order="F").copy()


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_history_csv(path: str, history: RunHistory, err_u: np.ndarray | None):
    """One row per recorded state; err_u is backfilled (nan when disabled)."""
    rows = [CSV_HEADER]
    for i, r in enumerate(history.records):
        e = err_u[i] if err_u is not None else float("nan")
        rows.append(",".join([
            str(r.step_index), _fmt(r.energy), _fmt(r.orth_error),
            _fmt(r.grad_norm_l2), _fmt(r.grad_norm_a), _fmt(e),
            _fmt(r.lambda_min_gram), str(r.green_solves),
        ]))
    atomic_write_text(path, "\n".join(rows) + "\n")
