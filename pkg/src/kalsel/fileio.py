"""Plain-text serialization: system files, key=value configs, CSV, sidecars.

Formats are line-oriented and human-editable.  Floats are written with
``repr``, which Python guarantees to round-trip bit-exactly, so a system
written and re-read is numerically identical.

System file grammar (whitespace-separated, ``#`` starts a comment)::

    m <state dimension>
    A
    <m rows of m floats>
    Q
    <m rows of m floats>
    sensors <pool size>
    <one line per candidate: m row entries, then the noise variance>

Config file grammar: one ``key = value`` pair per line, ``#`` comments and
blank lines ignored; keys may not repeat.  List-valued entries are
comma-separated.  Sidecar metadata files reuse the config grammar and
record the reproducibility context of an emitted CSV (schema version,
config hash, seed, library versions); they contain no clocks, so a replay
produces a byte-identical sidecar.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .system import LtiSystem, SensorPool

CSV_SCHEMA_VERSION = 1


def _logical_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((lineno, line))
    return out


def format_system(system: LtiSystem, pool: SensorPool) -> str:
    """Serialize a system and its candidate pool; inverse of :func:`parse_system`."""
    lines = [f"m {system.m}", "A"]
    lines += [" ".join(repr(float(v)) for v in row) for row in system.A]
    lines.append("Q")
    lines += [" ".join(repr(float(v)) for v in row) for row in system.Q]
    lines.append(f"sensors {pool.n_c}")
    for row, var in zip(pool.rows, pool.variances):
        lines.append(
            " ".join(repr(float(v)) for v in row) + " " + repr(float(var))
        )
    return "\n".join(lines) + "\n"


def _parse_floats(line: str, lineno: int, expected: int) -> list[float]:
    parts = line.split()
    if len(parts) != expected:
        raise ConfigError(
            f"line {lineno}: expected {expected} numbers, found {len(parts)}"
        )
    try:
        return [float(v) for v in parts]
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from None


def parse_system(text: str) -> tuple[LtiSystem, SensorPool]:
    """Parse the system-file grammar back into a system and pool."""
    lines = _logical_lines(text)
    pos = 0

    def take(what: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            raise ConfigError(f"unexpected end of file while reading {what}")
        item = lines[pos]
        pos += 1
        return item

    lineno, head = take("the state dimension")
    parts = head.split()
    if len(parts) != 2 or parts[0] != "m":
        raise ConfigError(f"line {lineno}: expected 'm <integer>', found {head!r}")
    try:
        m = int(parts[1])
    except ValueError:
        raise ConfigError(f"line {lineno}: state dimension {parts[1]!r} is not an integer") from None
    if m < 1:
        raise ConfigError(f"line {lineno}: state dimension must be >= 1, got {m}")

    def matrix(tag: str) -> np.ndarray:
        lineno, head = take(f"the {tag} marker")
        if head != tag:
            raise ConfigError(f"line {lineno}: expected {tag!r}, found {head!r}")
        rows = []
        for _ in range(m):
            ln, line = take(f"a row of {tag}")
            rows.append(_parse_floats(line, ln, m))
        return np.asarray(rows)

    a = matrix("A")
    q = matrix("Q")
    lineno, head = take("the sensor count")
    parts = head.split()
    if len(parts) != 2 or parts[0] != "sensors":
        raise ConfigError(f"line {lineno}: expected 'sensors <integer>', found {head!r}")
    try:
        n_c = int(parts[1])
    except ValueError:
        raise ConfigError(f"line {lineno}: sensor count {parts[1]!r} is not an integer") from None
    if n_c < 1:
        raise ConfigError(f"line {lineno}: sensor count must be >= 1, got {n_c}")
    rows, variances = [], []
    for _ in range(n_c):
        ln, line = take("a sensor line")
        values = _parse_floats(line, ln, m + 1)
        rows.append(values[:m])
        variances.append(values[m])
    if pos != len(lines):
        lineno, extra = lines[pos]
        raise ConfigError(f"line {lineno}: unexpected trailing content {extra!r}")
    return LtiSystem(A=a, Q=q), SensorPool.from_arrays(
        np.asarray(rows), np.asarray(variances)
    )


def write_system(path, system: LtiSystem, pool: SensorPool) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_system(system, pool))


def read_system(path) -> tuple[LtiSystem, SensorPool]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system(fh.read())


def format_config(mapping: Mapping[str, str]) -> str:
    """Serialize key=value pairs in insertion order."""
    lines = []
    for key, value in mapping.items():
        if "=" in key or "\n" in key or not key.strip():
            raise ConfigError(f"config key {key!r} is not writable")
        if "\n" in str(value):
            raise ConfigError(f"config value for {key!r} spans lines")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict[str, str]:
    """Parse key=value lines into an ordered mapping of raw strings."""
    out: dict[str, str] = {}
    for lineno, line in _logical_lines(text):
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', found {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_distribution(p: Sequence[float]) -> str:
    """Sampling law as ``index,probability`` rows, 1-based, repr floats."""
    lines = ["index,probability"]
    for j, pj in enumerate(p, start=1):
        lines.append(f"{j},{float(pj)!r}")
    return "\n".join(lines) + "\n"


def parse_distribution(text: str) -> np.ndarray:
    """Inverse of :func:`format_distribution`; indices must run 1..n in order.

    Accepts any float formatting in the probability column (the optimizer
    writes 12 significant digits; :func:`format_distribution` writes exact
    ``repr``).  Simplex validity is the caller's concern — this only checks
    the tabular structure.
    """
    lines = _logical_lines(text)
    if not lines or lines[0][1] != "index,probability":
        raise ConfigError("distribution file must start with an 'index,probability' header")
    probs: list[float] = []
    for expected, (lineno, line) in enumerate(lines[1:], start=1):
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigError(f"line {lineno}: expected 'index,probability', got {line!r}")
        try:
            idx = int(parts[0])
            val = float(parts[1])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        if idx != expected:
            raise ConfigError(f"line {lineno}: index {idx} out of order (expected {expected})")
        probs.append(val)
    if not probs:
        raise ConfigError("distribution file lists no candidates")
    return np.asarray(probs)


def read_distribution(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_distribution(fh.read())


def format_csv_cell(value) -> str:
    """One CSV cell: 12-significant-digit floats, verbatim ints/strings.

    Commas inside string cells are replaced by semicolons so rows stay
    machine-splittable without quoting rules.
    """
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value).replace(",", ";")


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_csv(header, rows))


def config_hash(text: str) -> str:
    """Stable short identifier of a config's exact text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def sidecar_metadata(config_text: str, seed: int, extra: Mapping[str, str] | None = None) -> str:
    """Reproducibility sidecar for an emitted CSV (deterministic, no clocks)."""
    import cvxpy
    import scipy

    from . import __version__

    payload: dict[str, str] = {
        "csv_schema_version": str(CSV_SCHEMA_VERSION),
        "config_hash": config_hash(config_text),
        "seed": str(int(seed)),
        "kalsel_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "cvxpy_version": cvxpy.__version__,
    }
    if extra:
        payload.update({k: str(v) for k, v in extra.items()})
    return format_config(payload)


def write_sidecar(path, config_text: str, seed: int, extra: Mapping[str, str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(sidecar_metadata(config_text, seed, extra))
