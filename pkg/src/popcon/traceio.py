"""Shared trajectory schema and stable on-disk formats.

Both engines (random simulator, mean-field integrator) emit the same
snapshot layout so traces can be compared row by row:

    t  alpha  delta  beta_1 .. beta_{8s+1}  gamma_1 .. gamma_{8s}  u  comms

All values are population fractions except ``comms`` (cumulative
communication count; identically 0 for mean-field traces). Files are
whitespace-separated text with ``#`` header lines; floats are written
with shortest round-trip precision, so parse(serialize(trace)) == trace
bit for bit and serialization is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "TrajectoryTrace",
    "TraceFormatError",
    "MalformedHeaderError",
    "RowArityError",
    "NonMonotoneTimeError",
    "write_trace",
    "read_trace",
    "write_columns",
    "write_summary",
    "write_manifest",
]

_MAGIC = "popcon-trace 1"


class TraceFormatError(ValueError):
    """Base class for trace file format violations."""


class MalformedHeaderError(TraceFormatError):
    pass


class RowArityError(TraceFormatError):
    pass


class NonMonotoneTimeError(TraceFormatError):
    pass


def column_names(s: int) -> list:
    m = 8 * s
    return (
        ["t", "alpha", "delta"]
        + [f"beta_{j}" for j in range(1, m + 2)]
        + [f"gamma_{j}" for j in range(1, m + 1)]
        + ["u", "comms"]
    )


@dataclass
class TrajectoryTrace:
    """Time-indexed snapshots of either system in the shared layout.

    ``samples`` has one row per snapshot and ``16s+5`` columns (all
    columns above except ``t``). ``dt`` is the integration step for
    mean-field traces and the sampling interval for random ones; ``n``
    is 0 when the trace does not correspond to a finite population.
    """

    system_tag: str  # "random" | "meanfield"
    s: int
    n: int
    rho: float
    seed: Optional[int]
    dt: float
    sample_times: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return 8 * self.s

    @property
    def num_columns(self) -> int:
        return 16 * self.s + 5

    @property
    def t(self) -> np.ndarray:
        return self.sample_times

    @property
    def alpha(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def delta(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def beta(self) -> np.ndarray:
        """Wrong-informed fractions per bin plus wrong-uninformed, (k, 8s+1)."""
        return self.samples[:, 2 : 3 + self.m]

    @property
    def gamma(self) -> np.ndarray:
        """Follower fractions per bin, (k, 8s)."""
        return self.samples[:, 3 + self.m : 3 + 2 * self.m]

    @property
    def u(self) -> np.ndarray:
        return self.samples[:, 3 + 2 * self.m]

    @property
    def comms(self) -> np.ndarray:
        return self.samples[:, 4 + 2 * self.m]

    @property
    def beta_sum(self) -> np.ndarray:
        """Total wrong-informed fraction (uninformed excluded)."""
        return self.beta[:, : self.m].sum(axis=1)

    @property
    def Gamma(self) -> np.ndarray:
        return self.gamma.sum(axis=1)

    @property
    def R(self) -> np.ndarray:
        return 1.0 + 0.5 / self.s - 0.5 * self.delta - self.u

    def __len__(self) -> int:
        return len(self.sample_times)

    def validate(self, mass_tol: float = 1e-12) -> None:
        if self.samples.ndim != 2 or self.samples.shape[1] != self.num_columns:
            raise TraceFormatError(
                f"expected {self.num_columns} sample columns, got {self.samples.shape}"
            )
        if len(self.sample_times) != len(self.samples):
            raise TraceFormatError("sample_times and samples length mismatch")
        if len(self) > 1 and not np.all(np.diff(self.sample_times) > 0):
            raise NonMonotoneTimeError("sample times are not strictly increasing")
        if len(self):
            mass = 1.0 / self.s + self.Gamma + self.u
            worst = float(np.max(np.abs(mass - 1.0)))
            if worst > mass_tol:
                raise TraceFormatError(
                    f"class fractions do not sum to 1 (worst deviation {worst:.3e})"
                )

    def index_at(self, t: float, tol: float = 1e-9) -> int:
        """Index of the snapshot at time t (within tol)."""
        i = int(np.searchsorted(self.sample_times, t - tol))
        if i >= len(self) or abs(self.sample_times[i] - t) > tol:
            raise KeyError(f"no snapshot at t={t}")
        return i

    def window(self, t_lo: float, t_hi: float, tol: float = 1e-9) -> slice:
        lo = int(np.searchsorted(self.sample_times, t_lo - tol))
        hi = int(np.searchsorted(self.sample_times, t_hi + tol))
        return slice(lo, hi)

    def concat(self, other: "TrajectoryTrace") -> "TrajectoryTrace":
        """Join a continuation trace (its first snapshot repeats our last)."""
        if other.s != self.s or other.system_tag != self.system_tag:
            raise ValueError("traces are not continuations of one another")
        drop = 1 if (len(self) and len(other) and abs(other.sample_times[0] - self.sample_times[-1]) < 1e-12) else 0
        return TrajectoryTrace(
            system_tag=self.system_tag,
            s=self.s,
            n=self.n,
            rho=self.rho,
            seed=self.seed,
            dt=self.dt,
            sample_times=np.concatenate([self.sample_times, other.sample_times[drop:]]),
            samples=np.vstack([self.samples, other.samples[drop:]]),
        )


def write_trace(trace: TrajectoryTrace, path) -> None:
    path = Path(path)
    names = column_names(trace.s)
    seed_txt = "-" if trace.seed is None else str(trace.seed)
    lines = [
        f"# {_MAGIC}",
        f"# system={trace.system_tag} s={trace.s} n={trace.n} rho={trace.rho!r} "
        f"seed={seed_txt} dt={trace.dt!r}",
        "# columns: " + " ".join(names),
    ]
    for t, row in zip(trace.sample_times, trace.samples):
        lines.append(" ".join([repr(float(t))] + [repr(float(v)) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def _parse_header_kv(line: str) -> dict:
    out = {}
    for item in line.split():
        if "=" not in item:
            raise MalformedHeaderError(f"bad header field {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def read_trace(path) -> TrajectoryTrace:
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 3 or lines[0].strip() != f"# {_MAGIC}":
        raise MalformedHeaderError(f"{path}: missing '{_MAGIC}' header")
    if not lines[1].startswith("# ") or not lines[2].startswith("# columns: "):
        raise MalformedHeaderError(f"{path}: malformed header lines")
    meta = _parse_header_kv(lines[1][2:])
    try:
        s = int(meta["s"])
        n = int(meta["n"])
        rho = float(meta["rho"])
        dt = float(meta["dt"])
        system = meta["system"]
        seed = None if meta["seed"] == "-" else int(meta["seed"])
    except (KeyError, ValueError) as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from exc
    names = lines[2][len("# columns: ") :].split()
    if names != column_names(s):
        raise MalformedHeaderError(f"{path}: column list does not match s={s}")

    arity = len(names)
    times, rows = [], []
    for lineno, line in enumerate(lines[3:], start=4):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != arity:
            raise RowArityError(
                f"{path}:{lineno}: expected {arity} values, got {len(parts)}"
            )
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise RowArityError(f"{path}:{lineno}: {exc}") from exc
        times.append(vals[0])
        rows.append(vals[1:])

    times_arr = np.asarray(times, dtype=float)
    if len(times_arr) > 1 and not np.all(np.diff(times_arr) > 0):
        raise NonMonotoneTimeError(f"{path}: sample times are not strictly increasing")
    samples = (
        np.asarray(rows, dtype=float) if rows else np.empty((0, arity - 1), dtype=float)
    )
    return TrajectoryTrace(
        system_tag=system,
        s=s,
        n=n,
        rho=rho,
        seed=seed,
        dt=dt,
        sample_times=times_arr,
        samples=samples,
    )


def write_columns(path, names, columns, meta: Optional[dict] = None) -> None:
    """Columnar plot data: '#' header naming columns, whitespace-separated rows."""
    path = Path(path)
    cols = [np.asarray(c, dtype=float) for c in columns]
    if any(len(c) != len(cols[0]) for c in cols):
        raise ValueError("columns differ in length")
    lines = []
    if meta:
        for k in sorted(meta):
            lines.append(f"# {k}: {meta[k]}")
    lines.append("# columns: " + " ".join(names))
    for i in range(len(cols[0])):
        lines.append(" ".join(repr(float(c[i])) for c in cols))
    path.write_text("\n".join(lines) + "\n")


def read_columns(path) -> tuple[list, np.ndarray]:
    """Read a columnar plot file; returns (names, data[rows, cols])."""
    path = Path(path)
    names = None
    rows = []
    for line in path.read_text().splitlines():
        if line.startswith("# columns: "):
            names = line[len("# columns: ") :].split()
        elif line.startswith("#") or not line.strip():
            continue
        else:
            rows.append([float(v) for v in line.split()])
    if names is None:
        raise MalformedHeaderError(f"{path}: missing '# columns:' header")
    data = np.asarray(rows, dtype=float) if rows else np.empty((0, len(names)))
    return names, data


def _jsonable(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float):
        # strict JSON has no Infinity/NaN; null marks a vacuous margin
        return obj if (obj == obj and abs(obj) != float("inf")) else None
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__}
    return obj


def write_summary(
    path,
    config: dict,
    results,
    bound_reports=(),
    deviation_reports=(),
) -> None:
    """JSON run summary: {config, results, bound_reports, deviation_reports}."""
    doc = {
        "config": _jsonable(config),
        "results": _jsonable(results),
        "bound_reports": _jsonable(list(bound_reports)),
        "deviation_reports": _jsonable(list(deviation_reports)),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_manifest(outdir, command: str, config: dict, seeds=()) -> None:
    """Record everything needed to regenerate a run byte for byte."""
    import numpy

    versions = {"popcon": _pkg_version(), "numpy": numpy.__version__}
    try:
        import numba

        versions["numba"] = numba.__version__
    except ImportError:
        versions["numba"] = None
    doc = {
        "command": command,
        "config": _jsonable(config),
        "seeds": _jsonable(list(seeds)),
        "versions": versions,
    }
    Path(outdir, "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _pkg_version() -> str:
    try:
        from importlib.metadata import version

        return version("popcon")
    except Exception:
        return "unknown"
