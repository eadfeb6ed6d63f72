"""Persistence of paths, curves, density tables and reports.

Binary path archive layout (all little-endian):

    b"LVYP"  u16 version  u16 d  u32 n_nodes  u8 exact_jump_times
    u64 seed  u64 path_index  u16 len(model_id)  model_id (utf-8)
    f64[n_nodes] times  f64[n_nodes * d] values
    u32 n_jumps  f64[n_jumps] jump times  f64[n_jumps * d] jump sizes
"""
import csv
import hashlib
import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from levyflow.core.errors import ArchiveError, OutputError
from levyflow.models.arrays import DensityTable, LevyPath, ResolventEstimate, SolutionCurve, TimeGrid
from levyflow.models.schemas import VerificationReport

logger = logging.getLogger(__name__)

ARCHIVE_MAGIC = b"LVYP"
ARCHIVE_VERSION = 1
_HEADER = struct.Struct("<4sHHIBQQH")
_COUNT = struct.Struct("<I")
_FLOAT = np.dtype("<f8")

PathLike = Union[str, Path]


def ensure_dir(directory: PathLike) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {directory}: {exc}") from exc
    return directory


def _write_bytes(path: Path, payload: bytes) -> Path:
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


# Binary path archive
def encode_path(path: LevyPath) -> bytes:
    model_id = path.model_id.encode("utf-8")
    header = _HEADER.pack(
        ARCHIVE_MAGIC,
        ARCHIVE_VERSION,
        path.dim,
        len(path.grid.times),
        int(path.exact_jump_times),
        int(path.seed),
        int(path.path_index),
        len(model_id),
    )
    return b"".join([
        header,
        model_id,
        path.grid.times.astype(_FLOAT).tobytes(),
        path.values.astype(_FLOAT).tobytes(),
        _COUNT.pack(len(path.jump_times)),
        path.jump_times.astype(_FLOAT).tobytes(),
        path.jump_sizes.astype(_FLOAT).tobytes(),
    ])


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise ArchiveError("archive is truncated")
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(count * _FLOAT.itemsize), dtype=_FLOAT).astype(float)


def decode_path(payload: bytes) -> LevyPath:
    reader = _Reader(payload)
    magic, version, d, n_nodes, exact, seed, path_index, id_length = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != ARCHIVE_MAGIC:
        raise ArchiveError(f"bad magic {magic!r}, expected {ARCHIVE_MAGIC!r}")
    if version != ARCHIVE_VERSION:
        raise ArchiveError(f"unsupported archive version {version}")
    model_id = reader.take(id_length).decode("utf-8")
    times = reader.floats(n_nodes)
    values = reader.floats(n_nodes * d).reshape(n_nodes, d)
    (n_jumps,) = _COUNT.unpack(reader.take(_COUNT.size))
    jump_times = reader.floats(n_jumps)
    jump_sizes = reader.floats(n_jumps * d).reshape(n_jumps, d)
    if reader.offset != len(payload):
        raise ArchiveError(f"{len(payload) - reader.offset} trailing bytes after archive")
    try:
        return LevyPath(
            grid=TimeGrid(times),
            values=values,
            jump_times=jump_times,
            jump_sizes=jump_sizes,
            seed=seed,
            model_id=model_id,
            path_index=path_index,
            exact_jump_times=bool(exact),
        )
    except ValueError as exc:
        raise ArchiveError(f"archive holds an invalid path: {exc}") from exc


def write_path_archive(path: LevyPath, target: PathLike) -> Path:
    return _write_bytes(Path(target), encode_path(path))


def read_path_archive(source: PathLike) -> LevyPath:
    try:
        payload = Path(source).read_bytes()
    except OSError as exc:
        raise ArchiveError(f"cannot read archive {source}: {exc}") from exc
    return decode_path(payload)


# CSV exports
def _write_csv(target: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    target = Path(target)
    try:
        with target.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OutputError(f"cannot write {target}: {exc}") from exc
    return target


def _repr(value: float) -> str:
    return repr(float(value))


def write_path_csv(path: LevyPath, target: PathLike) -> Path:
    """Columns t, L_1..L_d at the grid nodes."""
    header = ["t"] + [f"L_{j + 1}" for j in range(path.dim)]
    rows = ([_repr(t)] + [_repr(v) for v in row] for t, row in zip(path.grid.times, path.values))
    return _write_csv(target, header, rows)


def write_curve_csv(curve: SolutionCurve, target: PathLike) -> Path:
    """Columns t, Y_1..Y_d, X_1..X_d at the solver nodes."""
    d = curve.y_values.shape[1]
    header = ["t"] + [f"Y_{j + 1}" for j in range(d)] + [f"X_{j + 1}" for j in range(d)]
    rows = (
        [_repr(t)] + [_repr(v) for v in y] + [_repr(v) for v in x]
        for t, y, x in zip(curve.grid.times, curve.y_values, curve.x_values)
    )
    return _write_csv(target, header, rows)


def write_density_csv(table: DensityTable, target: PathLike) -> Path:
    rows = (
        [_repr(x), _repr(p), _repr(dp)] for x, p, dp in zip(table.x_grid, table.density, table.derivative)
    )
    return _write_csv(target, ["x", "density", "derivative"], rows)


def write_resolvent_csv(estimates: Sequence[ResolventEstimate], target: PathLike) -> Path:
    """One row per (λ, probe point)."""
    rows = []
    for estimate in estimates:
        probes = np.asarray(estimate.x_probe).reshape(len(estimate.u_values), -1)
        for i, point in enumerate(probes):
            rows.append([
                _repr(estimate.lam),
                _repr(point[0]),
                _repr(estimate.u_values[i]),
                _repr(estimate.u_sigma[i]) if len(estimate.u_sigma) else "",
                _repr(estimate.du_values[i]),
                _repr(estimate.du_sigma[i]) if len(estimate.du_sigma) else "",
                estimate.n_paths,
                estimate.seed,
            ])
    header = ["lambda", "x", "u", "u_sigma", "du", "du_sigma", "n_paths", "seed"]
    return _write_csv(target, header, rows)


# Reports
def sanitize(value: Any) -> Any:
    """Replace non-finite floats by None and numpy scalars/arrays by plain values."""
    if isinstance(value, dict):
        return {str(key): sanitize(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(item) for item in value]
    if isinstance(value, np.ndarray):
        return sanitize(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def report_payload(report: VerificationReport) -> Dict[str, Any]:
    return sanitize(report.model_dump(mode="python", by_alias=True))


def dumps_json(payload: Any) -> str:
    return json.dumps(sanitize(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def report_fingerprint(report: VerificationReport) -> str:
    """Digest of the JSON report with the timestamp left out."""
    payload = report_payload(report)
    payload.pop("generated_at", None)
    return hashlib.blake2b(dumps_json(payload).encode("utf-8"), digest_size=16).hexdigest()


def write_report_json(report: VerificationReport, target: PathLike) -> Path:
    return _write_text(Path(target), dumps_json(report_payload(report)))


def _flat(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    return value


def write_report_csv(report: VerificationReport, target: PathLike) -> Path:
    """Flat table, one row per report row; reports without rows get one statistics row."""
    payload = report_payload(report)
    rows: List[Dict[str, Any]] = payload["rows"] or [dict(payload["statistics"])]
    columns = sorted({key for row in rows for key in row})
    header = ["experiment", "pass"] + columns
    lines = (
        [payload["experiment"], payload["pass"]] + [_flat(row.get(column)) for column in columns]
        for row in rows
    )
    return _write_csv(target, header, lines)


def write_report(report: VerificationReport, out_dir: PathLike, fmt: str = "both") -> List[Path]:
    """Write <experiment>.json and/or <experiment>.csv into out_dir."""
    directory = ensure_dir(out_dir)
    written = []
    if fmt in ("json", "both"):
        written.append(write_report_json(report, directory / f"{report.experiment}.json"))
    if fmt in ("csv", "both"):
        written.append(write_report_csv(report, directory / f"{report.experiment}.csv"))
    logger.info("wrote %s", ", ".join(str(path) for path in written))
    return written


def write_json_record(record: Dict[str, Any], target: PathLike) -> Path:
    return _write_text(Path(target), dumps_json(record))


def read_json(source: PathLike) -> Dict[str, Any]:
    return json.loads(Path(source).read_text(encoding="utf-8"))
