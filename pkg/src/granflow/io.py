"""CSV readers and writers for measures, ensembles, states, trajectories and probe tables.

Floats are written with ``repr`` so that a write/read round trip is exact.
Sidecar metadata lines start with ``#`` and precede the header.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .dynamics import TrajectoryRecord
from .measures import GridMeasure, ParticleEnsemble
from .stationary import StationaryState
from .transport import ProbeRow, TransportMap


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _write(path, header: list[str], rows, sidecar: list[str] = ()) -> None:
    buf = io.StringIO()
    for line in sidecar:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([x if isinstance(x, str) else _fmt(x) for x in r])
    Path(path).write_text(buf.getvalue())


def _read(path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    meta: dict[str, str] = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError(f"{path}: missing header")
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def _expect(header, want, path):
    if header != want:
        raise ValueError(f"{path}: expected header {','.join(want)}, got {','.join(header)}")


def write_grid(mu: GridMeasure, path, sidecar: list[str] = ()) -> None:
    side = [f"lo={mu.lo!r} hi={mu.hi!r} m={mu.m}", *sidecar]
    _write(path, ["x", "density"], zip(mu.centers, mu.density), side)


def read_grid(path) -> GridMeasure:
    meta, header, rows = _read(path)
    _expect(header, ["x", "density"], path)
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    m = arr.shape[0]
    if "lo" in meta:
        lo, hi = float(meta["lo"]), float(meta["hi"])
    else:
        dx = arr[1, 0] - arr[0, 0]
        lo, hi = arr[0, 0] - dx / 2, arr[-1, 0] + dx / 2
    return GridMeasure(lo, hi, m, arr[:, 1])


def write_particles(p: ParticleEnsemble, path) -> None:
    _write(path, ["position"], ((x,) for x in p.positions), [f"seed={int(p.seed)} time={float(p.time)!r}"])


def read_particles(path) -> ParticleEnsemble:
    meta, header, rows = _read(path)
    _expect(header, ["position"], path)
    return ParticleEnsemble(
        np.array([r[0] for r in rows], dtype=float),
        seed=int(meta.get("seed", 0)),
        time=float(meta.get("time", 0.0)),
    )


def write_stationary(s: StationaryState, path) -> None:
    side = [f"lambda={s.lambda_mult!r} residual={s.residual_inf!r} iters={s.iterations}"]
    if s.pinned_mean is not None:
        side.append(f"pinned_mean={s.pinned_mean!r}")
    write_grid(s.mu, path, side)


def read_stationary(path) -> StationaryState:
    meta, _, _ = _read(path)
    pin = meta.get("pinned_mean")
    return StationaryState(
        read_grid(path),
        float(meta["lambda"]),
        float(meta["residual"]),
        int(meta["iters"]),
        None if pin is None else float(pin),
    )


def write_trajectory(rec: TrajectoryRecord, path) -> None:
    header = ["t", "w2", "free_energy", "mean", "second_moment"]
    cols = [rec.times, rec.w2_to_ref, rec.free_energy, rec.mean, rec.second_moment]
    if rec.w2_pair_sq is not None:
        header += ["w2_pair_sq", "j"]
        cols += [rec.w2_pair_sq, rec.j]
    _write(path, header, zip(*cols))


def read_trajectory(path) -> TrajectoryRecord:
    _, header, rows = _read(path)
    base = ["t", "w2", "free_energy", "mean", "second_moment"]
    if header not in (base, base + ["w2_pair_sq", "j"]):
        raise ValueError(f"{path}: unexpected trajectory header {header}")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    rec = TrajectoryRecord(*(list(arr[:, k]) for k in range(5)))
    if len(header) == 7:
        rec.w2_pair_sq = list(arr[:, 5])
        rec.j = list(arr[:, 6])
    return rec


def write_probes(rows: list[ProbeRow], path) -> None:
    _write(path, ["probe_id", "kind", "w2_sq", "j", "ratio"], rows)


def read_probes(path) -> list[ProbeRow]:
    _, header, rows = _read(path)
    _expect(header, ["probe_id", "kind", "w2_sq", "j", "ratio"], path)
    return [ProbeRow(int(r[0]), r[1], float(r[2]), float(r[3]), float(r[4])) for r in rows]


def write_map(T: TransportMap, xs, path) -> None:
    xs = np.asarray(xs, dtype=float)
    _write(path, ["x", "T(x)", "Tprime(x)"], zip(xs, T.t_of(xs), T.dt_of(xs)))


def write_table(path, header: list[str], rows) -> None:
    """Generic CSV table (strings pass through, numbers are written exactly)."""
    _write(path, header, rows)
