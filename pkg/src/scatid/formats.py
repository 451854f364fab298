"""Text and binary file formats used by the command-line tool."""

from __future__ import annotations

import csv
import re
import struct
from pathlib import Path

import numpy as np

from .channel import EchoEnsemble
from .gabor import WeightSequence
from .grid import Cover, Grid, ScatteringFunction

ECHO_MAGIC = b"SCID"
ECHO_VERSION = 1
_ECHO_HEADER = struct.Struct("<4sIIIII")


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_manifest(path, record: dict) -> None:
    with open(path, "w", newline="\n") as f:
        for key, value in record.items():
            f.write(f"{key}={value}\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            # '#' starts a comment at line start or after whitespace
            line = re.split(r"(?:^|\s)#", line, maxsplit=1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def grid_record(grid: Grid) -> dict:
    return {"J": grid.J, "T": repr(grid.T), "n_t": grid.n_t, "n_g": grid.n_g,
            "n_a": grid.n_a, "n_b": grid.n_b}


def grid_from_record(rec: dict) -> Grid:
    return Grid(J=int(rec["J"]), T=float(rec["T"]), n_t=int(rec["n_t"]), n_g=int(rec["n_g"]),
                n_a=int(rec["n_a"]), n_b=int(rec["n_b"]))


def read_mask(path) -> np.ndarray:
    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows or len({len(r) for r in rows}) != 1 or set("".join(rows)) - {"0", "1"}:
        raise ValueError(f"{path}: mask must be equal-length lines of 0/1 characters")
    return np.array([[ch == "1" for ch in r] for r in rows])


def write_mask(path, mask) -> None:
    mask = np.asarray(mask, dtype=bool)
    Path(path).write_text("".join("".join("1" if v else "0" for v in row) + "\n" for row in mask))


def write_cover_csv(path, cover: Cover) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["j", "a", "b", "occupied"])
        for j, (a, b) in enumerate(cover.cells):
            wr.writerow([j, a, b, int(j < cover.occupied)])


def read_cover_csv(path) -> Cover:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    cells = [(int(r["a"]), int(r["b"])) for r in rows]
    flags = [int(r["occupied"]) for r in rows]
    occupied = sum(flags)
    if flags != [1] * occupied + [0] * (len(flags) - occupied):
        raise ValueError(f"{path}: occupied cells must precede padding cells")
    return Cover(cells=tuple(cells), occupied=occupied)


def write_scattering_csv(path, sf: ScatteringFunction) -> None:
    """Rows ``a,b,s,q,value`` for every nonzero fine-grid value."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["a", "b", "s", "q", "value"])
        for j, (a, b) in enumerate(sf.cover.cells):
            for s, q in zip(*np.nonzero(sf.values[j])):
                wr.writerow([a, b, int(s), int(q), _fmt(sf.values[j, s, q])])


def read_scattering_csv(path, grid: Grid, cover: Cover) -> ScatteringFunction:
    index = {cell: j for j, cell in enumerate(cover.cells)}
    values = np.zeros((grid.J, grid.n_t, grid.n_g))
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["a", "b", "s", "q", "value"]:
            raise ValueError(f"{path}: expected header a,b,s,q,value")
        for row in reader:
            cell = (int(row["a"]), int(row["b"]))
            if cell not in index:
                raise ValueError(f"{path}: cell {cell} is not in the cover")
            s, q = int(row["s"]), int(row["q"])
            if not (0 <= s < grid.n_t and 0 <= q < grid.n_g):
                raise ValueError(f"{path}: sample ({s},{q}) outside the cell")
            values[index[cell], s, q] = float(row["value"])
    return ScatteringFunction(grid, cover, values)


def write_weights_csv(path, w: WeightSequence) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["k", "re", "im"])
        for k, c in enumerate(w.c):
            wr.writerow([k, _fmt(c.real), _fmt(c.imag)])


def read_weights_csv(path) -> WeightSequence:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if [int(r["k"]) for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: weights must be listed for k = 0..J-1 in order")
    return WeightSequence(np.array([complex(float(r["re"]), float(r["im"])) for r in rows]))


def write_echoes(path, echoes: EchoEnsemble) -> None:
    g = echoes.grid
    with open(path, "wb") as f:
        f.write(_ECHO_HEADER.pack(ECHO_MAGIC, ECHO_VERSION, g.J, g.n_t, g.n_g, echoes.L))
        f.write(np.ascontiguousarray(echoes.y, dtype="<c16").tobytes())


def read_echoes(path, grid: Grid) -> EchoEnsemble:
    data = Path(path).read_bytes()
    if len(data) < _ECHO_HEADER.size:
        raise ValueError(f"{path}: truncated echo file")
    magic, version, J, n_t, n_g, L = _ECHO_HEADER.unpack_from(data)
    if magic != ECHO_MAGIC or version != ECHO_VERSION:
        raise ValueError(f"{path}: not a version-{ECHO_VERSION} SCID echo file")
    if (J, n_t, n_g) != (grid.J, grid.n_t, grid.n_g):
        raise ValueError(f"{path}: echo grid (J={J}, n_t={n_t}, n_g={n_g}) does not match")
    body = np.frombuffer(data, dtype="<c16", offset=_ECHO_HEADER.size)
    if body.size != L * grid.n_total:
        raise ValueError(f"{path}: expected {L * grid.n_total} samples, found {body.size}")
    return EchoEnsemble(grid, body.reshape(L, grid.n_total).astype(complex))


def write_mc_report(record_path, points_path, report, extra: dict | None = None) -> None:
    """Key=value summary plus a ``j,s,q,bias,variance`` CSV block (bias is the real part)."""
    record = dict(extra or {})
    record.update({
        "J": report.J, "T": repr(report.T), "n_t": report.n_t, "n_g": report.n_g,
        "L": report.L, "trials": report.trials, "seed": report.seed,
        "bound": _fmt(report.bound),
        "bound_norm": "spectral",
        "bound_frobenius": _fmt(report.bound_frobenius),
        "cover_averaged_variance": _fmt(report.cover_averaged_variance),
        "slack_ratio": _fmt(report.slack_ratio),
        "bound_pass_trials": f"{report.bound_pass_count}/{report.trials}",
        "bias_pass_points": f"{int(report.bias_ok.sum())}/{report.bias_ok.size}",
        "max_abs_imag_mean": _fmt(float(np.abs(report.mean.imag).max())),
        "L_scaled": report.L_scaled,
        "scaling_trials": report.scaling_trials,
        "scaling_ratio": _fmt(report.scaling_ratio),
        "scaling_ok": report.scaling_ok,
    })
    write_manifest(record_path, record)
    with open(points_path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["j", "s", "q", "bias", "variance"])
        for (j, s, q), b in np.ndenumerate(report.bias.real):
            wr.writerow([j, s, q, _fmt(b), _fmt(report.variance[j, s, q])])
