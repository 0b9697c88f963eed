"""Plain-text formats for control nets, parameter checkpoints and CSV tables.

Control nets are stored as key/value pairs that fit in one INI section::

    dim = 2
    degree_1 = 2
    knots_1 = 0.0 0.0 0.0 1.0 1.0 1.0
    degree_2 = 1
    knots_2 = 0.0 0.0 1.0 1.0
    points = 0.0 0.0; 0.0 1.0; ...
    weights = 1.0 1.0 ...
    coefficients = ...              (optional scalar field)

``points`` and ``weights`` list the tensor grid in row-major order (the
last parametric index runs fastest).  Floats are written with ``repr`` so
a write/read cycle is exact.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from typing import Iterable, Mapping, Sequence

import numpy as np

from .autodiff import MLPParams, unflatten
from .nurbs import ControlNet, KnotVector


def _fmt(x: float) -> str:
    return repr(float(x))


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(t) for t in text.split()]
    except ValueError as exc:
        raise ValueError(f"{key}: {exc}") from None


def net_to_items(net: ControlNet, coefficients: np.ndarray | None = None) -> dict[str, str]:
    items = {"dim": str(net.dim)}
    for a, kv in enumerate(net.knot_vectors, start=1):
        items[f"degree_{a}"] = str(kv.degree)
        items[f"knots_{a}"] = " ".join(_fmt(u) for u in kv.knots)
    pts = net.points.reshape(-1, net.phys_dim)
    items["points"] = "; ".join(" ".join(_fmt(c) for c in p) for p in pts)
    items["weights"] = " ".join(_fmt(w) for w in net.weights.ravel())
    if coefficients is not None:
        items["coefficients"] = " ".join(_fmt(c) for c in np.asarray(coefficients).ravel())
    return items


NET_KEYS = ("dim", "points", "weights", "coefficients")


def net_from_items(items: Mapping[str, str]) -> tuple[ControlNet, np.ndarray | None]:
    """Inverse of :func:`net_to_items`; returns the net and the optional coefficients."""
    if "dim" not in items:
        raise ValueError("dim: missing")
    dim = int(items["dim"])
    kvs = []
    for a in range(1, dim + 1):
        for key in (f"degree_{a}", f"knots_{a}"):
            if key not in items:
                raise ValueError(f"{key}: missing")
        kvs.append(KnotVector(int(items[f"degree_{a}"]), tuple(_floats(items[f"knots_{a}"], f"knots_{a}"))))
    shape = tuple(kv.num_basis for kv in kvs)
    rows = [r for r in items.get("points", "").split(";") if r.strip()]
    pts = np.array([_floats(r, "points") for r in rows])
    if pts.ndim != 2 or pts.shape[0] != math.prod(shape):
        raise ValueError(f"points: expected {math.prod(shape)} rows for grid {shape}")
    w = np.array(_floats(items["weights"], "weights")) if "weights" in items else np.ones(pts.shape[0])
    if w.size != pts.shape[0]:
        raise ValueError(f"weights: expected {pts.shape[0]} values, got {w.size}")
    net = ControlNet(tuple(kvs), pts.reshape(shape + (pts.shape[1],)), w.reshape(shape))
    coeffs = None
    if "coefficients" in items:
        c = np.array(_floats(items["coefficients"], "coefficients"))
        if c.size != pts.shape[0]:
            raise ValueError(f"coefficients: expected {pts.shape[0]} values, got {c.size}")
        coeffs = c.reshape(shape)
    return net, coeffs


def is_net_key(key: str) -> bool:
    if key in NET_KEYS:
        return True
    head, _, tail = key.rpartition("_")
    return head in ("degree", "knots") and tail.isdigit()


# --------------------------------------------------------------------------
# checkpoints


def checkpoint_text(params: MLPParams, seed: int) -> str:
    """Header lines followed by one parameter per line in flattening order.

    The order is: for each layer, the weight matrix row-major, then its bias.
    """
    theta = params.flatten()
    lines = [
        "# deepnurbs checkpoint",
        "layer_sizes = " + " ".join(str(s) for s in params.layer_sizes),
        f"activation = {params.activation}",
        f"seed = {seed}",
        f"num_params = {theta.size}",
    ]
    lines += [_fmt(t) for t in theta]
    return "\n".join(lines) + "\n"


def parse_checkpoint(text: str) -> tuple[MLPParams, int]:
    header: dict[str, str] = {}
    values: list[float] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            header[k] = v
        else:
            values.append(float(line))
    sizes = tuple(int(s) for s in header["layer_sizes"].split())
    if len(values) != int(header["num_params"]):
        raise ValueError(f"checkpoint holds {len(values)} values, header says {header['num_params']}")
    return unflatten(sizes, header["activation"], np.array(values)), int(header["seed"])


# --------------------------------------------------------------------------
# files


def atomic_write(path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """CSV with a fixed column count; floats via ``repr``, NaN as ``nan``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_csv_strict(path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV and reject rows whose field count differs from the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh, strict=True)
        header = next(reader)
        rows = []
        for k, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: line {k} has {len(row)} fields, expected {len(header)}")
            rows.append(row)
    return header, rows
