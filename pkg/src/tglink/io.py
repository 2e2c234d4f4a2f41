"""Dataset loading and format conversion.

Supported formats:

* ``jodie-csv`` — header line, then ``user_id,item_id,timestamp,state_label,
  f1,...,f_de``. Bipartite by default: item ids are offset past the user id
  range so the two sides share one dense id space. Node features are absent
  in this format and become zero vectors.
* ``snap-edges`` — whitespace-separated ``SRC DST UNIXTS``, ``#`` comments
  ignored, no features (zero edge features of configurable width, default 1).
* ``synthetic-config`` — JSON file with the seeded generator parameters.

``jodie-csv`` doubles as the canonical event format emitted by conversion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .graph import TemporalGraph
from .synthetic import SyntheticConfig, generate

FORMATS = ("jodie-csv", "snap-edges", "synthetic-config")

CANONICAL_HEADER = "user_id,item_id,timestamp,state_label"


@dataclass
class RawEvents:
    """Parsed, chronologically sorted rows with original node labels."""

    src: np.ndarray          # int64 original ids
    dst: np.ndarray
    ts: np.ndarray           # float64
    labels: np.ndarray       # float64 state labels
    features: np.ndarray     # float32, shape (n, d_e)


def load_events(path: str | Path, format: str, d_e: int | None = None,
                bipartite: bool | None = None) -> TemporalGraph:
    """Load a dataset file into a TemporalGraph.

    Events are loaded in timestamp order, stable-sorted by file order on
    ties. Missing node features become zero vectors; snap-edges rows get
    zero edge features of width `d_e` (default 1).
    """
    path = Path(path)
    if format == "synthetic-config":
        return generate(_read_synthetic_config(path))
    if format == "jodie-csv":
        raw = parse_jodie_csv(path)
        bipartite = True if bipartite is None else bipartite
    elif format == "snap-edges":
        raw = parse_snap_edges(path, d_e=1 if d_e is None else d_e)
        bipartite = False if bipartite is None else bipartite
    else:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    return build_graph(raw, bipartite=bipartite)


def build_graph(raw: RawEvents, bipartite: bool) -> TemporalGraph:
    """Remap original ids to a dense space and ingest all events.

    Bipartite streams put sources first: every destination id is offset past
    the source id range, mirroring the user/item convention of interaction
    logs. Unipartite streams share one id space keyed by first appearance.
    """
    n = len(raw.src)
    if bipartite:
        src_map = _first_appearance_map(raw.src)
        dst_map = _first_appearance_map(raw.dst)
        offset = len(src_map)
        src_ids = np.array([src_map[s] for s in raw.src.tolist()], dtype=np.int64)
        dst_ids = np.array([offset + dst_map[d] for d in raw.dst.tolist()], dtype=np.int64)
    else:
        node_map: dict[int, int] = {}
        src_ids = np.empty(n, dtype=np.int64)
        dst_ids = np.empty(n, dtype=np.int64)
        for i in range(n):
            src_ids[i] = node_map.setdefault(int(raw.src[i]), len(node_map))
            dst_ids[i] = node_map.setdefault(int(raw.dst[i]), len(node_map))
    d_e = raw.features.shape[1]
    g = TemporalGraph(d_x=d_e, d_e=d_e, bipartite=bipartite)
    src_l, dst_l, ts_l, lab_l = src_ids.tolist(), dst_ids.tolist(), raw.ts.tolist(), raw.labels.tolist()
    for i in range(n):
        g.ingest(src_l[i], dst_l[i], ts_l[i], raw.features[i], lab_l[i])
    return g


def _first_appearance_map(ids: np.ndarray) -> dict[int, int]:
    mapping: dict[int, int] = {}
    for x in ids.tolist():
        if x not in mapping:
            mapping[x] = len(mapping)
    return mapping


# ----------------------------------------------------------------------
# parsers

def parse_jodie_csv(path: Path) -> RawEvents:
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        df = pd.read_csv(path, skiprows=1, header=None, dtype=np.float64)
        if df.shape[1] < 4 or df.isna().any().any():
            raise ValueError("ragged or non-numeric rows")
        src = df[0].to_numpy(dtype=np.int64)
        dst = df[1].to_numpy(dtype=np.int64)
        ts = df[2].to_numpy(dtype=np.float64)
        labels = df[3].to_numpy(dtype=np.float64)
        feats = df.iloc[:, 4:].to_numpy(dtype=np.float32)
    except ValueError:
        src, dst, ts, labels, feats = _slow_parse_jodie(path)
    if feats.shape[1] == 0:
        feats = np.zeros((len(src), 1), dtype=np.float32)
    return _sorted_raw(src, dst, ts, labels, feats)


def _slow_parse_jodie(path: Path):
    """Line-by-line fallback so parse failures carry a line number."""
    src, dst, ts, labels, rows = [], [], [], [], []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1:
                continue  # header
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                if len(parts) < 4:
                    raise ValueError("expected at least 4 columns")
                src.append(int(float(parts[0])))
                dst.append(int(float(parts[1])))
                ts.append(float(parts[2]))
                labels.append(float(parts[3]))
                feat = [float(x) for x in parts[4:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
            if width is None:
                width = len(feat)
            elif len(feat) != width:
                raise ValueError(
                    f"{path}:{lineno}: expected {width} feature columns, got {len(feat)}"
                )
            rows.append(feat)
    if not src:
        raise ValueError(f"{path}: no event rows")
    feats = np.asarray(rows, dtype=np.float32)
    if feats.ndim == 1:
        feats = feats.reshape(len(src), 0)
    return (np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
            np.asarray(ts, dtype=np.float64), np.asarray(labels, dtype=np.float64), feats)


def parse_snap_edges(path: Path, d_e: int = 1) -> RawEvents:
    if not path.exists():
        raise FileNotFoundError(path)
    src, dst, ts = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError("expected 3 whitespace-separated fields")
                src.append(int(parts[0]))
                dst.append(int(parts[1]))
                ts.append(float(parts[2]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
    if not src:
        raise ValueError(f"{path}: no event rows")
    n = len(src)
    return _sorted_raw(np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
                       np.asarray(ts, dtype=np.float64), np.zeros(n),
                       np.zeros((n, d_e), dtype=np.float32))


def _sorted_raw(src, dst, ts, labels, feats) -> RawEvents:
    order = np.argsort(ts, kind="stable")
    return RawEvents(src[order], dst[order], ts[order], labels[order], feats[order])


def _read_synthetic_config(path: Path) -> SyntheticConfig:
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path) as fh:
        payload = json.load(fh)
    known = {f for f in SyntheticConfig.__dataclass_fields__}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"{path}: unknown synthetic-config keys {sorted(unknown)}")
    return SyntheticConfig(**payload)


# ----------------------------------------------------------------------
# canonical conversion

def convert(input_path: str | Path, format: str, output_path: str | Path) -> int:
    """Normalize a dataset to the canonical sorted event format.

    The canonical format is the jodie-csv layout with original node ids.
    Conversion is lossless and idempotent; returns the number of events.
    """
    input_path = Path(input_path)
    if format == "jodie-csv":
        raw = parse_jodie_csv(input_path)
    elif format == "snap-edges":
        raw = parse_snap_edges(input_path)
    elif format == "synthetic-config":
        raw = _raw_from_graph(generate(_read_synthetic_config(input_path)))
    else:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    write_canonical(raw, output_path)
    return len(raw.src)


def _raw_from_graph(g: TemporalGraph) -> RawEvents:
    n = g.num_events
    src = np.empty(n, dtype=np.int64)
    dst = np.empty(n, dtype=np.int64)
    ts = np.empty(n)
    labels = np.empty(n)
    feats = np.empty((n, g.d_e), dtype=np.float32)
    for ev in g.events():
        src[ev.seq], dst[ev.seq], ts[ev.seq] = ev.source, ev.destination, ev.timestamp
        labels[ev.seq] = ev.label
        feats[ev.seq] = ev.features
    return RawEvents(src, dst, ts, labels, feats)


def write_canonical(raw: RawEvents, output_path: str | Path) -> None:
    d_e = raw.features.shape[1]
    header = CANONICAL_HEADER + "".join(f",f{i}" for i in range(d_e))
    with open(output_path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(raw.src)):
            feat = ",".join(repr(float(x)) for x in raw.features[i])
            row = f"{raw.src[i]},{raw.dst[i]},{_fmt(raw.ts[i])},{_fmt(raw.labels[i])}"
            fh.write(row + ("," + feat if feat else "") + "\n")


def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() and abs(x) < 2**53 else repr(float(x))
