"""File formats: event CSV + horizon sidecar, dense matrix CSV, params JSON, PGM heatmaps."""

from __future__ import annotations

import csv
import json
import warnings
from collections import defaultdict
from pathlib import Path

import numpy as np

from .hawkes import EventSequence, HawkesParams


class ValidationError(ValueError):
    """Malformed or inconsistent input file."""


def _fmt(x) -> str:
    return format(float(x), ".17g")


def sidecar_path(events_path) -> Path:
    return Path(events_path).with_suffix(".json")


def write_events(path, sequences):
    """Write ``seq_id,time,type`` rows plus ``<stem>.json`` with horizons and num_types."""
    path = Path(path)
    sequences = list(sequences)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seq_id", "time", "type"])
        for n, s in enumerate(sequences):
            for t, c in zip(s.times, s.types):
                w.writerow([n, _fmt(t), int(c)])
    num_types = sequences[0].num_types if sequences else 0
    meta = {"horizons": {str(n): s.horizon for n, s in enumerate(sequences)}, "num_types": num_types}
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return [path, sidecar_path(path)]


def read_events(path, sidecar=None) -> list[EventSequence]:
    """Parse an event CSV; horizons and num_types come from the JSON sidecar."""
    path = Path(path)
    sidecar = sidecar_path(path) if sidecar is None else Path(sidecar)
    try:
        meta = json.loads(sidecar.read_text())
        horizons = {str(k): float(v) for k, v in meta["horizons"].items()}
        num_types = int(meta["num_types"])
    except FileNotFoundError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"{sidecar}: bad sidecar ({exc})") from exc

    rows = defaultdict(lambda: ([], []))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["seq_id", "time", "type"]:
            raise ValidationError(f"{path}:1: expected header 'seq_id,time,type'")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            sid = rec[0].strip()
            try:
                t, c = float(rec[1]), int(rec[2])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            if sid not in horizons:
                raise ValidationError(f"{path}:{lineno}: seq_id {sid!r} has no horizon in {sidecar}")
            if not 0 <= c < num_types:
                raise ValidationError(f"{path}:{lineno}: type {c} outside [0, {num_types})")
            if not 0 <= t <= horizons[sid]:
                raise ValidationError(f"{path}:{lineno}: time {t} outside [0, {horizons[sid]}]")
            rows[sid][0].append(t)
            rows[sid][1].append(c)

    def key(s):
        return (0, int(s)) if s.lstrip("-").isdigit() else (1, s)

    sequences = []
    for sid in sorted(horizons, key=key):
        times, types = rows.get(sid, ([], []))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            seq = EventSequence.from_events(times, types, horizons[sid], num_types)
        for w in caught:
            warnings.warn(f"{path}: seq_id {sid}: {w.message}", stacklevel=2)
        if len(seq) and seq.times[-1] > seq.horizon:
            raise ValidationError(f"{path}: seq_id {sid}: tie-breaking pushed an event past the horizon")
        sequences.append(seq)
    return sequences


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in M:
            w.writerow([_fmt(x) for x in row])
    return path


def read_matrix(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            try:
                rows.append([float(x) for x in rec])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            if len(rows[-1]) != len(rows[0]):
                raise ValidationError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    if not rows:
        raise ValidationError(f"{path}: empty matrix")
    return np.array(rows)


def write_pgm(path, M):
    """8-bit binary PGM, linear scale with the max entry at 255."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    top = M.max()
    scaled = np.zeros(M.shape) if top <= 0 else np.clip(M, 0, None) / top * 255.0
    pixels = np.rint(scaled).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def params_to_dict(p: HawkesParams) -> dict:
    return {"mu": p.mu.tolist(), "A": p.A.tolist(), "beta": p.beta}


def params_from_dict(d: dict) -> HawkesParams:
    try:
        return HawkesParams(np.array(d["mu"], dtype=float), np.array(d["A"], dtype=float), float(d.get("beta", 1.0)))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad params record: {exc}") from exc


def read_params(path) -> HawkesParams:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    try:
        return params_from_dict(d)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
