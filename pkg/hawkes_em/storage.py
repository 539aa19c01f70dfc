"""File storage for event logs, fitted models and result tables."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from marshmallow import Schema, fields, validate

from hawkes_em import __version__
from hawkes_em.events import EventSequence
from hawkes_em.kernels import KernelSpec
from hawkes_em.likelihood import ModelParams
from hawkes_em.utils import ParseError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

MODEL_KINDS = ("mle", "truth", "posterior")


class SidecarSchema(Schema):
    """Schema for the JSON file stored next to an event CSV."""
    T = fields.Float(required=True)
    D = fields.Int(required=True, validate=validate.Range(min=1))
    start = fields.Float(load_default=None, allow_none=True)
    version = fields.Str(load_default="")


class ModelFileSchema(Schema):
    """Schema for model, truth and posterior JSON files."""
    kind = fields.Str(required=True, validate=validate.OneOf(MODEL_KINDS))
    version = fields.Str(load_default="")
    kernel = fields.Dict(required=True)
    mu = fields.List(fields.Float())
    W = fields.Raw()
    adjacency = fields.Raw()
    penalty = fields.Dict()
    report = fields.Dict()
    state = fields.Dict()
    alpha = fields.Dict()
    prior = fields.Dict()
    config = fields.Dict()
    elbo_trace = fields.List(fields.Float())


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def save_events(seq: EventSequence, path: PathLike) -> Path:
    """Write `time,dim` rows and a sidecar with {T, D, start, version}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"time": seq.times, "dim": seq.dims})
    frame.to_csv(path, index=False, float_format="%.17g")
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump({"T": seq.horizon, "D": seq.D, "start": seq.start, "version": __version__}, f, indent=2)
    logger.info(f"Saved {seq.n_events} events to {path}")
    return path


def load_events(path: PathLike, horizon: Optional[float] = None, D: Optional[int] = None,
                default_start: float = 0.0) -> EventSequence:
    """
    Read an event CSV with header `time,dim`.

    The horizon and dimension come from the arguments, then the sidecar, and
    otherwise are inferred (last time plus one mean gap, max dim + 1).
    The window start is the sidecar's `start`, or `default_start` when the
    sidecar is missing or does not record one.

    Raises:
        ParseError: unreadable header or a malformed row, with its line number.
        ValidationError: events out of order or outside the window.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"event file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, skip_blank_lines=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"cannot read {path}: {e}", 1)
    if list(frame.columns[:2]) != ["time", "dim"]:
        raise ParseError(f"expected header 'time,dim', got '{','.join(frame.columns)}'", 1)

    times = pd.to_numeric(frame["time"], errors="coerce")
    dims = pd.to_numeric(frame["dim"], errors="coerce")
    bad = times.isna() | dims.isna() | (dims != np.floor(dims)) | ~np.isfinite(times)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        # header is line 1
        raise ParseError(f"malformed row {frame.iloc[row].tolist()!r}", row + 2)

    start = default_start
    sidecar = sidecar_path(path)
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as f:
            meta = json.load(f)
        errors = SidecarSchema().validate(meta)
        if errors:
            raise ParseError(f"invalid sidecar {sidecar}: {errors}")
        meta = SidecarSchema().load(meta)
        horizon = meta["T"] if horizon is None else horizon
        D = meta["D"] if D is None else D
        if meta["start"] is not None:
            start = meta["start"]

    # exact decimal round trip
    times = frame["time"].astype(float).to_numpy()
    dims = dims.to_numpy(dtype=np.int64)
    if horizon is None:
        horizon = times[-1] + (times[-1] - start) / len(times) if len(times) else start + 1.0
        logger.info(f"No horizon given for {path}, using {horizon:.6g}")
    seq = EventSequence.from_events(times, dims, horizon, D, start)
    logger.info(f"Loaded {seq.n_events} events over {seq.D} dimensions from {path}")
    return seq


def _write_json(data: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
    return path


def save_model(path: PathLike, kind: str, kernel: KernelSpec, **payload: Any) -> Path:
    """Write a model JSON; `payload` holds the kind-specific entries (already JSON-ready)."""
    data = {"kind": kind, "version": __version__, "kernel": kernel.to_dict(), **payload}
    errors = ModelFileSchema().validate(data)
    if errors:
        raise ValidationError(f"refusing to write invalid model file: {errors}", "file-schema")
    logger.info(f"Saved {kind} model to {path}")
    return _write_json(data, path)


def load_model(path: PathLike) -> Dict[str, Any]:
    """
    Read and validate a model JSON.

    Returns the raw dict with `kernel` replaced by a KernelSpec and, for
    point estimates, `params` holding ModelParams.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"model file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON in {path}: {e.msg}", e.lineno)
    errors = ModelFileSchema().validate(data)
    if errors:
        raise ValidationError(f"invalid model file {path}: {errors}", "file-schema")
    data["kernel"] = KernelSpec.from_dict(data["kernel"])
    if data["kind"] in ("mle", "truth"):
        data["params"] = ModelParams.from_dict(data)
    return data


def write_results_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a table behind a `# hawkes_em <version>` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# hawkes_em {__version__}\n")
        frame.to_csv(f, index=False)
    return path


def read_results_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
