"""Reading response matrices and reading/writing posterior draws.

Sample directories hold one text file per parameter block (one row per
stored draw, ``%.17g`` so values round-trip exactly; 3-d blocks are
flattened row-major per draw) and a ``manifest.json`` describing shapes,
model, configuration and acceptance ratios.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .model import Family, MissingMode, ModelSpec, ResponseMatrix
from .sampler import PosteriorSamples

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
_ARRAY_BLOCKS = ("theta", "beta", "gamma", "sigma_sq", "z", "w", "log_posterior",
                 "alpha", "sigma_eps_sq", "slab", "imputed")
_ACCEPT_BLOCKS = ("accept_theta", "accept_beta", "accept_z", "accept_w", "accept_alpha")


class DataFormatError(ValueError):
    """Malformed response file."""


class IntegrityError(ValueError):
    """A sample directory does not match its manifest."""


def _parse_missing_code(code):
    try:
        return str(code), float(code)
    except (TypeError, ValueError):
        return str(code), None


def read_response_csv(path, missing_code: Union[str, float] = "NA",
                      family: Union[Family, str] = Family.BINARY,
                      header: bool = False) -> ResponseMatrix:
    """Parse a rectangular numeric CSV into a :class:`ResponseMatrix`.

    Cells equal to ``missing_code`` (textually, or numerically when the code
    is a number) become unobserved. Numbers are parsed with ``float`` so the
    result does not depend on the locale.
    """
    family = Family(family)
    code_text, code_num = _parse_missing_code(missing_code)
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not record or all(not c.strip() for c in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {width} fields, found {len(record)}")
            row = []
            for col, cell in enumerate(record, start=1):
                text = cell.strip()
                if text == code_text:
                    row.append(math.nan)
                    continue
                try:
                    value = float(text)
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{lineno}: non-numeric cell {text!r} in column {col}") from None
                if code_num is not None and value == code_num:
                    value = math.nan
                elif not math.isfinite(value):
                    raise DataFormatError(f"{path}:{lineno}: non-finite cell {text!r} in column {col}")
                row.append(value)
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    y = np.array(rows, dtype=float)
    observed = ~np.isnan(y)
    if family is Family.BINARY:
        bad = np.argwhere(observed & (y != 0) & (y != 1))
        if bad.size:
            cells = ", ".join(f"({r + 1},{c + 1})={y[r, c]:g}" for r, c in bad[:10])
            raise DataFormatError(f"{path}: {len(bad)} non-binary cells, first: {cells}")
    data = ResponseMatrix(np.where(observed, y, 0.0), observed, family)
    log.info("read %s: N=%d P=%d missing=%d", path, data.n_respondents, data.n_items, data.n_missing)
    return data


def write_response_csv(path, data: ResponseMatrix, missing_code: str = "NA") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row, obs in zip(data.values, data.observed):
            writer.writerow([_cell_text(v, data.family) if o else missing_code
                             for v, o in zip(row, obs)])


def _cell_text(value, family):
    return str(int(value)) if family is Family.BINARY else repr(float(value))


def complete_cases(data: ResponseMatrix) -> ResponseMatrix:
    keep = data.observed.all(axis=1)
    if keep.sum() < 2:
        raise ValueError("no complete cases; use mcar or mar")
    return ResponseMatrix(data.values[keep], data.observed[keep], data.family)


def check_ingestible(data: ResponseMatrix, missing_mode: str) -> None:
    """Reject rows or columns with no observed cell when only observed cells are modelled."""
    if MissingMode(missing_mode) is not MissingMode.MCAR:
        return
    empty_rows = np.nonzero(~data.observed.any(axis=1))[0]
    empty_cols = np.nonzero(~data.observed.any(axis=0))[0]
    if empty_rows.size or empty_cols.size:
        raise ValueError(f"entirely missing respondents {(empty_rows + 1).tolist()[:10]} "
                         f"or items {(empty_cols + 1).tolist()[:10]}")


def _fmt(block: str) -> str:
    return "%d" if block == "slab" else "%.17g"


def write_samples(samples: PosteriorSamples, path, extra: Optional[dict] = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for block in _ARRAY_BLOCKS:
        arr = getattr(samples, block)
        if arr is None:
            continue
        arr = np.asarray(arr)
        shapes[block] = list(arr.shape)
        flat = arr.reshape(arr.shape[0], -1).astype(int if block == "slab" else float)
        np.savetxt(path / f"{block}.txt", flat, fmt=_fmt(block), delimiter=" ")
    manifest = {
        "format_version": FORMAT_VERSION,
        "spec": {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(samples.spec).items()},
        "n_draws": samples.n_draws,
        "shapes": shapes,
        "acceptance": {b: (None if getattr(samples, b) is None else np.asarray(getattr(samples, b)).tolist())
                       for b in _ACCEPT_BLOCKS},
        "accept_gamma": float(samples.accept_gamma),
        "accept_scope": samples.accept_scope,
        "meta": samples.meta,
    }
    if extra:
        manifest.update(extra)
    with open(path / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def read_manifest(path) -> dict:
    with open(Path(path) / MANIFEST) as fh:
        return json.load(fh)


def read_samples(path) -> PosteriorSamples:
    path = Path(path)
    manifest = read_manifest(path)
    s = manifest["n_draws"]
    arrays = {}
    for block, shape in manifest["shapes"].items():
        if shape[0] != s:
            raise IntegrityError(f"manifest shape of {block} disagrees with n_draws={s}")
        fname = path / f"{block}.txt"
        if not fname.exists():
            raise IntegrityError(f"missing block file {fname.name}")
        width = int(np.prod(shape[1:])) if len(shape) > 1 else 1
        if width == 0:
            with open(fname) as fh:
                flat = np.zeros((sum(1 for _ in fh), 0))
        else:
            flat = np.loadtxt(fname, dtype=float, ndmin=2)
        if flat.shape != (s, width):
            raise IntegrityError(
                f"{fname.name} has shape {flat.shape}, manifest expects {(s, width)}")
        arr = flat.reshape(shape)
        arrays[block] = arr.astype(bool) if block == "slab" else arr
    acc = manifest["acceptance"]
    spec = ModelSpec(**manifest["spec"])
    return PosteriorSamples(
        spec=spec,
        accept_gamma=manifest["accept_gamma"], accept_scope=manifest["accept_scope"],
        meta=manifest.get("meta", {}),
        **{b: (None if acc.get(b) is None else np.asarray(acc[b], dtype=float)) for b in _ACCEPT_BLOCKS},
        **arrays,
    )


def write_map_csv(path, z: np.ndarray, w: np.ndarray) -> None:
    """Interaction-map coordinates; indices are 1-based, items first."""
    d = z.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "index"] + [f"dim{j + 1}" for j in range(d)])
        for i, row in enumerate(w, start=1):
            writer.writerow(["item", i] + [repr(float(v)) for v in row])
        for k, row in enumerate(z, start=1):
            writer.writerow(["respondent", k] + [repr(float(v)) for v in row])


def read_map_csv(path) -> tuple[np.ndarray, np.ndarray]:
    items, resp = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            (items if rec[0] == "item" else resp).append([float(v) for v in rec[2:]])
    return np.array(resp), np.array(items)
