"""Two-view detector event images and the on-disk dataset format.

Pixel convention
----------------
``row`` is the drift-time axis (top to bottom), ``col`` is the wire axis
(left to right); the origin is the top-left pixel.  A raw readout chunk is
505 samples x 101 wires; downsampling sums groups of 5 consecutive samples,
so one pixel spans 1 wire x 5 samples and the total deposited charge is
preserved exactly (sum, not mean -- the descriptor integrates charge, so
aggregation must conserve it).

Dataset directory format (version 1)
------------------------------------
``manifest.json``::

    {"version": 1, "seed": <u64>, "n_events": N, "n_positive": P,
     "n_negative": Q, "params": {...}}

``events.jsonl`` -- one JSON object per line::

    {"id": str, "label": "sig"|"bkg", "energy_gev": float,
     "views": {"ind2": {"piv": [row, col], "pixels": [[row, col, charge], ...]},
               "coll": {...}}}

Pixels are listed in (row, col) lexicographic order; omitted pixels are
zero; charges are decimal floats at full round-trip precision, so
save -> load reproduces every value bit-exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
DOWNSAMPLE_FACTOR = 5
GRID_SIZE = 101           # paper-default view is 101 x 101 pixels
RAW_SAMPLES = 505         # raw chunk rows (drift samples)
RAW_WIRES = 101           # raw chunk columns (wires)

LABEL_POSITIVE = 1        # electron-neutrino signal
LABEL_NEGATIVE = 0        # cosmogenic background

_LABEL_TO_STR = {LABEL_POSITIVE: "sig", LABEL_NEGATIVE: "bkg"}
_STR_TO_LABEL = {"sig": LABEL_POSITIVE, "bkg": LABEL_NEGATIVE}


class DatasetError(Exception):
    """Raised for invalid datasets and malformed dataset files."""


@dataclass(frozen=True, eq=False)
class ViewImage:
    """Dense charge grid for one detector view plus that view's PIV pixel."""

    charge: np.ndarray            # 2D float64, row-major, non-negative
    piv: tuple[int, int]          # (row, col) of the primary interaction vertex

    def __post_init__(self):
        arr = np.ascontiguousarray(self.charge, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "charge", arr)
        object.__setattr__(self, "piv", (int(self.piv[0]), int(self.piv[1])))

    @property
    def height(self) -> int:
        return self.charge.shape[0]

    @property
    def width(self) -> int:
        return self.charge.shape[1]

    def violations(self) -> list[str]:
        out = []
        if self.charge.ndim != 2:
            return [f"charge grid must be 2D, got {self.charge.ndim}D"]
        if not np.isfinite(self.charge).all():
            out.append("non-finite charge")
        elif (self.charge < 0).any():
            out.append("negative charge")
        r, c = self.piv
        if not (0 <= r < self.height and 0 <= c < self.width):
            out.append(
                f"piv out of bounds: ({r}, {c}) on {self.height}x{self.width} grid"
            )
        return out

    def __eq__(self, other):
        if not isinstance(other, ViewImage):
            return NotImplemented
        return self.piv == other.piv and np.array_equal(self.charge, other.charge)


@dataclass(frozen=True, eq=False)
class Event:
    """One labeled event: Induction2 + Collection views, energy in GeV."""

    id: str
    label: int                    # LABEL_POSITIVE or LABEL_NEGATIVE
    energy_gev: float
    ind2: ViewImage
    coll: ViewImage

    def __eq__(self, other):
        if not isinstance(other, Event):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.energy_gev == other.energy_gev
            and self.ind2 == other.ind2
            and self.coll == other.coll
        )


@dataclass
class Dataset:
    events: list[Event]
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.events)


def downsample_view(raw: np.ndarray) -> np.ndarray:
    """Collapse groups of DOWNSAMPLE_FACTOR consecutive rows by summation.

    ``raw`` is (samples, wires) with the sample count a multiple of 5; the
    paper-default chunk is 505 x 101 -> 101 x 101.  Output pixel (r, c) is
    the sum of raw rows 5r..5r+4 at column c, accumulated top to bottom, so
    total charge is conserved.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ValueError(f"raw chunk must be 2D, got {raw.ndim}D")
    n_samples, n_wires = raw.shape
    if n_samples % DOWNSAMPLE_FACTOR != 0:
        raise ValueError(
            f"raw chunk has {n_samples} sample rows, "
            f"not a multiple of {DOWNSAMPLE_FACTOR}"
        )
    if not np.isfinite(raw).all():
        raise ValueError("raw chunk contains non-finite values")
    # reshape puts the 5 samples of each output pixel on axis 1; numpy sums
    # short axes sequentially, i.e. top to bottom
    return raw.reshape(n_samples // DOWNSAMPLE_FACTOR, DOWNSAMPLE_FACTOR, n_wires).sum(axis=1)


def validate_event(e: Event) -> list[str]:
    """Empty list when the event is well-formed, else one entry per violation."""
    out = []
    for name in ("ind2", "coll"):
        view = getattr(e, name, None)
        if view is None:
            out.append(f"missing view {name}")
            continue
        out.extend(f"{name}: {v}" for v in view.violations())
    if e.label not in (LABEL_POSITIVE, LABEL_NEGATIVE):
        out.append(f"bad label {e.label!r}")
    if not (np.isfinite(e.energy_gev) and e.energy_gev > 0):
        out.append(f"bad energy {e.energy_gev!r}")
    if not e.id:
        out.append("empty id")
    return out


def validate_dataset(ds: Dataset) -> list[str]:
    out = []
    seen = set()
    for e in ds.events:
        if e.id in seen:
            out.append(f"duplicate id {e.id!r}")
        seen.add(e.id)
        out.extend(f"event {e.id}: {v}" for v in validate_event(e))
    man = ds.manifest
    n_pos = sum(1 for e in ds.events if e.label == LABEL_POSITIVE)
    if man:
        if man.get("n_events") != len(ds.events):
            out.append(
                f"manifest n_events {man.get('n_events')} != {len(ds.events)}"
            )
        if man.get("n_positive") != n_pos:
            out.append(f"manifest n_positive {man.get('n_positive')} != {n_pos}")
        if man.get("n_negative") != len(ds.events) - n_pos:
            out.append(
                f"manifest n_negative {man.get('n_negative')} != {len(ds.events) - n_pos}"
            )
    return out


def _view_to_obj(view: ViewImage) -> dict:
    rows, cols = np.nonzero(view.charge)   # C order = (row, col) lexicographic
    pixels = [
        [int(r), int(c), float(view.charge[r, c])] for r, c in zip(rows, cols)
    ]
    return {
        "piv": [view.piv[0], view.piv[1]],
        "shape": [view.height, view.width],
        "pixels": pixels,
    }


def _view_from_obj(obj: dict) -> ViewImage:
    h, w = obj.get("shape", [GRID_SIZE, GRID_SIZE])
    grid = np.zeros((int(h), int(w)), dtype=np.float64)
    for r, c, q in obj["pixels"]:
        grid[int(r), int(c)] = q
    return ViewImage(charge=grid, piv=(obj["piv"][0], obj["piv"][1]))


def event_to_jsonline(e: Event) -> str:
    obj = {
        "id": e.id,
        "label": _LABEL_TO_STR[e.label],
        "energy_gev": float(e.energy_gev),
        "views": {"ind2": _view_to_obj(e.ind2), "coll": _view_to_obj(e.coll)},
    }
    return json.dumps(obj, separators=(",", ":"))


def event_from_obj(obj: dict) -> Event:
    label = _STR_TO_LABEL.get(obj.get("label"))
    if label is None:
        raise DatasetError(f"unknown label {obj.get('label')!r}")
    return Event(
        id=str(obj["id"]),
        label=label,
        energy_gev=float(obj["energy_gev"]),
        ind2=_view_from_obj(obj["views"]["ind2"]),
        coll=_view_from_obj(obj["views"]["coll"]),
    )


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write manifest.json + events.jsonl under ``path`` (created if needed)."""
    problems = validate_dataset(ds)
    if problems:
        raise DatasetError("refusing to save invalid dataset: " + "; ".join(problems[:5]))
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = dict(ds.manifest)
    manifest.setdefault("version", FORMAT_VERSION)
    manifest.setdefault("n_events", len(ds.events))
    manifest.setdefault(
        "n_positive", sum(1 for e in ds.events if e.label == LABEL_POSITIVE)
    )
    manifest.setdefault(
        "n_negative", sum(1 for e in ds.events if e.label == LABEL_NEGATIVE)
    )
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    with open(path / "events.jsonl", "w", encoding="utf-8") as fh:
        for e in ds.events:
            fh.write(event_to_jsonline(e))
            fh.write("\n")


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset directory, checking version and manifest counts."""
    path = Path(path)
    man_path = path / "manifest.json"
    if not man_path.exists():
        raise DatasetError(f"no manifest.json under {path}")
    try:
        manifest = json.loads(man_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise DatasetError(f"manifest.json: parse error at line {err.lineno}: {err.msg}") from err
    version = manifest.get("version")
    if version != FORMAT_VERSION:
        raise DatasetError(
            f"unsupported dataset format version {version!r}, this reader supports {FORMAT_VERSION}"
        )
    events = []
    with open(path / "events.jsonl", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(
                    f"events.jsonl line {lineno}: parse error: {err.msg}"
                ) from err
            try:
                events.append(event_from_obj(obj))
            except (KeyError, TypeError, ValueError) as err:
                raise DatasetError(f"events.jsonl line {lineno}: {err}") from err
    ds = Dataset(events=events, manifest=manifest)
    n_pos = sum(1 for e in events if e.label == LABEL_POSITIVE)
    checks = [
        ("n_events", len(events)),
        ("n_positive", n_pos),
        ("n_negative", len(events) - n_pos),
    ]
    for key, actual in checks:
        expected = manifest.get(key)
        if expected is not None and expected != actual:
            raise DatasetError(
                f"manifest {key} is {expected} but events.jsonl holds {actual}"
            )
    ids = [e.id for e in events]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate event ids in events.jsonl")
    return ds
