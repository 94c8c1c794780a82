"""Polar charge-histogram descriptor around the primary interaction vertex.

For one view, every pixel within Euclidean distance ``radius`` of the PIV
(the PIV pixel itself excluded -- its angle is undefined, so its charge
lands in no bin and no statistic) contributes its charge to one of
``n_bins`` angular bins of width 360/n_bins degrees.  Angle convention:
0 deg points along the +wire (col) axis and grows counter-clockwise with
the row axis pointing down, i.e. theta = atan2(-drow, dcol) mapped to
[0, 360).  Any fixed convention gives the same descriptor up to a bin
permutation; this one is pinned for reproducibility.

Disc membership is center-to-center, via the exact integer comparison
drow^2 + dcol^2 <= radius^2 (no partial-pixel weighting).  Bin-boundary
ties go to the higher bin (floor semantics); an angle rounding to exactly
360 is clamped into the last bin.

The five summary statistics are computed over the B histogram values, not
over raw pixel charges -- note that this is a reading choice; the
alternative (stats over in-disc pixel charges) is deliberately not
implemented.  Std is the population standard deviation (divide by B).

Feature vector layout: [ind2 histogram | ind2 stats? | coll histogram |
coll stats?], length 2*n_bins without stats, 2*(n_bins + 5) with.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .events import Event, ViewImage, validate_event

STATS_PER_VIEW = 5
PAPER_BINS_GRID = (18, 36, 72, 180)
PAPER_RADIUS_GRID = (2.0, 5.0, 10.0, 20.0, 50.0)


@dataclass(frozen=True)
class DescriptorConfig:
    n_bins: int = 36
    radius: float = 10.0
    include_stats: bool = True

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError(f"n_bins must be >= 1, got {self.n_bins}")
        if not (self.radius > 0):
            raise ValueError(f"radius must be > 0, got {self.radius}")

    @property
    def feature_length(self) -> int:
        per_view = self.n_bins + (STATS_PER_VIEW if self.include_stats else 0)
        return 2 * per_view


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: int
    energy_gev: float
    event_id: str


@dataclass
class FeatureTable:
    """Feature matrix for a whole dataset plus per-row metadata."""

    ids: list[str]
    labels: np.ndarray      # int8, 1 = signal
    energies: np.ndarray    # float64 GeV
    X: np.ndarray           # (n_events, feature_length) float64
    config: DescriptorConfig


def polar_bin_index(drow: int, dcol: int, n_bins: int) -> int:
    """Angular bin of the displacement (drow, dcol) from the PIV.

    Axis-aligned and diagonal displacements are mapped to their exact
    angles (0, 45, 90, ... deg) so that bin-boundary behaviour does not
    depend on libm rounding.
    """
    if drow == 0 and dcol == 0:
        raise ValueError("angle undefined for zero displacement (the PIV pixel)")
    if drow == 0:
        theta = 0.0 if dcol > 0 else 180.0
    elif dcol == 0:
        theta = 90.0 if drow < 0 else 270.0
    elif abs(drow) == abs(dcol):
        if drow < 0:
            theta = 45.0 if dcol > 0 else 135.0
        else:
            theta = 315.0 if dcol > 0 else 225.0
    else:
        theta = math.degrees(math.atan2(-drow, dcol))
        if theta < 0.0:
            theta += 360.0
    idx = int(theta // (360.0 / n_bins))
    if idx >= n_bins:   # guards theta rounding to exactly 360
        idx = n_bins - 1
    return idx


@lru_cache(maxsize=32)
def _bin_table(n_bins: int, max_offset: int) -> np.ndarray:
    """Bin index for every displacement in [-max_offset, max_offset]^2.

    Built from polar_bin_index itself, so the vectorised histogram below is
    pixel-for-pixel identical to the scalar definition.  The (0, 0) entry
    is a placeholder; callers must mask out the PIV pixel.
    """
    size = 2 * max_offset + 1
    table = np.zeros((size, size), dtype=np.int32)
    for dr in range(-max_offset, max_offset + 1):
        for dc in range(-max_offset, max_offset + 1):
            if dr == 0 and dc == 0:
                continue
            table[dr + max_offset, dc + max_offset] = polar_bin_index(dr, dc, n_bins)
    return table


@lru_cache(maxsize=8)
def _dist2_table(max_offset: int) -> np.ndarray:
    offs = np.arange(-max_offset, max_offset + 1, dtype=np.int64)
    return offs[:, None] ** 2 + offs[None, :] ** 2


def charge_histogram(view: ViewImage, cfg: DescriptorConfig) -> np.ndarray:
    """Angular charge histogram (length n_bins) around the view's PIV."""
    grid = view.charge
    h, w = grid.shape
    pr, pc = view.piv
    max_offset = max(h, w) - 1
    r_span = int(math.floor(cfg.radius))
    # window of rows/cols that can possibly lie within the radius
    r0, r1 = max(0, pr - r_span), min(h, pr + r_span + 1)
    c0, c1 = max(0, pc - r_span), min(w, pc + r_span + 1)
    window = grid[r0:r1, c0:c1]

    table = _bin_table(cfg.n_bins, max_offset)
    dist2 = _dist2_table(max_offset)
    tr0, tc0 = r0 - pr + max_offset, c0 - pc + max_offset
    bins = table[tr0:tr0 + (r1 - r0), tc0:tc0 + (c1 - c0)]
    d2 = dist2[tr0:tr0 + (r1 - r0), tc0:tc0 + (c1 - c0)]

    mask = d2 <= cfg.radius * cfg.radius
    # exclude the PIV pixel itself
    if r0 <= pr < r1 and c0 <= pc < c1:
        mask = mask.copy()
        mask[pr - r0, pc - c0] = False
    return np.bincount(
        bins[mask], weights=window[mask], minlength=cfg.n_bins
    ).astype(np.float64)


def histogram_stats(hist: np.ndarray) -> np.ndarray:
    """(min, max, std, mean, sum) over the histogram bin values.

    Std is the population standard deviation (denominator = number of bins).
    """
    h = np.asarray(hist, dtype=np.float64)
    return np.array(
        [h.min(), h.max(), h.std(), h.mean(), h.sum()], dtype=np.float64
    )


def build_descriptor(event: Event, cfg: DescriptorConfig) -> FeatureVector:
    """Feature vector [ind2 hist | ind2 stats? | coll hist | coll stats?]."""
    problems = validate_event(event)
    if problems:
        raise ValueError(f"invalid event {event.id}: " + "; ".join(problems))
    parts = []
    for view in (event.ind2, event.coll):
        hist = charge_histogram(view, cfg)
        parts.append(hist)
        if cfg.include_stats:
            parts.append(histogram_stats(hist))
    values = np.concatenate(parts)
    assert values.shape == (cfg.feature_length,)
    return FeatureVector(
        values=values, label=event.label, energy_gev=event.energy_gev,
        event_id=event.id,
    )


def extract_table(events: list[Event], cfg: DescriptorConfig) -> FeatureTable:
    n = len(events)
    X = np.empty((n, cfg.feature_length), dtype=np.float64)
    labels = np.empty(n, dtype=np.int8)
    energies = np.empty(n, dtype=np.float64)
    ids = []
    for i, e in enumerate(events):
        fv = build_descriptor(e, cfg)
        X[i] = fv.values
        labels[i] = fv.label
        energies[i] = fv.energy_gev
        ids.append(fv.event_id)
    return FeatureTable(ids=ids, labels=labels, energies=energies, X=X, config=cfg)


def write_features_csv(table: FeatureTable, path: str | Path) -> None:
    """CSV with header id,label,energy_gev,f0..f{L-1}; full-precision floats."""
    n_feat = table.X.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "energy_gev"] + [f"f{i}" for i in range(n_feat)])
        for i, eid in enumerate(table.ids):
            row = [eid, str(int(table.labels[i])), repr(float(table.energies[i]))]
            row += [repr(float(v)) for v in table.X[i]]
            writer.writerow(row)


def read_features_csv(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of write_features_csv: (ids, labels, energies, X)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["id", "label", "energy_gev"]:
            raise ValueError(f"unexpected feature CSV header: {header[:3]}")
        ids, labels, energies, rows = [], [], [], []
        for rec in reader:
            ids.append(rec[0])
            labels.append(int(rec[1]))
            energies.append(float(rec[2]))
            rows.append([float(v) for v in rec[3:]])
    X = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(header) - 3))
    return ids, np.array(labels, dtype=np.int8), np.array(energies), X
