"""Partitioning of an instrument's support into score bins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInstrumentError, InputError
from .validation import check_vector

MIN_BIN_MASS = 0.05


@dataclass
class InstrumentBinning:
    """A partition of the observed instrument support into L bins.

    ``kind`` is one of "binary", "discrete", "quantile". Binary instruments
    use the single-bin convention: L = 1 with the larger value as the bin, so
    the multivalued score reduces exactly to the binary one. Discrete bins
    hold explicit value sets; quantile bins are the intervals between
    ``cut_points`` (closed on the right, with open outer ends so that the
    whole support is covered).
    """

    kind: str
    levels: list[np.ndarray] | None = None
    cut_points: np.ndarray | None = None

    @property
    def n_bins(self) -> int:
        if self.kind == "quantile":
            return len(self.cut_points) + 1
        return len(self.levels)

    def labels(self, z) -> np.ndarray:
        """Index of the partition cell each observation falls in.

        For binary instruments the cells are {0} and {1} (labels 0/1) even
        though the score uses the single bin {1}; for the other kinds the
        cells coincide with the bins.
        """
        z = check_vector(z, "z")
        if self.kind == "quantile":
            return np.searchsorted(self.cut_points, z, side="left")
        if self.kind == "binary":
            return np.isin(z, self.levels[0]).astype(np.int64)
        out = np.full(z.shape[0], -1, dtype=np.int64)
        for l, values in enumerate(self.levels):
            out[np.isin(z, values)] = l
        if np.any(out < 0):
            bad = float(z[np.flatnonzero(out < 0)[0]])
            raise InputError(f"instrument value {bad!r} outside the binned support")
        return out

    def membership(self, z) -> np.ndarray:
        """Boolean (n, L) matrix of bin membership indicators."""
        z = check_vector(z, "z")
        if self.kind == "binary":
            return np.isin(z, self.levels[0]).reshape(-1, 1)
        labels = self.labels(z)
        return labels[:, None] == np.arange(self.n_bins)[None, :]

    def masses(self, z) -> np.ndarray:
        return self.membership(z).mean(axis=0)


def _merge_rare_levels(
    values: np.ndarray, freqs: np.ndarray, min_mass: float
) -> list[np.ndarray]:
    """One bin per level, rare levels folded into the nearest level's bin."""
    groups = [[v] for v in values]
    masses = list(freqs)
    while len(groups) > 1 and min(masses) <= min_mass:
        i = int(np.argmin(masses))
        # nearest level by value distance, ties to the lower value
        anchor = np.mean(groups[i])
        best, best_dist = None, np.inf
        for k, grp in enumerate(groups):
            if k == i:
                continue
            dist = abs(np.mean(grp) - anchor)
            if dist < best_dist - 1e-12:
                best, best_dist = k, dist
        groups[best] = sorted(groups[best] + groups[i])
        masses[best] += masses[i]
        del groups[i], masses[i]
    return [np.asarray(g, dtype=float) for g in groups]


def make_bins(z, requested_bins: int, min_mass: float = MIN_BIN_MASS) -> InstrumentBinning:
    """Build the instrument binning used by the multivalued score.

    Binary instruments get the single bin {larger value}. Instruments with
    at most ``requested_bins`` distinct values are treated as discrete, one
    bin per level with levels of empirical frequency <= ``min_mass`` merged
    into the nearest level. Anything richer is cut at ``requested_bins``
    equal-probability quantiles (midpoint rule), dropping duplicate cuts.
    """
    z = check_vector(z, "z")
    if requested_bins < 1:
        raise InputError("requested_bins must be at least 1")
    values, counts = np.unique(z, return_counts=True)
    if values.shape[0] < 2:
        raise DegenerateInstrumentError("instrument is constant")
    if values.shape[0] == 2:
        return InstrumentBinning(kind="binary", levels=[values[1:2]])
    if values.shape[0] <= requested_bins:
        freqs = counts / z.shape[0]
        groups = _merge_rare_levels(values, freqs, min_mass)
        if len(groups) < 2:
            raise DegenerateInstrumentError(
                "instrument has no two levels above the frequency threshold"
            )
        return InstrumentBinning(kind="discrete", levels=groups)
    probs = np.arange(1, requested_bins) / requested_bins
    cuts = np.unique(np.quantile(z, probs, method="midpoint"))
    binning = InstrumentBinning(kind="quantile", cut_points=cuts)
    # ties can still concentrate mass; drop cuts bounding undersized bins
    while binning.cut_points.shape[0] > 0:
        masses = binning.masses(z)
        if masses.min() > min_mass:
            break
        small = int(np.argmin(masses))
        drop = small if small < binning.cut_points.shape[0] else small - 1
        binning = InstrumentBinning(
            kind="quantile", cut_points=np.delete(binning.cut_points, drop)
        )
    if binning.cut_points.shape[0] == 0:
        raise DegenerateInstrumentError(
            "quantile binning collapsed to a single bin"
        )
    return binning
