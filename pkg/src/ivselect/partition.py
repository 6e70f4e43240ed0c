"""Candidate partitions: one instrument column, the rest as covariates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import MIN_BIN_MASS, InstrumentBinning, make_bins
from .dataset import Dataset
from .exceptions import InputError


@dataclass
class Partition:
    """Designates candidate ``instrument_index`` as the instrument and all
    remaining candidate columns as covariates."""

    instrument_index: int
    covariate_indices: np.ndarray
    binning: InstrumentBinning

    @classmethod
    def for_candidate(
        cls,
        data: Dataset,
        j: int,
        requested_bins: int = 4,
        min_mass: float = MIN_BIN_MASS,
    ) -> "Partition":
        if not 0 <= j < data.n_candidates:
            raise InputError(f"candidate index {j} out of range")
        binning = make_bins(data.q[:, j], requested_bins, min_mass=min_mass)
        covariates = np.delete(np.arange(data.n_candidates), j)
        return cls(instrument_index=j, covariate_indices=covariates, binning=binning)

    def instrument(self, data: Dataset) -> np.ndarray:
        return data.q[:, self.instrument_index]

    def covariates(self, data: Dataset) -> np.ndarray:
        return data.q[:, self.covariate_indices]
