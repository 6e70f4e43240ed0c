"""Container for an outcome / treatment / candidate-matrix triple."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError
from .validation import check_binary, check_matrix, check_vector


@dataclass
class Dataset:
    """Observational sample used throughout the pipeline.

    Attributes
    ----------
    y : ndarray of shape (n,)
        Outcome.
    d : ndarray of shape (n,)
        Binary treatment indicator.
    q : ndarray of shape (n, p)
        Candidate pre-treatment variables; the pipeline partitions these
        columns into one instrument and a covariate set.
    candidate_names : list of str
        Column names for ``q``.
    """

    y: np.ndarray
    d: np.ndarray
    q: np.ndarray
    candidate_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.y = check_vector(self.y, "y")
        n = self.y.shape[0]
        self.d = check_binary(self.d, "d", n)
        self.q = check_matrix(self.q, "q", n)
        if not self.candidate_names:
            width = len(str(self.q.shape[1]))
            self.candidate_names = [
                f"q{j + 1:0{width}d}" for j in range(self.q.shape[1])
            ]
        if len(self.candidate_names) != self.q.shape[1]:
            raise InputError(
                f"{len(self.candidate_names)} candidate names for "
                f"{self.q.shape[1]} columns"
            )
        if len(set(self.candidate_names)) != len(self.candidate_names):
            raise InputError("candidate names must be unique")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.q.shape[1]

    def candidate_index(self, name: str) -> int:
        try:
            return self.candidate_names.index(name)
        except ValueError:
            raise InputError(f"unknown candidate column {name!r}") from None

    def split_candidates(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (instrument column j, matrix of the remaining columns)."""
        if not 0 <= j < self.n_candidates:
            raise InputError(f"candidate index {j} out of range")
        rest = np.delete(np.arange(self.n_candidates), j)
        return self.q[:, j], self.q[:, rest]
