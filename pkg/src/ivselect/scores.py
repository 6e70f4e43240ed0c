"""Orthogonal score functions for the conditional mean independence test.

Three scores are provided, all linear in theta with derivative -1:

* ``score_binary`` for a binary instrument: squared contrast in conditional
  outcome means, a doubled cross term with an inverse-probability-weighted
  residual contrast, the level contrast, and the IPW contrast itself.
* ``score_multi`` for a binned multivalued instrument: the same four term
  groups summed over bins, reducing exactly to ``score_binary`` at L = 1.
* ``score_quadratic``: the legacy squared-difference score with an
  independent mean-zero jitter against statistic degeneracy under the null.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, TrimmingError
from .validation import check_vector

EPSILON_TRIM = 0.01

# Debug hook: flips the sign of the doubled cross term so the built-in
# orthogonality check can demonstrate it catches a corrupted score.
_FLIP_CROSS_TERM = False


@contextmanager
def corrupted_cross_term():
    global _FLIP_CROSS_TERM
    _FLIP_CROSS_TERM = True
    try:
        yield
    finally:
        _FLIP_CROSS_TERM = False


@dataclass
class ScoreConfig:
    """Knobs shared by the score evaluations.

    ``epsilon_trim`` bounds the instrument propensities away from 0 and 1;
    ``zeta_sd`` scales the jitter of the legacy quadratic score (used as
    ``zeta_sd_factor * sd(Y)`` when derived from data); ``n_bins`` is the
    requested bin count for continuous instruments.
    """

    epsilon_trim: float = EPSILON_TRIM
    zeta_sd: float = 0.0
    n_bins: int = 4

    def __post_init__(self):
        if not 0.0 < self.epsilon_trim < 0.5:
            raise ConfigError("epsilon_trim must lie in (0, 0.5)")
        if self.zeta_sd < 0.0:
            raise ConfigError("zeta_sd must be nonnegative")
        if self.n_bins < 1:
            raise ConfigError("n_bins must be at least 1")


def _check_propensities(p: np.ndarray, trim: float):
    if np.any(p < trim - 1e-12) or np.any(p > 1.0 - trim + 1e-12):
        raise TrimmingError(
            f"propensity outside the trimmed range [{trim}, {1 - trim}]"
        )


def multi_scores(
    y,
    member,
    mu_in,
    mu_out,
    p,
    theta: float = 0.0,
    trim: float = EPSILON_TRIM,
) -> np.ndarray:
    """Vectorized multivalued-instrument scores for n observations.

    Parameters
    ----------
    y : (n,) outcomes
    member : (n, L) boolean bin membership of each observation's instrument
    mu_in : (n, L) fitted E[Y | D, X, Z in bin l]
    mu_out : (n, L) fitted E[Y | D, X, Z not in bin l]
    p : (n, L) fitted P(Z in bin l | D, X), already inside the trim bounds
    theta : value the score is evaluated at
    trim : trim bound used only to validate ``p``

    Returns
    -------
    (n,) per-observation scores.
    """
    y = np.asarray(y, dtype=float)
    member = np.asarray(member, dtype=bool)
    mu_in = np.asarray(mu_in, dtype=float)
    mu_out = np.asarray(mu_out, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_propensities(p, trim)

    contrast = mu_in - mu_out
    inside = member.astype(float)
    ipw = (y[:, None] - mu_in) * inside / p - (y[:, None] - mu_out) * (
        1.0 - inside
    ) / (1.0 - p)
    cross = -2.0 if _FLIP_CROSS_TERM else 2.0
    return (
        (contrast**2).sum(axis=1)
        + cross * (contrast * ipw).sum(axis=1)
        + contrast.sum(axis=1)
        + ipw.sum(axis=1)
        - theta
    )


def score_multi(y, member, mu_in, mu_out, p, theta=0.0, trim=EPSILON_TRIM):
    """Score for one observation with a binned multivalued instrument.

    ``member``, ``mu_in``, ``mu_out`` and ``p`` are length-L vectors for the
    observation; see :func:`multi_scores` for the vectorized form.
    """
    out = multi_scores(
        np.atleast_1d(np.asarray(y, dtype=float)),
        np.atleast_2d(member),
        np.atleast_2d(mu_in),
        np.atleast_2d(mu_out),
        np.atleast_2d(p),
        theta=theta,
        trim=trim,
    )
    return float(out[0]) if np.ndim(y) == 0 else out


def score_binary(y, z, mu1, mu0, p, theta=0.0, trim=EPSILON_TRIM):
    """Score for a binary instrument; the L = 1 case with bin {1}."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = multi_scores(
        y_arr,
        (z_arr == 1.0).reshape(-1, 1),
        np.atleast_1d(np.asarray(mu1, dtype=float)).reshape(-1, 1),
        np.atleast_1d(np.asarray(mu0, dtype=float)).reshape(-1, 1),
        np.atleast_1d(np.asarray(p, dtype=float)).reshape(-1, 1),
        theta=theta,
        trim=trim,
    )
    return float(out[0]) if np.ndim(y) == 0 else out


def score_quadratic(mu, m, theta=0.0, zeta=0.0):
    """Legacy squared-difference score (mu - m)^2 - theta + zeta."""
    mu = np.asarray(mu, dtype=float)
    m = np.asarray(m, dtype=float)
    out = ((mu - m) ** 2 + np.asarray(zeta, dtype=float)) - theta
    return float(out) if np.ndim(mu) == 0 and np.ndim(m) == 0 else out


def draw_zeta(n: int, sd: float, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero normal jitter for the legacy quadratic score."""
    check_vector(np.array([sd]), "zeta sd")
    if sd < 0:
        raise ConfigError("zeta sd must be nonnegative")
    return sd * rng.standard_normal(n)
