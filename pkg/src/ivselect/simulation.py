"""Synthetic designs, oracle nuisances, and the Monte Carlo harness.

The main design draws correlated binary candidates from a latent Toeplitz
Gaussian pushed through a logistic link, a probit-style binary treatment,
and a linear outcome with unit treatment effect:

    Y = D + X'beta + gamma * Z + W + U
    D = 1{ X'beta + Z + delta * W + V > 0 }

delta > 0 injects unobserved confounding through W; gamma != 0 gives the
instrument a direct outcome effect. A second design with a multi-level
discrete instrument supports the multivalued score checks. Both expose
closed-over oracle nuisances (requiring independent candidates) used by the
moment-condition and orthogonality property tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed
from scipy.special import ndtr

from ._seeds import derive_seed
from .dataset import Dataset
from .exceptions import ConfigError
from .scores import multi_scores

_GH_NODES = 96


@dataclass
class DgpConfig:
    """Parameters of the binary-instrument design."""

    n: int
    p: int = 20
    delta: float = 0.0
    gamma: float = 0.0
    rho: float = 0.5
    beta_scale: float = 0.8
    beta_count: int = 4
    instrument_index: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.instrument_index is None:
            self.instrument_index = self.p - 1
        if self.n < 1 or self.p < 2:
            raise ConfigError("need n >= 1 and p >= 2")
        if not 0 <= self.instrument_index < self.p:
            raise ConfigError("instrument_index out of range")
        if self.instrument_index < self.beta_count:
            raise ConfigError("instrument cannot be one of the confounders")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (-1, 1)")

    @property
    def beta(self) -> np.ndarray:
        """Confounding coefficients over candidate columns: 0.8/j for the
        first four columns, zero elsewhere."""
        beta = np.zeros(self.p)
        for j in range(min(self.beta_count, self.p)):
            beta[j] = self.beta_scale / (j + 1)
        beta[self.instrument_index] = 0.0
        return beta

    @property
    def confounder_indices(self) -> np.ndarray:
        return np.flatnonzero(self.beta != 0.0)


def generate(config: DgpConfig) -> Dataset:
    """Draw one sample; deterministic given ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    n, p = config.n, config.p
    cov = scipy.linalg.toeplitz(config.rho ** np.arange(p))
    chol = np.linalg.cholesky(cov)
    latent = rng.standard_normal((n, p)) @ chol.T
    pi = 1.0 / (1.0 + np.exp(-latent))
    q = (rng.random((n, p)) < pi).astype(float)
    w = rng.standard_normal(n)
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)
    z = q[:, config.instrument_index]
    xb = q @ config.beta
    d = (xb + z + config.delta * w + v > 0.0).astype(float)
    y = d + xb + config.gamma * z + w + u
    return Dataset(y=y, d=d, q=q)


def _mills_w(d: np.ndarray, a: np.ndarray, delta: float) -> np.ndarray:
    """E[W | D=d, latent threshold a] by Gauss-Hermite quadrature.

    W enters the treatment latent with coefficient delta; V is standard
    normal, so P(D=1 | W=w) = Phi(a + delta * w). Accurate to well below
    1e-6 with 96 nodes.
    """
    if delta == 0.0:
        return np.zeros_like(a)
    nodes, weights = np.polynomial.hermite_e.hermegauss(_GH_NODES)
    weights = weights / math.sqrt(2.0 * math.pi)
    prob1 = ndtr(a[:, None] + delta * nodes[None, :])
    probs = np.where(d[:, None] == 1.0, prob1, 1.0 - prob1)
    numer = (weights * nodes * probs).sum(axis=1)
    denom = (weights * probs).sum(axis=1)
    return numer / denom


@dataclass
class OracleNuisances:
    """True conditional means and instrument propensities implied by a DGP.

    Only available for independent candidates (rho = 0), where the
    instrument is a fair coin given the covariates and Bayes' rule yields
    the instrument propensity in closed form.
    """

    mu: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    propensity: Callable[[np.ndarray, np.ndarray], np.ndarray]
    instrument_index: int
    theta0: float

    def rows(self, data: Dataset):
        """(member, mu_in, mu_out, p) evaluated at every observation."""
        z = data.q[:, self.instrument_index]
        x = np.delete(data.q, self.instrument_index, axis=1)
        member = (z == 1.0).reshape(-1, 1)
        mu_in = self.mu(data.d, x, np.ones(data.n)).reshape(-1, 1)
        mu_out = self.mu(data.d, x, np.zeros(data.n)).reshape(-1, 1)
        p = self.propensity(data.d, x).reshape(-1, 1)
        return member, mu_in, mu_out, p


def oracle_nuisances(config: DgpConfig) -> OracleNuisances:
    """Oracle nuisances for the binary-instrument design at rho = 0."""
    if config.rho != 0.0:
        raise ConfigError(
            "oracle nuisances require independent candidates (rho = 0): the "
            "instrument propensity has no closed form under correlation"
        )
    beta_cov = np.delete(config.beta, config.instrument_index)
    delta, gamma = config.delta, config.gamma
    scale = math.sqrt(1.0 + delta**2)

    def mu(d, x, z):
        d = np.asarray(d, dtype=float)
        z = np.asarray(z, dtype=float)
        xb = np.asarray(x, dtype=float) @ beta_cov
        return d + xb + gamma * z + _mills_w(d, xb + z, delta)

    def propensity(d, x):
        d = np.asarray(d, dtype=float)
        xb = np.asarray(x, dtype=float) @ beta_cov
        p1 = ndtr((xb + 1.0) / scale)
        p0 = ndtr(xb / scale)
        like1 = np.where(d == 1.0, p1, 1.0 - p1)
        like0 = np.where(d == 1.0, p0, 1.0 - p0)
        return like1 / (like1 + like0)

    theta0 = _binary_theta0(config)
    return OracleNuisances(
        mu=mu,
        propensity=propensity,
        instrument_index=config.instrument_index,
        theta0=theta0,
    )


def _binary_theta0(config: DgpConfig) -> float:
    """Exact score target by enumeration over the confounder bit patterns.

    With rho = 0 each confounder bit is a fair coin and only the columns
    with nonzero coefficients move the conditional means.
    """
    delta, gamma = config.delta, config.gamma
    scale = math.sqrt(1.0 + delta**2)
    beta_nz = config.beta[config.confounder_indices]
    k = beta_nz.shape[0]
    total = 0.0
    for bits in range(2**k):
        x = np.array([(bits >> i) & 1 for i in range(k)], dtype=float)
        px = 0.5**k
        xb = float(x @ beta_nz)
        for d in (0.0, 1.0):
            # P(D=d | x) averages the two instrument arms
            pd = 0.0
            for z in (0.0, 1.0):
                p1 = float(ndtr((xb + z) / scale))
                pd += 0.5 * (p1 if d == 1.0 else 1.0 - p1)
            mu1 = d + xb + gamma * 1.0 + float(
                _mills_w(np.array([d]), np.array([xb + 1.0]), delta)[0]
            )
            mu0 = d + xb + float(
                _mills_w(np.array([d]), np.array([xb + 0.0]), delta)[0]
            )
            contrast = mu1 - mu0
            total += px * pd * (contrast**2 + contrast)
    return total


@dataclass
class MultiLevelDgpConfig:
    """Design with a discrete instrument taking ``levels`` equal-mass values."""

    n: int
    n_covariates: int = 4
    levels: int = 4
    delta: float = 0.0
    gamma: float = 0.0
    z_scale: float = 0.7
    beta_scale: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigError("need at least two instrument levels")

    @property
    def beta(self) -> np.ndarray:
        return self.beta_scale / np.arange(1, self.n_covariates + 1)

    def centered_level(self, code) -> np.ndarray:
        return np.asarray(code, dtype=float) - (self.levels - 1) / 2.0


def generate_multilevel(config: MultiLevelDgpConfig) -> Dataset:
    """Independent binary covariates plus a uniform discrete instrument."""
    rng = np.random.default_rng(config.seed)
    n, k = config.n, config.n_covariates
    latent = rng.standard_normal((n, k))
    x = (rng.random((n, k)) < 1.0 / (1.0 + np.exp(-latent))).astype(float)
    code = rng.integers(0, config.levels, size=n).astype(float)
    w = rng.standard_normal(n)
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)
    zc = config.centered_level(code)
    xb = x @ config.beta
    d = (xb + config.z_scale * zc + config.delta * w + v > 0.0).astype(float)
    y = d + xb + config.gamma * zc + w + u
    q = np.column_stack([x, code])
    return Dataset(y=y, d=d, q=q)


class MultiLevelOracle:
    """Closed-form nuisances for the multi-level design (independent X, Z)."""

    def __init__(self, config: MultiLevelDgpConfig):
        self.config = config
        self.instrument_index = config.n_covariates
        self.theta0 = self._theta0()

    def _level_stats(self, d: np.ndarray, x: np.ndarray):
        """Per-level propensities p_l(d, x) and means mu(d, x, level l)."""
        cfg = self.config
        scale = math.sqrt(1.0 + cfg.delta**2)
        xb = x @ cfg.beta
        levels = np.arange(cfg.levels, dtype=float)
        zc = cfg.centered_level(levels)
        a = xb[:, None] + cfg.z_scale * zc[None, :]
        prob1 = ndtr(a / scale)
        like = np.where(d[:, None] == 1.0, prob1, 1.0 - prob1)
        p = like / like.sum(axis=1, keepdims=True)
        mills = np.column_stack(
            [_mills_w(d, a[:, l], cfg.delta) for l in range(cfg.levels)]
        )
        mu = d[:, None] + xb[:, None] + cfg.gamma * zc[None, :] + mills
        return p, mu

    def rows(self, data: Dataset):
        d = data.d
        x = data.q[:, : self.config.n_covariates]
        code = data.q[:, self.instrument_index].astype(int)
        p, mu = self._level_stats(d, x)
        member = code[:, None] == np.arange(self.config.levels)[None, :]
        mu_out = self._mu_out(p, mu)
        return member, mu, mu_out, p

    @staticmethod
    def _mu_out(p: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """E[Y | D, X, Z outside bin l] = sum_{l' != l} p_l' mu_l' / (1 - p_l)."""
        totals = (p * mu).sum(axis=1, keepdims=True)
        return (totals - p * mu) / (1.0 - p)

    def _theta0(self) -> float:
        cfg = self.config
        k = cfg.n_covariates
        total = 0.0
        for bits in range(2**k):
            x = np.array([[(bits >> i) & 1 for i in range(k)]], dtype=float)
            px = 0.5**k
            for d in (0.0, 1.0):
                darr = np.array([d])
                p, mu = self._level_stats(darr, x)
                # P(D=d | x) with the uniform level distribution
                scale = math.sqrt(1.0 + cfg.delta**2)
                a = float(x @ cfg.beta) + cfg.z_scale * cfg.centered_level(
                    np.arange(cfg.levels)
                )
                prob1 = ndtr(a / scale)
                pd = float(np.mean(prob1 if d == 1.0 else 1.0 - prob1))
                mu_out = self._mu_out(p, mu)
                contrast = (mu - mu_out)[0]
                total += px * pd * float((contrast**2 + contrast).sum())
        return total


def oracle_statistic(data: Dataset, oracle) -> tuple[float, float, float, float]:
    """Test statistic with oracle nuisances plugged in (no cross-fitting).

    Returns (theta_hat, sigma_hat, t, p_value).
    """
    member, mu_in, mu_out, p = oracle.rows(data)
    s = multi_scores(data.y, member, mu_in, mu_out, p, theta=0.0, trim=1e-9)
    theta = float(s.mean())
    sigma = float(np.sqrt(np.mean((s - theta) ** 2)))
    t = math.sqrt(data.n) * theta / sigma
    return theta, sigma, t, float(2.0 * ndtr(-abs(t)))


@dataclass
class Scenario:
    """One Monte Carlo cell: a DGP setting replicated ``reps`` times."""

    n: int
    delta: float = 0.0
    gamma: float = 0.0
    reps: int = 100
    seed: int = 0
    p: int = 20

    def label(self) -> str:
        return f"n={self.n} delta={self.delta:g} gamma={self.gamma:g}"


def default_scenarios(reps: int = 100, seed: int = 0) -> list[Scenario]:
    """The nine cells of the reference simulation grid."""
    cells = []
    for delta, gamma in ((0.0, 0.0), (2.0, 0.0), (0.0, 0.5)):
        for n in (1000, 4000, 16000):
            cells.append(Scenario(n=n, delta=delta, gamma=gamma, reps=reps, seed=seed))
    return cells


@dataclass
class McMetrics:
    """Aggregates of one scenario's replications.

    ``est``/``std``/``mean_se`` summarize the test estimate when the true
    instrument was tested; ``det_z`` / ``det_x`` are the rates at which the
    instrument / a confounder was chosen as the best candidate with the
    test kept at the 10% level.
    """

    scenario: Scenario
    reps: int
    n_failed: int
    est: float
    std: float
    mean_se: float
    det_z: float
    det_x: float
    n_z_tested: int
    n_identified: int
    n_effect_within_3se: int
    mean_effect: float

    def row(self) -> dict:
        return {
            "n": self.scenario.n,
            "delta": self.scenario.delta,
            "gamma": self.scenario.gamma,
            "reps": self.reps,
            "n_failed": self.n_failed,
            "est": self.est,
            "std": self.std,
            "mean_se": self.mean_se,
            "det_z": self.det_z,
            "det_x": self.det_x,
            "n_z_tested": self.n_z_tested,
            "n_identified": self.n_identified,
            "n_effect_within_3se": self.n_effect_within_3se,
            "mean_effect": self.mean_effect,
        }


def _run_rep(scenario: Scenario, rep: int, pipeline_kwargs: dict) -> dict:
    from .selection import PipelineConfig, run_pipeline

    seed = derive_seed(scenario.seed, scenario.n, rep)
    config = DgpConfig(
        n=scenario.n,
        p=scenario.p,
        delta=scenario.delta,
        gamma=scenario.gamma,
        seed=seed,
    )
    data = generate(config)
    try:
        report = run_pipeline(
            data, PipelineConfig(seed=seed, **pipeline_kwargs)
        )
    except Exception as err:  # per-rep failures are counted, not fatal
        return {"rep": rep, "error": f"{type(err).__name__}: {err}"}
    iv = config.instrument_index
    confounders = set(config.confounder_indices.tolist())
    record = {"rep": rep, "error": None}
    test_z = report.tests.get(iv)
    if test_z is not None and test_z.result is not None:
        record["theta_z"] = test_z.result.theta
        record["se_z"] = test_z.result.sigma / math.sqrt(test_z.result.n)
    identified = report.identified
    chosen = report.instrument_indices[0] if identified else None
    record["identified"] = identified
    record["det_z"] = bool(identified and chosen == iv)
    record["det_x"] = bool(identified and chosen in confounders)
    if identified and report.effect_ols is not None:
        record["effect"] = report.effect_ols[0]
        record["effect_se"] = report.effect_ols[1]
    return record


def summarize_reps(scenario: Scenario, records: list[dict]) -> McMetrics:
    ok = [r for r in records if r.get("error") is None]
    thetas = [r["theta_z"] for r in ok if "theta_z" in r]
    ses = [r["se_z"] for r in ok if "se_z" in r]
    n_ok = len(ok)
    est = math.fsum(thetas) / len(thetas) if thetas else float("nan")
    if len(thetas) > 1:
        std = math.sqrt(
            math.fsum((t - est) ** 2 for t in thetas) / (len(thetas) - 1)
        )
    else:
        std = float("nan")
    mean_se = math.fsum(ses) / len(ses) if ses else float("nan")
    det_z = sum(r["det_z"] for r in ok) / n_ok if n_ok else float("nan")
    det_x = sum(r["det_x"] for r in ok) / n_ok if n_ok else float("nan")
    effects = [r["effect"] for r in ok if "effect" in r]
    within = sum(
        1
        for r in ok
        if "effect" in r and abs(r["effect"] - 1.0) <= 3.0 * r["effect_se"]
    )
    return McMetrics(
        scenario=scenario,
        reps=n_ok,
        n_failed=len(records) - n_ok,
        est=est,
        std=std,
        mean_se=mean_se,
        det_z=det_z,
        det_x=det_x,
        n_z_tested=len(thetas),
        n_identified=sum(r["identified"] for r in ok),
        n_effect_within_3se=within,
        mean_effect=math.fsum(effects) / len(effects) if effects else float("nan"),
    )


def run_monte_carlo(
    scenarios: list[Scenario],
    pipeline_kwargs: dict | None = None,
    n_jobs: int = 1,
    progress: Callable[[str], None] | None = None,
) -> list[McMetrics]:
    """Run the full selection pipeline over every scenario replication.

    Per-rep seeds derive from (scenario seed, n, rep index), so parallel and
    sequential execution produce identical results; failures are counted and
    excluded from the aggregates.
    """
    pipeline_kwargs = pipeline_kwargs or {}
    results = []
    for scenario in scenarios:
        if scenario.reps < 1:
            raise ConfigError("reps must be at least 1")
        jobs = (
            delayed(_run_rep)(scenario, rep, pipeline_kwargs)
            for rep in range(scenario.reps)
        )
        records = []
        for done, record in enumerate(
            Parallel(n_jobs=n_jobs, return_as="generator")(jobs), start=1
        ):
            records.append(record)
            if progress is not None and (
                done % max(1, scenario.reps // 10) == 0 or done == scenario.reps
            ):
                progress(f"{scenario.label()}: {done}/{scenario.reps} reps")
        results.append(summarize_reps(scenario, records))
    return results
