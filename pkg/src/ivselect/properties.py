"""Built-in invariant suite behind the ``check`` command.

Each check is independent of the estimation path it guards: moment targets
come from exact enumeration over the design's discrete support, the
orthogonality checks probe the fitted linear term of a quadratic in the
perturbation size, and the algebraic checks compare against literal
re-evaluations of the score formulas.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import scores
from .linear_model import gaussian_kkt_gap, lasso_fit
from .scores import multi_scores, score_binary
from .simulation import (
    DgpConfig,
    MultiLevelDgpConfig,
    MultiLevelOracle,
    generate,
    generate_multilevel,
    oracle_nuisances,
)

GATEAUX_RS = (-0.1, -0.05, 0.0, 0.05, 0.1)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str


def _directions(d, x, p):
    """Fixed bounded perturbation directions for the nuisance functions.

    The outcome-mean directions differ between the in-bin and out-of-bin
    functions and covary with the treatment and covariates; the propensity
    direction vanishes at 0 and 1, so perturbed propensities stay inside
    the unit interval for every |r| <= 1.
    """
    h_in = 0.6 + 0.4 * d[:, None] - 0.3 * x[:, :1]
    h_out = -0.5 + 0.2 * x[:, :1] + 0.3 * d[:, None]
    h_p = p * (1.0 - p) * (1.0 - 2.0 * p)
    return h_in, h_out, h_p


def _gateaux_check(
    y, d, x, member, mu_in, mu_out, p, theta0, score_kind: str
) -> tuple[float, float]:
    """|b1| and its standard error for the orthogonal or plain score."""
    rs = np.array(GATEAUX_RS)
    design = np.column_stack([np.ones_like(rs), rs, rs**2])
    w_lin = np.linalg.solve(design.T @ design, design.T)[1]
    h_in, h_out, h_p = _directions(d, x, p)
    n = y.shape[0]
    per_obs = np.zeros(n)
    for r, w in zip(rs, w_lin):
        mu_in_r = mu_in + r * h_in
        mu_out_r = mu_out + r * h_out
        p_r = p + r * h_p
        if score_kind == "orthogonal":
            vals = multi_scores(y, member, mu_in_r, mu_out_r, p_r, theta=theta0, trim=1e-9)
        else:
            # plain squared difference between the observed-bin mean and the
            # marginal mean, no correction terms
            inside = member.astype(float)
            mu_obs = (mu_in_r * inside).sum(axis=1)
            if member.shape[1] == 1:
                mu_obs += (mu_out_r * (1.0 - inside)).sum(axis=1)
                m_marg = p_r[:, 0] * mu_in_r[:, 0] + (1.0 - p_r[:, 0]) * mu_out_r[:, 0]
            else:
                m_marg = (p_r * mu_in_r).sum(axis=1)
            vals = (mu_obs - m_marg) ** 2 - theta0
        per_obs += w * vals
    b1 = float(per_obs.mean())
    se = float(per_obs.std(ddof=1) / math.sqrt(n))
    return b1, se


def check_moment_binary(seed: int = 0, n: int = 100_000) -> PropertyResult:
    """Mean orthogonal score at the enumerated target is zero within 4 SE."""
    config = DgpConfig(n=n, rho=0.0, delta=0.0, gamma=0.4, seed=seed)
    oracle = oracle_nuisances(config)
    data = generate(config)
    member, mu_in, mu_out, p = oracle.rows(data)
    s = multi_scores(data.y, member, mu_in, mu_out, p, theta=oracle.theta0, trim=1e-9)
    zscore = abs(s.mean()) / (s.std(ddof=1) / math.sqrt(n))
    return PropertyResult(
        "moment-condition-binary",
        bool(zscore < 4.0),
        f"|mean score| = {abs(s.mean()):.2e} ({zscore:.2f} SE) at theta0 = "
        f"{oracle.theta0:.4f}",
    )


def check_moment_multi(seed: int = 1, n: int = 100_000) -> PropertyResult:
    config = MultiLevelDgpConfig(n=n, gamma=0.3, delta=0.0, seed=seed)
    oracle = MultiLevelOracle(config)
    data = generate_multilevel(config)
    member, mu_in, mu_out, p = oracle.rows(data)
    s = multi_scores(data.y, member, mu_in, mu_out, p, theta=oracle.theta0, trim=1e-9)
    zscore = abs(s.mean()) / (s.std(ddof=1) / math.sqrt(n))
    return PropertyResult(
        "moment-condition-multivalued",
        bool(zscore < 4.0),
        f"|mean score| = {abs(s.mean()):.2e} ({zscore:.2f} SE) at theta0 = "
        f"{oracle.theta0:.4f}",
    )


def _binary_gateaux_inputs(seed: int, n: int):
    config = DgpConfig(n=n, rho=0.0, delta=0.0, gamma=0.5, seed=seed)
    oracle = oracle_nuisances(config)
    data = generate(config)
    member, mu_in, mu_out, p = oracle.rows(data)
    x = np.delete(data.q, config.instrument_index, axis=1)
    return data.y, data.d, x, member, mu_in, mu_out, p, oracle.theta0


def check_orthogonality_binary(seed: int = 2, n: int = 200_000) -> PropertyResult:
    y, d, x, member, mu_in, mu_out, p, theta0 = _binary_gateaux_inputs(seed, n)
    b1, se = _gateaux_check(y, d, x, member, mu_in, mu_out, p, theta0, "orthogonal")
    return PropertyResult(
        "orthogonality-binary-score",
        bool(abs(b1) < 3.0 * se),
        f"|b1| = {abs(b1):.2e} vs 3 SE = {3 * se:.2e}",
    )


def check_orthogonality_multi(seed: int = 3, n: int = 200_000) -> PropertyResult:
    config = MultiLevelDgpConfig(n=n, gamma=0.3, delta=0.0, seed=seed)
    oracle = MultiLevelOracle(config)
    data = generate_multilevel(config)
    member, mu_in, mu_out, p = oracle.rows(data)
    x = data.q[:, : config.n_covariates]
    b1, se = _gateaux_check(
        data.y, data.d, x, member, mu_in, mu_out, p, oracle.theta0, "orthogonal"
    )
    return PropertyResult(
        "orthogonality-multivalued-score",
        bool(abs(b1) < 3.0 * se),
        f"|b1| = {abs(b1):.2e} vs 3 SE = {3 * se:.2e}",
    )


def check_plain_score_not_orthogonal(seed: int = 2, n: int = 200_000) -> PropertyResult:
    """The uncorrected squared difference must FAIL the same Gateaux check."""
    y, d, x, member, mu_in, mu_out, p, theta0 = _binary_gateaux_inputs(seed, n)
    plain_theta = float(np.mean((mu_in[:, 0] - mu_out[:, 0]) ** 2))
    b1, se = _gateaux_check(y, d, x, member, mu_in, mu_out, p, plain_theta, "plain")
    return PropertyResult(
        "plain-difference-score-sensitivity",
        bool(abs(b1) > 3.0 * se),
        f"|b1| = {abs(b1):.2e} vs 3 SE = {3 * se:.2e} (must exceed)",
    )


def check_theta_linearity(seed: int = 4) -> PropertyResult:
    rng = np.random.default_rng(seed)
    n, L = 64, 3
    y = rng.standard_normal(n)
    member = np.eye(L, dtype=bool)[rng.integers(0, L, n)]
    mu_in = rng.standard_normal((n, L))
    mu_out = rng.standard_normal((n, L))
    p = rng.uniform(0.1, 0.9, (n, L))
    base = multi_scores(y, member, mu_in, mu_out, p, theta=0.0)
    ok = True
    for theta in (-3.0, -0.5, 0.25, 7.0):
        shifted = multi_scores(y, member, mu_in, mu_out, p, theta=theta)
        ok = ok and bool(np.array_equal(shifted, base - theta))
    return PropertyResult(
        "score-linearity-in-theta", ok, "score(theta) == score(0) - theta exactly"
    )


def check_binary_reduction(seed: int = 5) -> PropertyResult:
    rng = np.random.default_rng(seed)
    n = 128
    y = rng.standard_normal(n)
    z = rng.integers(0, 2, n).astype(float)
    mu1 = rng.standard_normal(n)
    mu0 = rng.standard_normal(n)
    p = rng.uniform(0.1, 0.9, n)
    multi = multi_scores(
        y, (z == 1.0).reshape(-1, 1), mu1.reshape(-1, 1), mu0.reshape(-1, 1),
        p.reshape(-1, 1), theta=0.3,
    )
    binary = score_binary(y, z, mu1, mu0, p, theta=0.3)
    ok = bool(np.array_equal(multi, binary))
    return PropertyResult(
        "multivalued-reduces-to-binary", ok, "L=1 scores identical to machine precision"
    )


def check_lasso_kkt(seed: int = 6) -> PropertyResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(5):
        n, p = 120, 8
        x = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[: 1 + trial % 3] = rng.uniform(0.5, 2.0, 1 + trial % 3)
        y = x @ beta + rng.standard_normal(n)
        fit = lasso_fit(x, y, family="gaussian", cv_folds=5, seed=seed + trial)
        gap = gaussian_kkt_gap(fit, x, y)
        active = fit.coef_std != 0.0
        slack = np.max(np.abs(gap) - fit.lambda_, initial=0.0)
        eq = (
            np.max(np.abs(gap[active] - fit.lambda_ * np.sign(fit.coef_std[active])))
            if active.any()
            else 0.0
        )
        worst = max(worst, float(slack), float(eq))
    return PropertyResult(
        "lasso-kkt-conditions", bool(worst <= 1e-6), f"worst KKT residual {worst:.2e}"
    )


def check_determinism(seed: int = 7) -> PropertyResult:
    from .selection import PipelineConfig, run_pipeline
    from .report import report_to_dict

    config = DgpConfig(n=600, p=6, seed=seed)
    data = generate(config)
    pipe = PipelineConfig(seed=seed, min_cell=5)
    first = json.dumps(report_to_dict(run_pipeline(data, pipe)), sort_keys=True)
    second = json.dumps(report_to_dict(run_pipeline(data, pipe)), sort_keys=True)
    return PropertyResult(
        "pipeline-determinism", first == second, "two runs serialize identically"
    )


ALL_CHECKS: list[Callable[[], PropertyResult]] = [
    check_moment_binary,
    check_moment_multi,
    check_orthogonality_binary,
    check_orthogonality_multi,
    check_plain_score_not_orthogonal,
    check_theta_linearity,
    check_binary_reduction,
    check_lasso_kkt,
    check_determinism,
]


def run_checks(corrupt_score_sign: bool = False) -> list[PropertyResult]:
    """Run every built-in property check.

    ``corrupt_score_sign`` flips the sign of the score's doubled cross term
    while the checks run, demonstrating that the orthogonality checks catch
    a corrupted score.
    """
    results = []
    if corrupt_score_sign:
        with scores.corrupted_cross_term():
            for check in ALL_CHECKS:
                results.append(check())
    else:
        for check in ALL_CHECKS:
            results.append(check())
    return results
