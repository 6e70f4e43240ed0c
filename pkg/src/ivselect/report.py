"""Serialization of selection reports: JSON dict round trip and summaries."""

from __future__ import annotations

from .crossfit import TestResult
from .selection import CandidateTest, SelectionReport

SCHEMA_VERSION = 1


def _test_to_dict(test: CandidateTest) -> dict:
    out = {
        "index": test.index,
        "name": test.name,
        "f_stat": test.f_stat,
        "error": test.error,
        "result": None,
    }
    if test.result is not None:
        r = test.result
        out["result"] = {
            "theta": r.theta,
            "sigma": r.sigma,
            "t_stat": r.t_stat,
            "p_value": r.p_value,
            "n": r.n,
            "n_bins": r.n_bins,
            "n_folds": r.n_folds,
            "per_fold_theta": list(r.per_fold_theta),
            "n_trimmed": r.n_trimmed,
            "outcome_r2": r.outcome_r2,
            "propensity_deviance": r.propensity_deviance,
        }
    return out


def report_to_dict(report: SelectionReport) -> dict:
    """JSON-ready dictionary; inverse of :func:`report_from_dict`."""
    return {
        "schema_version": SCHEMA_VERSION,
        "n": report.n,
        "candidate_names": list(report.candidate_names),
        "alpha": report.alpha,
        "fs_level": report.fs_level,
        "f_threshold": report.f_threshold,
        "f_stats": {str(j): v for j, v in report.f_stats.items()},
        "strong": list(report.strong),
        "excluded": {str(j): r for j, r in report.excluded.items()},
        "tests": {str(j): _test_to_dict(t) for j, t in report.tests.items()},
        "pass_set": list(report.pass_set),
        "mode": report.mode,
        "verdict": "identified" if report.identified else "rejected",
        "instrument_indices": list(report.instrument_indices),
        "instruments": [report.candidate_names[j] for j in report.instrument_indices],
        "covariate_indices": list(report.covariate_indices),
        "p_value": report.p_value,
        "effect_ols": list(report.effect_ols) if report.effect_ols else None,
        "effect_aipw": list(report.effect_aipw) if report.effect_aipw else None,
        "joint_cells": report.joint_cells,
        "small_joint_cells": list(report.small_joint_cells),
        "settings": {
            "n_folds": report.n_folds,
            "n_bins": report.n_bins,
            "trim": report.trim,
            "cv_folds": report.cv_folds,
            "seed": report.seed,
            "multiple_testing": report.multiple_testing,
        },
    }


def report_from_dict(payload: dict) -> SelectionReport:
    """Rebuild a :class:`SelectionReport` from its serialized form."""
    tests = {}
    for key, raw in payload["tests"].items():
        result = None
        if raw["result"] is not None:
            result = TestResult(**raw["result"])
        tests[int(key)] = CandidateTest(
            index=raw["index"],
            name=raw["name"],
            f_stat=raw["f_stat"],
            result=result,
            error=raw["error"],
        )
    settings = payload["settings"]
    return SelectionReport(
        n=payload["n"],
        candidate_names=list(payload["candidate_names"]),
        alpha=payload["alpha"],
        fs_level=payload["fs_level"],
        f_threshold=payload["f_threshold"],
        f_stats={int(j): v for j, v in payload["f_stats"].items()},
        strong=list(payload["strong"]),
        excluded={int(j): r for j, r in payload["excluded"].items()},
        tests=tests,
        pass_set=list(payload["pass_set"]),
        mode=payload["mode"],
        identified=payload["verdict"] == "identified",
        instrument_indices=list(payload["instrument_indices"]),
        covariate_indices=list(payload["covariate_indices"]),
        p_value=payload["p_value"],
        effect_ols=tuple(payload["effect_ols"]) if payload["effect_ols"] else None,
        effect_aipw=tuple(payload["effect_aipw"]) if payload["effect_aipw"] else None,
        joint_cells=payload["joint_cells"],
        small_joint_cells=list(payload["small_joint_cells"]),
        n_folds=settings["n_folds"],
        n_bins=settings["n_bins"],
        trim=settings["trim"],
        cv_folds=settings["cv_folds"],
        seed=settings["seed"],
        multiple_testing=settings["multiple_testing"],
    )


def summary_text(report: SelectionReport) -> str:
    """Human-readable summary; every number equals its JSON counterpart."""
    lines = []
    verdict = "identified" if report.identified else "rejected"
    lines.append(f"verdict: {verdict}")
    lines.append(
        f"n={report.n}  candidates={len(report.candidate_names)}  "
        f"alpha={report.alpha}  fs_level={report.fs_level!r}  "
        f"F threshold={report.f_threshold!r}"
    )
    lines.append(f"strong set ({len(report.strong)}):")
    for j in report.strong:
        lines.append(f"  {report.candidate_names[j]}: F={report.f_stats[j]!r}")
    for j, reason in report.excluded.items():
        lines.append(f"  excluded {report.candidate_names[j]}: {reason}")
    if report.tests:
        lines.append("conditional independence tests:")
        for j in sorted(report.tests):
            t = report.tests[j]
            if t.result is None:
                lines.append(f"  {t.name}: error: {t.error}")
            else:
                r = t.result
                lines.append(
                    f"  {t.name}: theta={r.theta!r} t={r.t_stat!r} p={r.p_value!r}"
                )
    if report.identified:
        instruments = ", ".join(
            report.candidate_names[j] for j in report.instrument_indices
        )
        lines.append(f"instrument: {instruments} (mode={report.mode})")
        if report.p_value is not None:
            lines.append(f"test p-value: {report.p_value!r}")
        if report.effect_ols is not None:
            lines.append(
                f"treatment effect (OLS): {report.effect_ols[0]!r} "
                f"se={report.effect_ols[1]!r}"
            )
        if report.effect_aipw is not None:
            lines.append(
                f"treatment effect (AIPW): {report.effect_aipw[0]!r} "
                f"se={report.effect_aipw[1]!r}"
            )
        if report.small_joint_cells:
            lines.append(
                "warning: thin joint instrument cells: "
                + ", ".join(report.small_joint_cells)
            )
    else:
        lines.append("no candidate passed the conditional independence test")
    return "\n".join(lines) + "\n"
