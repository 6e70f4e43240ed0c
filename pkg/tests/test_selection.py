import numpy as np
import pytest

from ivselect.crossfit import TestResult
from ivselect.dataset import Dataset
from ivselect.exceptions import InputError
from ivselect.selection import (
    CandidateTest,
    PartitionSearch,
    PipelineConfig,
    choose_final,
    estimate_effect,
    f_threshold,
    run_pipeline,
    select_strong,
)
from ivselect.simulation import DgpConfig, generate


def _fake_test(index, p_value, f_stat=10.0, theta=0.0):
    result = TestResult(
        theta=theta,
        sigma=1.0,
        t_stat=0.0,
        p_value=p_value,
        n=100,
        n_bins=1,
        n_folds=2,
        per_fold_theta=[theta, theta],
        n_trimmed=0,
        outcome_r2=0.5,
        propensity_deviance=1.0,
    )
    return CandidateTest(index=index, name=f"q{index}", f_stat=f_stat, result=result)


class TestSelectStrong:
    def test_threshold_level_one_keeps_everything(self):
        rng = np.random.default_rng(0)
        n = 2000
        q = (rng.random((n, 5)) < 0.5).astype(float)
        d = (rng.random(n) < 0.5).astype(float)
        data = Dataset(y=rng.standard_normal(n), d=d, q=q)
        selection = select_strong(data, fs_level=1.0)
        assert selection.threshold == 0.0
        assert selection.strong == list(range(5))

    def test_null_screening_is_stringent(self):
        # independent treatment: the strong set is empty in most replications
        rng_master = np.random.default_rng(123)
        empty = 0
        reps = 100
        for _ in range(reps):
            seed = int(rng_master.integers(2**31))
            rng = np.random.default_rng(seed)
            n = 4000
            q = (rng.random((n, 20)) < 0.5).astype(float)
            d = (rng.random(n) < 0.5).astype(float)
            data = Dataset(y=rng.standard_normal(n), d=d, q=q)
            selection = select_strong(data)
            empty += not selection.strong
        assert empty >= 80

    def test_design_instrument_always_strong_at_16000(self):
        hits = 0
        for seed in range(100):
            config = DgpConfig(n=16000, delta=0.0, gamma=0.0, seed=seed)
            data = generate(config)
            selection = select_strong(data)
            hits += config.instrument_index in selection.strong
        assert hits >= 99

    def test_common_support_guard_excludes_thin_cells(self):
        rng = np.random.default_rng(5)
        n = 300
        q = np.column_stack(
            [
                (rng.random(n) < 0.5).astype(float),
                np.concatenate([np.ones(4), np.zeros(n - 4)]),  # 4 obs at level 1
            ]
        )
        d = (q[:, 1] + 0.8 * q[:, 0] + rng.standard_normal(n) > 0.4).astype(float)
        y = rng.standard_normal(n)
        data = Dataset(y=y, d=d, q=q)
        selection = select_strong(data, fs_level=1.0)
        assert 1 in selection.excluded
        assert "observations" in selection.excluded[1]


class TestChooseFinal:
    def test_empty_pass_set_rejects(self):
        tests = {0: _fake_test(0, p_value=0.01)}
        final = choose_final(tests, alpha=0.10)
        assert not final.identified

    def test_singleton(self):
        tests = {3: _fake_test(3, p_value=0.4)}
        final = choose_final(tests, alpha=0.10)
        assert final.identified
        assert final.instrument_indices == [3]
        assert final.p_value == 0.4

    def test_pmax_takes_largest_p(self):
        tests = {1: _fake_test(1, p_value=0.3), 2: _fake_test(2, p_value=0.7)}
        final = choose_final(tests, mode="pmax", alpha=0.10)
        assert final.instrument_indices == [2]

    def test_ties_broken_by_f_then_index(self):
        tests = {
            4: _fake_test(4, p_value=0.5, f_stat=8.0),
            2: _fake_test(2, p_value=0.5, f_stat=12.0),
        }
        assert choose_final(tests, alpha=0.1).instrument_indices == [2]
        tests = {
            4: _fake_test(4, p_value=0.5, f_stat=8.0),
            2: _fake_test(2, p_value=0.5, f_stat=8.0),
        }
        assert choose_final(tests, alpha=0.1).instrument_indices == [2]

    def test_mode_all_pools_passing(self):
        tests = {
            1: _fake_test(1, p_value=0.3),
            5: _fake_test(5, p_value=0.7),
            7: _fake_test(7, p_value=0.02),
        }
        final = choose_final(tests, mode="all", alpha=0.10)
        assert final.instrument_indices == [1, 5]

    def test_failed_candidates_cannot_pass(self):
        tests = {
            1: CandidateTest(index=1, name="q1", f_stat=9.0, error="boom"),
            2: _fake_test(2, p_value=0.5),
        }
        final = choose_final(tests, alpha=0.10)
        assert final.instrument_indices == [2]

    def test_tightening_alpha_never_shrinks_pass_set(self):
        tests = {j: _fake_test(j, p_value=p) for j, p in enumerate(
            (0.02, 0.08, 0.12, 0.35, 0.9)
        )}
        def pass_set(alpha):
            return {
                t.index
                for t in tests.values()
                if t.result is not None and t.result.p_value > alpha
            }
        alphas = (0.20, 0.10, 0.05, 0.01)
        for tight, loose in zip(alphas, alphas[1:]):
            assert pass_set(tight) <= pass_set(loose)


class TestEstimateEffect:
    def test_exact_treatment_outcome(self, rng):
        n = 600
        q = (rng.random((n, 3)) < 0.5).astype(float)
        d = (rng.random(n) < 0.5).astype(float)
        data = Dataset(y=d.copy(), d=d, q=q)
        effect = estimate_effect(data, [0, 1, 2], seed=1)
        assert effect.ols == pytest.approx(1.0, abs=1e-10)
        assert effect.ols_se == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.slow
    def test_design_effect_recovery_and_aipw_agreement(self):
        config = DgpConfig(n=16000, delta=0.0, gamma=0.0, seed=3)
        data = generate(config)
        covariates = [j for j in range(20) if j != config.instrument_index]
        effect = estimate_effect(data, covariates, seed=3)
        assert effect.ols == pytest.approx(1.0, abs=3.0 * effect.ols_se)
        joint_se = np.hypot(effect.ols_se, effect.aipw_se)
        assert abs(effect.ols - effect.aipw) <= 3.0 * joint_se


class TestRunPipeline:
    def test_all_noise_candidates_rejected(self):
        rng = np.random.default_rng(11)
        n = 2000
        q = (rng.random((n, 6)) < 0.5).astype(float)
        d = (rng.random(n) < 0.5).astype(float)
        data = Dataset(y=rng.standard_normal(n), d=d, q=q)
        report = run_pipeline(data, PipelineConfig(seed=11))
        assert not report.identified
        assert report.instrument_indices == []
        assert report.effect_ols is None

    def test_pass_set_subset_of_strong(self, rng):
        config = DgpConfig(n=2000, delta=0.0, gamma=0.0, seed=21)
        data = generate(config)
        report = run_pipeline(data, PipelineConfig(seed=21))
        assert set(report.pass_set) <= set(report.strong)
        if report.identified:
            assert set(report.instrument_indices) <= set(report.pass_set)
            assert report.p_value > report.alpha

    def test_single_arm_treatment_rejected(self, rng):
        q = (rng.random((100, 3)) < 0.5).astype(float)
        data = Dataset(y=rng.standard_normal(100), d=np.ones(100), q=q)
        with pytest.raises(InputError):
            run_pipeline(data)

    def test_stage_label_on_errors(self, rng):
        n = 300
        col = (rng.random(n) < 0.5).astype(float)
        q = np.column_stack([col, col])  # collinear candidates
        d = (col + rng.standard_normal(n) > 0.5).astype(float)
        data = Dataset(y=rng.standard_normal(n), d=d, q=q)
        with pytest.raises(Exception) as exc:
            run_pipeline(data, PipelineConfig(seed=0))
        assert "strong-selection" in str(exc.value)

    def test_partition_search_estimator(self):
        config = DgpConfig(n=1500, delta=0.0, gamma=0.0, seed=33)
        data = generate(config)
        search = PartitionSearch(random_state=33)
        search.fit(data.y, data.d, data.q)
        assert search.report_.n == 1500
        assert search.identified_ == search.report_.identified
        params = search.get_params()
        assert params["alpha"] == 0.10
        assert params["mode"] == "pmax"


def test_f_threshold_matches_normal_quantile():
    # chi-squared(1) upper quantile via the squared normal inverse
    assert f_threshold(0.05) == pytest.approx(3.8414588206941236, abs=1e-9)
    assert f_threshold(1.0) == 0.0
