import numpy as np
import pytest
from pydantic import ValidationError
from scipy.special import expit

from patternsearch.core.patterns import BinaryDataset, Pattern
from patternsearch.core.pipeline import LpsConfig, run_lps, scramble_study, screen_variables
from patternsearch.exceptions import BudgetExceededError, PatternArgumentError

FAST = LpsConfig(n_lambdas=20, lambda_min_ratio=1e-2)


def _signal_dataset(seed=0, n=300, p=4, strong=0):
    rng = np.random.default_rng(seed)
    X = (rng.random((n, p)) < 0.5).astype(np.int8)
    f = -1.0 + 2.5 * X[:, strong]
    y = (rng.random(n) < expit(f)).astype(np.int8)
    return BinaryDataset(X, y, tuple(f"v{j}" for j in range(p)))


def test_run_lps_recovers_strong_main_effect():
    data = _signal_dataset(0)
    report = run_lps(data, 2, FAST)
    assert Pattern.of(1) in report.final_patterns
    assert set(report.final_patterns) <= set(report.step1.model.patterns)
    assert report.n_columns == 11
    assert report.q_effective == 2
    assert sum(row["selected"] for row in report.score_rows()) == 1
    assert report.elimination.n_fits >= 1


def test_report_dict_has_all_sections():
    report = run_lps(_signal_dataset(1), 2, FAST)
    payload = report.to_dict()
    for key in ("dataset_digest", "var_names", "q", "config", "step1", "step1_gacv", "score_path", "step2", "timing"):
        assert key in payload
    assert payload["var_names"] == ["v0", "v1", "v2", "v3"]
    assert payload["config"]["n_lambdas"] == 20
    assert "non ajustées" in payload["step2"]["note"]
    assert payload["step2"]["coefficients"][0]["pattern"] == "constant"


def test_constant_response_short_circuits():
    X = np.random.default_rng(0).integers(0, 2, size=(30, 3))
    report = run_lps(BinaryDataset(X, np.ones(30)), 2, FAST)
    assert report.constant_response
    assert report.step1 is None
    assert report.final_model.terms == ()
    assert report.final_fit.separation_flag
    assert report.score_rows() == []


def test_budget_is_enforced():
    with pytest.raises(BudgetExceededError):
        run_lps(_signal_dataset(2, p=5), 2, LpsConfig(max_columns=10))


@pytest.mark.parametrize("q", [0, 5, 1.5, True])
def test_invalid_order_rejected(q):
    with pytest.raises(PatternArgumentError):
        run_lps(_signal_dataset(3), q, FAST)


def test_screening_clamps_order_and_remaps_indices():
    data = _signal_dataset(4, n=400, p=5, strong=3)
    config = FAST.model_copy(update={"screening": True, "screening_alpha": 1e-8})
    report = run_lps(data, 3, config)
    assert report.screening.kept == (3,)
    assert report.q_effective == 1
    assert report.final_patterns == (Pattern.of(4),)
    assert report.to_dict()["step2"]["model"]["terms"][0]["pattern"] == "v3"


def test_screening_keeps_response_copy_and_drops_constants(caplog):
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, size=60)
    X = np.column_stack([y, np.zeros(60, dtype=int), rng.integers(0, 2, size=60), 1 - y])
    data = BinaryDataset(X, y, ("copy", "flat", "noise", "sexM"), groups=("copy", "flat", "noise", "copy"))
    result = screen_variables(data, 0.05)
    assert 0 in result.kept
    assert 1 not in result.kept
    assert result.dropped_constant == ("flat",)
    assert "constante" in caplog.text
    assert result.dataset.var_names[0] == "copy"


def test_screening_auto_threshold():
    assert LpsConfig().screening_enabled(31)
    assert not LpsConfig().screening_enabled(30)
    assert not LpsConfig(screening=False).screening_enabled(500)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        LpsConfig(lambdas=10)
    with pytest.raises(ValidationError):
        LpsConfig(criterion="aic")


def test_scramble_requires_positive_reps():
    with pytest.raises(ValueError):
        scramble_study(_signal_dataset(6, n=60, p=3), 2, FAST, reps=0)


def test_scramble_is_deterministic():
    data = _signal_dataset(7, n=80, p=3)
    first = scramble_study(data, 2, FAST, reps=2, seed=11, n_jobs=1)
    second = scramble_study(data, 2, FAST, reps=2, seed=11, n_jobs=2)
    assert first.runs == second.runs
    assert len(first.runs) == 2
    assert first.total == sum(len(run) for run in first.runs)
    assert [row["run"] for row in first.run_rows()] == [0, 1]


def test_permutation_is_never_identity():
    data = BinaryDataset(np.array([[0], [1]]), np.array([0, 1]))
    for seed in range(10):
        assert data.permuted(np.random.default_rng(seed)).y.tolist() == [1, 0]


def test_run_lps_on_wide_small_sample():
    rng = np.random.default_rng(2)
    X = (rng.random((25, 8)) < 0.5).astype(np.int8)
    y = (rng.random(25) < expit(-0.5 + 1.2 * X[:, 0])).astype(np.int8)
    y[:2] = (0, 1)
    report = run_lps(BinaryDataset(X, y), 3, LpsConfig())
    assert report.step1.fit.support_size < 25
    assert set(report.final_patterns) <= set(report.step1.model.patterns)


def test_screening_keeps_pure_noise_at_about_alpha():
    rng = np.random.default_rng(12)
    X = (rng.random((300, 200)) < 0.5).astype(np.int8)
    y = (rng.random(300) < 0.4).astype(np.int8)
    result = screen_variables(BinaryDataset(X, y), 0.05)
    assert 0.01 <= len(result.kept) / 200 <= 0.10
    assert result.threshold == 0.05


def test_bonferroni_screening_keeps_signal_and_drops_noise():
    rng = np.random.default_rng(13)
    X = (rng.random((500, 100)) < 0.5).astype(np.int8)
    y = (rng.random(500) < expit(-1.0 + 2.0 * X[:, 7])).astype(np.int8)
    data = BinaryDataset(X, y)
    result = screen_variables(data, 0.05, correction="bonferroni")
    assert result.threshold == pytest.approx(0.05 / 100)
    assert 7 in result.kept
    assert len(result.kept) <= 2
    assert result.to_dict()["threshold"] == pytest.approx(5e-4)
    assert len(screen_variables(data, 0.05).kept) > len(result.kept)
    with pytest.raises(ValueError):
        screen_variables(data, 0.05, correction="holm")
