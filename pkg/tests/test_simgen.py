import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.special import expit
from scipy.stats import chi2, chisquare, norm

from patternsearch.core.patterns import Pattern, count_patterns
from patternsearch.core.pipeline import LpsConfig
from patternsearch.core.simgen import (
    GawSettings,
    SimSpec,
    gaw_variable_names,
    gen_example1,
    gen_example2,
    gen_example3,
    gen_gaw_style,
    replicate,
)


def test_generators_are_deterministic():
    first, _ = gen_example1(200, seed=3)
    second, _ = gen_example1(200, seed=3)
    other, _ = gen_example1(200, seed=4)
    assert first.same_data(second)
    assert not first.same_data(other)


def test_example1_marginals_and_pair_correlation():
    data, model = gen_example1(40_000, seed=0)
    X = data.X
    assert np.allclose(X.mean(axis=0), 0.5, atol=0.015)
    # Normales de corrélation 0.7 seuillées en 0 : corrélation binaire 2 arcsin(0.7) / π.
    expected = 2 * math.asin(0.7) / math.pi
    assert expected == pytest.approx(0.4936, abs=1e-4)
    for a, b in ((0, 3), (1, 4), (2, 5)):
        assert np.corrcoef(X[:, a], X[:, b])[0, 1] == pytest.approx(expected, abs=0.02)
    assert abs(np.corrcoef(X[:, 0], X[:, 6])[0, 1]) < 0.02
    assert model.coefficients() == {Pattern.of(1): 1.5, Pattern.of(2, 3): 1.5, Pattern.of(4, 5, 6): 2.0}


def test_example2_frequencies_and_copies():
    data, model = gen_example2(40_000, rho=0.0, seed=1)
    assert norm.cdf(1.0) == pytest.approx(0.8413, abs=1e-4)
    assert np.allclose(data.X.mean(axis=0), 0.8413, atol=0.015)
    copied, _ = gen_example2(500, rho=1.0, seed=2)
    assert np.array_equal(copied.X[:, 4:], copied.X[:, :4])
    assert model.patterns == (Pattern.of(1, 2, 3, 4),)
    with pytest.raises(ValueError):
        gen_example2(10, rho=1.5)


def test_example3_design_size():
    data, model = gen_example3(300, seed=0)
    assert data.n_variables == 20
    assert count_patterns(20, 4, include_constant=True) == 6196
    assert set(model.patterns) == {Pattern.of(9), Pattern.of(6, 7), Pattern.of(1, 2, 3, 4)}
    assert np.allclose(data.X[:, 8:].mean(), 0.5, atol=0.05)


def test_gaw_layout_and_model():
    data, model = gen_gaw_style(200, seed=0)
    names = gaw_variable_names()
    assert data.n_variables == 1351
    assert data.var_names == tuple(names)
    assert data.groups[3] == data.groups[4] == "SNP6_1"
    zeros = np.zeros(1351, dtype=int)
    assert model.evaluate(zeros) == pytest.approx(-4.8546)
    smoker = zeros.copy()
    smoker[names.index("smoking")] = 1
    assert model.evaluate(smoker) == pytest.approx(-4.8546 + 0.8603)
    third = Pattern(tuple(sorted(names.index(v) for v in ("sex", "SNP6_108_2", "SNP6_334_2"))))
    assert model.coefficients()[third] == 3.0
    assert third.label(names) == "sex×SNP6_108_2×SNP6_334_2"


def test_gaw_genotype_levels_are_exclusive():
    data, _ = gen_gaw_style(2000, seed=1, settings=GawSettings(n_snps=600))
    one, two = data.X[:, 3::2], data.X[:, 4::2]
    assert not np.any(one & two)
    assert two[:, 0].mean() == pytest.approx(0.05, abs=0.02)
    with pytest.raises(ValueError):
        gen_gaw_style(10, settings=GawSettings(n_snps=100))


def test_sim_spec_validation_and_defaults():
    assert SimSpec(example="ex3").default_q == 4
    assert SimSpec(example="gaw").default_q == 3
    with pytest.raises(ValidationError):
        SimSpec(example="ex4")
    with pytest.raises(ValidationError):
        SimSpec(example="ex2", rho=1.5)


def test_replicate_builds_three_rows():
    spec = SimSpec(example="ex1", n=300, seed=5)
    table = replicate(spec, 1, LpsConfig(n_lambdas=15, lambda_min_ratio=1e-2), q=3)
    rows = table.to_rows()
    assert [row["method"] for row in rows] == ["GACV", "BGACV", "LPS"]
    assert table.columns() == ["method", "x1", "x2×x3", "x4×x5×x6", "noise"]
    for row in rows:
        assert set(row) == set(table.columns())
        assert all(row[label] in (0, 1) for label in table.true_patterns)
    with pytest.raises(ValueError):
        replicate(spec, 0)


def test_responses_fit_true_probabilities_by_stratum():
    data, model = gen_example1(20_000, seed=5)
    indicators = np.column_stack([np.all(data.X[:, list(p.indices)] == 1, axis=1) for p in model.patterns])
    strata, inverse = np.unique(indicators, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    probs = expit(model.evaluate_matrix(data.X))
    observed, expected = [], []
    for s in range(len(strata)):
        members = inverse == s
        cases = float(data.y[members].sum())
        expected_cases = float(probs[members].sum())
        observed += [cases, members.sum() - cases]
        expected += [expected_cases, members.sum() - expected_cases]
    statistic, _ = chisquare(observed, expected, ddof=len(strata) - 1)
    assert chi2.sf(statistic, df=len(strata)) > 1e-3


@pytest.mark.parametrize("generator", [gen_example1, gen_example2, gen_example3])
def test_incidence_matches_mean_probability(generator):
    data, model = generator(30_000, seed=6)
    probs = expit(model.evaluate_matrix(data.X))
    standard_error = math.sqrt(float(np.mean(probs * (1 - probs))) / len(probs))
    assert abs(data.y.mean() - probs.mean()) < 4 * standard_error


def test_example2_copies_are_independent_without_recopy():
    data, _ = gen_example2(40_000, rho=0.0, seed=7)
    X = data.X.astype(float)
    for j in range(4):
        assert abs(np.corrcoef(X[:, j], X[:, j + 4])[0, 1]) < 0.02
    assert np.corrcoef(X[:, 0], X[:, 1])[0, 1] > 0.2
