import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as ss

from dcop_lab.mechanisms import MECHANISM_NUMBERS
from dcop_lab.problems import ConfigurationError
from dcop_lab.stats import bonferroni_posthoc, chi2_sf, kruskal_wallis, midranks, table2_relations

groups_st = st.lists(
    st.lists(st.integers(0, 8).map(float), min_size=2, max_size=12), min_size=2, max_size=6
)


def test_hand_ranked_fixture():
    # ranks 1..3 and 4..6: H = 12/(6*7) * (6^2/3 + 15^2/3) - 3*7
    expected = 12 / 42 * (36 / 3 + 225 / 3) - 21
    h, p = kruskal_wallis([[1, 2, 3], [10, 11, 12]])
    assert h == pytest.approx(expected, abs=1e-12)
    assert round(h, 3) == 3.857
    assert p == pytest.approx(math.erfc(math.sqrt(h / 2)), rel=1e-12)  # chi-square sf, 1 dof
    assert p == pytest.approx(ss.chi2.sf(h, 1), rel=1e-10)


def test_identical_observations():
    h, p = kruskal_wallis([[0.3] * 30] * 6)
    assert (h, p) == (0.0, 1.0)
    assert bonferroni_posthoc({str(i): [0.3] * 30 for i in range(6)}).ordered_pairs == []


def test_input_validation():
    with pytest.raises(ConfigurationError):
        kruskal_wallis([[1, 2]])
    with pytest.raises(ConfigurationError):
        kruskal_wallis([[1], [2, 3]])
    with pytest.raises(ConfigurationError):
        kruskal_wallis([[1, float("nan")], [2, 3]])


def test_midranks():
    assert list(midranks([10, 20, 20, 30])) == [1, 2.5, 2.5, 4]


@settings(max_examples=200, deadline=None)
@given(groups_st)
def test_matches_scipy_oracle(groups):
    pooled = [v for g in groups for v in g]
    h, p = kruskal_wallis(groups)
    if len(set(pooled)) == 1:
        assert (h, p) == (0.0, 1.0)
        return
    ref = ss.kruskal(*groups)
    assert h == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("x,df", [(0.5, 1), (3.857, 1), (10.0, 5), (40.0, 5), (120.0, 5)])
def test_chi2_survival_accuracy(x, df):
    assert chi2_sf(x, df) == pytest.approx(ss.chi2.sf(x, df), rel=1e-10, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(groups_st, st.randoms(use_true_random=False))
def test_permutation_invariance(groups, rnd):
    shuffled = [rnd.sample(g, len(g)) for g in groups]
    assert kruskal_wallis(shuffled) == kruskal_wallis(groups)


def _dunn_oracle(groups):
    pooled = np.concatenate(groups)
    ranks = ss.rankdata(pooled)
    n = len(pooled)
    c = ss.tiecorrect(ranks)
    var = n * (n + 1) / 12.0 * c
    out, start = [], 0
    means = []
    for g in groups:
        means.append(ranks[start : start + len(g)].mean())
        start += len(g)
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            se = math.sqrt(var * (1 / len(groups[i]) + 1 / len(groups[j])))
            out.append((means[i] - means[j]) / se if se else 0.0)
    return out


@settings(max_examples=100, deadline=None)
@given(groups_st)
def test_dunn_z_matches_oracle(groups):
    report = bonferroni_posthoc(groups)
    for pr, z in zip(report.pairs, _dunn_oracle(groups)):
        assert pr.z == pytest.approx(z, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(groups_st)
def test_no_symmetric_pairs_and_omnibus_gate(groups):
    report = bonferroni_posthoc(groups)
    pairs = set(report.ordered_pairs)
    assert not any((b, a) in pairs for a, b in pairs)
    if not report.omnibus_significant:
        assert not pairs


@settings(max_examples=50, deadline=None)
@given(groups_st)
def test_label_invariance(groups):
    names = [f"m{i}" for i in range(len(groups))]
    a = bonferroni_posthoc(dict(zip(names, groups)))
    order = list(reversed(range(len(groups))))
    b = bonferroni_posthoc({names[i]: groups[i] for i in order})
    assert sorted(a.ordered_pairs) == sorted(b.ordered_pairs)
    za = {frozenset((p.first, p.second)): abs(p.z) for p in a.pairs}
    zb = {frozenset((p.first, p.second)): abs(p.z) for p in b.pairs}
    assert za.keys() == zb.keys()
    for k in za:
        assert za[k] == pytest.approx(zb[k], rel=1e-12)


def test_monotone_separation():
    rng = np.random.default_rng(0)
    groups = [rng.uniform(0, 1, 10) for _ in range(4)]
    prev = None
    for shift in np.linspace(0, 2, 21):
        moved = [groups[0] + shift] + groups[1:]
        zs = [abs(p.z) for p in bonferroni_posthoc(moved).pairs if p.first == "0"]
        if prev is not None:
            assert all(z >= q - 1e-12 for z, q in zip(zs, prev))
        prev = zs


def test_single_separating_pair():
    a = np.linspace(0.9, 1.1, 30)
    b = np.linspace(1.9, 2.1, 30)
    dummy = np.linspace(0.0, 3.0, 30)
    samples = {"a": a, "b": b}
    samples.update({f"d{i}": dummy + i * 1e-3 for i in range(4)})
    report = bonferroni_posthoc(samples)
    assert report.omnibus_significant
    assert report.ordered_pairs == [("b", "a")]
    # rank arithmetic: mean ranks of a and b straddle the dummies symmetrically
    z = {frozenset((p.first, p.second)): p.z for p in report.pairs}
    assert abs(z[frozenset(("a", "b"))]) > 2 * abs(z[frozenset(("a", "d0"))]) - 0.5


def test_table2_relations():
    rng = np.random.default_rng(1)
    samples = {"nodiv": rng.uniform(0.6, 0.8, 30), "crowding": rng.uniform(0.0, 0.1, 30)}
    samples.update({m: rng.uniform(0.0, 0.8, 30) for m in ("cls", "opp")})
    report = bonferroni_posthoc(samples)
    assert "4>2" in table2_relations(report, MECHANISM_NUMBERS)
