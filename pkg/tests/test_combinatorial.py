from fractions import Fraction
from math import comb

import numpy as np
import pytest

from banditnet.combinatorial import (CADTS, EnumerationTooLarge, Superarm, WeightGrid, cadts_step,
                                     count_superarms, enumerate_superarms, superarm_matrix,
                                     write_superarms_csv)
from banditnet.core import binarize, cumulative_regret, make_rng

from conftest import PinnedBeta


def brute_force(k: int) -> list[tuple[int, ...]]:
    """Independent oracle: fill the last asset first, then sort."""
    d = 2 * k
    out = []

    def rec(prefix, left, slots):
        if slots == 1:
            out.append(tuple(reversed(prefix + [left])))
            return
        for v in range(left, -1, -1):
            rec(prefix + [v], left - v, slots - 1)
    rec([], d, k)
    return sorted(out)


def test_weight_grid_levels():
    g = WeightGrid(3)
    assert g.step == Fraction(1, 6)
    assert len(g.levels) == 7
    assert g.levels[-1] == 1 and g.levels[2] == Fraction(1, 3)


def test_two_assets():
    arms = enumerate_superarms(WeightGrid(2))
    assert [s.fractions for s in arms] == [
        (0, 1), (Fraction(1, 4), Fraction(3, 4)), (Fraction(1, 2), Fraction(1, 2)),
        (Fraction(3, 4), Fraction(1, 4)), (1, 0)]


def test_four_assets_count():
    assert len(enumerate_superarms(4)) == 165 == comb(11, 3)


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_matches_brute_force(k):
    arms = enumerate_superarms(k)
    assert [s.numerators for s in arms] == brute_force(k)
    assert len(arms) == comb(3 * k - 1, k - 1) == count_superarms(k)


def test_max_nonzero_filter():
    arms = enumerate_superarms(2, max_nonzero=1)
    assert [s.numerators for s in arms] == [(0, 4), (4, 0)]
    for k, n in [(3, 2), (4, 2), (5, 3)]:
        got = enumerate_superarms(k, max_nonzero=n)
        assert len(got) == count_superarms(k, n)
        assert len(got) == sum(1 for c in brute_force(k) if sum(1 for v in c if v) <= n)
        assert all(len(s.support) <= n for s in got)


def test_exact_sums_and_vertices():
    for k in range(1, 6):
        arms = enumerate_superarms(k)
        assert all(sum(s.fractions) == 1 for s in arms)
        vertices = {s.numerators for s in arms if len(s.support) == 1}
        assert len(vertices) == k


def test_cap_error_names_count():
    with pytest.raises(EnumerationTooLarge, match="1562275"):
        enumerate_superarms(9, cap=10**6)
    with pytest.raises(EnumerationTooLarge):
        CADTS(5, make_rng(0), cap=100)


def test_superarm_validation():
    with pytest.raises(ValueError):
        Superarm((1, 2), 4)
    with pytest.raises(ValueError):
        Superarm((5, -1), 4)


def test_csv_export():
    text = write_superarms_csv(enumerate_superarms(2), asset_names=["A", "B"])
    assert text.splitlines() == ["superarm,A,B", "0,0.0,1.0", "1,0.25,0.75", "2,0.5,0.5",
                                 "3,0.75,0.25", "4,1.0,0.0"]
    with pytest.raises(ValueError):
        write_superarms_csv(enumerate_superarms(2), asset_names=["A"])


def test_csv_export_to_file(tmp_path):
    write_superarms_csv(enumerate_superarms(3), tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 1 + 28


# ---- CADTS

def test_weighted_reward_and_binarization():
    c = CADTS(2, make_rng(0))
    pr = c.portfolio_rewards([0.10, -0.10])
    best = int(np.argmax(pr))
    assert c.superarms[best].numerators == (4, 0) and pr[best] == pytest.approx(0.10)
    half = [s.numerators for s in c.superarms].index((2, 2))
    assert pr[half] == 0.0 and binarize(pr[half], pr) == 0


def test_step_plays_pinned_superarm():
    c = CADTS(2, make_rng(0))
    c.policy.rng = PinnedBeta(2)
    s, rec = c.step([0.10, -0.10], t=5)
    assert s.numerators == (2, 2)
    assert (rec.step, rec.chosen, rec.binary_reward) == (5, 2, 0)
    assert rec.raw_reward == 0.0
    assert c.policy.trace(2).beta == 1.0 and c.policy.trace(4).beta == 0.0


@pytest.mark.parametrize("arm", range(5))
def test_flat_rewards_always_win(arm):
    c = CADTS(2, make_rng(0))
    c.policy.rng = PinnedBeta(arm)
    _, rec = c.step([0.05, 0.05])
    assert rec.binary_reward == 1


def test_argmax_matches_brute_force():
    rng = np.random.default_rng(3)
    c = CADTS(4, make_rng(0))
    for _ in range(50):
        r = rng.normal(0, 0.02, 4)
        exact = max(brute_force(4), key=lambda nums: sum(Fraction(n, 8) * Fraction(x) for n, x in zip(nums, r)))
        pr = c.portfolio_rewards(r)
        assert c.superarms[int(np.argmax(pr))].numerators == exact
        assert len(exact) == 4 and sum(1 for v in exact if v) == 1


def test_regret_composes():
    c = CADTS(3, make_rng(2))
    rng = np.random.default_rng(2)
    records = [c.step(rng.normal(size=3), t)[1] for t in range(200)]
    assert cumulative_regret(records) == sum(1 - r.binary_reward for r in records)
    assert c.policy.t == 200


def test_cadts_step_and_shape_check():
    c = CADTS(3, make_rng(0))
    assert isinstance(cadts_step(c, [0.0, 0.1, 0.2]), Superarm)
    with pytest.raises(ValueError):
        c.step([0.1, 0.2])


def test_matrix_rows_sum_to_one():
    m = superarm_matrix(enumerate_superarms(4))
    assert m.shape == (165, 4)
    assert np.all(m.sum(axis=1) == 1.0)
