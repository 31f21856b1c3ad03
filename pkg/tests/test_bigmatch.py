import numpy as np
import pytest

from stochgames import bigmatch as bm


def test_sigma_probabilities():
    assert bm.sigma_m_prob(0, 0) == 1.0
    assert bm.sigma_m_prob(0, 3) == 1 / 16
    assert bm.sigma_m_prob(-3, 3) == 1.0
    assert bm.sigma_m_prob(5, 2) == 1 / 64
    with pytest.raises(ValueError):
        bm.sigma_m_prob(-4, 3)
    with pytest.raises(ValueError):
        bm.sigma_m_prob(0, -1)


def test_small_cases_by_hand():
    # M = 0 plays T at once: L gives 1 forever, R gives 0 forever
    assert bm.worst_case_average(0, 7).value == 0.0
    # M = 1, T = 1: T w.p. 1/4 so L yields 1/4 and R yields 3/4
    wc = bm.worst_case_average(1, 1)
    assert wc.value == pytest.approx(0.25) and wc.witness == (bm.L,)


@pytest.mark.parametrize("M", [0, 1, 2, 5])
def test_dp_equals_brute_force(M):
    table = bm.worst_case_table(M, 12)
    for T in range(1, 13):
        best, _ = bm.brute_force_worst(M, T)
        assert table[T - 1] == pytest.approx(best, abs=1e-12)


def test_witness_attains_the_minimum():
    for M, T in [(1, 10), (3, 50), (10, 200)]:
        wc = bm.worst_case_average(M, T)
        assert len(wc.witness) == T
        assert bm.sequence_average(M, wc.witness) == pytest.approx(wc.value, abs=1e-12)


def test_sequence_average_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(50):
        M, T = int(rng.integers(0, 5)), int(rng.integers(1, 15))
        seq = tuple(int(j) for j in rng.integers(0, 2, T))
        assert bm.sequence_average(M, seq) == pytest.approx(bm._enumerated_average(M, seq), abs=1e-12)


def test_guarantee_bound_holds():
    for M in range(0, 21, 4):
        table = bm.worst_case_table(M, 200)
        T = np.arange(1, 201)
        assert np.all(table >= M / (2 * (M + 1)) - M / (2 * T) - 1e-10)


def test_cli_example_numbers():
    wc = bm.worst_case_average(10, 200)
    assert wc.bound == pytest.approx(10 / 22 - 10 / 400)
    assert wc.value >= wc.bound


def test_fictitious_bound():
    for M in (0, 1, 7, 30):
        assert np.all(bm.fictitious_table(M, 300) >= M / (2 * (M + 1)) - 1e-10)
    assert bm.fictitious_worst(4, 10) == bm.fictitious_table(4, 10)[-1]


def test_argument_checks():
    with pytest.raises(ValueError):
        bm.worst_case_average(1, 0)
    with pytest.raises(ValueError):
        bm.worst_case_average(1, bm.MAX_T + 1)
    with pytest.raises(ValueError):
        bm.brute_force_worst(1, 17)
    with pytest.raises(ValueError):
        bm.fictitious_table(-1, 5)


def test_opponent_parsing():
    assert bm.Opponent.parse("L", 3).data.tolist() == [0, 0, 0]
    assert bm.Opponent.parse("rlr", 3).data.tolist() == [1, 0, 1]
    assert bm.Opponent.parse("stationary:0.25", 3).data == 0.25
    for spec in ("LRX", "LR", "stationary:x", "banana"):
        with pytest.raises(ValueError):
            bm.Opponent.parse(spec, 3)
    with pytest.raises(ValueError):
        bm.Opponent("stationary", 1.5).validate(3)
    with pytest.raises(ValueError):
        bm.Opponent("table", 3).validate(3)
    with pytest.raises(ValueError):
        bm.Opponent("magic", None).validate(3)


def test_simulation_against_witness_matches_dp():
    M, T = 5, 100
    wc = bm.worst_case_average(M, T)
    res = bm.simulate(M, T, bm.Opponent("sequence", np.array(wc.witness)), seed=3, reps=4000)
    assert abs(res.mean - wc.value) <= 4 * res.se


def test_simulation_extremes():
    assert bm.simulate(0, 50, bm.Opponent.parse("R", 50), 1, 10).mean == 0.0
    assert bm.simulate(0, 50, bm.Opponent.parse("L", 50), 1, 10).mean == 1.0
    res = bm.simulate(5, 10_000, bm.Opponent.parse("stationary:0.5", 10_000), 2, 300)
    assert abs(res.mean - 0.5) <= 4 * res.se + 0.01
    assert np.isnan(bm.simulate(1, 5, bm.Opponent.parse("L", 5), 0, 1).se)


def test_simulation_records_are_legal_and_reproducible():
    from stochgames import core

    opp = bm.Opponent("table", lambda t, m: 0.8 if m > 0 else 0.2)
    a = bm.simulate(2, 300, opp, seed=9, reps=3)
    b = bm.simulate(2, 300, opp, seed=9, reps=3)
    assert a.sample.to_bytes() == b.sample.to_bytes()
    assert np.array_equal(a.averages, b.averages)
    assert a.sample.problems(core.bigmatch()) == []
    assert a.sample.mean_payoff() == a.averages[0]
