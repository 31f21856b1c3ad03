import itertools

import numpy as np
import pytest

from stochgames import core, mdp, shapley

ALTERNATING = (1, 0, 0, 0, 1)


def random_mdp(rng, n_states, n_actions):
    acts = [int(rng.integers(1, n_actions + 1)) for _ in range(n_states)]
    return core.StochasticGame(
        tuple(f"z{k}" for k in range(n_states)),
        tuple(tuple(f"a{i}" for i in range(m)) for m in acts),
        (("-",),) * n_states,
        tuple(rng.uniform(0, 1, size=(m, 1)) for m in acts),
        tuple(rng.dirichlet(np.ones(n_states), size=(m, 1)) for m in acts),
    )


@pytest.mark.parametrize("lam", [1.0, 0.5, 0.1, 1e-3, 1e-6])
def test_alternating_policy_value(lam):
    v = mdp.evaluate_policy(core.example2(), ALTERNATING, lam)
    assert v[0] == pytest.approx(1.0 / (2.0 - lam), abs=1e-10)
    assert v[3] == 0.0


def test_straight_path_policy_value():
    # k1 -> k2 -> k3 -> 0*: rewards 1, 1, 1 then 0 forever
    lam = 0.3
    v = mdp.evaluate_policy(core.example2(), (0, 0, 0, 0, 0), lam)
    assert v[0] == pytest.approx(lam * (1 + (1 - lam) + (1 - lam) ** 2), abs=1e-14)


def test_two_cycle_geometric_oracle():
    g = mdp.deterministic_mdp([1.0, 0.0], [[1], [0]])
    for lam in (0.9, 0.2, 0.01):
        series = sum(lam * (1 - lam) ** (2 * t) for t in range(20_000))
        assert mdp.evaluate_policy(g, (0, 0), lam)[0] == pytest.approx(series, abs=1e-12)


def test_evaluate_policy_errors():
    g = core.example2()
    with pytest.raises(ValueError):
        mdp.evaluate_policy(g, ALTERNATING, 0.0)
    with pytest.raises(core.GameError):
        mdp.evaluate_policy(g, (2, 0, 0, 0, 0), 0.5)
    with pytest.raises(core.GameError):
        mdp.evaluate_policy(g, (0, 0), 0.5)
    with pytest.raises(core.GameError, match="one-player"):
        mdp.evaluate_policy(core.example1(), (0, 0, 0), 0.5)


def test_policy_values_are_rational_in_lambda():
    # a degree-(5, 5) rational function has 11 free coefficients, so it needs at least 11 fit points
    g = core.example2()
    xs = [1 / k for k in (2, 3, 4, 5, 6, 8, 9, 10, 11, 12, 13)]
    for f in mdp.iter_policies(g):
        ys = [mdp.evaluate_policy(g, f, x)[0] for x in xs]
        r = mdp.rational_fit(xs, ys, 5, 5)
        assert float(r(1 / 7)) == pytest.approx(mdp.evaluate_policy(g, f, 1 / 7)[0], abs=1e-9)


def test_policy_enumeration_order():
    g = core.example2()
    pols = list(mdp.iter_policies(g))
    assert mdp.policy_count(g) == len(pols) == 16
    assert pols[0] == (0, 0, 0, 0, 0) and pols[1] == (0, 0, 0, 0, 1)


def test_blackwell_example2():
    res = mdp.blackwell_policy(core.example2())
    assert res.policy == ALTERNATING
    assert res.lam0 is not None and res.lam0 >= 2.0**-4
    assert all(res.optimal[res.lams <= res.lam0])
    assert res.winners[-1] == res.winners[-2]
    assert len(res.table()) == res.lams.size


def test_blackwell_trivial_cases():
    single = mdp.deterministic_mdp([0.3, 0.7], [[1], [0]])
    res = mdp.blackwell_policy(single)
    assert res.policy == (0, 0) and res.lam0 == res.lams[0]
    dom = core.StochasticGame(("z",), (("good", "bad"),), (("-",),), ([[1.0], [0.0]],), ([[[1.0]], [[1.0]]],))
    res = mdp.blackwell_policy(dom)
    assert res.policy == (0,) and all(w == (0,) for w in res.winners)


def test_blackwell_stable_under_refinement_on_random_mdps():
    rng = np.random.default_rng(11)
    for _ in range(100):
        g = random_mdp(rng, int(rng.integers(1, 5)), 3)
        res = mdp.blackwell_policy(g)
        assert res.optimal[-1] and res.optimal[-2]


def test_blackwell_matches_discounted_solver():
    rng = np.random.default_rng(12)
    g = random_mdp(rng, 3, 3)
    res = mdp.blackwell_policy(g)
    lam = float(res.lams[-1])
    best = shapley.discounted_value(g, lam, 1e-12).v
    assert np.allclose(mdp.evaluate_policy(g, res.policy, lam), best, atol=1e-9)


def test_blackwell_refuses_huge_enumeration(monkeypatch):
    monkeypatch.setattr(mdp, "MAX_POLICIES", 10)
    with pytest.raises(ValueError, match="polic"):
        mdp.blackwell_policy(core.example2())


def test_total_variation():
    assert mdp.total_variation(mdp.Evaluation.uniform(8)) == pytest.approx(1 / 8)
    assert mdp.total_variation(mdp.Evaluation.geometric(0.3)) == 0.3
    assert mdp.total_variation(mdp.Evaluation.dirac(1)) == 1.0
    assert mdp.total_variation(mdp.Evaluation.dirac(3)) == 2.0
    w = [0.1, 0.4, 0.2, 0.3]
    assert mdp.total_variation(mdp.Evaluation.finite(w)) == pytest.approx(0.3 + 0.2 + 0.1 + 0.3)


def test_evaluation_validation():
    with pytest.raises(ValueError):
        mdp.Evaluation.finite([0.5, 0.4])
    with pytest.raises(ValueError):
        mdp.Evaluation.finite([1.5, -0.5])
    with pytest.raises(ValueError):
        mdp.Evaluation.geometric(0.0)
    with pytest.raises(ValueError):
        mdp.Evaluation.dirac(0)
    with pytest.raises(ValueError, match="tail mass"):
        mdp.theta_value(core.example2(), mdp.Evaluation.geometric(0.01), truncation=10)


def test_theta_value_identities():
    g = core.example2()
    for n in (1, 5, 40):
        vn = shapley.n_stage_values(g, n, keep_strategies=False).v
        assert np.allclose(mdp.theta_value(g, mdp.Evaluation.uniform(n)), vn, atol=1e-12)
    for lam in (0.5, 0.05):
        vl = shapley.discounted_value(g, lam, 1e-12).v
        assert np.allclose(mdp.theta_value(g, mdp.Evaluation.geometric(lam)), vl, atol=2e-9)
    assert mdp.theta_value(g, mdp.Evaluation.dirac(1))[0] == 1.0


def test_uniform_and_geometric_values_merge():
    g = core.example2()
    gaps = [abs(mdp.theta_value(g, mdp.Evaluation.uniform(n))[0] - mdp.theta_value(g, mdp.Evaluation.geometric(1 / n))[0])
            for n in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_shifted_values():
    g = core.example2()
    theta = mdp.Evaluation.uniform(4)
    assert np.array_equal(mdp.shifted_value(g, theta, 0), mdp.theta_value(g, theta))
    assert mdp.shifted_value(g, mdp.Evaluation.dirac(1), 1)[0] == 1.0
    # oracle: enumerate all action sequences of the deterministic graph
    succ = {0: [1, 4], 1: [2, 2], 2: [3, 3], 3: [3], 4: [2, 0]}
    reward = {0: [1, 1], 1: [1, 1], 2: [1, 1], 3: [0], 4: [1, 0]}
    for m in range(5):
        best = 0.0
        for acts in itertools.product((0, 1), repeat=m + 1):
            z = 0
            for t, a in enumerate(acts):
                a = min(a, len(succ[z]) - 1)
                if t == m:
                    best = max(best, reward[z][a])
                z = succ[z][a]
        assert mdp.shifted_value(g, mdp.Evaluation.dirac(1), m)[0] == best
    absorbing = mdp.deterministic_mdp([0.4], [[0]])
    for m in (0, 3):
        assert mdp.shifted_value(absorbing, mdp.Evaluation.geometric(0.2), m)[0] == pytest.approx(0.4)
    with pytest.raises(ValueError):
        mdp.shifted_value(g, theta, -1)


def test_v_star_upper():
    g = core.example2()
    fam = [mdp.Evaluation.uniform(n) for n in range(1, 51)]
    est = mdp.v_star_upper(g, fam, m_max=10)
    assert 0.5 <= est.values[0] <= 0.5 + 0.05
    assert "approximation" in est.caveat and est.family_size == 50
    absorbing = mdp.deterministic_mdp([0.7], [[0]])
    assert mdp.v_star_upper(absorbing, fam[:5], 3).values[0] == pytest.approx(0.7)
    # delta_1 family: best reward reachable within m_max steps
    chain = mdp.deterministic_mdp([0.0, 0.0, 1.0, 0.0], [[1], [2], [3], [3]])
    assert mdp.v_star_upper(chain, [mdp.Evaluation.dirac(1)], 1).values.tolist() == [0.0, 1.0, 1.0, 0.0]
    assert mdp.v_star_upper(chain, [mdp.Evaluation.dirac(1)], 2).values.tolist() == [1.0, 1.0, 1.0, 0.0]
    with pytest.raises(ValueError):
        mdp.v_star_upper(g, [], 1)


def test_leavable_v_star_examples():
    chain = mdp.deterministic_mdp([0.0, 0.0, 1.0], [[0, 1], [1, 2], [2]])
    assert mdp.leavable_v_star(chain).tolist() == [1.0, 1.0, 1.0]
    flat = mdp.deterministic_mdp([0.3, 0.3], [[0, 1], [1, 0]])
    assert mdp.leavable_v_star(flat).tolist() == [0.3, 0.3]
    isolated = mdp.deterministic_mdp([0.0, 1.0], [[0], [1]])
    assert mdp.leavable_v_star(isolated).tolist() == [0.0, 1.0]
    with pytest.raises(core.GameError, match="not leavable"):
        mdp.leavable_v_star(mdp.deterministic_mdp([0.0, 1.0], [[1], [1]]))


def test_leavable_v_star_is_the_smallest_excessive_majorant():
    rng = np.random.default_rng(13)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        succ = [sorted({z} | set(rng.choice(n, size=int(rng.integers(0, 3))).tolist())) for z in range(n)]
        r = rng.uniform(0, 1, n).round(2)
        g = mdp.deterministic_mdp(r, succ)
        w = mdp.leavable_v_star(g)

        def excessive_majorant(u):
            return np.all(u >= r - 1e-15) and all(u[z] >= u[s] - 1e-15 for z in range(n) for s in succ[z])

        assert excessive_majorant(w)
        for z in range(n):
            u = w.copy()
            u[z] -= 1e-3
            assert not excessive_majorant(u)
