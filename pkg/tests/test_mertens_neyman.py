import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stochgames import core, mertens_neyman as mn


def make_cfg(eps=0.1, C=1.0, M=2, lam0=0.05, lam1=None):
    cfg = mn.MNConfig(eps, C, M, lam0, lam1 or lam0, 0.0, 0.0, 1.0)
    cfg.d1 = mn.D_fn(cfg.lam1, cfg)
    return cfg


@pytest.fixture(scope="module")
def bigmatch_cfg():
    return mn.calibrate(core.bigmatch(), 0.05)


@pytest.fixture(scope="module")
def example1_cfg():
    return mn.calibrate(core.example1(), 0.2)


def constant_game(c=0.3):
    return core.StochasticGame(("s",), (("a", "b"),), (("x", "y"),), ([[c, c], [c, c]],),
                               ([[[1.0], [1.0]], [[1.0], [1.0]]],))


# --------------------------------------------------------------------------- D and phi

@pytest.mark.parametrize("M", [1, 2, 3])
def test_D_matches_quadrature(M):
    cfg = make_cfg(M=M)
    psi = lambda s: cfg.C * s ** (1 / M - 1)  # noqa: E731
    for y in (cfg.lam0 / 2, cfg.lam0 / 10, 1e-5):
        integral, _ = quad(lambda s: psi(s) / s, y, cfg.lam0, limit=200)
        assert mn.D_fn(y, cfg) == pytest.approx(12 / cfg.eps * integral + y**-0.5, rel=1e-9)


def test_D_closed_form_examples():
    cfg = make_cfg(eps=0.1, C=1.0, M=2, lam0=0.05)
    y = 0.003
    assert mn.D_fn(y, cfg) == pytest.approx(24 / 0.1 * (y**-0.5 - 0.05**-0.5) + y**-0.5, rel=1e-14)
    assert mn.D_fn(cfg.lam0, cfg) == pytest.approx(cfg.lam0**-0.5, rel=1e-15)
    with pytest.raises(ValueError):
        mn.D_fn(0.0, cfg)


@pytest.mark.parametrize("M", [1, 2, 4])
def test_D_inverse_round_trip(M):
    cfg = make_cfg(M=M, C=0.7)
    for y in np.geomspace(cfg.lam0, 1e-14, 40):
        assert mn.D_inv(mn.D_fn(y, cfg), cfg) == pytest.approx(y, rel=1e-10)
    assert mn.D_inv(mn.D_fn(cfg.lam0 / 2, cfg), cfg) == pytest.approx(cfg.lam0 / 2, rel=1e-10)
    with pytest.raises(ValueError):
        mn.D_inv(mn.D_fn(cfg.lam0, cfg) - 1.0, cfg)


@pytest.mark.parametrize("M", [1, 2, 3])
def test_phi_matches_quadrature(M):
    cfg = make_cfg(M=M)
    for lam in (cfg.lam0 / 2, cfg.lam0 / 10):
        integral, _ = quad(lambda y: mn.D_fn(y, cfg), 0, lam, limit=400)
        assert mn.phi_fn(lam, cfg) == pytest.approx(integral - lam * mn.D_fn(lam, cfg), abs=1e-9)


def test_phi_basic_properties():
    cfg = make_cfg()
    assert mn.phi_fn(0.0, cfg) == 0.0
    lams = np.geomspace(1e-12, cfg.lam0, 200)
    vals = [mn.phi_fn(x, cfg) for x in lams]
    assert vals[0] > 0 and all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        mn.phi_fn(cfg.lam0 * 1.01, cfg)


@pytest.mark.parametrize("M", [1, 2, 3])
def test_phi_derivative_identity(M):
    cfg = make_cfg(M=M)
    for lam in (cfg.lam0 / 3, cfg.lam0 / 30):
        h = lam * 1e-5
        dphi = (mn.phi_fn(lam + h, cfg) - mn.phi_fn(lam - h, cfg)) / (2 * h)
        dD = (mn.D_fn(lam + h, cfg) - mn.D_fn(lam - h, cfg)) / (2 * h)
        assert dphi == pytest.approx(-lam * dD, rel=1e-6)


# --------------------------------------------------------------------------- update law

def test_step_zero_increment():
    cfg = make_cfg(eps=0.1, lam1=1e-4)
    d = cfg.d1 + 10.0
    lam = mn.D_inv(d, cfg)
    v_next = 0.7
    d_next, lam_next = mn.step(cfg, d, v_next - 4 * cfg.eps, v_next)
    assert d_next == d and lam_next == pytest.approx(lam, rel=1e-14)
    floor_d, floor_lam = mn.step(cfg, cfg.d1, 0.0, 1.0)
    assert floor_d == cfg.d1 and floor_lam == cfg.lam1


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 50))
def test_update_bounds_on_calibrated_configs(g, v, extra):
    for cfg in (_BIG, _EX1):
        d = cfg.d1 + extra * cfg.d1 / 10
        lam = mn.D_inv(d, cfg)
        d_next, lam_next = mn.step(cfg, d, g, v)
        assert abs(d_next - d) <= 6
        assert abs(lam_next - lam) <= cfg.eps * lam / 6 * (1 + 1e-12)
        assert lam_next <= cfg.lam1


_BIG = mn.calibrate(core.bigmatch(), 0.05)
_EX1 = mn.calibrate(core.example1(), 0.2)


# --------------------------------------------------------------------------- calibration

def test_calibrate_bigmatch(bigmatch_cfg):
    cfg = bigmatch_cfg
    assert cfg.M == 1 and cfg.C <= 1e-6
    assert 0 < cfg.lam1 <= cfg.lam0 <= 1
    assert cfg.d1 == mn.D_fn(cfg.lam1, cfg)
    assert cfg.v_lam1 >= cfg.v_limit - cfg.eps
    assert mn.phi_fn(cfg.lam1, cfg) < cfg.eps
    for y in np.geomspace(cfg.lam1, cfg.lam1 * 1e-6, 50):
        assert mn.condition_iii(y, cfg.eps, cfg.C, cfg.M, cfg.lam0) > 6
    # (iii) binds: a slightly larger lambda1 would fail it
    assert mn.condition_iii(cfg.lam1 * 1.2, cfg.eps, cfg.C, cfg.M, cfg.lam0) <= 6


def test_calibrate_bigmatch_eps_point_one():
    cfg = mn.calibrate(core.bigmatch(), 0.1)
    assert cfg.M == 1 and cfg.v_limit == pytest.approx(0.5, abs=1e-8)


def test_calibrate_example1(example1_cfg):
    cfg = mn.calibrate(core.example1(), 0.1)
    assert cfg.M == 2
    # v_lam = 1/(1+sqrt(lam)) has |dv/dlam| <= 1/(2 sqrt(lam)), i.e. C = 1/2 before headroom
    assert 0.5 <= cfg.C <= 0.7
    assert example1_cfg.M == 2


def test_calibrate_rescales_payoffs():
    g = core.bigmatch()
    shifted = core.StochasticGame(g.states, g.actions1, g.actions2, tuple(3 * p - 1 for p in g.payoff), g.transition)
    cfg = mn.calibrate(shifted, 0.1)
    assert (cfg.offset, cfg.scale) == (-1.0, 3.0)
    assert cfg.to_original(cfg.v_limit) == pytest.approx(0.5, abs=1e-7)


def test_calibrate_constant_game():
    cfg = mn.calibrate(constant_game(), 0.1)
    assert cfg.M == 1 and cfg.C == mn.C_FLOOR and cfg.v_limit == 0.0


def test_calibrate_argument_checks():
    g = core.bigmatch()
    with pytest.raises(ValueError):
        mn.calibrate(g, 1.5)
    with pytest.raises(ValueError):
        mn.calibrate(g, 0.1, [0.1, 0.01, 0.001])
    with pytest.raises(ValueError):
        mn.calibrate(g, 0.1, [0.5 ** k for k in (1, 2, 3, 5, 6, 7, 8, 9)])
    with pytest.raises(mn.CalibrationError):
        mn.calibrate(g, 0.1, np.geomspace(1.0, 0.5, 8))


def test_no_lambda1_is_reported(monkeypatch):
    monkeypatch.setattr(mn, "LAM1_FLOOR", 0.01)
    with pytest.raises(mn.CalibrationError, match="no lambda1"):
        mn.calibrate(core.bigmatch(), 0.05)


# --------------------------------------------------------------------------- play

def test_act_bigmatch():
    g = core.bigmatch()
    for lam in (0.3, 1e-3):
        x = mn.act(g, 0, lam)
        assert x[0] == pytest.approx(lam / (1 + lam), abs=1e-9)
    assert mn.act(g, 1, 0.1).tolist() == [1.0]


def test_simulate_record_is_legal_and_reproducible(bigmatch_cfg):
    g = core.bigmatch()
    opp = core.uniform_opponent(g)
    a = mn.simulate(g, 0.05, 500, opp, 4, bigmatch_cfg)
    b = mn.simulate(g, 0.05, 500, opp, 4, bigmatch_cfg)
    assert a.to_bytes() == b.to_bytes()
    assert a.problems(g) == []
    assert len(a.lam) == len(a.d) == len(a.z) == 501
    assert np.all(a.lam <= bigmatch_cfg.lam1) and np.all(a.d >= bigmatch_cfg.d1)
    assert a.meta["T_threshold"] == pytest.approx(bigmatch_cfg.t_threshold)
    with pytest.raises(ValueError):
        mn.simulate(g, 0.05, 0, opp, 4, bigmatch_cfg)


def test_lambda_tracks_d(example1_cfg):
    g = core.example1()
    rec = mn.simulate(g, 0.2, 200, core.uniform_opponent(g), 1, example1_cfg)
    for lam, d in zip(rec.lam, rec.d):
        assert mn.D_fn(lam, example1_cfg) == pytest.approx(d, rel=1e-11)


def test_constant_game_average_is_exact():
    g = constant_game(0.3)
    cfg = mn.calibrate(g, 0.1)
    rec = mn.simulate(g, 0.1, 200, core.uniform_opponent(g), 0, cfg)
    assert np.all(rec.payoffs == 0.3)
    rep = mn.check_submartingale(g, rec, cfg)
    assert rep.ok and np.all(rep.increments >= rep.required - 1e-12)


def test_submartingale_on_bigmatch(bigmatch_cfg):
    g = core.bigmatch()
    oracle = mn.ValueOracle(mn.rescale_game(g)[0], bigmatch_cfg)
    for opp in (core.uniform_opponent(g), core.pure_opponent(g, 0), core.pure_opponent(g, 1), core.myopic_opponent(g)):
        rec = mn.simulate(g, 0.05, 1000, opp, 5, bigmatch_cfg, oracle)
        rep = mn.check_submartingale(g, rec, bigmatch_cfg, 1e-7, oracle)
        assert rep.ok, (rep.violations[:3], {k: v[:3] for k, v in rep.update_checks.items()})
        assert rep.consistency <= 1e-12


def test_submartingale_on_example1(example1_cfg):
    g = core.example1()
    for opp in (core.uniform_opponent(g), core.myopic_opponent(g), mn.discounted_opponent(g, 0.01)):
        rec = mn.simulate(g, 0.2, 150, opp, 6, example1_cfg)
        rep = mn.check_submartingale(g, rec, example1_cfg)
        assert rep.ok and rep.consistency <= 1e-9


def test_single_stage_record(bigmatch_cfg):
    g = core.bigmatch()
    rec = mn.simulate(g, 0.05, 1, core.uniform_opponent(g), 0, bigmatch_cfg)
    rep = mn.check_submartingale(g, rec, bigmatch_cfg)
    assert rep.increments.shape == (1,) and rep.ok


def test_record_without_internals_is_rejected(bigmatch_cfg):
    g = core.bigmatch()
    bare = core.PlayRecord(0, np.array([0, 0]), np.array([1]), np.array([1]), np.array([1.0]))
    with pytest.raises(ValueError, match="mixed actions"):
        mn.check_submartingale(g, bare, bigmatch_cfg)


def test_lattice_oracle_budget(bigmatch_cfg):
    oracle = mn.ValueOracle(core.bigmatch(), bigmatch_cfg)
    lam = bigmatch_cfg.lam1 * 0.8
    q = oracle.snap(lam)
    assert abs(q - lam) <= lam * oracle.log_ratio
    assert oracle.snap(bigmatch_cfg.lam1) == bigmatch_cfg.lam1
    first = oracle.get(lam)
    assert oracle.get(q) is first


def test_batch_budget_and_floor_hits(bigmatch_cfg):
    g = core.bigmatch()
    eps = 0.05
    res = mn.simulate_batch(g, eps, 5000, core.uniform_opponent(g), seed=2, reps=30, cfg=bigmatch_cfg)
    stats = [mn.trajectory_stats(r, bigmatch_cfg) for r in res.records]
    sums = np.array([s["sum_lambda"] for s in stats])
    hits = np.array([s["floor_hits"] for s in stats])
    se = sums.std(ddof=1) / math.sqrt(len(sums))
    assert sums.mean() <= (1 + eps) / (2 * eps) + 4 * se
    assert hits.mean() <= 1 / (bigmatch_cfg.lam1 * eps) + 4 * hits.std(ddof=1) / math.sqrt(len(hits))


def test_threads_give_identical_plays(bigmatch_cfg):
    g = core.bigmatch()
    opp = core.uniform_opponent(g)
    one = mn.simulate_batch(g, 0.05, 2000, opp, 3, 6, bigmatch_cfg, workers=1)
    many = mn.simulate_batch(g, 0.05, 2000, opp, 3, 6, bigmatch_cfg, workers=4)
    assert [r.to_bytes() for r in one.records] == [r.to_bytes() for r in many.records]


@pytest.mark.parametrize("name,eps", [("example1", 0.2), ("example2", 0.2)])
def test_guarantee_against_battery(name, eps):
    g = core.builtin_game(name)
    cfg = mn.calibrate(g, eps)
    target = cfg.to_original(cfg.v_limit - 8 * eps)
    opponents = [core.uniform_opponent(g), core.myopic_opponent(g), mn.discounted_opponent(g, 0.1),
                 mn.discounted_opponent(g, 0.001)]
    for opp in opponents:
        res = mn.simulate_batch(g, eps, 2000, opp, seed=1, reps=10, cfg=cfg)
        assert res.mean >= target - 4 * res.se


def test_bigmatch_guarantee_is_out_of_reach_against_myopic(bigmatch_cfg):
    # myopic always answers L, which pins d at d1; absorption then needs about 1/lambda1 stages
    g = core.bigmatch()
    T = 20_000
    rec = mn.simulate(g, 0.05, T, core.myopic_opponent(g), 1, bigmatch_cfg)
    assert np.all(rec.d == bigmatch_cfg.d1) and np.all(rec.actions2 == 0)
    p = bigmatch_cfg.lam1 / (1 + bigmatch_cfg.lam1)
    expected = 1 - sum((1 - p) ** t for t in range(1, T + 1)) / T
    assert expected < 0.01 < bigmatch_cfg.v_limit - 8 * bigmatch_cfg.eps
    assert 1 / bigmatch_cfg.lam1 > 1e6


def test_bigmatch_guarantee_against_stationary_opponents(bigmatch_cfg):
    g = core.bigmatch()
    target = bigmatch_cfg.v_limit - 8 * bigmatch_cfg.eps
    for opp in (core.uniform_opponent(g), mn.discounted_opponent(g, 0.1), core.pure_opponent(g, 1)):
        res = mn.simulate_batch(g, 0.05, 20_000, opp, seed=1, reps=10, cfg=bigmatch_cfg)
        assert res.mean >= target - 4 * res.se
