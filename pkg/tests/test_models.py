import math

import numpy as np
import pytest

from bbmmi.engine import run
from bbmmi.models.birth_death import (BirthDeathSpec, bd_killed_make, bd_make, benchmark,
                                      constant_kill, single_state)
from bbmmi.models.brw import BRWSpec, GlobalSwitchBRW, ParticleSwitchBRW, brw_make
from bbmmi.models.nrw import NRWSlabSpec, exit_time, make_phi, nrw_Lh_over_h, nrw_make
from bbmmi.policies import ConstantPolicy

from conftest import stream


# -- birth-death ------------------------------------------------------------


def test_benchmark_rates():
    m = benchmark(10)
    assert m.rates(3) == (9.0, 3.0, 0.0)
    law = dict(m.jump_law(3))
    assert law[2] == pytest.approx(0.75) and law[4] == pytest.approx(0.25)


def test_benchmark_reflects_at_one_and_caps_at_M():
    m = benchmark(10)
    assert dict(m.jump_law(1)) == pytest.approx({1: 0.5, 2: 0.5})
    assert dict(m.jump_law(10)) == pytest.approx({9: 10 / 11, 10: 1 / 11})


def test_benchmark_left_fraction():
    m = benchmark(10)
    g = stream(1)
    n = 100_000
    x = 4
    left = sum(m.sample_motion_jump(x, g) == 3 for _ in range(n))
    p = x / (x + 1)
    assert abs(left / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_killed_benchmark():
    k = bd_killed_make(10)
    assert k.rates(1) == (1.0, 0.0, 9.0)
    with pytest.raises(ValueError):
        bd_killed_make(math.inf)


def test_benchmark_infinite_needs_flag():
    with pytest.raises(ValueError):
        benchmark(math.inf)
    m = benchmark(math.inf, unbounded_ok=True, truncation=50)
    assert m.has_overflow and m.branch_bound == math.inf


def test_two_dimensional_spec_at_origin():
    spec = BirthDeathSpec(2, [lambda x: 1.0, lambda x: 2.0], [lambda x: 0.0, lambda x: 0.0],
                          lambda x: 0.0, cap=3)
    m = bd_make(spec)
    assert m.motion_rate((0, 0)) == 3.0
    assert dict(m.jump_law((0, 0))) == pytest.approx({(1, 0): 1 / 3, (0, 1): 2 / 3})


def test_death_must_vanish_at_zero():
    spec = BirthDeathSpec(1, [lambda x: 1.0], [lambda x: 1.0], lambda x: 0.0, cap=3)
    with pytest.raises(ValueError):
        bd_make(spec)


def test_small_presets():
    assert single_state(-0.5).rates(0) == (0.0, 0.0, 0.5)
    assert constant_kill(0.2, 3).kill_rate(1) == 0.2


# -- branching random walk ----------------------------------------------------


def test_brw_regime_gate():
    spec = BRWSpec(n=5)
    m = GlobalSwitchBRW(spec)
    assert m.rates_env(2, (False, 0.0))[1] == 0.0
    assert all(m.rates_env(s, (True, 2.7))[1] == 2.7 for s in range(6))
    p = ParticleSwitchBRW(spec)
    assert p.branch_rate((3, False, 5.0)) == 0.0 and p.branch_rate((3, True, 2.7)) == 2.7


def test_brw_walk_clamped():
    m = brw_make(BRWSpec(n=3, p=0.5))
    g = stream(2)
    assert {m.sample_motion_jump(0, g) for _ in range(200)} == {0, 1}
    assert {m.sample_motion_jump(3, g) for _ in range(200)} == {2, 3}


def test_brw_on_fraction():
    # one particle kept alone by forced selection; the regime alternates at rate 1 each way
    m = brw_make(BRWSpec(n=10, s_on=1.0, s_off=1.0, B=1.0))
    T = 10_000.0
    tr = run([5], m, ConstantPolicy(0.0, 1.0), T, rng=stream(3), log_events=True)
    on, t_last, on_time = False, 0.0, 0.0
    for e in tr.events:
        if e.kind == "environment":
            if on:
                on_time += e.time - t_last
            on, t_last = not on, e.time
    if on:
        on_time += T - t_last
    assert abs(on_time / T - 0.5) < 0.02


def test_brw_level_is_exponential_B():
    m = GlobalSwitchBRW(BRWSpec(B=2.0))
    g = stream(4)
    levels = [m.env_jump((False, 0.0), g)[1] for _ in range(20000)]
    assert np.mean(levels) == pytest.approx(0.5, rel=0.03)


def test_brw_batch_event_budget_stops_blowups():
    # unconstrained replicas in a fast-branching regime must be cut off, not run on
    from bbmmi.batch import run_batch
    m = brw_make(BRWSpec(n=10, kill=0.3))
    b = run_batch(m, ConstantPolicy(0, 0), [5] * 5, 4.0, replicas=60, seed=1,
                  grid=np.linspace(0, 4, 5), max_events=2000)
    assert (~b.ok).sum() >= 1
    assert all(s == "ok" for s, ok in zip(b.status, b.ok) if ok)
    assert b.guard_tripped


def test_brw_validation():
    with pytest.raises(ValueError):
        BRWSpec(p=1.0)
    with pytest.raises(ValueError):
        brw_make(BRWSpec(), "nope")


# -- neutron random walk -------------------------------------------------------


@pytest.fixture
def slab():
    return NRWSlabSpec(L=1.0, V=(-1.0, -0.5, 0.5, 1.0), alpha=1.0)


def test_phi_profile():
    phi, dphi = make_phi(0.5)
    assert phi(0.1) == 0.1 and phi(0.7) == 0.5
    xs = np.linspace(0, 0.6, 601)
    vals = [phi(x) for x in xs]
    assert np.all(np.diff(vals) >= -1e-15)
    assert dphi(0.25) == pytest.approx(1.0) and dphi(0.5) == pytest.approx(0.0)
    assert max(dphi(x) for x in xs) <= 4 / 3 + 1e-12
    for x in (0.3, 0.4, 0.45):
        assert (phi(x + 1e-7) - phi(x - 1e-7)) / 2e-7 == pytest.approx(dphi(x), abs=1e-6)


def test_spec_validation():
    with pytest.raises(ValueError):
        NRWSlabSpec(V=(0.0, 1.0))
    with pytest.raises(ValueError):
        NRWSlabSpec(V=(0.5, 2.0), v_min=0.5, v_max=1.0)
    with pytest.raises(ValueError):
        NRWSlabSpec(pi=np.eye(3))


def test_plateau_has_no_tilt():
    spec = NRWSlabSpec(L=20.0, V=(-1.0, 1.0), alpha=1.0)
    m = nrw_make(spec)
    # delta = 1/2: every exit time is at least 9.5 in the middle
    assert m.h(10.0, 0) == spec.delta
    assert m.Lh(10.0, 0) == 0.0
    assert m.channel_rates((10.0, 1))[1:] == (0.0, 0.0)


def test_linear_region_exact(slab):
    m = nrw_make(slab)
    # moving right at speed 1, 0.1 from the face: exit time 0.1 < delta/2
    assert m.h(0.9, 3) == pytest.approx(0.1)


def test_linear_region_without_scatter():
    spec = NRWSlabSpec(L=1.0, V=(1.0,), alpha=lambda r, v: 0.0, alpha_max=1.0)
    for r in (0.8, 0.9, 0.95):
        assert nrw_Lh_over_h(spec, r, 1.0) == pytest.approx(-1 / (1.0 - r))


def test_transport_term_finite_difference(slab):
    m = nrw_make(slab)
    g = stream(5)
    eps = 1e-8
    for _ in range(100):
        k = int(g.integers(len(slab.V)))
        r = float(g.uniform(0.05, 0.95))
        v = slab.V[k]
        if exit_time(slab, r, k) <= eps:
            continue
        fd = (m.h(r + v * eps, k) - m.h(r - v * eps, k)) / (2 * eps)
        assert fd == pytest.approx(-m.dphi(exit_time(slab, r, k)), abs=1e-6)


def test_near_boundary_soft_killing(slab):
    m = nrw_make(slab)
    for r in np.linspace(0.76, 0.999, 50):
        lh = m.Lh(r, 3)
        assert lh <= -0.5 + 1e-12
        kap = m.channel_rates((r, 3))[2]
        assert kap == pytest.approx(-lh / m.h(r, 3))
        assert kap >= 1 / (2 * m.h(r, 3)) - 1e-9


def test_biased_scatter_kernel(slab):
    m = nrw_make(slab)
    x = (0.9, 3)
    law = m.scatter_law(x)
    expected = slab.pi[3] * m.h_row(0.9)
    assert law == pytest.approx(expected / expected.sum())
    assert m.channel_rates(x)[0] == pytest.approx(slab.alpha * float(slab.pi[3] @ m.h_row(0.9))
                                                  / m.h(0.9, 3))


def test_rate_bound_dominates(slab):
    m = nrw_make(slab)
    g = stream(6)
    for _ in range(200):
        k = int(g.integers(4))
        r = float(g.uniform(0.001, 0.999))
        H = m.lookahead((r, k))
        bound = m.rate_bound((r, k), H)
        for s in np.linspace(0, H, 20):
            assert m.event_rate(m.flow((r, k), s)) <= bound * (1 + 1e-12)


def test_untilted_has_no_branching(slab):
    m = nrw_make(slab, tilt=False)
    assert m.channel_rates((0.99, 3))[1:] == (0.0, 0.0)


def test_right_face_distance_kept_exactly(slab):
    m = nrw_make(slab, tilt=False)
    x = (1.0, 3, 1e-20)  # r has rounded to L, the carried distance has not
    assert m.boundary_hit_time(x) == pytest.approx(1e-20)
    assert m.h(*x) == pytest.approx(1e-20)
    y = m.flow(x, m.lookahead(x))
    assert y[2] == pytest.approx(5e-21)


def test_tilted_system_never_hits_faces(slab):
    from bbmmi.policies import NminNmaxPolicy
    m = nrw_make(slab)
    tr = run([(0.5, k % 4) for k in range(10)], m, NminNmaxPolicy(10, 10), 5.0, rng=stream(7),
             log_events=True)
    assert not any("hardkill" in (e.kind, e.cause) for e in tr.events)
    assert any(e.kind in ("resample", "select") for e in tr.events)
    assert all(0 < x[0] <= slab.L and x[2] > 0 for x in tr.final.states)
