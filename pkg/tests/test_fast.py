import math

import numpy as np
import pytest

from bbmmi.engine import ExplosionGuard, PyEngine
from bbmmi.fast import FastEngine
from bbmmi.models.birth_death import BirthDeathSpec, bd_killed_make, bd_make, benchmark, single_state
from bbmmi.models.finite import StateSpaceOverflow
from bbmmi.policies import ConstantPolicy, NminNmaxPolicy, ReciprocalPolicy, fleming_viot

from conftest import stream

CASES = [
    (benchmark(5), NminNmaxPolicy(2, 6), [2] * 3, 3.0),
    (benchmark(10), NminNmaxPolicy(10, 10), [1] * 10, 2.0),
    (bd_killed_make(6), fleming_viot(6), [1] * 6, 3.0),
    (benchmark(4), ReciprocalPolicy(), [1] * 3, 1.5),
    (benchmark(4), ConstantPolicy(0.3, 0.6), [1, 2, 3], 2.0),
]


@pytest.mark.parametrize("case", range(len(CASES)))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bitwise_parity_with_reference(case, seed):
    model, policy, init, T = CASES[case]
    grid = np.linspace(0, T, 7)
    f = lambda x: x * x
    py = PyEngine(model, policy).run(init, T, grid, stream(seed), f=f)
    fa = FastEngine(model, policy).run(init, T, grid, stream(seed), f=f)
    assert np.array_equal(py.snapshots, fa.snapshots)


def test_advance_parity_and_copy():
    model, policy = benchmark(6), NminNmaxPolicy(3, 7)
    py, fa = PyEngine(model, policy), FastEngine(model, policy)
    gp, gf = stream(5), stream(5)
    sp, sf = py.system([1] * 4), fa.system([1] * 4)
    for t in (0.5, 1.0, 2.5):
        py.advance(sp, t, gp)
        fa.advance(sf, t, gf)
        conv = sf.to_system_state(model)
        assert conv.states == sp.states
        assert conv.log_weight == sp.log_weight
        assert conv.steps == sp.steps
    c = sf.copy()
    fa.advance(c, 4.0, gf)
    assert sf.time == 2.5 and c.time == 4.0


def test_extinction_freezes_snapshot():
    model = single_state(-3.0)
    tr = FastEngine(model, ConstantPolicy(0, 0)).run([0] * 2, 10.0, [0, 5, 10], stream(6))
    assert tr.snapshots[-1][1] == 0 and tr.snapshots[-1][0] == 10.0


def test_guard_and_overflow():
    with pytest.raises(ExplosionGuard):
        FastEngine(benchmark(10), NminNmaxPolicy(5, 5), max_events=50).run(
            [1] * 5, 10.0, None, stream(7))
    spec = BirthDeathSpec(1, [lambda x: 5.0], [lambda x: 0.0], lambda x: 0.0, truncation=3)
    model = bd_make(spec, unbounded_ok=True)
    with pytest.raises(StateSpaceOverflow):
        FastEngine(model, ConstantPolicy(0, 0)).run([0], 100.0, None, stream(8))


def test_rejects_non_finite_models():
    with pytest.raises(TypeError):
        FastEngine(object(), ConstantPolicy())
