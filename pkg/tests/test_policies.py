import math

import numpy as np
import pytest

from bbmmi.policies import (ConstantPolicy, NminNmaxPolicy, ReciprocalPolicy, fleming_viot,
                            make_policy)


def test_nmin_nmax_indicators():
    pol = NminNmaxPolicy(3, 5)
    assert [pol.p_of_size(n) for n in range(2, 7)] == [0.0, 1.0, 0.0, 0.0, 0.0]
    assert [pol.q_of_size(n) for n in range(2, 7)] == [0.0, 0.0, 0.0, 1.0, 0.0]


def test_size_tables_match_scalar_rules():
    pol = NminNmaxPolicy(2, 6)
    p, q = pol.size_tables(8)
    assert np.array_equal(p, [pol.p_of_size(n) for n in range(9)])
    assert np.array_equal(q, [pol.q_of_size(n) for n in range(9)])


def test_fleming_viot_is_fixed_size():
    pol = fleming_viot(10)
    assert pol.p_of_size(10) == 1.0 and pol.q_of_size(10) == 1.0


def test_unbounded_nmax():
    pol = make_policy("nminnmax", nmin=2, nmax=math.inf)
    assert pol.q_of_size(10**6) == 0.0


def test_constant_and_reciprocal():
    c = ConstantPolicy(0.3, 0.7)
    assert c.p_of_size(4) == 0.3 and c.q_of_size(4) == 0.7
    r = ReciprocalPolicy()
    assert 0.0 <= r.p_of_size(5) <= 1.0


def test_nmin_zero_disables_resampling():
    assert NminNmaxPolicy(0, 5).p_of_size(0) == 1.0
    assert all(NminNmaxPolicy(0, 5).p_of_size(n) == 0.0 for n in range(1, 7))


@pytest.mark.parametrize("args", [(1, 5), (5, 3), (-1, 4)])
def test_invalid_bounds(args):
    with pytest.raises(ValueError):
        NminNmaxPolicy(*args)


def test_unknown_policy():
    with pytest.raises(ValueError):
        make_policy("nope")
