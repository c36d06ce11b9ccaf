import collections

import numpy as np

from stochbal.baselines import first_fit, graham_adaptive, mean_list_policy, surrogate_policy
from stochbal.evaluate import evaluate
from stochbal.instance import gen_adaptivity_gap, gen_random, gen_surrogate_gap


def test_surrogate_stacks_jobs():
    inst = gen_surrogate_gap(16)
    a = surrogate_policy(inst)
    a.validate(inst)
    counts = collections.Counter(a.placement.values())
    assert sorted(counts.values(), reverse=True) == [4] * 5


def test_first_fit_reports_failure():
    theta = np.ones((1, 2))
    assert first_fit(theta, np.ones((1, 2), bool), 1.0) is None
    assert first_fit(theta, np.ones((1, 2), bool), 2.0) == [0, 0]


def test_mean_list_is_valid():
    inst = gen_random(3, 6, 1)
    a = mean_list_policy(inst)
    a.validate(inst)


def test_graham_beats_static_on_adaptivity_gap():
    inst = gen_adaptivity_gap(4)
    adaptive = graham_adaptive(inst, 20_000, seed=1)
    static = evaluate(inst, mean_list_policy(inst))
    assert adaptive.value < static.value
    assert adaptive.value <= 2.0 + adaptive.half_width
    assert graham_adaptive(inst, 20_000, seed=1) == adaptive
