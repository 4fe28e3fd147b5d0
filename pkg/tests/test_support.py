import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sepmp.errors import AdmissibilityError
from sepmp.mc import MCEstimate, chunk_ranges, map_paths, worker_count
from sepmp.policy import ControlPolicy, indicator, time_function
from sepmp.report import TestReport, fmt
from sepmp.rng import PathStreams, substream


def test_estimate_ci():
    e = MCEstimate.from_samples([1.0, 2.0, 3.0, 4.0])
    assert e.mean == 2.5 and e.n == 4
    assert e.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    lo, hi = e.ci95
    assert lo == pytest.approx(2.5 - 1.96 * e.stderr) and hi == pytest.approx(2.5 + 1.96 * e.stderr)


def test_estimate_z_degenerate():
    e = MCEstimate.from_samples([2.0] * 5)
    assert e.z(2.0) == 0.0 and e.z(1.0) == math.inf


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200), st.randoms())
def test_estimate_order_free(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert MCEstimate.from_samples(xs).mean == MCEstimate.from_samples(ys).mean


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("SEPMP_THREADS", "3")
    assert worker_count() == 3 and worker_count(5) == 5
    monkeypatch.delenv("SEPMP_THREADS")
    assert worker_count() == 1


def test_map_paths_order():
    out = map_paths(lambda r: list(r), 2500, workers=4, chunk=1000)
    assert [len(c) for c in out] == [1000, 1000, 500]
    assert sum(out, []) == list(range(2500))
    assert chunk_ranges(0) == []


def test_substreams_disjoint_and_stable():
    s = PathStreams(7, 2)
    a = s.events.random(4)
    assert np.array_equal(a, PathStreams(7, 2).events.random(4))
    assert not np.array_equal(a, PathStreams(7, 3).events.random(4))
    assert not np.array_equal(a, PathStreams(7, 2).brownian.random(4))
    assert not np.array_equal(s.inner(0).random(4), s.inner(1).random(4))
    assert np.array_equal(substream(1, 2, 3).random(3), substream(1, 2, 3).random(3))


def test_policy_bounds_raise():
    p = ControlPolicy.deterministic(lambda t: 2.0 * t, (0.0, 1.0), "ramp")
    assert p(0.4) == 0.8
    with pytest.raises(AdmissibilityError):
        p(np.array([0.2, 0.7]))
    with pytest.raises(AdmissibilityError):
        ControlPolicy.deterministic(math.nan)(0.0)


def test_policy_perturbed_and_feedback():
    base = ControlPolicy.deterministic(0.5)
    q = base.perturbed(indicator(0.5), 0.1)
    assert q.is_deterministic
    np.testing.assert_allclose(q(np.array([0.2, 0.6])), [0.5, 0.6])
    fb = ControlPolicy.feedback(lambda t, x: 1 / x)
    assert not fb.is_deterministic and fb(0.0, 4.0) == 0.25


def test_time_function_shapes():
    assert time_function(2.0)(np.zeros((2, 3))).shape == (2, 3)
    assert time_function(lambda t: 1.0)(np.zeros(4)).shape == (4,)


def test_fmt_round_trip():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(fmt(v)) == v
    assert fmt(True) == "true" and fmt(3) == "3" and fmt(float("inf")) == "inf"


def test_report_text_round_trip():
    r = TestReport("demo", meta={"n": 3, "levels": [1, 2]})
    r.add(test_id="a", estimate=0.1, z=-1.5, **{"pass": True})
    r.add(test_id="b", estimate=math.inf, **{"pass": False})
    back = TestReport.from_text(r.to_text())
    assert back.records == r.records and back.meta == r.meta and not back.passed
    assert "passed: false" in r.to_text()
