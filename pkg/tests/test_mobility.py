import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from opsim.engine import RngStream
from opsim.mobility import (
    InvalidConfig,
    MalformedLine,
    Mobility,
    NonMonotoneTime,
    NonNumericToken,
    RwpConfig,
    SwimConfig,
    Trajectory,
    UnknownNode,
    Waypoint,
    parse_bonnmotion,
    rwp_generate,
    serialize_bonnmotion,
    swim_generate,
    swim_generate_all,
    swim_weights,
)


def test_interpolation_and_clamping():
    tr = Trajectory([Waypoint(10, 0, 0), Waypoint(20, 100, 50, 10)])
    assert tr.position_at(0) == (0, 0, 0)
    assert tr.position_at(15) == (50, 25, 5)
    assert tr.position_at(99) == (100, 50, 10)
    np.testing.assert_allclose(tr.positions_at(np.array([0.0, 15.0, 99.0])), [[0, 0, 0], [50, 25, 5], [100, 50, 10]])


def test_trajectory_rejects_non_increasing_time():
    with pytest.raises(ValueError):
        Trajectory([Waypoint(0, 0, 0), Waypoint(0, 1, 1)])


def test_unknown_node():
    with pytest.raises(UnknownNode):
        Mobility.static([(0, 0)]).position_at(3, 0.0)


@given(st.integers(0, 2**32), st.floats(0.1, 5), st.floats(0, 5), st.floats(0, 100))
def test_rwp_legs_within_area_and_speed(seed, v_min, dv, pause):
    cfg = RwpConfig(800.0, 300.0, v_min, v_min + dv, pause)
    wps = rwp_generate(cfg, 0, 20_000.0, RngStream(seed, "mobility"))
    assert wps[-1].t >= 20_000.0
    for a, b in zip(wps, wps[1:]):
        assert 0 <= b.x <= cfg.width and 0 <= b.y <= cfg.height
        d = math.hypot(b.x - a.x, b.y - a.y)
        if d == 0:
            assert math.isclose(b.t - a.t, pause)
            continue
        v = d / (b.t - a.t)
        assert cfg.v_min * (1 - 1e-9) <= v <= cfg.v_max * (1 + 1e-9)


def test_rwp_config_validation():
    for bad in (RwpConfig(v_min=0), RwpConfig(v_min=2, v_max=1), RwpConfig(width=0), RwpConfig(pause=-1)):
        with pytest.raises(InvalidConfig):
            bad.validate()


def test_sampled_positions_inside_area():
    horizon = 50_000.0
    times = np.random.default_rng(0).uniform(0, horizon, 10_000)
    rwp = RwpConfig(1000.0, 600.0)
    swim = SwimConfig(3000.0, 2000.0, cell_size=500.0)
    traces = [rwp_generate(rwp, 0, horizon, RngStream(3, "mobility"))]
    traces += swim_generate_all(swim, 3, horizon, seed=3)
    for k, wps in enumerate(traces):
        cfg = rwp if k == 0 else swim
        p = Trajectory(wps).positions_at(times)
        assert (p[:, 0] >= 0).all() and (p[:, 0] <= cfg.width).all()
        assert (p[:, 1] >= 0).all() and (p[:, 1] <= cfg.height).all()


def test_swim_weights_favour_home_and_normalise():
    cfg = SwimConfig(4000.0, 4000.0, cell_size=1000.0, alpha=1.0)
    w = swim_weights(cfg, (500.0, 500.0), np.zeros(16))
    assert math.isclose(w.sum(), 1.0)
    assert w.argmax() == 0
    assert w[0] > w[5] > w[15]


def test_swim_weights_popularity_only():
    cfg = SwimConfig(4000.0, 4000.0, cell_size=1000.0, alpha=0.0)
    pop = np.zeros(16)
    pop[7] = 3.0
    w = swim_weights(cfg, (0.0, 0.0), pop)
    assert w[7] == 1.0
    assert np.allclose(swim_weights(cfg, (0.0, 0.0), np.zeros(16)), 1 / 16)


def test_swim_walks_between_cell_centres_at_configured_speed():
    cfg = SwimConfig(2000.0, 2000.0, cell_size=1000.0, speed=2.0)
    wps = swim_generate(cfg, 0, 30_000.0, RngStream(5, "mobility"))
    centres = {tuple(c) for c in cfg.cell_centers()}
    for a, b in zip(wps, wps[1:]):
        assert (b.x, b.y) in centres
        d = math.hypot(b.x - a.x, b.y - a.y)
        if d:
            assert math.isclose(d / (b.t - a.t), 2.0, rel_tol=1e-9)


def test_swim_needs_four_cells():
    with pytest.raises(InvalidConfig):
        SwimConfig(1000.0, 1000.0, cell_size=1000.0).validate()


def test_swim_joint_generation_is_deterministic():
    cfg = SwimConfig(3000.0, 3000.0, cell_size=1000.0)
    assert swim_generate_all(cfg, 4, 10_000.0, 2) == swim_generate_all(cfg, 4, 10_000.0, 2)


# -- BonnMotion ---------------------------------------------------------------

coord = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def traces(draw, dims):
    out = []
    for _ in range(draw(st.integers(1, 5))):
        n = draw(st.integers(1, 8))
        gaps = draw(st.lists(st.floats(1e-3, 1e4), min_size=n, max_size=n))
        t = draw(st.floats(0, 1e4))
        wps = []
        for g in gaps:
            z = draw(coord) if dims == 3 else 0.0
            wps.append(Waypoint(t, draw(coord), draw(coord), z))
            t = t + g
        out.append(wps)
    return out


@given(st.sampled_from([2, 3]).flatmap(lambda d: st.tuples(st.just(d), traces(d))))
def test_bonnmotion_round_trip(case):
    dims, tr = case
    assert parse_bonnmotion(serialize_bonnmotion(tr, dims), dims) == tr


def test_bonnmotion_2d_sets_z_zero():
    assert parse_bonnmotion("0 1 2 5 3 4\n") == [[Waypoint(0, 1, 2, 0), Waypoint(5, 3, 4, 0)]]


@pytest.mark.parametrize(
    "text,dims,exc,line",
    [
        ("0 1 2\n0 1\n", 2, MalformedLine, 2),
        ("0 1 2 3\n", 3, None, None),
        ("0 1 2 5 3 4\n0 1 x\n", 2, NonNumericToken, 2),
        ("5 1 2 5 3 4\n", 2, NonMonotoneTime, 1),
        ("0 1 nan\n", 2, NonNumericToken, 1),
    ],
)
def test_bonnmotion_errors_name_line(text, dims, exc, line):
    if exc is None:
        assert parse_bonnmotion(text, dims)[0][0].z == 3.0
        return
    with pytest.raises(exc) as info:
        parse_bonnmotion(text, dims)
    assert info.value.line == line
