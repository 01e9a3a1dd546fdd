import math

import numpy as np
import pytest

from banksim.coefficients import CoefficientSet
from banksim.errors import ConfigError, SingularMassError
from banksim.hydro_model import PlanarState, froude_scale, froude_scale_coefficients
from banksim.sim import (
    Completed,
    DomainStop,
    Grounded,
    Side,
    SimConfig,
    SweepPoint,
    mirror,
    mirror_config,
    run,
    scale_config,
    side_flips,
    starboard_clearance,
    step,
    sweep_grounding,
    write_summary_json,
    write_sweep_csv,
    write_trajectory_csv,
    y0_from_clearance,
)


def test_straight_run_holds_speed(vessel, canal, truth):
    config = SimConfig(initial=PlanarState(u=1.0), dt=0.05, X_in=12.6)
    state = config.initial
    for _ in range(100):
        state = step(state, truth, vessel, canal, config)
    assert state.u == pytest.approx(1.0, abs=1e-9)
    assert state.y == 0.0
    assert state.psi == 0.0
    assert state.x == pytest.approx(5.0, abs=1e-9)


def test_centreline_run_completes(vessel, canal, truth):
    config = SimConfig(initial=PlanarState(u=1.0), dt=0.05, t_max=10.0)
    result = run(config, truth, vessel, canal)
    assert isinstance(result.outcome, Completed)
    assert np.all(result.states[:, 1] == 0.0)
    assert len(result.times) == 201
    assert np.all(np.diff(result.times) > 0)


def test_mirror_symmetry(vessel, canal, truth):
    initial = PlanarState(y=1.5, psi=0.02, u=1.0, v=0.01)
    config = SimConfig(initial=initial, dt=0.05, t_max=30.0)
    result = run(config, truth, vessel, canal)
    flipped = run(mirror_config(config), truth, vessel, canal)
    assert mirror(mirror(config.initial)) == config.initial
    assert flipped.states[:, 1] == pytest.approx(-result.states[:, 1], abs=1e-9)
    assert flipped.states[:, 2] == pytest.approx(-result.states[:, 2], abs=1e-9)
    assert flipped.states[:, 0] == pytest.approx(result.states[:, 0], abs=1e-9)
    assert type(flipped.outcome) is type(result.outcome)
    if isinstance(result.outcome, Grounded):
        assert flipped.outcome.side is result.outcome.side.mirrored()
        assert flipped.outcome.x_ground == pytest.approx(result.outcome.x_ground)


def test_rk4_converges_at_fourth_order(vessel, canal, truth):
    # the |v|v and |r|r terms are only once differentiable at zero
    quadratic = ("b_|v|v", "b_|r|r", "c_|v|v", "c_|r|r")
    smooth = truth.replace(**{name: 0.0 for name in quadratic})
    initial = PlanarState(y=0.3, u=1.0)

    def final_state(dt):
        config = SimConfig(initial=initial, dt=dt)
        state = initial
        for _ in range(int(round(10.0 / dt))):
            state = step(state, smooth, vessel, canal, config)
        return np.array([state.x, state.y, state.psi, state.u, state.v, state.r])

    coarse, mid, fine = final_state(0.1), final_state(0.05), final_state(0.025)
    ratio = np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine)
    assert 12.0 < ratio < 20.0


def test_offset_start_grounds(vessel, canal, truth):
    near_config = SimConfig(initial=PlanarState(y=2.5, u=1.0), dt=0.02, t_max=60.0)
    near = run(near_config, truth, vessel, canal)
    assert isinstance(near.outcome, Grounded)
    assert near.states[0, 0] <= near.outcome.x_ground <= near.states[-1, 0]
    assert near.outcome.t_ground <= near.times[-1]
    assert not np.isnan(near.y_bank[0])

    far_config = SimConfig(initial=PlanarState(y=0.5, u=1.0), dt=0.02, t_max=200.0)
    far = run(far_config, truth, vessel, canal)
    assert isinstance(far.outcome, Grounded)
    assert far.outcome.side is Side.PORT
    assert far.outcome.t_ground > near.outcome.t_ground


def test_published_sweep_grounds_everywhere(vessel, canal, truth):
    base = SimConfig(initial=PlanarState(u=1.0), dt=0.01, t_max=200.0, X_in=12.6)
    y0s = [round(0.1 * k, 1) for k in range(1, 26)]
    points = sweep_grounding(y0s, base, truth, vessel, canal)

    assert [p.outcome for p in points] == ["Grounded"] * len(y0s)

    # x_ground falls with y0 inside every run of same-side groundings
    runs = [[points[0]]]
    for p in points[1:]:
        if p.side is runs[-1][-1].side:
            runs[-1].append(p)
        else:
            runs.append([p])
    for same_side in runs:
        xs = [p.x_ground for p in same_side]
        assert all(a > b for a, b in zip(xs, xs[1:])), xs

    by_y0 = {p.y0: p for p in points}
    assert all(by_y0[y0].side is Side.PORT for y0 in y0s if 0.3 <= y0 <= 2.3)
    assert by_y0[2.4].side is Side.STARBOARD
    assert by_y0[2.5].side is Side.STARBOARD

    # the bank-side flip, bracketed at the sweep resolution
    low, high = side_flips(points)[0]
    assert low < high
    assert high >= 0.9 and low <= 1.5
    assert starboard_clearance(2.3, vessel, canal) == pytest.approx(high)


def test_clearance_floor_stops_the_run(vessel, canal, truth):
    config = SimConfig(initial=PlanarState(y=0.5, u=1.0), clearance_floor=3.0)
    result = run(config, truth, vessel, canal)
    assert isinstance(result.outcome, DomainStop)
    assert len(result.times) == 1


def test_invalid_configs(vessel, canal, truth):
    with pytest.raises(ConfigError):
        SimConfig(initial=PlanarState(), dt=0.0)
    with pytest.raises(ConfigError):
        SimConfig(initial=PlanarState(), dt=0.1, t_max=0.01)
    with pytest.raises(ConfigError):
        SimConfig(initial=PlanarState(), surge_mass=-1.0)
    singular = truth.replace(b_vdot=0.0, b_rdot=0.0, c_vdot=0.0, c_rdot=0.0)
    with pytest.raises(SingularMassError):
        run(SimConfig(initial=PlanarState(u=1.0), t_max=1.0), singular, vessel, canal)


def test_froude_similarity(vessel, canal, truth):
    lam = 4.0
    config = SimConfig(initial=PlanarState(y=2.5, u=1.0), dt=0.02, t_max=30.0)
    base = run(config, truth, vessel, canal)
    big_vessel, big_canal, _ = froude_scale(vessel, canal, config.initial, lam)
    scaled = run(
        scale_config(config, vessel, canal, lam),
        froude_scale_coefficients(truth, lam),
        big_vessel,
        big_canal,
    )
    assert isinstance(base.outcome, Grounded)
    assert isinstance(scaled.outcome, Grounded)
    assert scaled.outcome.side is base.outcome.side
    x_ground, t_ground = base.outcome.x_ground, base.outcome.t_ground
    assert scaled.outcome.x_ground == pytest.approx(lam * x_ground, rel=1e-6)
    assert scaled.outcome.t_ground == pytest.approx(math.sqrt(lam) * t_ground, rel=1e-6)


def test_clearance_conversion(vessel, canal):
    expected = 2.5 - vessel.beam_B / 2
    assert starboard_clearance(1.0, vessel, canal) == pytest.approx(expected)
    y_s0 = starboard_clearance(1.3, vessel, canal)
    assert y0_from_clearance(y_s0, vessel, canal) == pytest.approx(1.3)


def test_sweep_records_failures(vessel, canal, truth):
    base = SimConfig(initial=PlanarState(u=1.0), dt=0.05, t_max=5.0)
    points = sweep_grounding([0.0, 1.0, 3.3], base, truth, vessel, canal)
    assert [p.y0 for p in points] == [0.0, 1.0, 3.3]
    assert points[0].outcome == "Completed"
    assert points[2].outcome == "Error"
    assert points[2].error


def test_side_flips():
    def grounded(y_s0, side, x):
        return SweepPoint(
            y0=0.0, y_s0=y_s0, outcome="Grounded", side=side, x_ground=x, t_ground=x
        )

    points = [
        grounded(0.5, Side.STARBOARD, 10.0),
        grounded(1.0, Side.STARBOARD, 12.0),
        SweepPoint(y0=0.0, y_s0=1.1, outcome="Completed"),
        grounded(1.5, Side.PORT, 20.0),
    ]
    assert side_flips(points) == [(1.0, 1.5)]
    assert side_flips(list(reversed(points))) == [(1.0, 1.5)]


def test_writers(tmp_path, vessel, canal, truth):
    config = SimConfig(initial=PlanarState(y=1.0, u=1.0), dt=0.05, t_max=2.0)
    result = run(config, truth, vessel, canal)
    csv_path = tmp_path / "trajectory.csv"
    write_trajectory_csv(result, str(csv_path))
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,x,y,psi,u,v,r,Ybank,Nbank"
    assert len(lines) == len(result.times) + 1
    assert float(lines[1].split(",")[2]) == 1.0

    summary_path = tmp_path / "summary.json"
    write_summary_json(result, str(summary_path))
    assert '"outcome": "Completed"' in summary_path.read_text()

    sweep_path = tmp_path / "sweep.csv"
    failed = SweepPoint(y0=1.0, y_s0=2.2, outcome="Error", error="bad, really")
    write_sweep_csv([failed], str(sweep_path))
    assert sweep_path.read_text().splitlines() == [
        "y_s0,x_ground,side,t_ground,y0,outcome,error",
        "2.2,,,,1.0,Error,bad; really",
    ]


def test_default_config_resolution(vessel):
    config = SimConfig(initial=PlanarState()).resolved(vessel)
    assert config.surge_mass == vessel.mass_m
    assert config.clearance_floor == pytest.approx(0.05 * vessel.beam_B)
    assert config.dt == 0.01


def test_published_coefficients_are_loaded():
    assert CoefficientSet.published().value("a_|u|u") == 12.6
