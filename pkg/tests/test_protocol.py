import json
import math

import numpy as np
import pytest

from spinfreeze.engine import GridSpec, apply_lattice, free_evolve, init_state, readout
from spinfreeze.protocol import (
    CURVE_HEADER,
    DecayCurve,
    Event,
    Sequence,
    calibration_sequence,
    extension_sequence,
    iter_states,
    run_sequence,
    scan_storage,
    theoretical_limit,
    unmodulated_sequence,
)
from spinfreeze.specfun import efficiency_ceiling


def test_event_validation():
    with pytest.raises(ValueError):
        Event("teleport")
    with pytest.raises(ValueError):
        Event.wait(-1.0)
    with pytest.raises(ValueError):
        Event.modulate(0.5, 1.0, duration=-0.1)
    with pytest.raises(ValueError):
        Event.modulate(0.5, 1.0, 0.5, substeps=0)
    assert Event.wait().is_placeholder
    assert Event.modulate(0.5, 1.0, 0.54).elapsed == 0.54


@pytest.mark.parametrize("events", [
    (Event.wait(1.0), Event.readout()),
    (Event.store(), Event.wait(1.0)),
    (Event.store(), Event.store(), Event.readout()),
    (Event.store(), Event.wait(), Event.wait(), Event.readout()),
])
def test_sequence_shape_validation(events):
    with pytest.raises(ValueError):
        Sequence(events)


@pytest.mark.parametrize("kwargs", [{"eta_acs": 0.0}, {"eta_acs": 1.5}, {"gamma": -1.0},
                                    {"timing_convention": "whenever"}])
def test_sequence_parameter_validation(kwargs):
    with pytest.raises(ValueError):
        Sequence((Event.store(), Event.readout()), **kwargs)


def test_timing_conventions(small_grid):
    seq = extension_sequence(0.5, 3.0, 0.54, grid=small_grid)
    assert seq.fixed_duration == pytest.approx(1.08)
    assert seq.wait_for(10.0) == pytest.approx(8.92)
    with pytest.raises(ValueError, match="shorter"):
        seq.wait_for(1.0)
    wait_only = extension_sequence(0.5, 3.0, 0.54, grid=small_grid, timing_convention="wait-only")
    assert wait_only.wait_for(1.0) == 1.0
    assert wait_only.min_storage_time == 0.0
    filled = seq.with_storage_time(10.0)
    assert filled.placeholder_index is None
    assert filled.fixed_duration == pytest.approx(10.0)
    with pytest.raises(ValueError):
        filled.with_storage_time(3.0)


def test_run_sequence_matches_hand_composition(small_grid):
    seq = Sequence((Event.store(), Event.modulate(0.5, 2.0, 0.3, 4), Event.wait(2.0),
                    Event.readout()), gamma=0.1, grid=small_grid, eta_acs=0.8)
    s = free_evolve(apply_lattice(init_state(small_grid), 0.5, 2.0, 0.3, 4), 2.0)
    expected = readout(s).intensity * math.exp(-0.1 * 2.3) * 0.8
    assert run_sequence(seq).intensity == pytest.approx(expected, rel=1e-12)


def test_eta_applied_once_per_modulation(small_grid):
    base = extension_sequence(0.5, 3.05, 0.0, grid=small_grid, eta_acs=1.0).with_storage_time(4.0)
    lossy = extension_sequence(0.5, 3.05, 0.0, grid=small_grid, eta_acs=0.71).with_storage_time(4.0)
    assert run_sequence(lossy).intensity == pytest.approx(
        0.71**2 * run_sequence(base).intensity, rel=1e-12)


@pytest.mark.parametrize("q, duration, gamma", [(0.5, 0.0, 0.0), (0.485, 0.54, 0.0152)])
def test_adjoint_scan_matches_direct(small_grid, q, duration, gamma):
    seq = extension_sequence(q, 3.05, duration, 8, grid=small_grid, gamma=gamma)
    times = [1.2, 2.0, 6.5, 15.0]
    a = scan_storage(seq, times, method="adjoint").intensities
    d = scan_storage(seq, times, method="direct").intensities
    np.testing.assert_allclose(a, d, rtol=1e-9, atol=1e-14)


def test_adjoint_scan_with_events_after_placeholder_wait(small_grid):
    seq = Sequence((Event.store(), Event.modulate(0.5, 1.0, 0.2, 4), Event.wait(),
                    Event.modulate(0.5, 1.0, 0.2, 4), Event.wait(0.7), Event.readout()),
                   grid=small_grid, gamma=0.05)
    times = [3.0, 4.5]
    np.testing.assert_allclose(scan_storage(seq, times).intensities,
                               scan_storage(seq, times, method="direct").intensities, rtol=1e-9)


def test_scan_independent_of_threads(small_grid):
    seq = extension_sequence(0.485, 3.05, 0.54, 8, grid=small_grid)
    times = np.linspace(1.1, 20, 23)
    one = scan_storage(seq, times, threads=1)
    many = scan_storage(seq, times, threads=4)
    assert one.to_csv() == many.to_csv()


def test_scan_time_units(small_grid):
    seq = unmodulated_sequence(small_grid, time_unit_s=2.3e-6)
    c = scan_storage(seq, [0.0, 1.0])
    np.testing.assert_allclose(c.storage_times, [0.0, 2.3e-6])
    assert c.intensities[0] == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("times", [[], [2.0, 1.0], [1.0, 1.0], [-1.0], [np.nan]])
def test_scan_rejects_bad_times(small_grid, times):
    with pytest.raises(ValueError):
        scan_storage(unmodulated_sequence(small_grid), times)


def test_scan_rejects_unknown_method_and_short_times(small_grid):
    with pytest.raises(ValueError):
        scan_storage(unmodulated_sequence(small_grid), [1.0], method="magic")
    with pytest.raises(ValueError):
        scan_storage(extension_sequence(0.5, 1.0, 0.54, grid=small_grid), [0.5])


def test_scan_needs_placeholder(small_grid):
    seq = Sequence((Event.store(), Event.wait(1.0), Event.readout()), grid=small_grid)
    with pytest.raises(ValueError):
        scan_storage(seq, [1.0])


def test_unmodulated_decay_is_gaussian(small_grid):
    t = np.linspace(0, 3, 31)
    c = scan_storage(unmodulated_sequence(small_grid), t)
    assert np.max(np.abs(c.intensities - np.exp(-t**2))) < 1e-3


def test_decay_curve_serialisation(tmp_path):
    c = DecayCurve([0.0, 1e-6, 2e-6], [1.0, 0.5, 0.25], label="x")
    lines = c.to_csv().splitlines()
    assert tuple(lines[0].split(",")) == CURVE_HEADER
    assert lines[2] == "1e-06,0.5,x,simulated"
    data = json.loads(c.to_json())
    assert data["intensity"] == [1.0, 0.5, 0.25]
    c.save(tmp_path / "c.json", "json")
    assert json.loads((tmp_path / "c.json").read_text()) == data


@pytest.mark.parametrize("t, y, source", [
    ([0.0, 0.0], [1.0, 1.0], "simulated"),
    ([0.0, 1.0], [1.0, -1.0], "simulated"),
    ([0.0], [1.0, 2.0], "simulated"),
    ([0.0], [1.0], "guessed"),
])
def test_decay_curve_validation(t, y, source):
    with pytest.raises(ValueError):
        DecayCurve(t, y, source=source)


def test_theoretical_limit():
    c = theoretical_limit([0.0, 10e-6], 6603.9)
    assert c.intensities[0] == pytest.approx(efficiency_ceiling())
    assert c.intensities[1] == pytest.approx(efficiency_ceiling() * math.exp(-0.066039))
    with pytest.raises(ValueError):
        theoretical_limit([0.0], -1.0)


def test_iter_states_markers(small_grid):
    seq = extension_sequence(0.5, 3.05, 0.5, 4, grid=small_grid).with_storage_time(3.0)
    seen = [(round(s.t, 9), lab) for s, lab in iter_states(seq, 0.25) if lab]
    assert seen == [(0.0, "I"), (0.5, "II"), (2.5, "III"), (3.0, "IV"), (3.0, "V")]
    states = list(iter_states(seq, 0.25))
    assert readout(states[-1][0]).intensity == pytest.approx(
        run_sequence(seq.__class__(seq.events, grid=small_grid, eta_acs=1.0)).intensity, rel=1e-12)


def test_calibration_sequence(small_grid):
    seq = calibration_sequence(0.5, 2.0, 1.0, 3.0, grid=small_grid)
    assert seq.fixed_duration == pytest.approx(3.0)
    assert seq.events[1].area == 2.0
    with pytest.raises(ValueError):
        calibration_sequence(0.5, 2.0, 4.0, 3.0, grid=small_grid)


@pytest.mark.slow
def test_wraparound_leakage_below_threshold(grid, x_peak):
    # default protocol pulses, compared against a box twice as wide
    wide = GridSpec(nz=4096, z_half_span=8.0)
    times = [5.0, 10.0, 15.0, 20.0, 30.0]
    for q in (0.5, 0.485):
        a = scan_storage(extension_sequence(q, x_peak, 0.54, 16, grid=grid, eta_acs=1.0), times)
        b = scan_storage(extension_sequence(q, x_peak, 0.54, 16, grid=wide, eta_acs=1.0), times)
        assert np.max(np.abs(a.intensities / b.intensities - 1)) < 1e-3


@pytest.mark.parametrize("duration", [0.0, 0.54])
def test_intensity_never_exceeds_theoretical_limit(grid, x_peak, duration):
    gamma = 0.0152
    t = np.arange(2 * duration + 0.02, 30.0, 0.1)
    for q in (0.5, 0.485):
        seq = extension_sequence(q, x_peak, duration, 32, grid=grid, gamma=gamma, eta_acs=1.0)
        y = scan_storage(seq, t).intensities
        limit = theoretical_limit(t, gamma).intensities
        assert np.all(y <= 1.01 * limit)


def test_points_do_not_depend_on_their_neighbours(small_grid):
    seq = extension_sequence(0.485, 3.05, 0.54, 8, grid=small_grid, gamma=0.01)
    times = np.array([1.5, 3.0, 7.0, 12.0, 20.0])
    full = scan_storage(seq, times).intensities
    perm = [3, 0, 4, 2, 1]
    single = np.array([scan_storage(seq, [times[i]]).intensities[0] for i in perm])
    assert np.array_equal(single, full[perm])
    subset = scan_storage(seq, times[[1, 3]]).intensities
    assert np.array_equal(subset, full[[1, 3]])
