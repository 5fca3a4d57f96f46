import math

import pytest
from hypothesis import given, strategies as st

from spinfreeze.units import (
    ATOMIC_MASS_UNIT,
    BOLTZMANN,
    DEFAULT_GAMMA,
    PhysicalParams,
    Scales,
    derive_scales,
    to_dimensionless,
)


def test_spin_wave_period_matches_ramp_period():
    s = derive_scales(PhysicalParams())
    period = 2 * math.pi / s.k0
    assert period == pytest.approx(1.248e-6, rel=1e-9)
    assert round(period * 1e6, 1) == 1.2


def test_thermal_velocity_hand_calculation():
    s = derive_scales(PhysicalParams(temperature=78e-6, atomic_mass=86.909 * 1.66053906660e-27))
    hand = math.sqrt(1.380649e-23 * 78e-6 / (86.909 * 1.66053906660e-27))
    assert hand == pytest.approx(8.6e-2, abs=0.05e-2)
    assert s.v_t == pytest.approx(hand, rel=1e-9)


def test_dephasing_time_near_measured_lifetime():
    s = derive_scales(PhysicalParams())
    assert s.tau == pytest.approx(2.3e-6, abs=0.05e-6)
    assert abs(s.tau - 2.4e-6) < 0.15e-6
    assert s.tau * s.k0 * s.v_t == pytest.approx(1.0, rel=1e-15)


def test_lattice_wavenumber_from_geometry():
    p = PhysicalParams()
    s = derive_scales(p)
    assert s.q_lattice == pytest.approx(4 * math.pi / 780e-9 * math.sin(math.radians(18.5) / 2))
    assert 0.45 < s.q_lattice / s.k0 < 0.55


def test_default_gamma_is_intensity_rate_from_lifetime():
    assert DEFAULT_GAMMA == pytest.approx(6.60e3, rel=1e-3)
    assert PhysicalParams().gamma == DEFAULT_GAMMA


def test_to_dimensionless_examples():
    dc = to_dimensionless(PhysicalParams(gamma=0.0), derive_scales(PhysicalParams()))
    assert dc.gamma == 0.0
    scales = Scales(k0=2.0, v_t=1 / (2 * 2.4e-6), tau=2.4e-6, q_lattice=0.485 * 2.0)
    dc = to_dimensionless(PhysicalParams(), scales)
    assert dc.time(2.4e-6) == 1.0
    assert dc.q_lattice == pytest.approx(0.485)


def test_round_trip():
    p = PhysicalParams()
    dc = to_dimensionless(p, derive_scales(p))
    for x in (1e-9, 3.3e-6, 1.0):
        assert dc.seconds(dc.time(x)) == pytest.approx(x, rel=1e-12)
        assert dc.metres(dc.length(x)) == pytest.approx(x, rel=1e-12)
        assert dc.metres_per_second(dc.velocity(x)) == pytest.approx(x, rel=1e-12)
        assert dc.rad_per_metre(dc.wavenumber(x)) == pytest.approx(x, rel=1e-12)
        assert dc.per_second(dc.rate(x)) == pytest.approx(x, rel=1e-12)
    assert dc.per_second(dc.gamma) == pytest.approx(p.gamma, rel=1e-12)


@given(st.floats(1e-7, 1e-2), st.floats(1.0001, 10.0))
def test_hotter_cloud_dephases_faster(temperature, factor):
    cold = derive_scales(PhysicalParams(temperature=temperature))
    hot = derive_scales(PhysicalParams(temperature=temperature * factor))
    assert hot.tau < cold.tau


def test_constants_table():
    assert BOLTZMANN == 1.380649e-23
    assert ATOMIC_MASS_UNIT == pytest.approx(1.66053906660e-27, rel=1e-10)


@pytest.mark.parametrize("kwargs", [
    {"lambda_probe": 0.0},
    {"lambda_coupling": -1e-9},
    {"temperature": 0.0},
    {"atomic_mass": -1.0},
    {"gamma": -1.0},
    {"lattice_angle": 0.0},
    {"lattice_angle": math.pi},
    {"lattice_wavelength": float("nan")},
    {"geometry": "co_propagating"},
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        PhysicalParams(**kwargs)


def test_equal_wavelengths_rejected():
    with pytest.raises(ValueError):
        derive_scales(PhysicalParams(lambda_probe=500e-9, lambda_coupling=500e-9))
