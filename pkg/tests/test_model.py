import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import unit_config
from ofdm_energy.errors import AllocationError
from ofdm_energy.model import (
    Allocation,
    ChannelMatrix,
    DemandVector,
    DualCertificate,
    SystemConfig,
    dbm_to_watt,
    energy_report,
    invert_rate,
    subcarrier_rate,
    validate_allocation,
)
from ofdm_energy.wsre import solve_wsremin_tdma

pos = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False)


def test_unit_snr_rate_is_one_bit():
    assert subcarrier_rate(unit_config(), 1.0, 1.0) == pytest.approx(1.0, rel=1e-15)


def test_zero_power_zero_rate():
    assert subcarrier_rate(unit_config(), 3.7, 0.0) == 0.0
    assert invert_rate(unit_config(), 3.7, 0.0) == 0.0


def test_unit_inverse():
    assert invert_rate(unit_config(), 1.0, 1.0) == pytest.approx(1.0, rel=1e-15)


def test_rate_against_arbitrary_precision():
    N0 = 10 ** (-20.4) * 1e-3
    cfg = SystemConfig(W=2e4, N0=N0, P_avg=30, P_tc=20, P_rc=0.5, alphas=(1.0,))
    mine = subcarrier_rate(cfg, 1e-10, 1.0)
    with mpmath.workdps(50):
        ref = mpmath.mpf(2e4) * mpmath.log(1 + mpmath.mpf(1e-10) / (mpmath.mpf(N0) * 2e4), 2)
    assert mine == pytest.approx(float(ref), rel=1e-13)


def test_dbm_conversion():
    assert dbm_to_watt(-174.0) == pytest.approx(10 ** (-17.4) * 1e-3, rel=1e-12)


@given(f=pos, r=st.floats(min_value=0.0, max_value=40.0))
def test_rate_round_trip(f, r):
    cfg = unit_config()
    p = invert_rate(cfg, f, r)
    if math.isinf(p):
        return
    back = subcarrier_rate(cfg, f * cfg.noise_per_subcarrier, p)
    assert back == pytest.approx(r, rel=1e-10, abs=1e-12)


def test_rate_strictly_increasing_in_power():
    rng = np.random.default_rng(7)
    cfg = unit_config()
    h = rng.uniform(1e-3, 1e3, 1000)
    p1 = rng.uniform(0, 10, 1000)
    p2 = p1 + rng.uniform(1e-6, 10, 1000)
    assert np.all(subcarrier_rate(cfg, h, p1) < subcarrier_rate(cfg, h, p2))


def test_config_rejects_bad_values():
    with pytest.raises(ValueError, match="gamma"):
        unit_config(gamma=0.5)
    with pytest.raises(ValueError, match="P_avg"):
        unit_config(P_avg=0)
    with pytest.raises(ValueError, match="positive"):
        unit_config(alpha0=0.0, alphas=(0.0,))


def test_default_constants_accepted():
    cfg = SystemConfig.from_dbm(N0_dbm_per_hz=-174, W=20e3, P_avg=30, P_tc=20, P_rc=0.5, alphas=(1, 1, 1, 1))
    assert (cfg.P_tc, cfg.P_rc, cfg.P_avg, cfg.K) == (20, 0.5, 30, 4)


def test_channel_rejects_nonpositive_gains():
    with pytest.raises(ValueError):
        ChannelMatrix.from_gains([[1.0, 0.0]], unit_config())


def test_idle_frame_report():
    cfg = unit_config(K=2, P_tc=20.0)
    alloc = Allocation(T=1.0, rho=np.zeros((2, 3)), p=np.zeros((2, 3)), t_on=np.zeros(2))
    rep = energy_report(cfg, DemandVector([1.0, 1.0]), alloc)
    assert rep.E_t == 20.0
    assert np.all(rep.E_r == 0)


def test_hand_evaluated_report():
    cfg = unit_config(P_tc=20.0, P_rc=0.5, alpha0=0.3)
    alloc = Allocation(T=3.0, rho=np.ones((1, 1)), p=np.full((1, 1), 2.0), t_on=np.array([3.0]))
    rep = energy_report(cfg, DemandVector([1.0]), alloc)
    assert rep.E_t == pytest.approx(66.0)
    assert rep.E_r[0] == pytest.approx(1.5)
    assert rep.wstre == 0.3 * rep.E_t + rep.E_r_weighted


def test_over_shared_subcarrier_is_flagged():
    cfg = unit_config(K=2, P_avg=100)
    rho = np.array([[0.75, 0.5], [0.75, 0.5]])
    alloc = Allocation(T=1.0, rho=rho, p=np.ones((2, 2)), t_on=np.ones(2))
    bad = validate_allocation(cfg, ChannelMatrix.from_gains(np.ones((2, 2)), cfg), DemandVector([0.1, 0.1]), alloc)
    assert [v.constraint for v in bad] == ["subcarrier_share"]
    assert bad[0].indices == (0,)


def test_undelivered_demand_flags_every_mt():
    cfg = unit_config(K=3)
    alloc = Allocation(T=1.0, rho=np.full((3, 2), 1 / 3), p=np.zeros((3, 2)), t_on=np.ones(3))
    bad = validate_allocation(cfg, ChannelMatrix.from_gains(np.ones((3, 2)), cfg), DemandVector([1, 2, 3]), alloc)
    assert sorted(v.indices[0] for v in bad if v.constraint == "demand") == [0, 1, 2]


def test_solver_output_validates(cell):
    cfg, chan, dem = cell
    _, alloc = solve_wsremin_tdma(cfg, chan, dem)
    assert validate_allocation(cfg, chan, dem, alloc) == []


def test_report_refuses_broken_allocation():
    cfg = unit_config()
    alloc = Allocation(T=1.0, rho=np.ones((1, 1)), p=np.ones((1, 1)), t_on=np.array([0.5]))
    with pytest.raises(AllocationError, match="on_time_lower"):
        energy_report(cfg, DemandVector([1.0]), alloc)


def test_certificate_rejects_negative_multipliers():
    with pytest.raises(ValueError):
        DualCertificate(lam=[1.0, -1.0], beta=0.1)


def test_allocation_is_immutable():
    alloc = Allocation(T=1.0, rho=np.ones((1, 1)), p=np.ones((1, 1)), t_on=np.ones(1))
    with pytest.raises(ValueError):
        alloc.rho[0, 0] = 0.5
