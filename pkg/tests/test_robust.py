import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secrel.robust import (
    build_sproc_lmi,
    certify_sproc,
    disk_points,
    is_psd,
    sample_adv_gain_max,
    sampled_worst_secrecy,
    solve_sproc_bound,
    worstcase_adv_gain,
    worstcase_sq_distance,
)
from secrel.scenario import AdversaryRegion, default_config

coord = st.floats(-1000.0, 1000.0)


def test_worst_gain_hand_values(default_cfg):
    adv = AdversaryRegion((-200.0, 0.0), 60.0)
    # 200 m from the center, 140 m from the disk edge
    assert worstcase_adv_gain([0.0, 0.0], adv, default_cfg) == pytest.approx(1e-3 / (140 ** 2 + 100 ** 2))
    # over the disk: straight down
    assert worstcase_adv_gain([-230.0, 10.0], adv, default_cfg) == pytest.approx(1e-7)
    assert worstcase_sq_distance([0.0, 0.0], adv, default_cfg) == pytest.approx(29600.0)


def test_zero_radius_is_nominal(default_cfg):
    from secrel.scenario import channel_gain

    adv = AdversaryRegion((30.0, -40.0), 0.0)
    p = np.array([[100.0, 100.0], [0.0, 0.0]])
    assert np.allclose(worstcase_adv_gain(p, adv, default_cfg), channel_gain(p, adv.est_pos, default_cfg))


@given(coord, coord, st.floats(0.0, 200.0))
@settings(max_examples=40, deadline=None)
def test_worst_gain_dominates_samples(x, y, radius):
    cfg = default_config()
    adv = AdversaryRegion((0.0, 0.0), radius)
    closed = worstcase_adv_gain([x, y], adv, cfg)
    sampled = sample_adv_gain_max([x, y], adv, cfg, n_samples=5000)
    assert sampled <= closed * (1 + 1e-12)
    assert sampled >= closed * 0.99


def test_disk_points_cover_disk():
    pts = disk_points([1.0, 2.0], 5.0, 1000, seed=3)
    assert len(pts) == 1000
    r = np.linalg.norm(pts - [1.0, 2.0], axis=1)
    assert r.max() == pytest.approx(5.0) and r.min() == 0.0
    assert np.array_equal(pts, disk_points([1.0, 2.0], 5.0, 1000, seed=3))
    with pytest.raises(ValueError):
        disk_points([0, 0], 1.0, 0)


def test_lmi_tight_at_worst_distance(default_cfg):
    adv = AdversaryRegion((-200.0, 0.0), 60.0)
    z, eps = solve_sproc_bound([0.0, 0.0], adv, default_cfg)
    assert z == pytest.approx(29600.0, rel=1e-8)
    assert is_psd(build_sproc_lmi([0.0, 0.0], adv, z * (1 - 1e-9), eps, default_cfg))
    # 1 m^2 beyond the true worst case cannot be certified for any multiplier
    for e in np.linspace(0.0, 10.0, 101):
        assert not is_psd(build_sproc_lmi([0.0, 0.0], adv, 29601.0, e, default_cfg))


def test_sproc_negative_multiplier_rejected(default_cfg):
    with pytest.raises(ValueError):
        build_sproc_lmi([0, 0], default_cfg.adversaries[0], 1.0, -1.0, default_cfg)


def test_certificate_catches_overclaim(default_cfg):
    adv = AdversaryRegion((0.0, 0.0), 50.0)
    # a z above the true bound fails the sampling check
    assert not certify_sproc([100.0, 0.0], adv, 2600.0 + 10000.0 + 50.0, 0.0, default_cfg, tol=0.0)
    assert certify_sproc([100.0, 0.0], adv, 2500.0 + 10000.0, 0.0, default_cfg, tol=0.0)


def test_sampled_worst_secrecy_never_exceeds_nominal_bound(default_cfg):
    from secrel.pipeline import init_solution
    from secrel.scenario import evaluate_solution

    traj, pw = init_solution(default_cfg)
    sampled = sampled_worst_secrecy(traj.pos, pw.p_u, default_cfg)
    exact = evaluate_solution(traj, pw, default_cfg).secrecy
    # sampling can miss the worst point, so it is never more pessimistic
    assert np.all(sampled >= exact - 1e-9)
    assert np.allclose(sampled, exact, atol=1e-3)
