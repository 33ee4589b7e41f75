import math
import os
from pathlib import Path

import numpy as np
import pytest

import diffcbf

ROOT = Path(os.environ.get("DIFFCBF_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def unit_spheres(distance):
    return (
        diffcbf.Shape.sphere(1.0),
        diffcbf.Pose.spatial([0, 0, 0]),
        diffcbf.Shape.sphere(1.0),
        diffcbf.Pose.spatial([distance, 0, 0]),
    )


def test_sphere_pair_alpha_and_gradient():
    r = diffcbf.min_scale(*unit_spheres(4.0))
    assert r["status"] == "optimal"
    assert r["alpha_star"] == pytest.approx(2.0, abs=1e-9)
    np.testing.assert_allclose(r["p_star"], [2, 0, 0], atol=1e-7)
    for method in ("ift", "smooth_linear"):
        j = diffcbf.grad_alpha(*unit_spheres(4.0), method=method)
        assert j["full"].shape == (14,)
        np.testing.assert_allclose(j["d_r1"], [-0.5, 0, 0], atol=1e-9)
        np.testing.assert_allclose(j["d_r2"], [0.5, 0, 0], atol=1e-9)


def test_box_pair_and_errors():
    cube = diffcbf.Shape.box([0.5, 0.5, 0.5])
    r = diffcbf.min_scale(cube, diffcbf.Pose.identity(), cube, diffcbf.Pose.spatial([3, 0, 0]))
    assert r["alpha_star"] == pytest.approx(3.0, abs=1e-8)
    assert r["degenerate_contact"]
    with pytest.raises(diffcbf.UnsupportedError):
        diffcbf.min_scale(cube, diffcbf.Pose.identity(), cube, diffcbf.Pose.spatial([3, 0, 0]),
                          method="smooth_kkt")
    with pytest.raises(ValueError):
        diffcbf.Shape.sphere(-1.0)
    with pytest.raises(ValueError):
        diffcbf.Pose.spatial([0, 0, 0], [1, 1, 0, 0])


def test_scaling_and_quaternion_rate():
    e = diffcbf.Shape.ellipsoid([1, 2, 3])
    assert diffcbf.scaling(e, diffcbf.Pose.identity(), [0, 2, 0]) == pytest.approx(1.0)
    q = np.array([0.5, 0.5, 0.5, 0.5])
    assert np.abs(q @ diffcbf.quat_rate_matrix(q)).max() <= 1e-15


def test_qp_projection_and_infeasible():
    u_ref = np.array([1.0, -2.0])
    a = np.array([[0.5, 1.0]])
    r = diffcbf.solve_qp(np.eye(2), -u_ref, a, np.array([1.0]))
    expect = u_ref + a[0] * (1.0 - a[0] @ u_ref) / (a[0] @ a[0])
    np.testing.assert_allclose(r["u"], expect, atol=1e-10)
    bad = diffcbf.solve_qp(np.eye(2), np.zeros(2), np.array([[1.0, 0], [-1.0, 0]]), np.ones(2))
    assert bad["status"] == "infeasible"


def test_unicycle_performance():
    v, w = diffcbf.unicycle_performance([0, 0, 0], [5, 3])
    assert v == pytest.approx(0.5 * math.sqrt(34))
    assert w == pytest.approx(2 * math.atan2(3, 5))


def test_gradcheck():
    r = diffcbf.gradcheck(10)
    assert r["passed"]
    assert r["pairs"] == 10


def test_simulate_mobile_robot():
    s = diffcbf.simulate(ROOT / "scenarios" / "mobile_robot.yaml")
    assert s["reached"]
    assert s["min_h"] >= 0.0
