import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nighthawk import metrics, scenesim as sim
from nighthawk.bopt import ControlInput, SearchSpace
from nighthawk.errors import InvalidInputError

CFG = sim.ScenarioConfig()
MASK = (1 << 64) - 1
MID = 43.0


def splitmix_ref(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def hash_ref(seed, stream, a, b):
    h = splitmix_ref((seed & MASK) ^ splitmix_ref(stream))
    h = splitmix_ref(h ^ (a & MASK))
    return splitmix_ref(h ^ (b & MASK))


@given(st.integers(0, 2 ** 63 - 1), st.integers(0, 40), st.integers(-10 ** 6, 10 ** 6),
       st.integers(-10 ** 6, 10 ** 6))
def test_hash_matches_integer_reference(seed, stream, a, b):
    assert int(sim.hash_keys(seed, stream, a, b)) == hash_ref(seed, stream, a, b)


def test_splitmix_known_vector():
    # first output of the reference splitmix64 generator seeded with 0
    assert splitmix_ref(0) == 0xE220A8397B1DCDAF


def test_gaussian_field_moments():
    z = sim.gaussian_field(99, 200, 200)
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02


@pytest.mark.parametrize("d, expected", [(0.0, 1.0), (9.99, 1.0), (MID, 0.001),
                                         (13.0, math.exp(-1)), (76.0, 1.0), (80.0, 1.0)])
def test_ambient_values(d, expected):
    assert sim.ambient(CFG, sim.Pose(d)) == pytest.approx(expected, rel=1e-12)


def test_ambient_continuous_at_portals():
    for portal in CFG.culvert_span:
        for eps in (1e-9, -1e-9):
            assert sim.ambient(CFG, portal + eps) == pytest.approx(1.0, abs=1e-9)


def test_pose_and_config_validation():
    with pytest.raises(InvalidInputError):
        sim.Pose(-1.0)
    with pytest.raises(InvalidInputError):
        sim.ScenarioConfig(gamma=2.5)
    with pytest.raises(InvalidInputError):
        sim.ScenarioConfig(culvert_span=(50, 10))
    with pytest.raises(InvalidInputError):
        sim.ScenarioConfig(read_noise=-0.1)


def test_albedo_range_and_cache_agreement():
    a = sim.albedo(CFG, 12.5)
    assert a.shape == (CFG.height, CFG.width)
    assert a.min() >= 0 and a.max() <= 1
    fresh = sim._albedo_at.__wrapped__(CFG, 12.5 * CFG.px_per_m)
    assert np.array_equal(a, fresh)


def test_albedo_slides_with_pose():
    a = sim.albedo(CFG, 10.0)
    b = sim.albedo(CFG, 10.0 + 1.0 / CFG.px_per_m)
    np.testing.assert_array_equal(b[:, :-1], a[:, 1:])


def test_render_deterministic():
    ctl = ControlInput(0.6, 12.0)
    a = sim.render(CFG, 30.0, ctl, 5)
    b = sim.render(CFG, 30.0, ctl, 5)
    assert a.data.tobytes() == b.data.tobytes()
    c = sim.render(CFG, 30.0, ctl, 6)
    assert not np.array_equal(a.data, c.data)


def test_render_noise_free_repeatable():
    quiet = CFG.with_overrides(read_noise=0.0, shot_noise=0.0)
    a = sim.render(quiet, 30.0, ControlInput(0.6, 12.0), 1)
    b = sim.render(quiet, 30.0, ControlInput(0.6, 12.0), 2)
    # without noise only the specular hosts depend on the seed
    same = (sim.specular_field(quiet, 1) == 0) & (sim.specular_field(quiet, 2) == 0)
    assert np.array_equal(a.data[same], b.data[same])


def test_batch_equals_single_renders():
    p = [0.0, 0.3, 1.0]
    dt = [0.5, 7.3, 30.0]
    batch = sim.render_batch(CFG, MID, p, dt, 17)
    for i in range(3):
        single = sim.render(CFG, MID, ControlInput(p[i], dt[i]), 17)
        assert np.array_equal(batch[i], single.data)


def test_dark_corner_is_black():
    quiet = CFG.with_overrides(read_noise=0.0, shot_noise=0.0)
    img = sim.render(quiet, MID, ControlInput(0.0, 0.5), 0)
    assert img.data.max() < 0.02
    assert metrics.m_shim(img) == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bright_corner_saturates(seed):
    space = SearchSpace()
    img = sim.render(CFG, MID, ControlInput(1.0, space.dt_bounds[1]), seed)
    assert (img.data >= 1.0).mean() >= 0.30


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.5, 30.0), st.floats(0, 86))
def test_pre_noise_value_monotone_in_p(p1, p2, dt, d):
    lo, hi = sorted((p1, p2))
    rho = sim.smeared_scene(CFG, d, [dt])
    spec = sim.specular_field(CFG, 0)
    amb = sim.ambient(CFG, d)
    v_lo = sim.exposure_value(CFG, amb, rho, spec, [lo], [dt])
    v_hi = sim.exposure_value(CFG, amb, rho, spec, [hi], [dt])
    assert np.all(v_hi >= v_lo)


@given(st.floats(0.0, 1.0), st.floats(0.5, 30.0), st.floats(0.5, 30.0), st.floats(0, 86))
def test_pre_noise_value_monotone_in_dt_without_shake(p, t1, t2, d):
    still = CFG.with_overrides(blur_px_per_ms=0.0)
    lo, hi = sorted((t1, t2))
    spec = sim.specular_field(still, 0)
    amb = sim.ambient(still, d)
    v = [sim.exposure_value(still, amb, sim.smeared_scene(still, d, [t]), spec, [p], [t])
         for t in (lo, hi)]
    assert np.all(v[1] >= v[0])


def test_smear_is_continuous_in_dt():
    a = sim.smeared_scene(CFG, MID, [10.0])
    b = sim.smeared_scene(CFG, MID, [10.0 + 1e-7])
    assert np.abs(a - b).max() < 1e-6


def test_smear_of_short_exposure_is_the_albedo():
    np.testing.assert_array_equal(sim.smeared_scene(CFG, MID, [0.5])[0], sim.albedo(CFG, MID))


def test_ae_at_setpoint_unchanged():
    assert sim.autoexposure_step(sim.AeState(12.0), 0.5).dt == 12.0


def test_ae_black_frame_step():
    assert sim.autoexposure_step(sim.AeState(10.0), 0.0).dt == pytest.approx(10 * math.exp(0.35))
    assert sim.autoexposure_step(sim.AeState(29.0), 0.0).dt == 30.0


def test_ae_rejects_bad_measurement():
    with pytest.raises(InvalidInputError):
        sim.autoexposure_step(sim.AeState(10.0), 1.2)
    with pytest.raises(InvalidInputError):
        sim.AeState(40.0)


@pytest.mark.parametrize("d, p", [(5.0, 0.0), (12.0, 0.0), (12.0, 1.0), (MID, 1.0), (MID, 0.0)])
def test_ae_converges_or_pins(d, p):
    ae = sim.AeState(10.0)
    for i in range(30):
        mean = float(sim.render(CFG, d, ControlInput(p, ae.dt), i).data.mean())
        if abs(mean - ae.target) <= 0.05:
            break
        ae = sim.autoexposure_step(ae, mean)
    assert abs(mean - ae.target) <= 0.05 or ae.dt in ae.bounds


def test_deep_interior_optimum_is_interior():
    import json
    from conftest import DATA
    space = SearchSpace()
    rows = json.loads((DATA / "oracle_seeds.json").read_text())["oracles"]
    assert len(rows) == 100
    on_edge = [r["seed"] for r in rows
               if r["P"] in space.p_bounds or r["dt"] in space.dt_bounds]
    print(f"oracle argmax on a bound for frame seeds {on_edge}")
    # strictly interior on the default seeds
    assert not set(on_edge) & set(range(5))
    # the exposure optimum is always interior; a few noisy frames prefer full power
    assert all(space.dt_bounds[0] < r["dt"] < space.dt_bounds[1] for r in rows)