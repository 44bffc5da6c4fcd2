"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is
printed in the terminal summary.  Run with ``pytest tests/test_acceptance.py``."""

import json
import math
import os
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import DATA, record
from nighthawk import bopt, cli, controller as ctl, gp, harness as hx, metrics
from nighthawk.bopt import BudgetConfig, ControlInput, SearchSpace
from nighthawk.config import load_settings
from nighthawk.imagecore import Image
from nighthawk.scenesim import ScenarioConfig
from oracles import gp_dense, random_gp_instance

MISSION_SEEDS = (0, 1, 2, 3, 4)
FIELD_LBAR = {"nighthawk": 6.94, "ae_full_light": 4.70, "ae_no_light": 2.33}
FIELD_DT = {"nighthawk": 7.77, "ae_no_light": 14.98}


def test_01_gp_matches_dense_oracle():
    rng = np.random.default_rng(2024)
    worst, elapsed = 0.0, 0.0
    for _ in range(100):
        X, y, Xq, ell, sf2, sn2 = random_gp_instance(rng)
        t0 = time.perf_counter()
        model = gp.fit(list(zip(map(tuple, X), y)), gp.Hyperparams(ell, sf2, sn2))
        mu, var = gp.predict_many(model, Xq)
        elapsed += time.perf_counter() - t0
        mu_ref, var_ref, _ = gp_dense(X, y, Xq, ell, sf2, sn2, model.jitter)
        worst = max(worst, np.abs(mu - mu_ref).max(), np.abs(var - var_ref).max())
    ok = record("1 GP correctness", worst <= 1e-8 and elapsed < 5.0,
                f"max |error| {worst:.2e} (tol 1e-8) over 100 instances, {elapsed:.3f} s")
    assert ok


def test_02_kernel_and_ei_analytics():
    h = gp.Hyperparams(0.2, 1.7)
    k_aa = gp.matern52((0.3, 0.8), (0.3, 0.8), h)
    ei0 = bopt.expected_improvement(0.0, 1.0, 0.0, 0.0)
    ei1 = bopt.expected_improvement(1.0, 1.0, 0.0, 0.0)
    ok = (k_aa == 1.7 and abs(ei0 - 0.39894) <= 1e-4 and abs(ei1 - 1.08331) <= 1e-4)
    record("2 kernel/EI analytics", ok,
           f"k(a,a)={k_aa} (sf2 1.7), EI(z=0)={ei0:.5f}, EI(d=1)={ei1:.5f}")
    assert ok


@pytest.fixture(scope="module")
def frozen_oracles():
    with open(DATA / "oracle_seeds.json") as fh:
        blob = json.load(fh)
    assert blob["pose"] == hx.MID_CULVERT and blob["resolution"] == 101
    return {row["seed"]: row for row in blob["oracles"]}


@pytest.mark.parametrize("seed", [0, 99])
def test_frozen_oracle_still_reproduces(frozen_oracles, seed):
    live = hx.grid_oracle(hx.SceneObjective(ScenarioConfig(), hx.MID_CULVERT, seed),
                          SearchSpace(), 101)
    assert live.y_star == frozen_oracles[seed]["y_star"]
    assert (live.x_star.P, live.x_star.dt) == (frozen_oracles[seed]["P"],
                                               frozen_oracles[seed]["dt"])


def test_03_bo_reaches_oracle(frozen_oracles):
    scenario, space = ScenarioConfig(), SearchSpace()
    hits, ratios, elapsed = 0, [], 0.0
    for seed in range(100):
        objective = hx.SceneObjective(scenario, hx.MID_CULVERT, seed)
        t0 = time.perf_counter()
        res = bopt.optimize(objective, space, BudgetConfig(seed=seed))
        elapsed += time.perf_counter() - t0
        ratio = res.y_star / frozen_oracles[seed]["y_star"]
        ratios.append(ratio)
        hits += ratio >= 0.98
    ok = record("3 BO vs oracle", hits >= 95 and elapsed < 60.0,
                f"{hits}/100 seeds reach 0.98 of the grid max (need 95); "
                f"min ratio {min(ratios):.4f}, median {statistics.median(ratios):.4f}; "
                f"{elapsed:.1f} s")
    assert ok


def test_04_m_feat_unit_suite():
    exact = [
        (np.full((3, 3), 0.5), np.full((3, 3), 0.5), 0.125),
        (np.ones((3, 3)), np.ones((3, 3)), 1.0),
        (np.array([[1, 0], [1, 0]]), np.array([[0.5, 0.5], [1, 1]]), 0.28125),
    ]
    worst = max(abs(metrics.m_feat(metrics.ResponseMaps(r, q)) - v) for r, q, v in exact)
    rng = np.random.default_rng(7)
    mono = scale = 0
    for _ in range(1000):
        shape = tuple(rng.integers(1, 9, size=2))
        r, q = rng.random(shape), rng.random(shape)
        base = metrics.m_feat(metrics.ResponseMaps(r, q))
        r2, q2 = r.copy(), q.copy()
        mask = rng.random(shape) < 0.5
        r2[mask] += (1 - r2[mask]) * rng.random(mask.sum())
        q2[mask] += (1 - q2[mask]) * rng.random(mask.sum())
        mono += metrics.m_feat(metrics.ResponseMaps(r2, q2)) >= base
        c = float(rng.uniform(1e-3, 1.0))
        scaled = metrics.m_feat(metrics.ResponseMaps(r, c * q))
        scale += math.isclose(scaled, c * c * base, rel_tol=1e-12, abs_tol=1e-300)
    ok = worst <= 1e-12 and mono == 1000 and scale == 1000
    record("4 M_feat unit suite", ok,
           f"hand cases max error {worst:.1e}; monotone {mono}/1000; c^2 scaling {scale}/1000")
    assert ok


def _fuzz_streams(rng, count, length):
    """Replay random streams; return (#safety violations, #liveness violations, #triggers)."""
    bad_safety = bad_live = triggers = 0
    x = ControlInput(0.5, 10.0)
    for _ in range(count):
        cfg = ctl.TriggerConfig(float(rng.uniform(0.001, 0.3)), int(rng.integers(1, 8)))
        m_star = float(rng.random())
        state = ctl.ControllerState(ctl.Mode.MONITOR, x, m_star, 0)
        run = 0
        for m, finish in zip(rng.random(length).tolist(), (rng.random(length) < 0.3).tolist()):
            if state.mode is ctl.Mode.OPTIMIZING:
                state, action = ctl.step(state, m, cfg)
                bad_safety += action.kind is not ctl.ActionKind.NONE
                if finish:
                    state, _ = ctl.complete_optimization(
                        state, bopt.OptResult(x, m_star, ((x, m_star),), "budget"))
                    run = 0
                continue
            state, action = ctl.step(state, m, cfg)
            run = run + 1 if m_star - m > cfg.epsilon else 0
            fired = action.kind is ctl.ActionKind.TRIGGER
            triggers += fired
            bad_safety += fired and run < cfg.debounce_n
            bad_live += run == cfg.debounce_n and not fired
            if fired:
                run = 0
    return bad_safety, bad_live, triggers


def test_05_trigger_semantics():
    cfg = ctl.TriggerConfig(0.1, 3)
    traces = {}
    for name, frames in (("3 violations", [0.3, 0.3, 0.3]),
                         ("reset", [0.3, 0.3, 0.45, 0.3, 0.3, 0.3])):
        state = ctl.ControllerState(ctl.Mode.MONITOR, ControlInput(0.5, 10.0), 0.5, 0)
        kinds = []
        for m in frames:
            state, a = ctl.step(state, m, cfg)
            kinds.append(a.kind is ctl.ActionKind.TRIGGER)
        traces[name] = kinds
    traces_ok = (traces["3 violations"] == [False, False, True]
                 and traces["reset"] == [False] * 5 + [True])
    safety, live, fired = _fuzz_streams(np.random.default_rng(11), 100_000, 20)
    ok = traces_ok and safety == 0 and live == 0
    record("5 trigger semantics", ok,
           f"traces {'exact' if traces_ok else 'WRONG'}; 1e5 streams: {fired} triggers, "
           f"{safety} safety and {live} liveness violations")
    assert ok


@pytest.fixture(scope="module")
def missions():
    settings = load_settings()
    out = {}
    t0 = time.perf_counter()
    for seed in MISSION_SEEDS:
        for mode in hx.ConfigMode:
            cfg = replace(cli.mission_config(settings, mode.value), seed=seed)
            out[seed, mode.value] = hx.run_mission(cfg).summary
    out["elapsed"] = time.perf_counter() - t0
    return out


def test_06_mission_ordering(missions):
    ordered = True
    for seed in MISSION_SEEDS:
        nh, full, dark = (missions[seed, m] for m in ("nighthawk", "ae_full_light", "ae_no_light"))
        ordered &= nh.mean_m_deep > full.mean_m_deep > dark.mean_m_deep
        ordered &= nh.mean_track_length > full.mean_track_length > dark.mean_track_length
        ordered &= nh.mean_dt < full.mean_dt
    means = {m: [missions[s, m] for s in MISSION_SEEDS] for m in FIELD_LBAR}
    parts = []
    for m in ("nighthawk", "ae_full_light", "ae_no_light"):
        lbar = statistics.mean(s.mean_track_length for s in means[m])
        mdeep = statistics.mean(s.mean_m_deep for s in means[m])
        dt = statistics.mean(s.mean_dt for s in means[m])
        field = f", field dt {FIELD_DT[m]} ms" if m in FIELD_DT else ""
        parts.append(f"{m} M_deep {mdeep:.4f} l {lbar:.3f} (field {FIELD_LBAR[m]}) "
                     f"dt {dt:.2f} ms{field}")
    ok = ordered and missions["elapsed"] < 600
    record("6 mission ordering", ok,
           f"per-seed ordering {'holds' if ordered else 'BROKEN'} on seeds 0-4 "
           f"({missions['elapsed']:.0f} s); " + "; ".join(parts))
    assert ok


def test_07_trigger_count(missions):
    counts = [missions[s, "nighthawk"].trigger_count for s in MISSION_SEEDS]
    ok = all(2 <= c <= 6 for c in counts)
    record("7 trigger count", ok, f"NightHawk triggers per seed {counts} (need 2..6)")
    assert ok


def test_ae_no_light_collapses_in_the_dark(missions):
    ratios = [missions[s, "ae_no_light"].mean_m_deep / missions[s, "ae_no_light"].mean_m_outside
              for s in MISSION_SEEDS]
    assert max(ratios) < 0.25


def test_08_metric_benchmark():
    settings = load_settings()
    run = settings.run
    frames = hx.exposure_sweep(settings.scenario, run.sweep_frames, run.pose, run.sweep_dt,
                               (run.sweep_p_min, run.sweep_p_max), run.path_step, run.seed)
    rho = hx.metric_benchmark(frames, None, run.track_radius).rho[metrics.MetricKind.FEAT]
    rank_example = metrics.spearman((1, 2, 3, 4), (2, 1, 4, 3))
    ok = rho >= 0.8 and abs(rank_example - 0.6) <= 1e-12
    record("8 metric benchmark", ok,
           f"rho(m_feat, matches) = {rho:.4f} on the default sweep (need 0.8); "
           f"spearman n=4 example {rank_example!r}")
    assert ok


def test_09_mission_csv_deterministic(tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["mission", "--out", str(out), "--seed", "3"]) == 0
        outputs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out))})
    ok = outputs[0] == outputs[1] and len(outputs[0]) == 4
    record("9 determinism", ok, f"{len(outputs[0])} CSV files byte-identical across two runs"
           if ok else "mission CSVs differ between runs")
    assert ok


def test_10_throughput():
    img = Image(np.random.default_rng(5).random((240, 320)))
    times = []
    for _ in range(40):
        t0 = time.perf_counter()
        metrics.m_feat(metrics.response_maps(img))
        times.append(time.perf_counter() - t0)
    median = statistics.median(times) * 1000
    ok = median < 66.0
    record("10 throughput", ok, f"response_maps + m_feat on 320x240: median {median:.1f} ms")
    assert ok
