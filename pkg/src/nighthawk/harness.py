"""Experiment driver: grid oracle, three-mode missions, tracking and metric benchmarks."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import bopt, controller, metrics, scenesim
from .bopt import BudgetConfig, ControlInput, OptResult, SearchSpace
from .controller import ActionKind, TriggerConfig
from .errors import FrameError, InvalidInputError, NightHawkError, ObjectiveError
from .imagecore import Image
from .scenesim import ScenarioConfig

MID_CULVERT = 43.0
ORACLE_CHUNK = 512

_STREAM_FRAME = 11
_STREAM_SWEEP = 12


def frame_seed(seed: int, index: int, stream: int = _STREAM_FRAME) -> int:
    """Per-frame noise seed derived from the run seed and a frame counter."""
    return int(scenesim.hash_keys(seed, stream, index, 0) >> np.uint64(1))


# --- objectives and the grid oracle ------------------------------------------------

@dataclass(frozen=True)
class SceneObjective:
    """M_feat of the frame rendered at a fixed pose and noise seed."""

    scenario: ScenarioConfig
    d: float = MID_CULVERT
    seed: int = 0
    params: metrics.MetricParams = metrics.DEFAULT_PARAMS

    def __call__(self, ctl: ControlInput) -> float:
        return float(self.batch([ctl.P], [ctl.dt])[0])

    def batch(self, p, dt):
        p = np.asarray(p, dtype=np.float64)
        dt = np.asarray(dt, dtype=np.float64)
        out = np.empty(p.shape[0])
        for i in range(0, p.shape[0], ORACLE_CHUNK):
            frames = scenesim.render_batch(self.scenario, self.d, p[i:i + ORACLE_CHUNK],
                                           dt[i:i + ORACLE_CHUNK], self.seed)
            out[i:i + ORACLE_CHUNK] = metrics.feat_scores(frames, self.params)
        return out


@dataclass(frozen=True)
class OracleResult:
    x_star: ControlInput
    y_star: float
    values: np.ndarray  # (resolution, resolution), P along rows


def grid_oracle(objective, space: SearchSpace, resolution: int = 101) -> OracleResult:
    """Exhaustive search on a uniform grid; the lowest row-major index wins ties.

    Objectives exposing ``batch(P, dt)`` are evaluated in vectorized chunks.
    """
    if resolution < 2:
        raise InvalidInputError("resolution must be >= 2")
    grid = bopt.unit_grid(resolution)
    p, dt = space.denormalize_many(grid)
    if hasattr(objective, "batch"):
        values = np.asarray(objective.batch(p, dt), dtype=np.float64)
    else:
        values = np.array([float(objective(ControlInput(a, b))) for a, b in zip(p, dt)])
    best = int(np.argmax(values))
    return OracleResult(ControlInput(float(p[best]), float(dt[best])), float(values[best]),
                        values.reshape(resolution, resolution))


def write_oracle(path, result: OracleResult, space: SearchSpace) -> None:
    res = result.values.shape[0]
    p, dt = space.denormalize_many(bopt.unit_grid(res))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["P", "dt_ms", "m_feat"])
        for a, b, y in zip(p, dt, result.values.ravel()):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(y))])


# --- missions ------------------------------------------------------------------------

class ConfigMode(enum.Enum):
    AE_NO_LIGHT = "ae_no_light"
    AE_FULL_LIGHT = "ae_full_light"
    NIGHTHAWK = "nighthawk"


def default_path(start=0.0, stop=86.0, step=0.25):
    return tuple(float(d) for d in np.arange(start, stop, step))


@dataclass(frozen=True)
class MissionConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    path: tuple = field(default_factory=default_path)
    mode: ConfigMode = ConfigMode.NIGHTHAWK
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    space: SearchSpace = field(default_factory=SearchSpace)
    seed: int = 0
    ae_initial_dt: float = 10.0
    track_k: int = 50
    track_radius: int = 2
    keep_frames: bool = False

    def __post_init__(self):
        path = tuple(float(d) for d in self.path)
        if not path:
            raise InvalidInputError("mission path is empty")
        if any(b <= a for a, b in zip(path, path[1:])):
            raise InvalidInputError("mission path must be strictly increasing")
        if path[0] < 0:
            raise InvalidInputError("path distances must be >= 0")
        object.__setattr__(self, "path", path)
        object.__setattr__(self, "mode", ConfigMode(self.mode))


@dataclass(frozen=True)
class FrameRow:
    frame_index: int
    d: float
    P: float
    dt: float
    m_feat: float
    mean_intensity: float
    mode: str
    action: str


@dataclass(frozen=True)
class MissionSummary:
    mean_m_deep: float
    mean_m_outside: float
    mean_m_all: float
    trigger_count: int
    apply_count: int
    mean_track_length: float
    mean_dt: float
    mean_dt_deep: float


@dataclass(frozen=True)
class MissionRecord:
    config_mode: ConfigMode
    rows: tuple
    summary: MissionSummary
    frames: tuple = ()


def is_deep_interior(cfg: ScenarioConfig, d: float) -> bool:
    return scenesim.ambient(cfg, d) <= 2.0 * cfg.ambient_floor


def _capture(cfg, d, ctl, seed):
    frame = scenesim.render(cfg, d, ctl, seed)
    return frame, metrics.m_feat_image(frame), float(frame.data.mean())


def run_mission(cfg: MissionConfig) -> MissionRecord:
    """Drive the camera along the path under one of the three configurations.

    Path frames are logged with mode ``monitor`` (or ``ae``).  In NightHawk
    mode every objective evaluation is a real frame captured with the pose
    frozen, logged with mode ``optimizing``; those frames are excluded from the
    segment statistics.
    """
    scn = cfg.scenario
    rows = []
    path_frames = []
    counter = [0]

    def next_seed():
        s = frame_seed(cfg.seed, counter[0])
        counter[0] += 1
        return s

    def log(d, ctl, m, mean, mode, action):
        rows.append(FrameRow(len(rows), d, ctl.P, ctl.dt, m, mean, mode, action))

    if cfg.mode is ConfigMode.NIGHTHAWK:
        state = controller.initial_state()

        def optimize_at(d, state):
            def objective(ctl):
                frame, m, mean = _capture(scn, d, ctl, next_seed())
                log(d, ctl, m, mean, "optimizing", "none")
                return m
            try:
                result = bopt.optimize(objective, cfg.space, cfg.budget)
            except ObjectiveError as exc:
                raise FrameError(str(exc), len(rows)) from exc
            state, action = controller.complete_optimization(state, result)
            last = rows[-1]
            rows[-1] = FrameRow(last.frame_index, last.d, last.P, last.dt, last.m_feat,
                                last.mean_intensity, last.mode, str(action))
            return state

        for i, d in enumerate(cfg.path):
            try:
                if state.mode is controller.Mode.OPTIMIZING:
                    state = optimize_at(d, state)
                frame, m, mean = _capture(scn, d, state.current, next_seed())
                state, action = controller.step(state, m, cfg.trigger)
            except FrameError:
                raise
            except NightHawkError as exc:
                raise FrameError(str(exc), len(rows)) from exc
            log(d, state.current, m, mean, "monitor", str(action))
            path_frames.append(frame)
    else:
        p = 0.0 if cfg.mode is ConfigMode.AE_NO_LIGHT else 1.0
        ae = scenesim.AeState(dt=cfg.ae_initial_dt, bounds=cfg.space.dt_bounds)
        for d in cfg.path:
            ctl = ControlInput(p, ae.dt)
            try:
                frame, m, mean = _capture(scn, d, ctl, next_seed())
                ae = scenesim.autoexposure_step(ae, mean)
            except NightHawkError as exc:
                raise FrameError(str(exc), len(rows)) from exc
            log(d, ctl, m, mean, "ae", "none")
            path_frames.append(frame)

    summary = summarize(cfg, rows, path_frames)
    return MissionRecord(cfg.mode, tuple(rows), summary,
                         tuple(path_frames) if cfg.keep_frames else ())


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else math.nan


def summarize(cfg: MissionConfig, rows, path_frames) -> MissionSummary:
    path_rows = [r for r in rows if r.mode != "optimizing"]
    deep = [is_deep_interior(cfg.scenario, r.d) for r in path_rows]
    d_in, d_out = cfg.scenario.culvert_span
    outside = [r.m_feat for r in path_rows if r.d < d_in or r.d > d_out]
    deep_frames = [f for f, keep in zip(path_frames, deep) if keep]
    lbar = (track_lengths(deep_frames, cfg.track_k, cfg.track_radius)
            if len(deep_frames) >= 2 else math.nan)
    return MissionSummary(
        mean_m_deep=_mean([r.m_feat for r, k in zip(path_rows, deep) if k]),
        mean_m_outside=_mean(outside),
        mean_m_all=_mean([r.m_feat for r in path_rows]),
        trigger_count=sum(r.action == ActionKind.TRIGGER.value for r in rows),
        apply_count=sum(r.action.startswith(ActionKind.APPLY.value) for r in rows),
        mean_track_length=lbar,
        mean_dt=_mean([r.dt for r in path_rows]),
        mean_dt_deep=_mean([r.dt for r, k in zip(path_rows, deep) if k]),
    )


MISSION_COLUMNS = ("frame_index", "pose", "P", "dt_ms", "m_feat", "mode", "action")


def mission_csv(record: MissionRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MISSION_COLUMNS)
    for r in record.rows:
        w.writerow([r.frame_index, repr(r.d), repr(r.P), repr(r.dt), repr(r.m_feat),
                    r.mode, r.action])
    return buf.getvalue()


def write_mission(path, record: MissionRecord) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(mission_csv(record))


# --- tracking ------------------------------------------------------------------------

def link_detections(a, b, radius: int):
    """Greedy one-to-one links ``(i, j)`` from ``a`` to ``b``.

    Candidate pairs within ``radius`` (Chebyshev) are taken in order of
    distance, then index in ``a``, then index in ``b``.
    """
    if len(a) == 0 or len(b) == 0:
        return []
    dist = metrics.chebyshev(a, b)
    ii, jj = np.nonzero(dist <= radius)
    order = np.lexsort((jj, ii, dist[ii, jj]))
    used_a, used_b, links = set(), set(), []
    for n in order:
        i, j = int(ii[n]), int(jj[n])
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
            links.append((i, j))
    return links


def track_lengths(frames, k: int, radius: int,
                  params: metrics.MetricParams = metrics.DEFAULT_PARAMS) -> float:
    """Mean number of consecutive frames per feature track."""
    frames = [f if isinstance(f, Image) else Image(f) for f in frames]
    if len(frames) < 2:
        raise InvalidInputError("track_lengths needs at least 2 frames")
    shape = frames[0].data.shape
    if any(f.data.shape != shape for f in frames):
        raise InvalidInputError("frames must share dimensions")
    finished = []
    prev = metrics.detect(frames[0], k, params)
    lengths = [1] * len(prev)
    for frame in frames[1:]:
        cur = metrics.detect(frame, k, params)
        new_lengths = [1] * len(cur)
        linked = set()
        for i, j in link_detections(prev, cur, radius):
            new_lengths[j] = lengths[i] + 1
            linked.add(i)
        finished.extend(n for i, n in enumerate(lengths) if i not in linked)
        prev, lengths = cur, new_lengths
    finished.extend(lengths)
    return float(np.mean(finished)) if finished else 0.0


# --- metric benchmark ----------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkResult:
    per_frame: tuple      # (frame_index, m_feat, m_shim, m_softperc, m_newg, matches|None)
    rho: dict             # MetricKind -> float or None when undefined


def metric_benchmark(frames, k: int | None = None, radius: int = 2,
                     params: metrics.MetricParams = metrics.DEFAULT_PARAMS) -> BenchmarkResult:
    """Spearman correlation of each metric with next-frame match counts.

    ``k`` defaults to one percent of the frame's pixels.
    """
    frames = [f if isinstance(f, Image) else Image(f) for f in frames]
    if len(frames) < 10:
        raise InvalidInputError("metric_benchmark needs at least 10 frames")
    if k is None:
        k = max(1, math.ceil(0.01 * frames[0].size))
    scores = {kind: [metrics.score(kind, f, params) for f in frames] for kind in metrics.MetricKind}
    dets = [metrics.detect(f, k, params) for f in frames]
    matches = [metrics.count_matches(a, b, radius) for a, b in zip(dets, dets[1:])]
    rho = {}
    for kind in metrics.MetricKind:
        try:
            rho[kind] = metrics.spearman(scores[kind][:-1], matches)
        except metrics.UndefinedCorrelationError:
            rho[kind] = None
    per_frame = tuple(
        (i,) + tuple(scores[kind][i] for kind in metrics.MetricKind)
        + ((matches[i] if i < len(matches) else None),)
        for i in range(len(frames)))
    return BenchmarkResult(per_frame, rho)


def exposure_sweep(scenario: ScenarioConfig, n: int = 24, d0: float = MID_CULVERT,
                   dt: float = 10.0, p_range=(0.01, 1.0), step_m: float = 0.25,
                   seed: int = 0):
    """Frames of a slow pass with the light ramping up geometrically.

    Exposure time stays fixed so the shake smear is the same in every frame
    and only the collected light varies.
    """
    ps = np.geomspace(p_range[0], p_range[1], n)
    return [scenesim.render(scenario, d0 + i * step_m, ControlInput(float(p), dt),
                            frame_seed(seed, i, _STREAM_SWEEP))
            for i, p in enumerate(ps)]


def benchmark_csv(result: BenchmarkResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_index", "m_feat", "m_shim", "m_softperc", "m_newg", "matches"])
    for row in result.per_frame:
        w.writerow([row[0]] + [repr(float(v)) for v in row[1:5]]
                   + ["NA" if row[5] is None else row[5]])
    return buf.getvalue()


def correlation_csv(result: BenchmarkResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "spearman_rho"])
    for kind, rho in result.rho.items():
        w.writerow([kind.value, "NA" if rho is None else repr(rho)])
    return buf.getvalue()
