"""Bayesian optimization of light intensity and exposure time.

The loop standardizes observed utilities, fits the Matern GP in the
normalized square, maximizes Expected Improvement over a fixed 101x101 grid
and stops on budget or when the best remaining EI is negligible relative to
the observed utility range.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from . import gp
from .errors import InvalidInputError, NonPSDError, ObjectiveError

GRID_RES = 101
DUPLICATE_TOL = 1e-9
LENGTHSCALE_GRID = (0.05, 0.1, 0.2, 0.4, 0.8)
REFINE_EVERY = 5
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ControlInput:
    """Light intensity fraction ``P`` and exposure time ``dt`` in ms."""

    P: float
    dt: float


@dataclass(frozen=True)
class SearchSpace:
    p_bounds: tuple = (0.0, 1.0)
    dt_bounds: tuple = (0.5, 30.0)

    def __post_init__(self):
        p_lo, p_hi = (float(v) for v in self.p_bounds)
        dt_lo, dt_hi = (float(v) for v in self.dt_bounds)
        if not 0.0 <= p_lo <= p_hi <= 1.0:
            raise InvalidInputError(f"P bounds must satisfy 0 <= lo <= hi <= 1, got {self.p_bounds}")
        if not (0.0 < dt_lo < dt_hi and math.isfinite(dt_hi)):
            raise InvalidInputError(f"dt bounds must satisfy 0 < lo < hi < inf, got {self.dt_bounds}")
        object.__setattr__(self, "p_bounds", (p_lo, p_hi))
        object.__setattr__(self, "dt_bounds", (dt_lo, dt_hi))

    @classmethod
    def for_frame_rate(cls, fps, dt_min=0.5, p_bounds=(0.0, 1.0)):
        """Cap exposure at one frame period so the camera can sustain ``fps``."""
        return cls(p_bounds, (dt_min, 1000.0 / fps))

    def normalize(self, ctl: ControlInput):
        (p_lo, p_hi), (dt_lo, dt_hi) = self.p_bounds, self.dt_bounds
        zp = 0.0 if p_hi == p_lo else (ctl.P - p_lo) / (p_hi - p_lo)
        return np.array([zp, (ctl.dt - dt_lo) / (dt_hi - dt_lo)])

    def denormalize(self, z) -> ControlInput:
        (p_lo, p_hi), (dt_lo, dt_hi) = self.p_bounds, self.dt_bounds
        zp, zd = float(z[0]), float(z[1])
        return ControlInput(p_lo + zp * (p_hi - p_lo), dt_lo + zd * (dt_hi - dt_lo))

    def denormalize_many(self, Z):
        Z = np.asarray(Z, dtype=np.float64).reshape(-1, 2)
        (p_lo, p_hi), (dt_lo, dt_hi) = self.p_bounds, self.dt_bounds
        return p_lo + Z[:, 0] * (p_hi - p_lo), dt_lo + Z[:, 1] * (dt_hi - dt_lo)

    def contains(self, ctl: ControlInput, tol=1e-12) -> bool:
        (p_lo, p_hi), (dt_lo, dt_hi) = self.p_bounds, self.dt_bounds
        return (p_lo - tol <= ctl.P <= p_hi + tol) and (dt_lo - tol <= ctl.dt <= dt_hi + tol)


def unit_grid(resolution=GRID_RES):
    """Row-major ``resolution**2 x 2`` grid over [0,1]^2; the P axis is the row."""
    t = np.linspace(0.0, 1.0, resolution)
    zp, zd = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([zp.ravel(), zd.ravel()])


_GRID = unit_grid()
_GRID.setflags(write=False)


@dataclass(frozen=True)
class BudgetConfig:
    n_init: int = 5
    max_evals: int = 25
    ei_floor: float = 1e-4
    seed: int = 0
    xi: float = 0.01
    hyper: gp.Hyperparams = field(default_factory=gp.Hyperparams)
    refine_lengthscale: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_init < 2:
            raise InvalidInputError("n_init must be >= 2")
        if self.max_evals < self.n_init:
            raise InvalidInputError("max_evals must be >= n_init")
        if self.ei_floor < 0 or self.xi < 0:
            raise InvalidInputError("ei_floor and xi must be >= 0")


@dataclass(frozen=True)
class OptResult:
    x_star: ControlInput
    y_star: float
    history: tuple
    stop_reason: str


def expected_improvement(mu, sigma, y_best, xi=0.0):
    """EI of a Gaussian posterior ``N(mu, sigma^2)`` over the incumbent ``y_best``.

    Works elementwise on arrays; ``sigma == 0`` gives ``max(mu - y_best - xi, 0)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    d = mu - y_best - xi
    safe = np.where(sigma > 0.0, sigma, 1.0)
    # subnormal sigma sends z to +-inf, where both terms have the right limit
    with np.errstate(over="ignore", invalid="ignore"):
        z = d / safe
        ei = d * ndtr(z) + safe * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(sigma > 0.0, ei, np.maximum(d, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def ei_grid(model: gp.GPModel, y_best, xi):
    mu, var = gp.predict_many(model, _GRID)
    return expected_improvement(mu, np.sqrt(var), y_best, xi)


def propose_next(model: gp.GPModel, space: SearchSpace, y_best, xi=0.01) -> ControlInput:
    """Grid argmax of EI (lowest row-major index on ties), denormalized."""
    ei = ei_grid(model, y_best, xi)
    return space.denormalize(_GRID[int(np.argmax(ei))])


def initial_design(n_init, seed):
    if n_init == 5:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    with warnings.catch_warnings():
        # non power-of-two sample counts are fine for a seed design
        warnings.simplefilter("ignore", UserWarning)
        return qmc.Sobol(d=2, scramble=True, seed=seed).random(n_init)


def _standardize(y):
    mean = float(np.mean(y))
    std = float(np.std(y))
    return mean, (std if std > 0.0 else 1.0)


def _refined_hyper(Z, ys, hyper):
    best, best_lml = hyper, -math.inf
    for ell in LENGTHSCALE_GRID:
        cand = gp.Hyperparams(ell, hyper.signal_var, hyper.noise_var)
        try:
            lml = gp.log_marginal_likelihood(gp.fit(list(zip(map(tuple, Z), ys)), cand))
        except NonPSDError:
            continue
        if lml > best_lml:
            best, best_lml = cand, lml
    return best


def optimize(objective, space: SearchSpace, budget: BudgetConfig = BudgetConfig()) -> OptResult:
    """Maximize ``objective(ControlInput) -> float`` over ``space``."""
    history = []
    Z = []

    def commit(z, y):
        Z.append(np.asarray(z, dtype=np.float64))
        history.append((space.denormalize(z), float(y)))

    def evaluate(z):
        try:
            return objective(space.denormalize(z))
        except Exception as exc:
            raise ObjectiveError(f"objective failed at {space.denormalize(z)}: {exc}",
                                 history) from exc

    design = initial_design(budget.n_init, budget.seed)
    if budget.workers > 1:
        # results are committed in design order whatever the completion order
        with ThreadPoolExecutor(budget.workers) as pool:
            futures = [pool.submit(objective, space.denormalize(z)) for z in design]
            for z, fut in zip(design, futures):
                try:
                    y = fut.result()
                except Exception as exc:
                    raise ObjectiveError(f"objective failed at {space.denormalize(z)}: {exc}",
                                         history) from exc
                commit(z, y)
    else:
        for z in design:
            commit(z, evaluate(z))

    hyper = budget.hyper
    stop_reason = "budget"
    while len(history) < budget.max_evals:
        ys = np.array([y for _, y in history])
        mean, std = _standardize(ys)
        zs = (ys - mean) / std
        Zarr = np.array(Z)
        if budget.refine_lengthscale and len(history) % REFINE_EVERY == 0:
            hyper = _refined_hyper(Zarr, zs, hyper)
        model = gp.fit(list(zip(map(tuple, Zarr), zs)), hyper)
        ei = ei_grid(model, float(zs.max()), budget.xi)
        # compare in raw utility units; a flat history has zero spread and stops
        if float(np.std(ys)) * float(ei.max()) <= budget.ei_floor * float(ys.max() - ys.min()):
            stop_reason = "ei_floor"
            break
        dist = np.abs(_GRID[:, None, :] - Zarr[None, :, :]).max(axis=2).min(axis=1)
        ei = np.where(dist > DUPLICATE_TOL, ei, -np.inf)
        z_next = _GRID[int(np.argmax(ei))]
        commit(z_next, evaluate(z_next))

    ys = [y for _, y in history]
    best = int(np.argmax(ys))
    return OptResult(history[best][0], ys[best], tuple(history), stop_reason)


def write_trace(path, result: OptResult) -> None:
    """CSV trace: eval_index, P, dt_ms, y, best_so_far, stop_reason (final row)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eval_index", "P", "dt_ms", "y", "best_so_far", "stop_reason"])
        best = -math.inf
        last = len(result.history) - 1
        for i, (x, y) in enumerate(result.history):
            best = max(best, y)
            w.writerow([i, repr(x.P), repr(x.dt), repr(y), repr(best),
                        result.stop_reason if i == last else ""])
