"""Scalar-parameter optimization: grid scan plus golden-section refinement.

The objective is continuous in the control parameter but not guaranteed
unimodal, so a coarse deterministic scan locates the best cell and a
golden-section search refines inside it.  Grid points are independent
simulations and may be evaluated in parallel; results are always merged
in parameter order, so the outcome is bit-identical regardless of
worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import functionals
from .fv import Mesh, simulate
from .model import ModelConfig

__all__ = [
    "SweepPoint",
    "SweepResult",
    "MaximizeResult",
    "sweep",
    "maximize",
    "utility_objective",
    "netgain_objective",
    "OBJECTIVES",
]

ModelFamily = Callable[[float], ModelConfig]
Objective = Callable[[object], float]

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SweepPoint:
    param: float
    objective: float | None
    error: str | None = None


@dataclass
class SweepResult:
    points: list[SweepPoint]
    trace: list[tuple[float, float]] = field(default_factory=list)  # refinement evaluations

    @property
    def argmax(self) -> SweepPoint:
        ok = [p for p in self.points if p.objective is not None]
        if not ok:
            raise RuntimeError("no sweep point succeeded")
        best = max(ok, key=lambda p: (p.objective, -p.param))
        return best


@dataclass(frozen=True)
class MaximizeResult:
    param: float
    value: float
    sweep: SweepResult


def _default_snapshots(model: ModelConfig, n: int = 257) -> np.ndarray:
    return np.linspace(0.0, model.horizon, n)


def _evaluate_point(
    family: ModelFamily,
    objective: Objective,
    param: float,
    da: float | None,
    cfl: float,
    snapshots: int,
) -> float:
    model = family(param)
    mesh = Mesh.from_target(model, da)
    traj = simulate(model, mesh, _default_snapshots(model, snapshots), cfl=cfl)
    return float(objective(traj))


def sweep(
    family: ModelFamily,
    objective: Objective,
    grid: Sequence[float],
    da: float | None = None,
    cfl: float = 0.9,
    snapshots: int = 257,
    jobs: int = 1,
) -> SweepResult:
    """Evaluate the objective over a parameter grid, one run per point.

    Failures are recorded per point and excluded from the argmax; ties
    break toward the smallest parameter.
    """
    grid = sorted(float(p) for p in grid)
    if not grid:
        raise ValueError("empty parameter grid")
    points: list[SweepPoint] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_evaluate_point, family, objective, p, da, cfl, snapshots)
                for p in grid
            ]
            for p, fut in zip(grid, futures):
                try:
                    points.append(SweepPoint(param=p, objective=fut.result()))
                except Exception as exc:  # per-point failure, sweep continues
                    points.append(SweepPoint(param=p, objective=None, error=str(exc)))
    else:
        for p in grid:
            try:
                points.append(
                    SweepPoint(
                        param=p,
                        objective=_evaluate_point(family, objective, p, da, cfl, snapshots),
                    )
                )
            except Exception as exc:
                points.append(SweepPoint(param=p, objective=None, error=str(exc)))
    return SweepResult(points=points)


def maximize(
    family: ModelFamily,
    objective: Objective,
    tol_param: float = 0.005,
    da: float | None = None,
    cfl: float = 0.9,
    snapshots: int = 257,
    grid_points: int = 21,
    bounds: tuple[float, float] = (0.0, 1.0),
    jobs: int = 1,
) -> MaximizeResult:
    """Grid scan, then golden-section refinement around the best cell.

    The returned value is never below the best scanned objective; at
    equal objectives the smaller parameter wins.
    """
    if tol_param <= 0:
        raise ValueError("tol_param must be positive")
    lo, hi = bounds
    grid = np.linspace(lo, hi, grid_points)
    result = sweep(family, objective, grid, da=da, cfl=cfl, snapshots=snapshots, jobs=jobs)
    best = result.argmax
    h = (hi - lo) / (grid_points - 1) if grid_points > 1 else (hi - lo)
    a = max(lo, best.param - h)
    b = min(hi, best.param + h)

    memo: dict[float, float] = {
        p.param: p.objective for p in result.points if p.objective is not None
    }

    def f(p: float) -> float:
        if p not in memo:
            memo[p] = _evaluate_point(family, objective, p, da, cfl, snapshots)
            result.trace.append((p, memo[p]))
        return memo[p]

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    while b - a > tol_param:
        if f(c) < f(d):
            a = c
            c = d
            d = a + INV_PHI * (b - a)
        else:
            b = d
            d = c
            c = b - INV_PHI * (b - a)
    mid = 0.5 * (a + b)
    f(mid)
    # candidates: refinement midpoint, best refined sample, best grid point
    cand = [(mid, memo[mid]), (best.param, best.objective)]
    cand += [(p, v) for p, v in result.trace]
    param, value = max(cand, key=lambda pv: (pv[1], -pv[0]))
    return MaximizeResult(param=param, value=value, sweep=result)


# ---------------------------------------------------------------------------
# Ready-made objectives


def utility_objective(traj) -> float:
    """Time-averaged fertility of a two-sex run; reads theta and nu from
    the model parameters."""
    params = traj.model.parameters
    return functionals.utility_mating(traj, theta=params["theta"], nu=params["nu"])


def netgain_objective(traj) -> float:
    """Accumulated gain minus cost, using the model's cost declarations."""
    return functionals.cost_gain(traj).net


OBJECTIVES: dict[str, Objective] = {
    "utility": utility_objective,
    "netgain": netgain_objective,
}
