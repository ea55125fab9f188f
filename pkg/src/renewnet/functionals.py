"""Diagnostics and objective functionals over simulation output.

Norms follow the component-sum convention for vector-valued states:
the L1, sup, and total-variation values of a multi-edge state are the
sums of the per-edge values.  All functions here are pure and operate
on trajectory objects duck-typed as ``(times, snapshots, model, mesh,
boundary log)``; they are safe to evaluate concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .expr import Expression, eval_array, parse_expr

__all__ = [
    "l1_norm",
    "linf_norm",
    "discrete_tv",
    "clipped_integral",
    "estimate_C",
    "estimate_c_for",
    "EstimateBundle",
    "BoundRow",
    "apriori_check",
    "fertility_R",
    "utility_mating",
    "CostGainResult",
    "cost_gain",
    "StabilityReport",
    "stability_check",
    "interval_flux_rows",
]

States = Mapping[str, np.ndarray]


# ---------------------------------------------------------------------------
# Norms


def l1_norm(states: States, mesh) -> float:
    return float(sum(mesh.da[eid] * np.abs(u).sum() for eid, u in states.items()))


def linf_norm(states: States) -> float:
    return float(sum(np.abs(u).max() if np.size(u) else 0.0 for u in states.values()))


def discrete_tv(states: States) -> float:
    return float(sum(np.abs(np.diff(u)).sum() for u in states.values()))


def clipped_integral(
    u: np.ndarray, da: float, lo: float, hi: float, weight: Expression | None = None
) -> float:
    """Midpoint-rule integral of ``weight(x) * u`` over ``[lo, hi]``.

    Cells partially covered by the interval contribute proportionally to
    the overlap, which is exact for piecewise-constant densities.
    """
    n = u.size
    left = np.arange(n) * da
    right = left + da
    overlap = np.minimum(right, hi) - np.maximum(left, lo)
    overlap = np.clip(overlap, 0.0, None)
    if weight is not None:
        centers = left + 0.5 * da
        wvals = np.broadcast_to(eval_array(weight, {"x": centers}), (n,))
        return float(np.dot(overlap * wvals, u))
    return float(np.dot(overlap, u))


# ---------------------------------------------------------------------------
# Coefficient constant


def estimate_c_for(edges: Sequence, horizon: float, nt: int = 65, nx: int = 513) -> float:
    """Sampled coefficient constant: twice the largest of the sup norms and
    per-time variations of the growth field, its space derivative, and the
    mortality field, over all edges."""
    worst = 0.0
    for e in edges:
        ts = np.linspace(0.0, horizon, nt)
        xs = np.linspace(0.0, e.length, nx)
        tt, xx = np.meshgrid(ts, xs, indexing="ij")
        gv = np.broadcast_to(eval_array(e.growth, {"t": tt, "x": xx}), tt.shape)
        dv = np.broadcast_to(eval_array(e.mortality, {"t": tt, "x": xx}), tt.shape)
        dxg = np.gradient(gv, xs, axis=1)
        dtg = np.gradient(gv, ts, axis=0) if nt > 1 else np.zeros_like(gv)
        terms = (
            np.abs(dxg).max(),
            np.abs(dtg).max(),
            np.abs(np.diff(gv, axis=1)).sum(axis=1).max(),
            np.abs(np.diff(dxg, axis=1)).sum(axis=1).max(),
            np.abs(dv).max(),
            np.abs(np.diff(dv, axis=1)).sum(axis=1).max(),
        )
        worst = max(worst, float(max(terms)))
    return 2.0 * worst


def estimate_C(model) -> float:
    return estimate_c_for(model.edges, model.horizon)


# ---------------------------------------------------------------------------
# A-priori bound monitoring


@dataclass(frozen=True)
class BoundRow:
    t: float
    quantity: str
    lhs: float
    rhs: float
    ok: bool


@dataclass
class EstimateBundle:
    C: float
    g_low: float
    g_high: float
    lip_alpha: float
    lip_beta: float
    rows: list[BoundRow] = field(default_factory=list)

    @property
    def violations(self) -> list[BoundRow]:
        return [r for r in self.rows if not r.ok]

    @property
    def ok(self) -> bool:
        return not self.violations


_SLACK = {"l1": 0.05, "linf": 0.05, "tvx": 0.10}
_ABS_FLOOR = 1e-12


def apriori_check(traj, model) -> EstimateBundle:
    """Compare per-snapshot norms against their growth bounds.

    The bounds use the sampled coefficient constant, the growth lower
    bound, and the logged inflow; violations beyond the per-quantity
    relative slack (discretization allowance) are flagged.
    """
    md = model.metadata
    C = md.c_estimate
    g_low = md.g_low_global
    bundle = EstimateBundle(
        C=C,
        g_low=g_low,
        g_high=md.g_high_global,
        lip_alpha=md.lip_alpha,
        lip_beta=md.lip_beta,
    )
    bt, bvals = traj.boundary_log()
    init = traj.snapshots[0]
    u0_l1 = l1_norm(init, traj.mesh)
    u0_sup = linf_norm(init)
    u0_tv = discrete_tv(init)
    for t, states in zip(traj.times, traj.snapshots):
        mask = bt <= t + 1e-12
        b_sup = b_l1 = b_tv = 0.0
        for eid in states:
            vals = bvals[eid][mask]
            if vals.size:
                b_sup += float(np.abs(vals).max())
                b_l1 += float(np.trapezoid(np.abs(vals), bt[mask]))
                b_tv += float(np.abs(np.diff(vals)).sum())
        grow = float(np.exp(C * t))
        rows = (
            ("linf", linf_norm(states), (u0_sup + b_sup / g_low) * grow),
            ("l1", l1_norm(states, traj.mesh), (u0_l1 + b_l1 / g_low) * grow),
            (
                "tvx",
                discrete_tv(states),
                (u0_sup + u0_tv + (C + g_low) / g_low**2 * b_sup + b_tv / g_low) * grow,
            ),
        )
        for quantity, lhs, rhs in rows:
            ok = lhs <= rhs * (1.0 + _SLACK[quantity]) + _ABS_FLOOR
            bundle.rows.append(BoundRow(t=float(t), quantity=quantity, lhs=lhs, rhs=rhs, ok=ok))
    return bundle


# ---------------------------------------------------------------------------
# Two-sex fertility functionals


def fertility_R(
    states: States,
    mesh,
    theta: float,
    nu: float,
    intervals: Sequence[tuple[str, float, float]],
) -> float:
    """Instantaneous average fertility over the fertile stocks.

    ``intervals`` lists the male and female fertile windows as
    ``(edge, lo, hi)``.  When both stocks vanish the population is
    extinct and the rate is 0 by convention.
    """
    (me, mlo, mhi), (fe, flo, fhi) = intervals
    w_m = clipped_integral(states[me], mesh.da[me], mlo, mhi)
    w_f = clipped_integral(states[fe], mesh.da[fe], flo, fhi)
    denom = w_m + w_f
    if denom == 0.0:
        return 0.0
    return nu * min(theta * w_m, (1.0 - theta) * w_f) / denom


def _mating_intervals(model) -> list[tuple[str, float, float]]:
    probes = model.couplings[0].integrals
    return [(p.edge, p.lo, p.hi) for p in probes]


def utility_mating(traj, theta: float, nu: float | None = None) -> float:
    """Time average of the fertility rate over the trajectory's span."""
    model = traj.model
    if nu is None:
        nu = model.parameters["nu"]
    intervals = _mating_intervals(model)
    rates = np.array(
        [fertility_R(states, traj.mesh, theta, nu, intervals) for states in traj.snapshots]
    )
    span = traj.times[-1] - traj.times[0]
    if span == 0:
        return float(rates[0])
    return float(np.trapezoid(rates, traj.times) / span)


# ---------------------------------------------------------------------------
# Cost / gain functionals


@dataclass(frozen=True)
class CostGainResult:
    cost: float
    gain: float
    times: np.ndarray
    running_net: np.ndarray  # gain(t) - cost(t), cumulative

    @property
    def net(self) -> float:
        return self.gain - self.cost


def _as_expr(src) -> Expression:
    if isinstance(src, str):
        return parse_expr(src, {"a"})
    return src


def cost_gain(traj, unit_cost: Mapping[str, Any] | None = None, unit_gain: Mapping[str, Any] | None = None) -> CostGainResult:
    """Accumulated cost and gain of a run.

    ``unit_cost[edge]`` and ``unit_gain[edge]`` are expressions in the
    original age variable ``a``; shifted edges are mapped back through
    their offset.  Space integrals use the midpoint rule and the time
    integral a trapezoid over the stored snapshots.
    """
    model = traj.model
    if unit_cost is None or unit_gain is None:
        spec = model.costs or {}
        unit_cost = unit_cost if unit_cost is not None else spec.get("unit_cost", {})
        unit_gain = unit_gain if unit_gain is not None else spec.get("unit_gain", {})
    cost_exprs = {eid: _as_expr(src) for eid, src in unit_cost.items()}
    gain_exprs = {eid: _as_expr(src) for eid, src in unit_gain.items()}

    cost_w: dict[str, np.ndarray] = {}
    gain_w: dict[str, np.ndarray] = {}
    for eid, e in ((e.id, e) for e in model.edges):
        da = traj.mesh.da[eid]
        centers = (np.arange(traj.mesh.n[eid]) + 0.5) * da + e.x_offset
        if eid in cost_exprs:
            cost_w[eid] = np.broadcast_to(
                eval_array(cost_exprs[eid], {"a": centers}), centers.shape
            ) * da
        if eid in gain_exprs:
            gain_w[eid] = np.broadcast_to(
                eval_array(gain_exprs[eid], {"a": centers}), centers.shape
            ) * da

    times = np.asarray(traj.times, dtype=float)
    cost_rate = np.zeros(times.size)
    gain_rate = np.zeros(times.size)
    for k, states in enumerate(traj.snapshots):
        cost_rate[k] = sum(float(np.dot(w, states[eid])) for eid, w in cost_w.items())
        gain_rate[k] = sum(float(np.dot(w, states[eid])) for eid, w in gain_w.items())
    if times.size > 1:
        cum_cost = np.concatenate(
            ([0.0], np.cumsum(0.5 * (cost_rate[1:] + cost_rate[:-1]) * np.diff(times)))
        )
        cum_gain = np.concatenate(
            ([0.0], np.cumsum(0.5 * (gain_rate[1:] + gain_rate[:-1]) * np.diff(times)))
        )
    else:
        cum_cost = np.zeros(1)
        cum_gain = np.zeros(1)
    return CostGainResult(
        cost=float(cum_cost[-1]),
        gain=float(cum_gain[-1]),
        times=times,
        running_net=cum_gain - cum_cost,
    )


# ---------------------------------------------------------------------------
# Stability comparison


@dataclass
class StabilityReport:
    rows: list[BoundRow] = field(default_factory=list)
    perturbation: float | None = None  # sup distance of the couplings, when known
    gaps: list[tuple[float, float]] = field(default_factory=list)  # (t, L1 gap)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def stability_check(run1, run2, model, slack: float = 0.05, perturbation: float | None = None) -> StabilityReport:
    """Check the L1 distance of two runs against the inflow/datum bound.

    Both runs must share the mesh and step sequence.  When the two runs
    differ only through their couplings, pass the sampled sup distance
    of the couplings as ``perturbation`` for the report.
    """
    md = model.metadata
    C = md.c_estimate
    g_low = md.g_low_global
    t1 = np.asarray(run1.times)
    t2 = np.asarray(run2.times)
    if t1.size != t2.size or not np.allclose(t1, t2):
        raise ValueError("stability_check requires runs on a common snapshot grid")
    bt1, bv1 = run1.boundary_log()
    bt2, bv2 = run2.boundary_log()
    if bt1.size != bt2.size or not np.allclose(bt1, bt2):
        raise ValueError("stability_check requires runs with a common step sequence")

    d0 = {
        eid: run1.snapshots[0][eid] - run2.snapshots[0][eid] for eid in run1.snapshots[0]
    }
    u0_gap = l1_norm(d0, run1.mesh)
    report = StabilityReport(perturbation=perturbation)
    for k, t in enumerate(t1):
        mask = bt1 <= t + 1e-12
        b_gap = 0.0
        for eid in bv1:
            diff = np.abs(bv1[eid][mask] - bv2[eid][mask])
            if diff.size:
                b_gap += float(np.trapezoid(diff, bt1[mask]))
        gap = l1_norm(
            {eid: run1.snapshots[k][eid] - run2.snapshots[k][eid] for eid in run1.snapshots[k]},
            run1.mesh,
        )
        rhs = (u0_gap + b_gap / g_low) * float(np.exp(C * t))
        ok = gap <= rhs * (1.0 + slack) + _ABS_FLOOR
        report.rows.append(BoundRow(t=float(t), quantity="uffa", lhs=gap, rhs=rhs, ok=ok))
        report.gaps.append((float(t), gap))
    return report


def interval_flux_rows(traj, edge_id: str, lo: float, hi: float, slack: float = 0.10) -> list[BoundRow]:
    """Bound the drift of an interval population by the accumulated
    sup-plus-variation integral, pairwise over snapshots."""
    model = traj.model
    C = model.metadata.c_estimate
    da = traj.mesh.da[edge_id]
    times = np.asarray(traj.times)
    pops = np.array(
        [clipped_integral(states[edge_id], da, lo, hi) for states in traj.snapshots]
    )
    weights = np.array(
        [
            float(np.abs(states[edge_id]).max()) + float(np.abs(np.diff(states[edge_id])).sum())
            for states in traj.snapshots
        ]
    )
    rows = []
    for i in range(len(times)):
        for j in range(i + 1, len(times)):
            lhs = abs(pops[j] - pops[i])
            rhs = C * float(np.trapezoid(weights[i : j + 1], times[i : j + 1]))
            ok = lhs <= rhs * (1.0 + slack) + _ABS_FLOOR
            rows.append(BoundRow(t=float(times[j]), quantity=f"tvi[{times[i]:g},{times[j]:g}]", lhs=lhs, rhs=rhs, ok=ok))
    return rows
