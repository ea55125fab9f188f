"""Fixed-point solver for the coupled system via repeated scalar solves.

The coupled problem is solved on a chain of sub-horizons short enough
that the boundary coupling is contractive: on each one, the inflow of
every edge is assembled from the previous iterate's traces and
integrals, each edge is then solved exactly by characteristics, and the
sweep repeats until consecutive iterates agree in the time-uniform L1
norm.  The end state seeds the next sub-horizon.

Because backward characteristics are global in time, iterates are
represented through the (frozen) exact evaluation tables plus the
sampled inflow signals: within a sub-horizon only the current inflow
segment changes between iterations, so each sweep costs a handful of
interpolations.  Values in the datum-determined region never change
after the first sweep, which is also what makes trace couplings freeze.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import characteristics as ch
from .expr import eval_array, eval_expr
from .model import ModelConfig

__all__ = [
    "PicardOptions",
    "BoundarySignalSet",
    "PicardSolution",
    "sub_horizon",
    "SubHorizonWorkspace",
    "picard_step",
    "picard_solve",
    "picard_trajectory",
]


@dataclass(frozen=True)
class PicardOptions:
    time_samples: int = 256  # inflow samples per sub-horizon
    space_samples: int = 1024  # residual grid points per edge
    integral_samples: int = 513  # quadrature points per integral probe
    n_quad: int = 64
    relax_march: bool = False  # True: RK4 step = quadrature node spacing
    s_geom: float = 0.9  # safety factor on the trace-freezing cap
    s_lip: float = 0.5  # safety factor on the contraction cap
    store_lattices: bool = False


@dataclass
class BoundarySignalSet:
    """Per-edge sampled inflow signals on a common time grid."""

    times: np.ndarray
    values: dict[str, np.ndarray]

    def signal(self, edge_id: str) -> ch.BoundarySignal:
        return ch.BoundarySignal(self.times, self.values[edge_id])


@dataclass
class SubHorizonRecord:
    t_start: float
    t_end: float
    iterations: int
    residuals: list[float]


@dataclass
class PicardSolution:
    model: ModelConfig
    boundary: BoundarySignalSet
    sub_horizons: list[SubHorizonRecord]
    converged: bool
    outputs: dict[float, dict[str, np.ndarray]]
    output_grids: dict[str, np.ndarray]
    lattices: list[dict[str, np.ndarray]] = field(default_factory=list)
    lattice_times: list[np.ndarray] = field(default_factory=list)
    residual_grids: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return sum(rec.iterations for rec in self.sub_horizons)

    @property
    def residual(self) -> float:
        return max((rec.residuals[-1] for rec in self.sub_horizons if rec.residuals), default=0.0)

    def profile(self, edge_id: str, t: float, xs: np.ndarray, fields=None) -> np.ndarray:
        """Exact profile of the converged solution at any time and grid."""
        fld = (fields or _make_fields(self.model, t))[edge_id]
        ibvp = ch.ScalarIBVP(fld, self.model.edge(edge_id).initial, self.boundary.signal(edge_id))
        return ch.exact_profile(ibvp, t, np.asarray(xs, dtype=float)).values


def _make_fields(model: ModelConfig, t_max: float, n_quad: int = 64) -> dict[str, ch.CharacteristicField]:
    return {
        e.id: ch.make_field(e.growth, e.mortality, t_max=t_max, x_max=e.length, n_quad=n_quad)
        for e in model.edges
    }


def sub_horizon(
    model: ModelConfig,
    options: PicardOptions = PicardOptions(),
    fields: Mapping[str, ch.CharacteristicField] | None = None,
    t_start: float = 0.0,
) -> float:
    """Sub-horizon length over which the sweep is provably contractive.

    Combines the trace-freezing cap (the origin characteristic of each
    probed edge must not reach the probe) with the contraction cap from
    the coupling's sampled Lipschitz constant; absent traces the
    geometric cap is dropped, and a zero Lipschitz constant drops the
    contraction cap.
    """
    caps = [model.horizon - t_start]
    if fields is None:
        fields = _make_fields(model, model.horizon)
    probes = [p for c in model.couplings for p in c.traces]
    if probes:
        reach = min(
            ch.hit_time_T(p.location, t_start, 0.0, fields[p.edge]) - t_start for p in probes
        )
        caps.append(options.s_geom * reach)
    lip_beta = model.metadata.lip_beta
    if lip_beta > 0:
        caps.append(options.s_lip / (model.n_edges * lip_beta))
    return min(caps)


# ---------------------------------------------------------------------------
# One sub-horizon


class _EdgePoints:
    """Evaluation points of one edge: residual grid, probe grids, traces."""

    def __init__(self, edge_id: str, length: float, model: ModelConfig, options: PicardOptions):
        self.edge_id = edge_id
        self.res_grid = np.linspace(0.0, length, options.space_samples)
        blocks = [self.res_grid]
        self.int_slices: dict[tuple[int, int], slice] = {}
        self.int_weights: dict[tuple[int, int], np.ndarray] = {}
        self.trace_index: dict[tuple[int, int], int] = {}
        pos = self.res_grid.size
        for ci, c in enumerate(model.couplings):
            for pi, probe in enumerate(c.integrals):
                if probe.edge != edge_id:
                    continue
                grid = np.linspace(probe.lo, probe.hi, options.integral_samples)
                self.int_slices[(ci, pi)] = slice(pos, pos + grid.size)
                w = np.broadcast_to(eval_array(probe.weight, {"x": grid}), grid.shape)
                # trapezoid weights on the probe's own grid
                tw = np.full(grid.size, grid[1] - grid[0])
                tw[0] *= 0.5
                tw[-1] *= 0.5
                self.int_weights[(ci, pi)] = w * tw
                blocks.append(grid)
                pos += grid.size
            for pi, probe in enumerate(c.traces):
                if probe.edge != edge_id:
                    continue
                self.trace_index[(ci, pi)] = pos
                blocks.append(np.array([probe.location]))
                pos += 1
        self.all_points = np.concatenate(blocks)


class SubHorizonWorkspace:
    """Frozen evaluation tables for one sub-horizon of the sweep."""

    def __init__(
        self,
        model: ModelConfig,
        fields: Mapping[str, ch.CharacteristicField],
        gammas: Mapping[str, ch.GammaCurve],
        points: Mapping[str, _EdgePoints],
        prefix: BoundarySignalSet,
        t_start: float,
        t_end: float,
        options: PicardOptions,
    ):
        self.model = model
        self.fields = fields
        self.points = points
        self.options = options
        self.t_start = t_start
        self.t_end = t_end
        self.times = np.linspace(t_start, t_end, options.time_samples)
        self.prefix = prefix
        march_h = np.inf if options.relax_march else None
        self.tables: dict[str, list[ch.ProfileTable]] = {}
        for e in model.edges:
            fld = fields[e.id]
            pts = points[e.id].all_points
            self.tables[e.id] = [
                ch.profile_table(fld, float(t), pts, gamma_at_t=float(gammas[e.id].at(t)), march_h=march_h)
                for t in self.times
            ]
        # datum-branch values never change across sweeps; cache them
        self.datum_vals: dict[str, list[np.ndarray]] = {}
        for e in model.edges:
            cache = []
            for tab in self.tables[e.id]:
                vals = np.zeros(tab.grid.size)
                if np.any(tab.is_datum):
                    vals[tab.is_datum] = (
                        np.asarray(
                            eval_array(e.initial, {"x": tab.foot[tab.is_datum]}), dtype=float
                        )
                        * tab.efac[tab.is_datum]
                    )
                cache.append(vals)
            self.datum_vals[e.id] = cache

    def initial_iterate(self) -> dict[str, np.ndarray]:
        """Previous-iterate seed: the sub-horizon's start state, frozen in time."""
        out = {}
        for e in self.model.edges:
            pts = self.points[e.id].all_points
            if self.t_start == 0.0:
                row = np.broadcast_to(
                    eval_array(e.initial, {"x": pts}), pts.shape
                ).astype(float)
            else:
                # start state: boundary feet of the t_start table lie in the
                # converged prefix, so no segment data is involved
                tab = self.tables[e.id][0]
                row = self._solve_edge_at(e.id, 0, tab, None)
            out[e.id] = np.tile(row, (self.times.size, 1))
        return out

    def assemble_segment(self, prev: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Inflow samples of every edge from the previous iterate."""
        seg = {}
        for ci, c in enumerate(self.model.couplings):
            vals = np.empty(self.times.size)
            for j, t in enumerate(self.times):
                bind_a = {"t": float(t)}
                for pi, probe in enumerate(c.traces):
                    idx = self.points[probe.edge].trace_index[(ci, pi)]
                    bind_a[f"w{pi+1}"] = float(prev[probe.edge][j, idx])
                bind_b = {}
                for pi, probe in enumerate(c.integrals):
                    sl = self.points[probe.edge].int_slices[(ci, pi)]
                    w = self.points[probe.edge].int_weights[(ci, pi)]
                    bind_b[f"w{pi+1}"] = float(np.dot(w, prev[probe.edge][j, sl]))
                vals[j] = eval_expr(c.alpha, bind_a) + eval_expr(c.beta, bind_b)
            seg[c.edge] = vals
        return seg

    def _solve_edge_at(
        self, edge_id: str, j: int, tab: ch.ProfileTable, segment: np.ndarray | None
    ) -> np.ndarray:
        if segment is None:
            btimes = self.prefix.times
            bvals = self.prefix.values[edge_id]
        else:
            btimes = np.concatenate((self.prefix.times, self.times))
            bvals = np.concatenate((self.prefix.values[edge_id], segment))
        vals = self.datum_vals[edge_id][j].copy()
        mask = ~tab.is_datum
        if np.any(mask):
            bb = np.interp(tab.t0[mask], btimes, bvals)
            vals[mask] = bb / tab.g0[mask] * tab.efac[mask]
        return vals

    def solve_all(self, segment: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        out = {}
        for e in self.model.edges:
            rows = np.empty((self.times.size, self.points[e.id].all_points.size))
            for j, tab in enumerate(self.tables[e.id]):
                rows[j] = self._solve_edge_at(e.id, j, tab, np.asarray(segment[e.id]))
            out[e.id] = rows
        return out

    def residual(self, a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> float:
        worst = 0.0
        for e in self.model.edges:
            grid = self.points[e.id].res_grid
            nres = grid.size
            diff = np.abs(a[e.id][:, :nres] - b[e.id][:, :nres])
            worst = max(worst, float(np.trapezoid(diff, grid, axis=1).max()))
        return worst

    def step(
        self, prev: Mapping[str, np.ndarray]
    ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        seg = self.assemble_segment(prev)
        return seg, self.solve_all(seg)


def picard_step(
    ws: SubHorizonWorkspace, prev: Mapping[str, np.ndarray]
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """One sweep: assemble the inflow from the previous iterate, then solve
    every edge exactly.  Returns the inflow segment and the new iterate."""
    return ws.step(prev)


class PicardError(Exception):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


def picard_solve(
    model: ModelConfig,
    T: float,
    tol_l1: float = 1e-8,
    max_iter: int = 50,
    output_times: Sequence[float] = (),
    output_grids: Mapping[str, np.ndarray] | None = None,
    options: PicardOptions = PicardOptions(),
) -> PicardSolution:
    """Solve the coupled system on [0, T] by chained contractive sweeps.

    Raises :class:`PicardError` with the residual history if any
    sub-horizon fails to reach ``tol_l1`` within ``max_iter`` sweeps.
    """
    if tol_l1 <= 0:
        raise ValueError("tol_l1 must be positive")
    if T > model.horizon + 1e-12:
        raise ValueError("T exceeds the model horizon")
    fields = _make_fields(model, T, n_quad=options.n_quad)
    gammas = {eid: ch.GammaCurve(fld, T) for eid, fld in fields.items()}
    points = {e.id: _EdgePoints(e.id, e.length, model, options) for e in model.edges}
    if output_grids is None:
        output_grids = {e.id: points[e.id].res_grid for e in model.edges}
    pending = sorted(set(float(t) for t in output_times))
    if pending and pending[-1] > T + 1e-12:
        raise ValueError("output times exceed T")

    prefix = BoundarySignalSet(times=np.array([]), values={e.id: np.array([]) for e in model.edges})
    records: list[SubHorizonRecord] = []
    outputs: dict[float, dict[str, np.ndarray]] = {}
    lattices: list[dict[str, np.ndarray]] = []
    lattice_times: list[np.ndarray] = []

    t = 0.0
    eps = 1e-12 * max(1.0, T)
    if pending and pending[0] <= eps:
        t_out = pending.pop(0)
        outputs[t_out] = {
            e.id: np.broadcast_to(
                eval_array(e.initial, {"x": np.asarray(output_grids[e.id], dtype=float)}),
                np.asarray(output_grids[e.id]).shape,
            ).astype(float)
            for e in model.edges
        }
    while t < T - eps:
        span = min(sub_horizon(model, options, fields, t_start=t), T - t)
        t_end = t + span
        ws = SubHorizonWorkspace(model, fields, gammas, points, prefix, t, t_end, options)
        prev = ws.initial_iterate()
        residuals: list[float] = []
        seg = None
        for _ in range(max_iter):
            seg, cur = ws.step(prev)
            residuals.append(ws.residual(cur, prev))
            prev = cur
            if residuals[-1] <= tol_l1:
                break
        else:
            raise PicardError(
                f"no convergence on [{t:.6g}, {t_end:.6g}]: residuals {residuals}",
                history=residuals,
            )
        records.append(
            SubHorizonRecord(t_start=t, t_end=t_end, iterations=len(residuals), residuals=residuals)
        )
        # freeze the segment into the global inflow signal
        drop = 1 if prefix.times.size and ws.times.size else 0
        prefix = BoundarySignalSet(
            times=np.concatenate((prefix.times, ws.times[drop:])),
            values={
                eid: np.concatenate((prefix.values[eid], seg[eid][drop:]))
                for eid in prefix.values
            },
        )
        if options.store_lattices:
            lattices.append(prev)
            lattice_times.append(ws.times.copy())
        # requested outputs inside this sub-horizon
        while pending and pending[0] <= t_end + eps:
            t_out = pending.pop(0)
            outputs[t_out] = {}
            march_h = np.inf if options.relax_march else None
            for e in model.edges:
                grid = np.asarray(output_grids[e.id], dtype=float)
                tab = ch.profile_table(
                    fields[e.id], t_out, grid, gamma_at_t=float(gammas[e.id].at(t_out)), march_h=march_h
                )
                ibvp = ch.ScalarIBVP(fields[e.id], e.initial, prefix.signal(e.id))
                outputs[t_out][e.id] = ch.apply_table(tab, ibvp)
        t = t_end

    return PicardSolution(
        model=model,
        boundary=prefix,
        sub_horizons=records,
        converged=True,
        outputs=outputs,
        output_grids={eid: np.asarray(g, dtype=float) for eid, g in output_grids.items()},
        lattices=lattices,
        lattice_times=lattice_times,
        residual_grids={e.id: points[e.id].res_grid for e in model.edges},
    )


def picard_trajectory(
    model: ModelConfig,
    mesh,
    output_times: Sequence[float],
    tol_l1: float = 1e-8,
    max_iter: int = 50,
    options: PicardOptions = PicardOptions(),
):
    """Run the fixed-point solver and wrap it as a trajectory on a mesh,
    so downstream functionals accept either solver's output."""
    from .fv import Trajectory

    output_times = sorted(set(float(t) for t in output_times))
    grids = {eid: mesh.centers(eid) for eid in mesh.n}
    sol = picard_solve(
        model,
        output_times[-1],
        tol_l1=tol_l1,
        max_iter=max_iter,
        output_times=output_times,
        output_grids=grids,
        options=options,
    )
    traj = Trajectory(model=model, mesh=mesh)
    traj.times = list(output_times)
    traj.snapshots = [sol.outputs[t] for t in output_times]
    traj.step_times = list(sol.boundary.times)
    traj.step_inflow = {eid: list(vals) for eid, vals in sol.boundary.values.items()}
    traj.picard = sol
    return traj
