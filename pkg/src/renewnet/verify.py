"""Cross-checks between the two solvers and runtime invariant suites.

Each suite returns rows of (suite, check, value, bound, ok); the
command-line front end renders them and converts any failed row into a
nonzero exit code.  The convergence suite measures the observed L1
order of the volume scheme against the characteristics oracle on
smooth single-edge problems; the agreement suite cross-validates the
two independent solvers on the given model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import characteristics as ch
from . import functionals as F
from . import model as M
from . import picard as P
from .fv import Mesh, simulate

__all__ = ["CheckRow", "convergence_orders", "convergence_suite", "run_verify", "CONVERGENCE_FIXTURES"]


@dataclass(frozen=True)
class CheckRow:
    suite: str
    check: str
    value: float
    bound: float
    ok: bool


def _row(suite, check, value, bound, ok=None, sense="le"):
    if ok is None:
        ok = value <= bound if sense == "le" else value >= bound
    return CheckRow(suite=suite, check=check, value=float(value), bound=float(bound), ok=bool(ok))


# ---------------------------------------------------------------------------
# Convergence study

# smooth single-edge problems with a compatible corner (datum vanishes at 0)
CONVERGENCE_FIXTURES = {
    "const-coeff": {"length": 3.0, "growth": "1.5", "mortality": "-0.4"},
    "linear-growth": {"length": 3.0, "growth": "x+1", "mortality": "0"},
    "linear-mortality": {"length": 2.0, "growth": "1", "mortality": "-x/2"},
}
_SMOOTH_DATUM = "x^2*exp(-3*x)"


def _fixture_model(name: str, horizon: float = 1.0) -> M.ModelConfig:
    fx = CONVERGENCE_FIXTURES[name]
    return M.build_model(
        {
            "horizon": horizon,
            "edges": [
                {
                    "id": "e",
                    "length": fx["length"],
                    "growth": fx["growth"],
                    "mortality": fx["mortality"],
                    "initial": _SMOOTH_DATUM,
                }
            ],
            "couplings": [
                {"edge": "e", "alpha": {"expr": "0", "traces": []}, "beta": {"expr": "0", "integrals": []}}
            ],
        }
    )


def convergence_orders(
    model: M.ModelConfig, widths: tuple[float, ...] = (1 / 50, 1 / 100, 1 / 200, 1 / 400), t_end: float = 1.0
) -> tuple[float, list[float]]:
    """Observed L1 order of the volume scheme against the exact solver.

    Returns the least-squares slope of log error versus log width,
    together with the per-mesh errors.  Only meaningful on decoupled
    single-edge models, where the oracle applies directly.
    """
    (edge,) = model.edges
    fld = ch.make_field(edge.growth, edge.mortality, t_end, edge.length)
    ibvp = ch.ScalarIBVP(fld, edge.initial, ch.BoundarySignal.zero(t_end))
    errors = []
    for w in widths:
        mesh = Mesh.from_target(model, w)
        traj = simulate(model, mesh, [t_end])
        centers = mesh.centers(edge.id)
        exact = ch.exact_profile(ibvp, t_end, centers).values
        errors.append(float(mesh.da[edge.id] * np.abs(traj.snapshots[-1][edge.id] - exact).sum()))
    if max(errors) < 1e-14:
        # both solvers are exact here (e.g. the zero model): any order holds
        return float("inf"), errors
    slope = float(np.polyfit(np.log(widths), np.log(errors), 1)[0])
    return slope, errors


def convergence_suite(level: str = "fast") -> list[CheckRow]:
    widths = (1 / 50, 1 / 100, 1 / 200) if level == "fast" else (1 / 50, 1 / 100, 1 / 200, 1 / 400)
    rows = []
    for name in CONVERGENCE_FIXTURES:
        slope, _ = convergence_orders(_fixture_model(name), widths)
        rows.append(_row("convergence", f"{name} L1 order", slope, 0.8, sense="ge"))
    return rows


# ---------------------------------------------------------------------------
# Model-specific suites


def _is_single_decoupled(model: M.ModelConfig) -> bool:
    if model.n_edges != 1:
        return False
    c = model.couplings[0]
    return not c.traces and not c.integrals


def _suite_mesh(model: M.ModelConfig, level: str) -> Mesh:
    cells = 200 if level == "fast" else 400
    target = min(e.length for e in model.edges) / cells
    if model.mesh_da:
        target = max(min(target, model.mesh_da * 4), model.mesh_da)
    return Mesh.from_target(model, target)


def _couplings_monotone(model: M.ModelConfig, n: int = 200) -> bool:
    box_hi = model.lipschitz_box[1] if model.lipschitz_box else max(10.0 * model.metadata.u_o_sup, 1.0)
    rng = np.random.default_rng(7)
    from .expr import eval_expr

    for c in model.couplings:
        for expr, nargs, with_t in ((c.alpha, len(c.traces), True), (c.beta, len(c.integrals), False)):
            for _ in range(n if nargs else 0):
                w = rng.random(nargs) * box_hi
                bind = {f"w{i+1}": w[i] for i in range(nargs)}
                if with_t:
                    bind["t"] = float(rng.random() * model.horizon)
                base = eval_expr(expr, bind)
                for i in range(nargs):
                    bumped = dict(bind)
                    bumped[f"w{i+1}"] = min(w[i] + 1e-3 * box_hi, box_hi)
                    if eval_expr(expr, bumped) < base - 1e-9:
                        return False
    return True


def run_verify(model: M.ModelConfig, level: str = "fast") -> list[CheckRow]:
    """Full cross-check battery for one model; see the module docstring."""
    rows: list[CheckRow] = []
    t_end = min(1.0, model.horizon)
    times = np.linspace(0.0, t_end, 9)
    mesh = _suite_mesh(model, level)

    if _is_single_decoupled(model):
        widths = (1 / 50, 1 / 100, 1 / 200) if level == "fast" else (1 / 50, 1 / 100, 1 / 200, 1 / 400)
        slope, _ = convergence_orders(model, widths, t_end=t_end)
        rows.append(_row("convergence", "L1 order vs oracle", slope, 0.8, sense="ge"))
    else:
        rows.extend(convergence_suite(level))

    traj = simulate(model, mesh, times)

    # fixed-point solver against the volume scheme
    try:
        ptraj = P.picard_trajectory(model, mesh, times[1:])
        fine = Mesh(
            n={eid: 2 * n for eid, n in mesh.n.items()},
            da={eid: da / 2.0 for eid, da in mesh.da.items()},
        )
        ftraj = simulate(model, fine, times[1:])
        worst = 0.0
        ref = 0.0
        for k, t in enumerate(times[1:]):
            gap = sum(
                mesh.da[eid]
                * np.abs(ptraj.snapshots[k][eid] - traj.snapshots[k + 1][eid]).sum()
                for eid in mesh.n
            )
            sref = sum(
                mesh.da[eid]
                * np.abs(
                    ftraj.snapshots[k][eid].reshape(-1, 2).mean(axis=1)
                    - traj.snapshots[k + 1][eid]
                ).sum()
                for eid in mesh.n
            )
            worst = max(worst, gap)
            ref = max(ref, sref)
        rows.append(_row("picard", "sup L1 gap vs volume scheme", worst, 5.0 * ref + 1e-12))
        sub = P.sub_horizon(model)
        bound = model.n_edges * model.metadata.lip_beta * sub + 0.05
        ratio = 0.0
        psol = ptraj.picard
        for rec in psol.sub_horizons:
            for r_prev, r_next in zip(rec.residuals[1:], rec.residuals[2:]):
                if r_prev > 0:
                    ratio = max(ratio, r_next / r_prev)
        rows.append(_row("picard", "contraction ratio", ratio, bound))
    except P.PicardError as exc:
        rows.append(_row("picard", f"solver failed: {exc}", 1.0, 0.0, ok=False))

    # positivity
    min_cell = min(float(s[eid].min()) for s in traj.snapshots for eid in s)
    rows.append(_row("positivity", "min cell average", min_cell, -1e-12, sense="ge"))

    # zero datum stays zero
    zero_raw_edges = [
        {
            "id": e.id,
            "length": e.length,
            "growth": M.pretty(e.growth),
            "mortality": M.pretty(e.mortality),
            "initial": "0",
            "x_offset": e.x_offset,
        }
        for e in model.edges
    ]
    zmodel = M.build_model(
        {
            "horizon": model.horizon,
            "edges": zero_raw_edges,
            "couplings": [_coupling_raw(c) for c in model.couplings],
        }
    )
    ztraj = simulate(zmodel, mesh, times)
    zmax = max(float(np.abs(s[eid]).max()) for s in ztraj.snapshots for eid in s)
    rows.append(_row("zero-datum", "max |u| over run", zmax, 0.0))

    # comparison principle, only for monotone couplings
    if _couplings_monotone(model):
        low = traj
        high_model = _scaled_initial(model, 1.1)
        high = simulate(high_model, mesh, times)
        worst_break = 0.0
        for s_lo, s_hi in zip(low.snapshots, high.snapshots):
            for eid in s_lo:
                worst_break = min(worst_break, float((s_hi[eid] - s_lo[eid]).min()))
        rows.append(_row("comparison", "min ordered gap", worst_break, -1e-10, sense="ge"))
        report = F.stability_check(low, high, model)
        bad = sum(0 if r.ok else 1 for r in report.rows)
        rows.append(_row("stability", "bound violations", bad, 0.0))
    else:
        rows.append(_row("comparison", "skipped (non-monotone couplings)", 0.0, 0.0, ok=True))

    # a-priori growth bounds
    bundle = F.apriori_check(traj, model)
    rows.append(_row("apriori", "bound violations", len(bundle.violations), 0.0))
    return rows


def _coupling_raw(c: M.BoundaryCoupling) -> dict:
    return {
        "edge": c.edge,
        "alpha": {
            "expr": M.pretty(c.alpha),
            "traces": [{"edge": p.edge, "location": p.location} for p in c.traces],
        },
        "beta": {
            "expr": M.pretty(c.beta),
            "integrals": [
                {"edge": p.edge, "interval": [p.lo, p.hi], "weight": M.pretty(p.weight)}
                for p in c.integrals
            ],
        },
    }


def _scaled_initial(model: M.ModelConfig, factor: float) -> M.ModelConfig:
    edges = [
        {
            "id": e.id,
            "length": e.length,
            "growth": M.pretty(e.growth),
            "mortality": M.pretty(e.mortality),
            "initial": f"({factor})*({M.pretty(e.initial)})",
            "x_offset": e.x_offset,
        }
        for e in model.edges
    ]
    return M.build_model(
        {
            "horizon": model.horizon,
            "edges": edges,
            "couplings": [_coupling_raw(c) for c in model.couplings],
        }
    )
