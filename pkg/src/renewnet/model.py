"""Model declaration and validation for coupled transport systems on graphs.

A model is a finite set of 1-D edges, each carrying growth/mortality
fields and an initial density, plus one boundary coupling per edge that
assembles the inflow at the edge's left end from interior traces
(``alpha``) and weighted integrals (``beta``) of the current state.

Configurations arrive as a JSON-compatible tree with all scalar
functions written in the expression language; named parameters are
substituted into every expression at load time so typos surface
immediately.  Validation enforces a positive lower bound on every
growth field, the vanishing of the couplings at the zero state, and
records sampled Lipschitz estimates used by the fixed-point solver.

Edges living on a shifted age window (for example an adult stage on
``[x_min, x_max]``) are stored in local coordinates starting at zero
with the shift kept in ``x_offset``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .expr import (
    BinOp,
    Expression,
    ExprError,
    Neg,
    Num,
    Var,
    check_bounds,
    eval_expr,
    parse_expr,
    pretty,
    substitute,
)

__all__ = [
    "ModelError",
    "Edge",
    "TraceProbe",
    "IntegralProbe",
    "BoundaryCoupling",
    "ModelMetadata",
    "ModelConfig",
    "build_model",
    "mating_raw",
    "resource_raw",
    "juvenile_adult_raw",
    "builtin_mating",
    "builtin_resource",
    "builtin_juvenile_adult",
]

ZERO_TOL = 1e-12


class ModelError(Exception):
    """Configuration failed to load or validate."""


@dataclass(frozen=True)
class Edge:
    id: str
    length: float
    growth: Expression  # over (t, x)
    mortality: Expression  # over (t, x)
    initial: Expression  # over x
    x_offset: float = 0.0  # shift back to the original coordinate, for reports


@dataclass(frozen=True)
class TraceProbe:
    edge: str
    location: float  # interior point, left limit is read


@dataclass(frozen=True)
class IntegralProbe:
    edge: str
    lo: float
    hi: float
    weight: Expression = Num(1.0)  # over x


@dataclass(frozen=True)
class BoundaryCoupling:
    edge: str  # receives the inflow at x = 0
    alpha: Expression  # over (t, w1..wm), fed by traces
    traces: tuple[TraceProbe, ...]
    beta: Expression  # over (w1..wk), fed by integrals
    integrals: tuple[IntegralProbe, ...]


@dataclass
class ModelMetadata:
    g_low: dict[str, float]
    g_high: dict[str, float]
    g_low_global: float
    g_high_global: float
    d_sup: dict[str, float]
    u_o_sup: float
    lip_alpha: float
    lip_beta: float
    c_estimate: float
    warnings: list[str] = field(default_factory=list)


@dataclass
class ModelConfig:
    """Validated model; treat as immutable after :func:`build_model`."""

    edges: tuple[Edge, ...]
    couplings: tuple[BoundaryCoupling, ...]
    horizon: float
    parameters: dict[str, float]
    metadata: ModelMetadata
    mesh_da: float | None = None
    costs: dict[str, Any] | None = None
    lipschitz_box: tuple[float, float] | None = None

    def edge(self, edge_id: str) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    def coupling(self, edge_id: str) -> BoundaryCoupling:
        for c in self.couplings:
            if c.edge == edge_id:
                return c
        raise KeyError(edge_id)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


# ---------------------------------------------------------------------------
# Loading and validation

_EDGE_KEYS = {"id", "length", "growth", "mortality", "initial", "x_offset"}
_COUPLING_KEYS = {"edge", "alpha", "beta"}
_TOP_KEYS = {
    "edges",
    "couplings",
    "horizon",
    "parameters",
    "mesh",
    "costs",
    "lipschitz_box",
    "title",
}


def _reject_unknown(section: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ModelError(f"unknown key(s) {sorted(unknown)} in {where}")


def _parse(src: Any, allowed: set[str], params: Mapping[str, float], where: str) -> Expression:
    if not isinstance(src, str):
        raise ModelError(f"{where}: expected an expression string, got {type(src).__name__}")
    try:
        ast = parse_expr(src, allowed | set(params))
    except ExprError as exc:
        raise ModelError(f"{where}: {exc}") from None
    return substitute(ast, dict(params))


def build_model(raw: Mapping[str, Any]) -> ModelConfig:
    """Validate a configuration tree and return the executable model."""
    if not isinstance(raw, Mapping):
        raise ModelError("configuration root must be a mapping")
    _reject_unknown(raw, _TOP_KEYS, "configuration root")
    try:
        horizon = float(raw["horizon"])
    except KeyError:
        raise ModelError("missing 'horizon'") from None
    if not (horizon > 0 and np.isfinite(horizon)):
        raise ModelError("'horizon' must be a positive real")

    params_raw = raw.get("parameters", {})
    params: dict[str, float] = {}
    for name, value in params_raw.items():
        try:
            params[name] = float(value)
        except (TypeError, ValueError):
            raise ModelError(f"parameter '{name}' must be a real number") from None

    edges_raw = raw.get("edges")
    if not edges_raw:
        raise ModelError("at least one edge is required")

    edges: list[Edge] = []
    for idx, er in enumerate(edges_raw):
        _reject_unknown(er, _EDGE_KEYS, f"edges[{idx}]")
        try:
            eid = str(er["id"])
            length = float(er["length"])
        except KeyError as exc:
            raise ModelError(f"edges[{idx}]: missing {exc}") from None
        if any(e.id == eid for e in edges):
            raise ModelError(f"duplicate edge id '{eid}'")
        if not (length > 0 and np.isfinite(length)):
            raise ModelError(f"edge '{eid}': length must be positive")
        growth = _parse(er.get("growth", "1"), {"t", "x"}, params, f"edge '{eid}' growth")
        mortality = _parse(er.get("mortality", "0"), {"t", "x"}, params, f"edge '{eid}' mortality")
        initial = _parse(er.get("initial", "0"), {"x"}, params, f"edge '{eid}' initial")
        edges.append(
            Edge(
                id=eid,
                length=length,
                growth=growth,
                mortality=mortality,
                initial=initial,
                x_offset=float(er.get("x_offset", 0.0)),
            )
        )
    edge_ids = {e.id: e for e in edges}

    couplings_raw = raw.get("couplings")
    if couplings_raw is None:
        raise ModelError("missing 'couplings'")
    couplings: list[BoundaryCoupling] = []
    for idx, cr in enumerate(couplings_raw):
        _reject_unknown(cr, _COUPLING_KEYS, f"couplings[{idx}]")
        try:
            eid = str(cr["edge"])
        except KeyError:
            raise ModelError(f"couplings[{idx}]: missing 'edge'") from None
        if eid not in edge_ids:
            raise ModelError(f"couplings[{idx}]: unknown edge '{eid}'")
        if any(c.edge == eid for c in couplings):
            raise ModelError(f"edge '{eid}' has more than one coupling")

        alpha_raw = cr.get("alpha", {"expr": "0", "traces": []})
        _reject_unknown(alpha_raw, {"expr", "traces"}, f"coupling '{eid}' alpha")
        traces = []
        for tr in alpha_raw.get("traces", []):
            _reject_unknown(tr, {"edge", "location"}, f"coupling '{eid}' trace")
            tedge = str(tr["edge"])
            if tedge not in edge_ids:
                raise ModelError(f"coupling '{eid}': trace references unknown edge '{tedge}'")
            loc = float(tr["location"])
            if not (0 < loc <= edge_ids[tedge].length):
                raise ModelError(
                    f"coupling '{eid}': trace location {loc} outside ]0, {edge_ids[tedge].length}]"
                )
            traces.append(TraceProbe(edge=tedge, location=loc))
        alpha_vars = {"t"} | {f"w{i+1}" for i in range(len(traces))}
        alpha = _parse(alpha_raw.get("expr", "0"), alpha_vars, params, f"coupling '{eid}' alpha")

        beta_raw = cr.get("beta", {"expr": "0", "integrals": []})
        _reject_unknown(beta_raw, {"expr", "integrals"}, f"coupling '{eid}' beta")
        integrals = []
        for ir in beta_raw.get("integrals", []):
            _reject_unknown(ir, {"edge", "interval", "weight"}, f"coupling '{eid}' integral")
            iedge = str(ir["edge"])
            if iedge not in edge_ids:
                raise ModelError(f"coupling '{eid}': integral references unknown edge '{iedge}'")
            lo, hi = (float(v) for v in ir["interval"])
            L = edge_ids[iedge].length
            if not (0 <= lo < hi <= L):
                raise ModelError(
                    f"coupling '{eid}': interval [{lo}, {hi}] invalid on edge '{iedge}' of length {L}"
                )
            weight = _parse(ir.get("weight", "1"), {"x"}, params, f"coupling '{eid}' weight")
            if ir.get("weight") is not None and "weight" in ir:
                wrep = check_bounds(weight, {"x": (lo, hi)}, 512)
                if wrep.min_seen <= 0:
                    raise ModelError(
                        f"coupling '{eid}': integral weight must stay positive on [{lo}, {hi}]"
                        f" (sampled min {wrep.min_seen})"
                    )
            integrals.append(IntegralProbe(edge=iedge, lo=lo, hi=hi, weight=weight))
        beta_vars = {f"w{i+1}" for i in range(len(integrals))}
        beta = _parse(beta_raw.get("expr", "0"), beta_vars, params, f"coupling '{eid}' beta")

        couplings.append(
            BoundaryCoupling(
                edge=eid, alpha=alpha, traces=tuple(traces), beta=beta, integrals=tuple(integrals)
            )
        )
    missing = set(edge_ids) - {c.edge for c in couplings}
    if missing:
        raise ModelError(f"edge(s) {sorted(missing)} have no coupling")
    # align couplings with edge declaration order
    couplings.sort(key=lambda c: [e.id for e in edges].index(c.edge))

    mesh_da = None
    if "mesh" in raw and raw["mesh"]:
        _reject_unknown(raw["mesh"], {"da"}, "mesh")
        mesh_da = float(raw["mesh"]["da"])
        if mesh_da <= 0:
            raise ModelError("mesh.da must be positive")

    lip_box = None
    if raw.get("lipschitz_box") is not None:
        lo, hi = (float(v) for v in raw["lipschitz_box"])
        if not (hi > lo):
            raise ModelError("lipschitz_box must be a non-degenerate interval")
        lip_box = (lo, hi)

    metadata = _validate_and_measure(edges, couplings, horizon, lip_box)
    return ModelConfig(
        edges=tuple(edges),
        couplings=tuple(couplings),
        horizon=horizon,
        parameters=params,
        metadata=metadata,
        mesh_da=mesh_da,
        costs=raw.get("costs"),
        lipschitz_box=lip_box,
    )


def _validate_and_measure(
    edges: list[Edge],
    couplings: list[BoundaryCoupling],
    horizon: float,
    lip_box: tuple[float, float] | None,
) -> ModelMetadata:
    g_low, g_high, d_sup = {}, {}, {}
    u_o_sup = 0.0
    warnings: list[str] = []
    for e in edges:
        box = {"t": (0.0, horizon), "x": (0.0, e.length)}
        try:
            grep = check_bounds(e.growth, box, 4096)
        except ExprError as exc:
            raise ModelError(f"edge '{e.id}': growth not evaluable: {exc}") from None
        if grep.min_seen <= 0:
            raise ModelError(
                f"edge '{e.id}': growth must have a positive lower bound"
                f" (sampled min {grep.min_seen})"
            )
        g_low[e.id], g_high[e.id] = grep.min_seen, grep.max_seen
        try:
            drep = check_bounds(e.mortality, box, 4096)
        except ExprError as exc:
            raise ModelError(f"edge '{e.id}': mortality not evaluable: {exc}") from None
        d_sup[e.id] = max(abs(drep.min_seen), abs(drep.max_seen))
        try:
            urep = check_bounds(e.initial, {"x": (0.0, e.length)}, 2048)
        except ExprError as exc:
            raise ModelError(f"edge '{e.id}': initial datum not evaluable: {exc}") from None
        u_o_sup = max(u_o_sup, abs(urep.min_seen), abs(urep.max_seen))

    # zero state must produce zero inflow on every edge
    t_samples = np.linspace(0.0, horizon, 33)
    for c in couplings:
        zeros_a = {f"w{i+1}": 0.0 for i in range(len(c.traces))}
        for t in t_samples:
            val = eval_expr(c.alpha, {"t": float(t), **zeros_a})
            if abs(val) > ZERO_TOL:
                raise ModelError(
                    f"coupling '{c.edge}': alpha(t, 0) = {val} at t={t}; must vanish at the zero state"
                )
        zeros_b = {f"w{i+1}": 0.0 for i in range(len(c.integrals))}
        val = eval_expr(c.beta, zeros_b) if zeros_b else eval_expr(c.beta, {})
        if abs(val) > ZERO_TOL:
            raise ModelError(f"coupling '{c.edge}': beta(0) = {val}; must vanish at the zero state")

    if lip_box is None:
        hi = 10.0 * u_o_sup if u_o_sup > 0 else 10.0
        lip_box = (0.0, hi)
    lip_alpha = 0.0
    lip_beta = 0.0
    for c in couplings:
        lip_alpha = max(lip_alpha, _sampled_lipschitz(c.alpha, len(c.traces), lip_box, horizon))
        lip_beta = max(lip_beta, _sampled_lipschitz(c.beta, len(c.integrals), lip_box, None))

    md = ModelMetadata(
        g_low=g_low,
        g_high=g_high,
        g_low_global=min(g_low.values()),
        g_high_global=max(g_high.values()),
        d_sup=d_sup,
        u_o_sup=u_o_sup,
        lip_alpha=lip_alpha,
        lip_beta=lip_beta,
        c_estimate=0.0,
        warnings=warnings,
    )
    from . import functionals  # deferred: functionals has no import-time needs here

    md.c_estimate = functionals.estimate_c_for(edges, horizon)
    return md


def _sampled_lipschitz(
    expr: Expression,
    n_args: int,
    box: tuple[float, float],
    t_max: float | None,
    n_samples: int = 512,
    seed: int = 20240 ,
) -> float:
    """Max sampled difference quotient |f(w') - f(w)| / |w' - w|_1.

    Uses random base points plus per-coordinate and random perturbations;
    deterministic via a fixed seed.
    """
    if n_args == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    lo, hi = box
    span = hi - lo
    names = [f"w{i+1}" for i in range(n_args)]
    best = 0.0

    def value(w, t):
        bind = {nm: w[i] for i, nm in enumerate(names)}
        if t_max is not None:
            bind["t"] = t
        return eval_expr(expr, bind)

    for _ in range(n_samples):
        w = lo + span * rng.random(n_args)
        t = float(rng.random() * t_max) if t_max is not None else 0.0
        f0 = value(w, t)
        # coordinate bumps at two scales plus one random direction
        for scale in (1e-3 * span, 1e-1 * span):
            for i in range(n_args):
                w2 = w.copy()
                w2[i] = min(hi, w2[i] + scale)
                dw = abs(w2[i] - w[i])
                if dw == 0:
                    continue
                q = abs(value(w2, t) - f0) / dw
                if q > best:
                    best = q
        direction = rng.random(n_args) - 0.5
        norm1 = np.abs(direction).sum()
        if norm1 > 0:
            w2 = np.clip(w + direction / norm1 * (1e-2 * span), lo, hi)
            dw = np.abs(w2 - w).sum()
            if dw > 0:
                q = abs(value(w2, t) - f0) / dw
                if q > best:
                    best = q
        if not np.isfinite(best):
            raise ModelError("coupling has unbounded sampled difference quotients")
    return best


# ---------------------------------------------------------------------------
# Builtin models


def _shift_x(expr: Expression, offset: float) -> Expression:
    if offset == 0.0:
        return expr
    return substitute(expr, {"x": BinOp("+", Var("x"), Num(float(offset)))})


def mating_raw(
    theta: float,
    kappa: float = 0.6,
    mu: float = 0.02,
    eta: float = 0.485,
    nu: float = 3.0,
    male_window: tuple[float, float] = (18.0, 60.0),
    female_window: tuple[float, float] = (16.0, 55.0),
    male_length: float = 80.0,
    female_length: float = 90.0,
    male_initial: str = "10",
    female_initial: str = "10",
    horizon: float = 500.0,
    da: float = 0.04167,
) -> dict:
    """Configuration tree of the two-sex model (see :func:`builtin_mating`)."""
    for name, v in (("kappa", kappa), ("eta", eta), ("theta", theta)):
        if not 0.0 <= v <= 1.0:
            raise ModelError(f"{name} must lie in [0, 1], got {v}")
    if mu <= 0 or nu <= 0:
        raise ModelError("mu and nu must be positive")
    m1, m2 = male_window
    f1, f2 = female_window
    if not (0 <= m1 < m2 <= male_length and 0 <= f1 < f2 <= female_length):
        raise ModelError("fertile windows must be ordered and inside the edges")
    return {
        "title": "two-sex mating model",
        "horizon": horizon,
        "parameters": {"theta": theta, "kappa": kappa, "mu": mu, "eta": eta, "nu": nu},
        "edges": [
            {
                "id": "M",
                "length": male_length,
                "growth": "1",
                "mortality": "-(kappa*mu)",
                "initial": male_initial,
            },
            {
                "id": "F",
                "length": female_length,
                "growth": "1",
                "mortality": "-((1-kappa)*mu)",
                "initial": female_initial,
            },
        ],
        "couplings": [
            {
                "edge": "M",
                "alpha": {"expr": "0", "traces": []},
                "beta": {
                    "expr": "(1-eta)*nu*min(theta*w1,(1-theta)*w2)",
                    "integrals": [
                        {"edge": "M", "interval": [m1, m2]},
                        {"edge": "F", "interval": [f1, f2]},
                    ],
                },
            },
            {
                "edge": "F",
                "alpha": {"expr": "0", "traces": []},
                "beta": {
                    "expr": "eta*nu*min(theta*w1,(1-theta)*w2)",
                    "integrals": [
                        {"edge": "M", "interval": [m1, m2]},
                        {"edge": "F", "interval": [f1, f2]},
                    ],
                },
            },
        ],
        "mesh": {"da": da},
    }


def builtin_mating(theta: float, **kwargs) -> ModelConfig:
    """Two-sex model: male/female branches fed by a min-type birth law.

    Newborns split ``eta : (1 - eta)`` between the sexes and total
    ``nu * min(theta * W_M, (1 - theta) * W_F)`` where ``W_M, W_F`` are
    the fertile-window population integrals.
    """
    return build_model(mating_raw(theta, **kwargs))


def resource_raw(
    eta: float,
    a_bar: float = 1.0,
    a_max: float = 2.0,
    g_juvenile: str = "1",
    g_sold: str = "1",
    g_repro: str = "1",
    d_juvenile: str = "0",
    d_sold: str = "-(x-a_bar)/2",
    d_repro: str = "-(x-a_bar)/2",
    birth: str = "2*w1",
    juvenile_initial: str = "5",
    sold_initial: str = "0",
    repro_initial: str = "0",
    horizon: float = 15.0,
    da: float = 0.001,
    cost_juvenile: str = "a",
    cost_sold: str = "0",
    cost_repro: str = "0.5",
    gain: str = "10",
) -> dict:
    """Configuration tree of the husbandry model (see :func:`builtin_resource`)."""
    if not 0.0 <= eta <= 1.0:
        raise ModelError(f"eta must lie in [0, 1], got {eta}")
    if not 0 < a_bar < a_max:
        raise ModelError("need 0 < a_bar < a_max")
    params = {"eta": eta, "a_bar": a_bar, "a_max": a_max}
    upper = a_max - a_bar

    def shifted(src: str, where: str) -> str:
        ast = _parse(src, {"t", "x"}, params, where)
        return pretty(_shift_x(ast, a_bar))

    gJ_ast = _parse(g_juvenile, {"t", "x"}, params, "g_juvenile")
    gJ_at_abar = pretty(substitute(gJ_ast, {"x": Num(a_bar)}))
    return {
        "title": "biological resource management model",
        "horizon": horizon,
        "parameters": params,
        "edges": [
            {
                "id": "J",
                "length": a_bar,
                "growth": pretty(gJ_ast),
                "mortality": pretty(_parse(d_juvenile, {"t", "x"}, params, "d_juvenile")),
                "initial": juvenile_initial,
            },
            {
                "id": "S",
                "length": upper,
                "growth": shifted(g_sold, "g_sold"),
                "mortality": shifted(d_sold, "d_sold"),
                "initial": sold_initial,
                "x_offset": a_bar,
            },
            {
                "id": "R",
                "length": upper,
                "growth": shifted(g_repro, "g_repro"),
                "mortality": shifted(d_repro, "d_repro"),
                "initial": repro_initial,
                "x_offset": a_bar,
            },
        ],
        "couplings": [
            {
                "edge": "J",
                "alpha": {"expr": "0", "traces": []},
                "beta": {
                    "expr": birth,
                    "integrals": [{"edge": "R", "interval": [0.0, upper]}],
                },
            },
            {
                "edge": "S",
                "alpha": {
                    "expr": f"eta*w1*({gJ_at_abar})",
                    "traces": [{"edge": "J", "location": a_bar}],
                },
                "beta": {"expr": "0", "integrals": []},
            },
            {
                "edge": "R",
                "alpha": {
                    "expr": f"(1-eta)*w1*({gJ_at_abar})",
                    "traces": [{"edge": "J", "location": a_bar}],
                },
                "beta": {"expr": "0", "integrals": []},
            },
        ],
        "mesh": {"da": da},
        "costs": {
            "unit_cost": {"J": cost_juvenile, "S": cost_sold, "R": cost_repro},
            "unit_gain": {"S": gain},
        },
    }


def builtin_resource(eta: float, **kwargs) -> ModelConfig:
    """Three-edge husbandry model: juveniles split at age ``a_bar`` into a
    sold branch and a reproducing branch that feeds the juvenile inflow.

    Growth/mortality for the sold/reproducing edges are written in the
    original age coordinate on ``[a_bar, a_max]`` and shifted internally;
    ``eta`` is the fraction routed to the sold branch.
    """
    return build_model(resource_raw(eta, **kwargs))


def juvenile_adult_raw(
    a_max: float,
    x_min: float,
    x_max: float,
    juvenile_mortality: str = "0",
    adult_mortality: str = "0",
    adult_growth: str = "1",
    juvenile_initial: str = "1",
    adult_initial: str = "1",
    inflow_weight: str | None = None,
    horizon: float = 5.0,
    da: float = 0.01,
) -> dict:
    """Configuration tree of the staged model (see :func:`builtin_juvenile_adult`)."""
    if not (0 < a_max) or not (0 <= x_min < x_max):
        raise ModelError("need a_max > 0 and x_min < x_max")
    width = x_max - x_min
    params = {"a_max": a_max, "x_min": x_min, "x_max": x_max}

    def shifted(src: str, where: str) -> str:
        ast = _parse(src, {"t", "x"}, params, where)
        return pretty(_shift_x(ast, x_min))

    integral = {"edge": "A", "interval": [0.0, width]}
    if inflow_weight is not None:
        ast = _parse(inflow_weight, {"x"}, params, "inflow_weight")
        integral["weight"] = pretty(_shift_x(ast, x_min))
    d_j = _parse(juvenile_mortality, {"t", "x"}, params, "juvenile_mortality")
    d_a = _shift_x(_parse(adult_mortality, {"t", "x"}, params, "adult_mortality"), x_min)
    u_a = _shift_x(_parse(adult_initial, {"x"}, params, "adult_initial"), x_min)
    return {
        "title": "juvenile-adult model",
        "horizon": horizon,
        "parameters": params,
        "edges": [
            {
                "id": "J",
                "length": a_max,
                "growth": "1",
                "mortality": pretty(Neg(d_j)),
                "initial": juvenile_initial,
            },
            {
                "id": "A",
                "length": width,
                "growth": shifted(adult_growth, "adult_growth"),
                "mortality": pretty(Neg(d_a)),
                "initial": pretty(u_a),
                "x_offset": x_min,
            },
        ],
        "couplings": [
            {
                "edge": "J",
                "alpha": {"expr": "0", "traces": []},
                "beta": {"expr": "w1", "integrals": [integral]},
            },
            {
                "edge": "A",
                "alpha": {"expr": "w1", "traces": [{"edge": "J", "location": a_max}]},
                "beta": {"expr": "0", "integrals": []},
            },
        ],
        "mesh": {"da": da},
    }


def builtin_juvenile_adult(a_max: float, x_min: float, x_max: float, **kwargs) -> ModelConfig:
    """Juvenile stage on ``[0, a_max]`` feeding an adult stage on
    ``[x_min, x_max]``; adults reproduce through an integral over their
    whole (possibly weighted) size range.

    Adult-side expressions are written in the original size coordinate
    and shifted internally.
    """
    return build_model(juvenile_adult_raw(a_max, x_min, x_max, **kwargs))
