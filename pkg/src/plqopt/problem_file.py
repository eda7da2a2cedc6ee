"""YAML problem files: parse with positioned diagnostics, build, serialize.

The grammar is documented in ``docs/problem_format.md``.  A document is
either one problem (a mapping with the sections below) or a batch,
``{batch: [problem, ...]}``.

Sections: ``meta``, ``X``, ``Y``, ``Q``, ``G``, ``solver``, ``outputs``.
When ``G`` names a catalog family, ``X``, ``Y`` and ``Q`` come from the
family and must be omitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from . import catalog
from .composite import CompositeProblem, SmoothMap
from .plq import PlqFunction
from .polyhedra import Polyhedron

SECTIONS = ("meta", "X", "Y", "Q", "G", "solver", "outputs")
SET_KEYS = {
    "free": ("dim",),
    "box": ("lower", "upper"),
    "cube": ("dim", "lo", "hi"),
    "orthant": ("dim",),
    "simplex": ("dim",),
    "singleton": ("point",),
    "polyhedron": ("dim", "A_eq", "b_eq", "A_ub", "b_ub"),
    "product": ("factors",),
}
G_KEYS = {
    "affine": ("A", "b"),
    "quadratic": ("P", "A", "c"),
    "family": ("family", "n", "m", "seed", "params"),
}
META_KEYS = ("name", "seed", "description")
SOLVER_KEYS = ("method", "x0", "prox", "approx", "alm")
PROX_KEYS = ("tau", "sigma", "lam_max", "lam0", "stop_tol", "max_iter", "max_backtracks")
APPROX_KEYS = ("schedule", "nus", "stages", "base", "eps0")
ALM_KEYS = ("theta", "lam_step", "outer_iters", "tol", "y0")
OUTPUT_KEYS = ("json", "trace")
METHODS = ("prox", "approx", "alm")


class ProblemFileError(ValueError):
    """Invalid problem file; the message carries ``file:line:column``."""


@dataclass
class ProblemFile:
    """Plain-data model of one problem (lists and scalars only)."""

    meta: dict = field(default_factory=dict)
    X: dict | None = None
    Y: dict | None = None
    Q: object = "zero"
    G: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return str(self.meta.get("name", "problem"))

    @property
    def method(self) -> str:
        return self.solver.get("method", "prox")

    def to_dict(self) -> dict:
        d = {"meta": self.meta}
        if self.G.get("type") != "family":
            d.update(X=self.X, Y=self.Y, Q=self.Q)
        d["G"] = self.G
        if self.solver:
            d["solver"] = self.solver
        if self.outputs:
            d["outputs"] = self.outputs
        return d


# -- parsing --------------------------------------------------------------------

class _Ctx:
    def __init__(self, source):
        self.source = source
        self.loader = yaml.SafeLoader("")

    def err(self, node, msg):
        m = node.start_mark
        return ProblemFileError(f"{self.source}:{m.line + 1}:{m.column + 1}: {msg}")

    def value(self, node):
        return self.loader.construct_object(node, deep=True)

    def mapping(self, node, allowed, where, required=()):
        if not isinstance(node, yaml.MappingNode):
            raise self.err(node, f"{where} must be a mapping")
        out = {}
        for k, v in node.value:
            key = self.value(k)
            if key not in allowed:
                raise self.err(k, f"unknown key {key!r} in {where}; allowed: {', '.join(allowed)}")
            if key in out:
                raise self.err(k, f"duplicate key {key!r} in {where}")
            out[key] = v
        for r in required:
            if r not in out:
                raise self.err(node, f"{where} is missing {r!r}")
        return out

    def type_of(self, node, where, kinds):
        if not isinstance(node, yaml.MappingNode):
            raise self.err(node, f"{where} must be a mapping")
        for k, v in node.value:
            if self.value(k) == "type":
                kind = self.value(v)
                if kind not in kinds:
                    raise self.err(v, f"{where}.type {kind!r} is not one of {', '.join(kinds)}")
                return kind
        raise self.err(node, f"{where} is missing 'type'")

    def number(self, node, where, integer=False):
        v = self.value(node)
        if isinstance(v, str) and node.style is None:
            # YAML 1.1 reads exponents without a dot (1e-9) and inf as strings
            try:
                v = float(v)
            except ValueError:
                pass
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.err(node, f"{where} must be a number")
        if v != v:
            raise self.err(node, f"{where} must not be NaN")
        if integer:
            if v in (float("inf"), float("-inf")) or float(v) != int(v):
                raise self.err(node, f"{where} must be an integer")
            return int(v)
        return float(v)

    def array(self, node, where, ndim):
        def conv(nd, depth):
            if depth == 0:
                return self.number(nd, where)
            if not isinstance(nd, yaml.SequenceNode):
                raise self.err(nd, f"{where} must be a {ndim}-d list of numbers")
            return [conv(c, depth - 1) for c in nd.value]
        out = conv(node, ndim)
        try:
            np.asarray(out, dtype=float).reshape(-1)
            if ndim > 1 and len({len(r) for r in out}) > 1:
                raise ValueError
        except ValueError:
            raise self.err(node, f"{where} is ragged") from None
        return out


def _parse_set(ctx, node, where):
    kind = ctx.type_of(node, where, SET_KEYS)
    top = ctx.mapping(node, ("type",) + SET_KEYS[kind], f"{where} of type {kind!r}")
    out = {"type": kind}
    for k, v in top.items():
        if k == "type":
            continue
        w = f"{where}.{k}"
        if k == "dim":
            out[k] = ctx.number(v, w, integer=True)
        elif k in ("lo", "hi"):
            out[k] = ctx.number(v, w)
        elif k in ("A_eq", "A_ub"):
            out[k] = ctx.array(v, w, 2)
        elif k == "factors":
            if not isinstance(v, yaml.SequenceNode) or not v.value:
                raise ctx.err(v, f"{w} must be a nonempty list of sets")
            out[k] = [_parse_set(ctx, f, f"{w}[{i}]") for i, f in enumerate(v.value)]
        else:
            out[k] = ctx.array(v, w, 1)
    try:
        build_set(out)
    except (ValueError, KeyError) as e:
        raise ctx.err(node, f"{where}: {e}") from None
    return out


def _parse_Q(ctx, node):
    if isinstance(node, yaml.ScalarNode):
        v = ctx.value(node)
        if isinstance(v, str):
            s = v.replace(" ", "")
            if s == "zero" or s == "identity":
                return s
            if s.startswith("identity*"):
                try:
                    c = float(s[len("identity*"):])
                except ValueError:
                    raise ctx.err(node, "Q must be 'zero', 'identity*c' or a matrix") from None
                if not c >= 0:
                    raise ctx.err(node, "Q: identity scale must be nonnegative")
                return f"identity*{c!r}"
        raise ctx.err(node, "Q must be 'zero', 'identity*c' or a matrix")
    return ctx.array(node, "Q", 2)


def _parse_G(ctx, node):
    kind = ctx.type_of(node, "G", G_KEYS)
    top = ctx.mapping(node, ("type",) + G_KEYS[kind], f"G of type {kind!r}")
    out = {"type": kind}
    if kind == "affine":
        for k in ("A", "b"):
            if k not in top:
                raise ctx.err(node, f"G is missing {k!r}")
        out["A"] = ctx.array(top["A"], "G.A", 2)
        out["b"] = ctx.array(top["b"], "G.b", 1)
    elif kind == "quadratic":
        for k in ("A", "c"):
            if k not in top:
                raise ctx.err(node, f"G is missing {k!r}")
        out["A"] = ctx.array(top["A"], "G.A", 2)
        out["c"] = ctx.array(top["c"], "G.c", 1)
        if "P" in top:
            out["P"] = ctx.array(top["P"], "G.P", 3)
    else:
        for k in ("family", "n", "m"):
            if k not in top:
                raise ctx.err(node, f"G is missing {k!r}")
        out["family"] = ctx.value(top["family"])
        out["n"] = ctx.number(top["n"], "G.n", integer=True)
        out["m"] = ctx.number(top["m"], "G.m", integer=True)
        out["seed"] = ctx.number(top["seed"], "G.seed", integer=True) if "seed" in top else 0
        params = ctx.value(top["params"]) if "params" in top else {}
        if not isinstance(params, dict):
            raise ctx.err(top["params"], "G.params must be a mapping")
        out["params"] = params
    try:
        build_map(out)
    except (ValueError, KeyError, TypeError) as e:
        raise ctx.err(node, f"G: {e}") from None
    return out


def _parse_solver(ctx, node):
    top = ctx.mapping(node, SOLVER_KEYS, "solver")
    out = {}
    if "method" in top:
        m = ctx.value(top["method"])
        if m not in METHODS:
            raise ctx.err(top["method"], f"solver.method {m!r} is not one of {', '.join(METHODS)}")
        out["method"] = m
    if "x0" in top:
        out["x0"] = ctx.array(top["x0"], "solver.x0", 1)
    ints = ("max_iter", "max_backtracks", "stages", "outer_iters")
    for sec, keys in (("prox", PROX_KEYS), ("approx", APPROX_KEYS), ("alm", ALM_KEYS)):
        if sec not in top:
            continue
        sub = ctx.mapping(top[sec], keys, f"solver.{sec}")
        d = {}
        for k, v in sub.items():
            w = f"solver.{sec}.{k}"
            if k == "schedule":
                s = ctx.value(v)
                if s not in ("moreau", "penalty"):
                    raise ctx.err(v, f"{w} must be 'moreau' or 'penalty'")
                d[k] = s
            elif k in ("nus", "y0"):
                d[k] = ctx.array(v, w, 1)
            else:
                d[k] = ctx.number(v, w, integer=k in ints)
        out[sec] = d
    try:
        solver_params(out)
    except (ValueError, TypeError) as e:
        raise ctx.err(node, f"solver: {e}") from None
    return out


def _parse_problem(ctx, node) -> ProblemFile:
    top = ctx.mapping(node, SECTIONS, "problem", ("G",))
    pf = ProblemFile()
    if "meta" in top:
        meta = ctx.mapping(top["meta"], META_KEYS, "meta")
        pf.meta = {k: (ctx.number(v, f"meta.{k}", integer=True) if k == "seed" else str(ctx.value(v)))
                   for k, v in meta.items()}
    pf.G = _parse_G(ctx, top["G"])
    family = pf.G["type"] == "family"
    for sec in ("X", "Y", "Q"):
        if family and sec in top:
            raise ctx.err(top[sec], f"section {sec} is set by the G family and must be omitted")
        if not family and sec in ("X", "Y") and sec not in top:
            raise ctx.err(node, f"problem is missing section {sec!r}")
    if not family:
        pf.X = _parse_set(ctx, top["X"], "X")
        pf.Y = _parse_set(ctx, top["Y"], "Y")
        pf.Q = _parse_Q(ctx, top["Q"]) if "Q" in top else "zero"
        try:
            build_problem(pf)
        except ValueError as e:
            msg = str(e)
            sec = next((k for k in ("Q", "X", "Y") if k in top and msg.startswith(k + " ")),
                       "problem")
            raise ctx.err(top[sec] if sec != "problem" else node, f"{sec}: {msg}") from None
    else:
        pf.Q = None
    if "solver" in top:
        pf.solver = _parse_solver(ctx, top["solver"])
    if "outputs" in top:
        outs = ctx.mapping(top["outputs"], OUTPUT_KEYS, "outputs")
        pf.outputs = {k: str(ctx.value(v)) for k, v in outs.items()}
    return pf


def parse(text: str, source: str = "<string>") -> list:
    """Parse a document into a list of :class:`ProblemFile` (one per problem)."""
    ctx = _Ctx(source)
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        pos = f"{mark.line + 1}:{mark.column + 1}: " if mark is not None else ""
        raise ProblemFileError(f"{source}:{pos}{getattr(e, 'problem', e)}") from None
    if root is None:
        raise ProblemFileError(f"{source}: empty document")
    if isinstance(root, yaml.MappingNode) and any(ctx.value(k) == "batch" for k, _ in root.value):
        top = ctx.mapping(root, ("batch",), "document")
        items = top["batch"]
        if not isinstance(items, yaml.SequenceNode) or not items.value:
            raise ctx.err(items, "batch must be a nonempty list of problems")
        return [_parse_problem(ctx, it) for it in items.value]
    return [_parse_problem(ctx, root)]


def load(path: str) -> list:
    with open(path) as fh:
        return parse(fh.read(), path)


def dumps(problems) -> str:
    """Serialize one problem or a list of problems."""
    if isinstance(problems, ProblemFile):
        doc = problems.to_dict()
    else:
        problems = list(problems)
        doc = problems[0].to_dict() if len(problems) == 1 else {"batch": [p.to_dict() for p in problems]}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


def from_instance(spec: catalog.InstanceSpec, name: str | None = None, solver=None) -> ProblemFile:
    """Problem file for a catalog instance."""
    d = spec.to_dict()
    return ProblemFile(meta={"name": name or f"{spec.family.lower()}-{spec.seed}", "seed": int(spec.seed)},
                       G={"type": "family", **d}, solver=dict(solver or {}), Q=None)


# -- building -------------------------------------------------------------------

def build_set(d: dict) -> Polyhedron:
    kind = d["type"]
    if kind == "free":
        return Polyhedron.free(int(d["dim"]))
    if kind == "box":
        return Polyhedron.box(d["lower"], d["upper"])
    if kind == "cube":
        return Polyhedron.cube(int(d["dim"]), d.get("lo", -1.0), d.get("hi", 1.0))
    if kind == "orthant":
        return Polyhedron.orthant(int(d["dim"]))
    if kind == "simplex":
        return Polyhedron.simplex(int(d["dim"]))
    if kind == "singleton":
        return Polyhedron.singleton(d["point"])
    if kind == "polyhedron":
        n = int(d["dim"])
        return Polyhedron.from_rows(n, d.get("A_eq"), d.get("b_eq"), d.get("A_ub"), d.get("b_ub"))
    if kind == "product":
        sets = [build_set(f) for f in d["factors"]]
        return sets[0].product(*sets[1:])
    raise ValueError(f"unknown set type {kind!r}")


def build_map(d: dict) -> SmoothMap:
    if d["type"] == "affine":
        return SmoothMap.affine_map(d["A"], d["b"])
    if d["type"] == "quadratic":
        A = np.asarray(d["A"], dtype=float)
        P = d.get("P", np.zeros((A.shape[0], A.shape[1], A.shape[1])))
        return SmoothMap.quadratic_map(P, A, d["c"])
    return catalog.build(_spec(d)).G


def _spec(d):
    return catalog.InstanceSpec(d["family"], d["n"], d["m"], d.get("seed", 0), d.get("params", {}))


def build_Q(q, m: int) -> np.ndarray:
    if isinstance(q, str):
        if q == "zero":
            return np.zeros((m, m))
        if q == "identity":
            return np.eye(m)
        return float(q.split("*", 1)[1]) * np.eye(m)
    Q = np.asarray(q, dtype=float)
    if Q.shape != (m, m):
        raise ValueError(f"Q must be {m} x {m}, got {Q.shape}")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q is not symmetric")
    return Q


def build_problem(pf: ProblemFile) -> CompositeProblem:
    if pf.G["type"] == "family":
        return catalog.build(_spec(pf.G))
    X = build_set(pf.X)
    Y = build_set(pf.Y)
    Q = build_Q(pf.Q, Y.dim)
    return CompositeProblem(X, build_map(pf.G), PlqFunction(Y, Q))


def instance_spec(pf: ProblemFile):
    return _spec(pf.G) if pf.G["type"] == "family" else None


def initial_point(pf: ProblemFile, p: CompositeProblem) -> np.ndarray:
    if "x0" in pf.solver:
        x0 = np.asarray(pf.solver["x0"], dtype=float)
        if x0.size != p.n:
            raise ValueError(f"solver.x0 has length {x0.size}, expected {p.n}")
        return x0
    spec = instance_spec(pf)
    if spec is not None:
        return catalog.initial_point(spec)
    fp = p.X.feasible_point
    return np.zeros(p.n) if fp is None else np.array(fp)


def solver_params(solver: dict):
    """``(ProxParams, approx options, AugParams or None)`` from the solver section."""
    from .duality import AugParams
    from .prox_solver import ApproxSchedule, ProxParams

    prox = ProxParams(**solver.get("prox", {}))
    ap = dict(solver.get("approx", {}))
    kind = ap.pop("schedule", "moreau")
    if kind == "moreau":
        if set(ap) - {"nus"}:
            raise ValueError("a moreau schedule takes only 'nus'")
        sched = ApproxSchedule.moreau(ap["nus"]) if "nus" in ap else ApproxSchedule.moreau()
    else:
        if "nus" in ap:
            raise ValueError("a penalty schedule takes stages, base and eps0")
        sched = ApproxSchedule.exact_penalty(**ap)
    alm = None
    if "alm" in solver:
        a = dict(solver["alm"])
        a.pop("y0", None)
        if "theta" not in a:
            raise ValueError("solver.alm needs theta")
        alm = AugParams(**a)
    return prox, sched, alm
