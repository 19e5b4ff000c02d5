"""Synthetic data from fully specified structural causal models.

Every node is either Gaussian around an affine function of its parents or
Bernoulli with a logistic (or identity) link, so ground-truth interventional
quantities can be computed by brute force: draw exogenous noise once, push it
through the true mechanisms under each intervention arm, and average outcome
probabilities.  These oracles back the accuracy targets of the learned
pipeline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .data import CATEGORICAL, CONTINUOUS, Column, ColumnarDataset
from .graph import (
    CausalGraph,
    GraphError,
    PathSet,
    parse_graph,
    pi_active_nodes,
    split_sections,
)

__all__ = [
    "Affine",
    "StructuralFunction",
    "SyntheticSCM",
    "parse_scm",
    "generate",
    "oracle_effect",
    "benchmark_document",
    "benchmark_scm",
]

_IDENT = re.compile(r"^[A-Za-z_]\w*$")


@dataclass(frozen=True)
class Affine:
    """bias + sum(coeffs[name] * value[name])."""

    bias: float = 0.0
    coeffs: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def evaluate(self, values: dict[str, np.ndarray], n: int) -> np.ndarray:
        out = np.full(n, self.bias, dtype=np.float64)
        for name, coef in self.coeffs:
            out += coef * values[name]
        return out

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.coeffs)


def parse_affine(text: str) -> Affine:
    compact = text.replace(" ", "")
    compact = re.sub(r"([eE])-", r"\1_NEG_", compact)  # protect exponents
    bias = 0.0
    coeffs: dict[str, float] = {}
    for piece in compact.replace("-", "+-").split("+"):
        piece = piece.replace("_NEG_", "-")
        if not piece:
            continue
        sign = 1.0
        if piece.startswith("-"):
            sign, piece = -1.0, piece[1:]
        try:
            if "*" in piece:
                coef, name = piece.split("*", 1)
                if not _IDENT.match(name):
                    raise ValueError
                coeffs[name] = coeffs.get(name, 0.0) + sign * float(coef)
            elif _IDENT.match(piece):
                coeffs[piece] = coeffs.get(piece, 0.0) + sign
            else:
                bias += sign * float(piece)
        except ValueError:
            raise GraphError(f"cannot parse affine term {piece!r} in {text!r}") from None
    return Affine(bias, tuple(sorted(coeffs.items())))


@dataclass(frozen=True)
class StructuralFunction:
    """One node's mechanism.

    kind "normal": affine mean plus Gaussian noise with the given std.
    kind "bernoulli": success probability is logistic(affine) when
    ``link == "logistic"`` and the raw affine value otherwise.
    """

    kind: str  # "normal" | "bernoulli"
    affine: Affine
    std: float = 0.0
    link: str = "logistic"

    def mean_or_prob(self, values: dict[str, np.ndarray], n: int) -> np.ndarray:
        z = self.affine.evaluate(values, n)
        if self.kind == "normal":
            return z
        if self.link == "identity":
            if np.any(z < 0.0) or np.any(z > 1.0):
                raise GraphError("identity-link probability left [0, 1]")
            return z
        return 1.0 / (1.0 + np.exp(-z))


_FUNC = re.compile(r"^(?P<node>[A-Za-z_]\w*)\s*=\s*(?P<body>.+)$")
_NORMAL = re.compile(r"^normal\((?P<mean>.+),(?P<std>[^,]+)\)$")
_BERN_LOGISTIC = re.compile(r"^bernoulli\(logistic\((?P<z>.+)\)\)$")
_BERN_IDENTITY = re.compile(r"^bernoulli\((?P<p>.+)\)$")


def _parse_function(body: str) -> StructuralFunction:
    body = body.replace(" ", "")
    if match := _NORMAL.match(body):
        std = float(match.group("std"))
        if not np.isfinite(std) or std < 0:
            raise GraphError(f"bad noise std in {body!r}")
        return StructuralFunction("normal", parse_affine(match.group("mean")), std=std)
    if match := _BERN_LOGISTIC.match(body):
        return StructuralFunction("bernoulli", parse_affine(match.group("z")))
    if match := _BERN_IDENTITY.match(body):
        return StructuralFunction(
            "bernoulli", parse_affine(match.group("p")), link="identity"
        )
    raise GraphError(f"cannot parse structural function {body!r}")


@dataclass(frozen=True)
class SyntheticSCM:
    graph: CausalGraph
    functions: dict[str, StructuralFunction]
    seed: int = 0

    def __post_init__(self):
        for spec in self.graph.nodes:
            if spec.name not in self.functions:
                raise GraphError(f"node {spec.name!r} has no structural function")
            fn = self.functions[spec.name]
            parents = set(self.graph.parents(spec.name))
            stray = set(fn.affine.names) - parents
            if stray:
                raise GraphError(
                    f"function for {spec.name!r} references non-parent {sorted(stray)[0]!r}"
                )
            if spec.kind == CONTINUOUS and fn.kind != "normal":
                raise GraphError(f"continuous node {spec.name!r} needs a normal function")
            if spec.kind == CATEGORICAL:
                if not spec.is_binary:
                    raise GraphError(
                        f"node {spec.name!r}: only binary categorical nodes are supported"
                    )
                if fn.kind != "bernoulli":
                    raise GraphError(f"binary node {spec.name!r} needs a bernoulli function")
        y_spec = self.graph.node(self.graph.outcome)
        if not y_spec.is_binary:
            raise GraphError("outcome node must be binary")


def parse_scm(text: str, seed: int = 0) -> SyntheticSCM:
    """Parse a graph document extended with a [functions] section."""
    graph = parse_graph(text, extra_sections=("functions",))
    sections = split_sections(text)
    if "functions" not in sections:
        raise GraphError("missing [functions] section")
    functions: dict[str, StructuralFunction] = {}
    for line in sections["functions"]:
        match = _FUNC.match(line)
        if not match:
            raise GraphError(f"cannot parse function line: {line!r}")
        node = match.group("node")
        if node in functions:
            raise GraphError(f"duplicate function for node {node!r}")
        functions[node] = _parse_function(match.group("body"))
    return SyntheticSCM(graph, functions, seed)


def _draw_noise(scm: SyntheticSCM, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """One exogenous draw per node, in topological order (shared across arms)."""
    noise = {}
    for name in scm.graph.topo_order:
        fn = scm.functions[name]
        if fn.kind == "normal":
            noise[name] = rng.standard_normal(n) * fn.std
        else:
            noise[name] = rng.uniform(0.0, 1.0, n)
    return noise


def _node_value(
    scm: SyntheticSCM, name: str, parents: dict[str, np.ndarray],
    noise: dict[str, np.ndarray], n: int,
) -> np.ndarray:
    fn = scm.functions[name]
    if fn.kind == "normal":
        return fn.affine.evaluate(parents, n) + noise[name]
    return (noise[name] < fn.mean_or_prob(parents, n)).astype(np.float64)


def _cascade(
    scm: SyntheticSCM, noise: dict[str, np.ndarray], n: int,
    do_sensitive: float | None,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Propagate mechanisms; returns node values and the outcome probability."""
    g = scm.graph
    values: dict[str, np.ndarray] = {}
    y_prob = None
    for name in g.topo_order:
        if do_sensitive is not None and name == g.sensitive:
            values[name] = np.full(n, float(do_sensitive))
            continue
        if name == g.outcome:
            y_prob = scm.functions[name].mean_or_prob(values, n)
            values[name] = (noise[name] < y_prob).astype(np.float64)
            continue
        values[name] = _node_value(scm, name, values, noise, n)
    return values, y_prob


def generate(scm: SyntheticSCM, n: int) -> ColumnarDataset:
    """Ancestral sampling; binary nodes become string columns "0"/"1"."""
    if n < 1:
        raise GraphError("sample count must be >= 1")
    rng = np.random.default_rng(scm.seed)
    noise = _draw_noise(scm, n, rng)
    values, _ = _cascade(scm, noise, n, do_sensitive=None)
    columns = []
    for spec in scm.graph.nodes:
        data = values[spec.name]
        if spec.kind == CONTINUOUS:
            columns.append(Column(spec.name, CONTINUOUS, data))
        else:
            labels = np.where(data > 0.5, "1", "0").astype(str)
            columns.append(Column(spec.name, CATEGORICAL, labels))
    return ColumnarDataset(columns)


def _condition_mask(
    scm: SyntheticSCM, values: dict[str, np.ndarray], condition
) -> np.ndarray:
    mask = np.ones(next(iter(values.values())).size, dtype=bool)
    for name, raw in condition:
        spec = scm.graph.node(name)
        if spec.kind == CONTINUOUS:
            mask &= np.abs(values[name] - float(raw)) <= 1e-9
        else:
            mask &= values[name] == float(raw)
    return mask


def _path_specific_outcome(
    scm: SyntheticSCM, ps: PathSet, noise: dict[str, np.ndarray], n: int, s_value: float,
) -> np.ndarray:
    """Outcome probability with the intervention routed only along pi edges."""
    g = scm.graph
    active = pi_active_nodes(g, ps)
    reference, ref_y_prob = _cascade(scm, noise, n, do_sensitive=0.0)
    inter: dict[str, np.ndarray] = {}
    y_prob = None
    for name in g.topo_order:
        if name == g.sensitive:
            inter[name] = np.full(n, s_value)
            continue
        if name not in active:
            inter[name] = reference[name]
            continue
        parent_values = {
            p: (inter[p] if (p, name) in ps.on_pi_edges else reference[p])
            for p in g.parents(name)
        }
        if name == g.outcome:
            y_prob = scm.functions[name].mean_or_prob(parent_values, n)
            inter[name] = (noise[name] < y_prob).astype(np.float64)
        else:
            inter[name] = _node_value(scm, name, parent_values, noise, n)
    return y_prob if y_prob is not None else ref_y_prob


def oracle_effect(
    scm: SyntheticSCM,
    path_set: PathSet,
    n: int = 1_000_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Ground-truth causal effect by brute force; returns (estimate, std error).

    The exogenous draw is shared across intervention arms, and the outcome
    enters as its success probability rather than a sample, which removes the
    outcome-level Monte Carlo noise from the contrast.
    """
    rng = np.random.default_rng(seed)
    noise = _draw_noise(scm, n, rng)

    if path_set.mode == "path_specific":
        p_plus = _path_specific_outcome(scm, path_set, noise, n, s_value=1.0)
        _, p_ref = _cascade(scm, noise, n, do_sensitive=0.0)
        diff = p_plus - p_ref
    else:
        _, p_plus = _cascade(scm, noise, n, do_sensitive=1.0)
        _, p_minus = _cascade(scm, noise, n, do_sensitive=0.0)
        diff = p_plus - p_minus
        if path_set.mode == "counterfactual":
            observed, _ = _cascade(scm, noise, n, do_sensitive=None)
            mask = _condition_mask(scm, observed, path_set.condition)
            if not mask.any():
                raise GraphError(f"no draws match condition {path_set.condition}")
            diff = diff[mask]

    estimate = float(diff.mean())
    stderr = float(diff.std(ddof=0) / np.sqrt(diff.size))
    return estimate, stderr


def benchmark_document(
    direct: float = 1.0,
    indirect: float = 1.0,
    context_strength: float = 2.5,
    group_strength: float = 3.0,
    group_rate: float = 0.4,
    bias: float = -2.8,
) -> str:
    """The default benchmark family: two root causes, a mediator on the
    outcome route, and several sensitive-marked side columns.

    ``direct`` scales the sensitive-to-outcome edge and ``indirect`` the
    mediated route.  ``context_strength`` (the continuous root's pull on the
    outcome) and ``group_strength``/``bias`` control how heterogeneous the
    row-level contrasts are: strong context pushes much of the population
    into saturated outcome regions where an intervention barely moves the
    outcome, which is what gives a reweighting scheme room to work.  The aux
    columns carry a strong sensitive-group signature without touching the
    outcome, the way demographic side attributes do in census-style data;
    deleting one sensitive group therefore visibly distorts them.
    """
    return f"""
[nodes]
x1 continuous
x2 categorical 2
s categorical 2
med continuous
aux1 continuous
aux2 continuous
aux3 continuous
aux4 continuous
aux5 continuous
y categorical 2

[edges]
x1 -> s
x2 -> s
x1 -> med
x2 -> med
s -> med
s -> aux1
x1 -> aux1
s -> aux2
x2 -> aux2
s -> aux3
s -> aux4
x2 -> aux4
s -> aux5
x1 -> aux5
x1 -> y
x2 -> y
s -> y
med -> y

[roles]
sensitive s
outcome y

[functions]
x1 = normal(0, 1)
x2 = bernoulli({group_rate})
s = bernoulli(logistic(1.6*x1 + 1.2*x2 - 0.45))
med = normal({indirect}*s + 0.6*x1 + 0.4*x2, 0.5)
aux1 = normal(2.2*s + 0.2*x1, 0.5)
aux2 = normal(2.0*s + 0.3*x2, 0.5)
aux3 = normal(2.0*s, 0.6)
aux4 = normal(1.8*s + 0.2*x2, 0.5)
aux5 = normal(2.1*s + 0.15*x1, 0.55)
y = bernoulli(logistic({direct}*s + 0.9*med + {context_strength}*x1 + {group_strength}*x2 + {bias}))
"""


def benchmark_scm(seed: int = 0, **coefficients) -> SyntheticSCM:
    return parse_scm(benchmark_document(**coefficients), seed=seed)
