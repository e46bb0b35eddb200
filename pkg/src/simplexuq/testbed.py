"""Benchmark oracles: closed-form test functions and a toy gas network.

The closed-form functions are built on ``prod(sin(pi * x_i))``:

* ``smooth-sine``        the product itself, single region;
* ``smooth-sine-fake-kink``  same values, but labeled 1 below a threshold
  and 2 at or above it (a region split with no actual kink);
* ``clipped-sine``       the product clipped at the threshold, labeled the
  same way (an actual kink along the clip surface).

The gas network is an algebraic steady-state model on a small graph: pipes
drop squared pressure proportionally to q|q|, control valves cap their
outlet pressure at a set point (the kink mechanism), and mass is conserved
at every non-supply node. Uncertain inputs are affine bindings from [0,1]
coordinates onto supply pressure, demand flows or valve set points. The
region label of a point is the bit vector of active valves.
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleNetwork, InvalidNetworkFile, SolveFailure

RESIDUAL_TOL = 1e-10
MAX_NEWTON_ITERS = 200
MAX_HALVINGS = 30


# ----------------------------------------------------------------------
# closed-form test functions

TEST_FUNCTIONS = ("smooth-sine", "smooth-sine-fake-kink", "clipped-sine")


@dataclass(frozen=True)
class TestOracle:
    """Closed-form oracle over [0,1]^d with a value and a region label."""

    kind: str
    d: int
    threshold: float = 0.7

    def __post_init__(self):
        if self.kind not in TEST_FUNCTIONS:
            raise ValueError(f"unknown test function {self.kind!r}")

    def evaluate_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        raw = np.prod(np.sin(np.pi * X), axis=1)
        if self.kind == "smooth-sine":
            return raw, np.ones(len(X), dtype=np.int64)
        labels = np.where(raw < self.threshold, 1, 2).astype(np.int64)
        if self.kind == "smooth-sine-fake-kink":
            return raw, labels
        return np.minimum(raw, self.threshold), labels

    def __call__(self, x: np.ndarray) -> tuple[float, int]:
        values, labels = self.evaluate_batch(np.asarray(x, dtype=float)[None])
        return float(values[0]), int(labels[0])


def make_test_oracle(kind: str, d: int, threshold: float = 0.7) -> TestOracle:
    return TestOracle(kind=kind, d=d, threshold=threshold)


# ----------------------------------------------------------------------
# gas network

NODE_KINDS = ("supply", "junction", "demand")
EDGE_KINDS = ("pipe", "valve")
_NODE_KEYS = {"supply": {"pressure"}, "junction": set(), "demand": {"flow"}}
_EDGE_KEYS = {"pipe": {"length", "friction"}, "valve": {"p_set"}}
_BINDABLE = {"pressure": "supply", "flow": "demand", "p_set": "valve"}


@dataclass
class Node:
    name: str
    kind: str
    pressure: float | None = None  # supply only
    flow: float | None = None  # demand only


@dataclass
class Edge:
    name: str
    kind: str
    a: str
    b: str
    length: float | None = None
    friction: float | None = None
    p_set: float | None = None

    @property
    def c(self) -> float:
        return self.friction * self.length


@dataclass
class Binding:
    """Affine map from one [0,1] coordinate to a physical parameter."""

    coord: int
    target: str  # element name
    attr: str  # pressure | flow | p_set
    low: float
    high: float


class GasNetwork:
    """Steady-state isothermal network with pressure-capping valves."""

    def __init__(
        self,
        nodes: list[Node],
        edges: list[Edge],
        bindings: list[Binding],
        qoi: str,
    ):
        self.nodes = {n.name: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise InvalidNetworkFile("duplicate node name")
        self.edges = list(edges)
        if len({e.name for e in edges}) != len(edges):
            raise InvalidNetworkFile("duplicate edge name")
        self.bindings = list(bindings)
        self.qoi = qoi
        self._validate()
        self._index()

    @property
    def d(self) -> int:
        return len(self.bindings)

    def _validate(self) -> None:
        supplies = [n for n in self.nodes.values() if n.kind == "supply"]
        if len(supplies) != 1:
            raise InvalidNetworkFile("exactly one supply node is required")
        if self.qoi not in self.nodes:
            raise InvalidNetworkFile(f"qoi node {self.qoi!r} does not exist")
        for e in self.edges:
            if e.a not in self.nodes or e.b not in self.nodes:
                raise InvalidNetworkFile(f"edge {e.name} references a missing node")
        # connectivity
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for e in self.edges:
            adj[e.a].add(e.b)
            adj[e.b].add(e.a)
        seen = {supplies[0].name}
        stack = [supplies[0].name]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if seen != set(self.nodes):
            raise InvalidNetworkFile("network is not connected")
        coords = sorted(b.coord for b in self.bindings)
        if coords != list(range(len(coords))):
            raise InvalidNetworkFile("binding coordinates must be 0..d-1, each once")
        for b in self.bindings:
            kind = _BINDABLE.get(b.attr)
            if kind is None:
                raise InvalidNetworkFile(f"attribute {b.attr!r} is not bindable")
            element = self.nodes.get(b.target) or next(
                (e for e in self.edges if e.name == b.target), None
            )
            if element is None or element.kind != kind:
                raise InvalidNetworkFile(
                    f"binding target {b.target!r} is not a {kind} element"
                )

    def _index(self) -> None:
        self._supply = next(n.name for n in self.nodes.values() if n.kind == "supply")
        self._nonsupply = [n for n in self.nodes if n != self._supply]
        self._pidx = {n: i for i, n in enumerate(self._nonsupply)}
        self._valves = [e for e in self.edges if e.kind == "valve"]
        self._k = len(self._nonsupply) + len(self.edges)

    def _parameters(self, X: np.ndarray) -> dict[tuple[str, str], np.ndarray]:
        """Per-sample physical parameters, bindings applied over the basics."""
        m = len(X)
        out: dict[tuple[str, str], np.ndarray] = {}
        for n in self.nodes.values():
            if n.kind == "supply":
                out[(n.name, "pressure")] = np.full(m, n.pressure)
            elif n.kind == "demand":
                out[(n.name, "flow")] = np.full(m, n.flow)
        for e in self._valves:
            out[(e.name, "p_set")] = np.full(m, e.p_set)
        for b in self.bindings:
            out[(b.target, b.attr)] = b.low + X[:, b.coord] * (b.high - b.low)
        return out

    def solve_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """QoI pressures and valve-activity labels for points of [0,1]^d.

        Damped Newton on squared pressures and edge flows, vectorized over
        samples (chunked to bound memory). Deterministic: fixed initial
        guess, no randomness.
        """
        X = np.asarray(X, dtype=float)
        if self.d:
            X = X.reshape(-1, self.d)
        else:
            rows = X.shape[0] if X.ndim >= 1 and X.shape[0] else 1
            X = np.zeros((rows, 0))
        chunk = 20_000
        outs = [self._solve_chunk(X[i : i + chunk]) for i in range(0, len(X), chunk)]
        return np.concatenate([o[0] for o in outs]), np.concatenate(
            [o[1] for o in outs]
        )

    def _residual(self, z, params, pi_sup):
        m, k = z.shape
        npn = len(self._nonsupply)
        F = np.zeros((m, k))
        pi = {self._supply: pi_sup}
        for n, i in self._pidx.items():
            pi[n] = z[:, i]
        q = {e.name: z[:, npn + j] for j, e in enumerate(self.edges)}
        for n, i in self._pidx.items():
            bal = np.zeros(m)
            for e in self.edges:
                if e.b == n:
                    bal += q[e.name]
                if e.a == n:
                    bal -= q[e.name]
            if self.nodes[n].kind == "demand":
                bal -= params[(n, "flow")]
            F[:, i] = bal
        for j, e in enumerate(self.edges):
            if e.kind == "pipe":
                F[:, npn + j] = pi[e.a] - pi[e.b] - e.c * q[e.name] * np.abs(q[e.name])
            else:
                pset_sq = params[(e.name, "p_set")] ** 2
                F[:, npn + j] = pi[e.b] - np.minimum(pi[e.a], pset_sq)
        return F

    def _jacobian(self, z, params, pi_sup):
        m, k = z.shape
        npn = len(self._nonsupply)
        J = np.zeros((m, k, k))
        for i_eq, n in enumerate(self._nonsupply):
            for j, e in enumerate(self.edges):
                if e.b == n:
                    J[:, i_eq, npn + j] += 1.0
                if e.a == n:
                    J[:, i_eq, npn + j] -= 1.0
        for j, e in enumerate(self.edges):
            row = npn + j
            ia = self._pidx.get(e.a)
            ib = self._pidx.get(e.b)
            if e.kind == "pipe":
                if ia is not None:
                    J[:, row, ia] = 1.0
                if ib is not None:
                    J[:, row, ib] = -1.0
                qj = z[:, npn + j]
                J[:, row, npn + j] = -2.0 * e.c * np.maximum(np.abs(qj), 1e-6)
            else:
                pset_sq = params[(e.name, "p_set")] ** 2
                pia = pi_sup if ia is None else z[:, ia]
                inactive = pia <= pset_sq
                if ib is not None:
                    J[:, row, ib] = 1.0
                if ia is not None:
                    J[:, row, ia] = np.where(inactive, -1.0, 0.0)
        return J

    def _solve_chunk(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = len(X)
        params = self._parameters(X)
        pi_sup = params[(self._supply, "pressure")] ** 2
        npn = len(self._nonsupply)
        z = np.empty((m, self._k))
        z[:, :npn] = pi_sup[:, None]
        z[:, npn:] = 0.01
        F = self._residual(z, params, pi_sup)
        fnorm = np.max(np.abs(F), axis=1)
        for _ in range(MAX_NEWTON_ITERS):
            done = fnorm <= RESIDUAL_TOL
            if done.all():
                break
            J = self._jacobian(z, params, pi_sup)
            try:
                dz = np.linalg.solve(J, -F[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise SolveFailure(f"singular network Jacobian: {exc}") from exc
            alpha = np.ones(m)
            accepted = done.copy()
            best = z.copy()
            best_F, best_norm = F.copy(), fnorm.copy()
            for _ in range(MAX_HALVINGS + 1):
                trial = z + alpha[:, None] * dz
                Ft = self._residual(trial, params, pi_sup)
                ft = np.max(np.abs(Ft), axis=1)
                newly = ~accepted & (ft < fnorm)
                best[newly] = trial[newly]
                best_F[newly] = Ft[newly]
                best_norm[newly] = ft[newly]
                accepted |= newly
                if accepted.all():
                    break
                alpha[~accepted] *= 0.5
            if not accepted.any():
                break
            z, F, fnorm = best, best_F, best_norm
        if np.any(fnorm > RESIDUAL_TOL):
            raise SolveFailure(
                f"Newton did not reach {RESIDUAL_TOL:g} within {MAX_NEWTON_ITERS} iterations"
            )
        pressures = {self._supply: pi_sup}
        for n, i in self._pidx.items():
            pressures[n] = z[:, i]
        for n, pi in pressures.items():
            if np.any(pi < -1e-12):
                raise InfeasibleNetwork(f"negative squared pressure at node {n}")
        labels = np.zeros(m, dtype=np.int64)
        for bit, e in enumerate(self._valves):
            pset_sq = params[(e.name, "p_set")] ** 2
            active = pressures[e.a] > pset_sq + 1e-9
            labels |= active.astype(np.int64) << bit
        qoi = np.sqrt(np.maximum(pressures[self.qoi], 0.0))
        return qoi, labels


@dataclass
class GasOracle:
    """Oracle protocol adapter for a GasNetwork."""

    network: GasNetwork
    d: int = field(init=False)

    def __post_init__(self):
        self.d = self.network.d

    def evaluate_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.network.solve_batch(X)

    def __call__(self, x: np.ndarray) -> tuple[float, int]:
        values, labels = self.network.solve_batch(np.asarray(x, dtype=float)[None])
        return float(values[0]), int(labels[0])


# ----------------------------------------------------------------------
# network file format

def _parse_kv(tokens: list[str], allowed: set[str], where: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for tok in tokens:
        if "=" not in tok:
            raise InvalidNetworkFile(f"expected key=value, got {tok!r} in {where}")
        key, _, raw = tok.partition("=")
        if key not in allowed:
            raise InvalidNetworkFile(f"unknown key {key!r} in {where}")
        if key in out:
            raise InvalidNetworkFile(f"duplicate key {key!r} in {where}")
        try:
            out[key] = float(raw)
        except ValueError as exc:
            raise InvalidNetworkFile(f"bad number {raw!r} in {where}") from exc
    return out


def parse_network(text: str) -> GasNetwork:
    """Parse the line-based network description format.

    Directives: ``node NAME KIND [key=value ...]``, ``edge NAME KIND A B
    [key=value ...]``, ``bind COORD TARGET.ATTR LOW HIGH``, ``qoi NAME``.
    ``#`` starts a comment. Unknown directives, kinds or keys are errors.
    """
    nodes: list[Node] = []
    edges: list[Edge] = []
    bindings: list[Binding] = []
    qoi: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        where = f"line {lineno}"
        directive = tokens[0]
        if directive == "node":
            if len(tokens) < 3:
                raise InvalidNetworkFile(f"node needs a name and kind ({where})")
            name, kind = tokens[1], tokens[2]
            if kind not in NODE_KINDS:
                raise InvalidNetworkFile(f"unknown node kind {kind!r} ({where})")
            kv = _parse_kv(tokens[3:], _NODE_KEYS[kind], where)
            missing = _NODE_KEYS[kind] - kv.keys()
            if missing:
                raise InvalidNetworkFile(f"node {name} missing {sorted(missing)} ({where})")
            nodes.append(Node(name=name, kind=kind, **kv))
        elif directive == "edge":
            if len(tokens) < 5:
                raise InvalidNetworkFile(f"edge needs name, kind and two nodes ({where})")
            name, kind, a, b = tokens[1:5]
            if kind not in EDGE_KINDS:
                raise InvalidNetworkFile(f"unknown edge kind {kind!r} ({where})")
            kv = _parse_kv(tokens[5:], _EDGE_KEYS[kind], where)
            missing = _EDGE_KEYS[kind] - kv.keys()
            if missing:
                raise InvalidNetworkFile(f"edge {name} missing {sorted(missing)} ({where})")
            edges.append(Edge(name=name, kind=kind, a=a, b=b, **kv))
        elif directive == "bind":
            if len(tokens) != 5:
                raise InvalidNetworkFile(f"bind needs coord, target, low, high ({where})")
            target, _, attr = tokens[2].partition(".")
            if not attr:
                raise InvalidNetworkFile(f"bind target must be NAME.attr ({where})")
            try:
                coord = int(tokens[1])
                low, high = float(tokens[3]), float(tokens[4])
            except ValueError as exc:
                raise InvalidNetworkFile(f"bad bind numbers ({where})") from exc
            bindings.append(Binding(coord=coord, target=target, attr=attr, low=low, high=high))
        elif directive == "qoi":
            if len(tokens) != 2 or qoi is not None:
                raise InvalidNetworkFile(f"exactly one 'qoi NAME' line is required ({where})")
            qoi = tokens[1]
        else:
            raise InvalidNetworkFile(f"unknown directive {directive!r} ({where})")
    if qoi is None:
        raise InvalidNetworkFile("missing 'qoi' line")
    return GasNetwork(nodes=nodes, edges=edges, bindings=bindings, qoi=qoi)


def parse_network_file(path) -> GasNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(fh.read())


def toy_network(n_params: int = 2) -> GasNetwork:
    """The bundled two-valve demonstration network (1 or 2 uncertain inputs)."""
    text = (
        importlib.resources.files("simplexuq")
        .joinpath("data/toy_network.net")
        .read_text(encoding="utf-8")
    )
    net = parse_network(text)
    if n_params not in (1, 2):
        raise ValueError("toy_network supports 1 or 2 parameters")
    if n_params == 1:
        net = GasNetwork(
            nodes=list(net.nodes.values()),
            edges=net.edges,
            bindings=[b for b in net.bindings if b.coord == 0],
            qoi=net.qoi,
        )
    return net
