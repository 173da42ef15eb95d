"""Epidemic spread graph, model-assumption validation, and infection distances.

Nodes are 1-indexed everywhere in the public API and in serialized files; the
dense weight matrix uses 0-indexed rows/columns internally, with row ``i-1``
holding the incoming-edge weights of node ``i``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

INF = float("inf")


@dataclass(frozen=True)
class EpidemicNetwork:
    """Directed weighted graph (self-loops allowed) with sampling parameter h.

    ``weights[i-1, j-1]`` is the weight of edge (j, i), i.e. the influence of
    node j on node i; it is strictly positive exactly when (j, i) is an edge.
    """

    n: int
    edges: frozenset[tuple[int, int]]
    weights: np.ndarray
    h: float

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"node count must be >= 1, got {self.n}")
        if not self.h > 0:
            raise ValidationError(f"sampling parameter h must be > 0, got {self.h}")
        if self.weights.shape != (self.n, self.n):
            raise ValidationError(
                f"weight matrix shape {self.weights.shape} != ({self.n}, {self.n})"
            )
        for (j, i) in self.edges:
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise ValidationError(f"edge ({j}, {i}) references unknown node")
            if not self.weights[i - 1, j - 1] > 0:
                raise ValidationError(
                    f"edge ({j}, {i}) must carry a strictly positive weight, "
                    f"got {self.weights[i - 1, j - 1]}"
                )
        mask = self.weights != 0
        expected = np.zeros((self.n, self.n), dtype=bool)
        for (j, i) in self.edges:
            expected[i - 1, j - 1] = True
        if not np.array_equal(mask, expected):
            raise ValidationError("weight matrix support does not match the edge set")
        if np.any(self.weights < 0):
            raise ValidationError("edge weights must be nonnegative")

    def in_neighbors(self, i: int) -> frozenset[int]:
        """N_i: nodes j with an edge (j, i); contains i itself only on a self-loop."""
        return frozenset(j for (j, ii) in self.edges if ii == i)

    def closed_in_neighbors(self, i: int) -> frozenset[int]:
        """N̄_i = N_i ∪ {i}."""
        return self.in_neighbors(i) | {i}

    def row_sum(self, i: int) -> float:
        return float(self.weights[i - 1].sum())


def network_from_triples(n: int, triples, h: float) -> EpidemicNetwork:
    """Build a network from ``[(j, i, a_ij), ...]`` edge triples."""
    weights = np.zeros((n, n))
    edges = set()
    for triple in triples:
        try:
            j, i, a = triple
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"edge entry {triple!r} is not a [j, i, a_ij] triple") from exc
        j, i = int(j), int(i)
        if (j, i) in edges:
            raise ValidationError(f"duplicate edge ({j}, {i})")
        edges.add((j, i))
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValidationError(f"edge ({j}, {i}) references unknown node")
        weights[i - 1, j - 1] = float(a)
    return EpidemicNetwork(n=n, edges=frozenset(edges), weights=weights, h=float(h))


@dataclass(frozen=True)
class InitialCondition:
    """Per-node susceptible/infected/recovered proportions at time 0."""

    s0: np.ndarray
    x0: np.ndarray
    r0: np.ndarray

    @property
    def n(self) -> int:
        return len(self.s0)


@dataclass(frozen=True)
class DistanceProfile:
    """Infection distances d_i and the node sets derived from them.

    ``S_I`` holds the initially infected nodes (d_i = 0), ``S_H`` the initially
    healthy ones; ``d[i]`` is the shortest directed distance from any S_I node
    (``inf`` when unreachable). ``S_I_prime`` restricts S_I to nodes with a
    positive self-loop; ``S_prime`` holds nodes outside S_I_prime with an
    in-neighborhood at finite distance. ``min_neighbor_dist[i]`` caches
    min{d_j : j in N_i} (inf for empty N_i).
    """

    S_I: frozenset[int]
    S_H: frozenset[int]
    d: dict[int, float]
    S_I_prime: frozenset[int]
    S_prime: frozenset[int]
    min_neighbor_dist: dict[int, float] = field(repr=False)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def validate(
    network: EpidemicNetwork,
    init: InitialCondition,
    beta_max: float,
    delta_max: float,
) -> ValidationReport:
    """Check the model assumptions for all rates in [0, beta_max] x [0, delta_max].

    The initial condition must satisfy, per node, s0 in (0,1], x0 in [0,1),
    r0 = 0 and s0 + x0 = 1. The parameter assumption requires h*delta_max < 1
    and h*beta_max*sum_{j in N̄_i} a_ij < 1 for every node i. Edge-weight
    positivity is already enforced by the network constructor.
    """
    violations: list[str] = []
    if init.n != network.n:
        return ValidationReport(False, (f"initial condition has {init.n} nodes, network has {network.n}",))
    if beta_max < 0 or delta_max < 0:
        violations.append(f"rate bounds must be nonnegative, got ({beta_max}, {delta_max})")
    tol = 1e-12
    for idx in range(network.n):
        i = idx + 1
        s, x, r = float(init.s0[idx]), float(init.x0[idx]), float(init.r0[idx])
        if not (0 < s <= 1):
            violations.append(f"s_i[0] in (0,1] fails at node {i}: {s}")
        if not (0 <= x < 1):
            violations.append(f"x_i[0] in [0,1) fails at node {i}: {x}")
        if r != 0:
            violations.append(f"r_i[0]=0 fails at node {i}: {r}")
        if abs(s + x - 1) > tol:
            violations.append(f"s_i[0]+x_i[0]=1 fails at node {i}: {s + x}")
    if not network.h * delta_max < 1:
        violations.append(f"hδ<1 fails: h={network.h}, delta_max={delta_max}")
    for i in range(1, network.n + 1):
        budget = network.h * beta_max * network.row_sum(i)
        if not budget < 1:
            violations.append(
                f"hβ·Σa_ij<1 fails at node {i}: {budget}"
            )
    return ValidationReport(not violations, tuple(violations))


def require_valid(network, init, beta_max, delta_max) -> None:
    report = validate(network, init, beta_max, delta_max)
    if not report.ok:
        raise ValidationError("; ".join(report.violations))


def distance_profile(network: EpidemicNetwork, init: InitialCondition) -> DistanceProfile:
    """Multi-source BFS from the initially infected nodes along directed edges.

    Self-loops are stored as edges but never traversed: a path has distinct
    endpoints, and d_i = 0 for initially infected nodes by definition.
    """
    n = network.n
    S_I = frozenset(i + 1 for i in range(n) if init.x0[i] > 0)
    S_H = frozenset(range(1, n + 1)) - S_I

    out: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for (j, i) in network.edges:
        if j != i:
            out[j].append(i)

    d: dict[int, float] = {i: INF for i in range(1, n + 1)}
    queue = deque()
    for i in sorted(S_I):
        d[i] = 0.0
        queue.append(i)
    while queue:
        u = queue.popleft()
        for v in out[u]:
            if d[v] == INF:
                d[v] = d[u] + 1
                queue.append(v)

    S_I_prime = frozenset(i for i in S_I if network.weights[i - 1, i - 1] > 0)
    min_nbr = {}
    for i in range(1, n + 1):
        nbrs = network.in_neighbors(i)
        min_nbr[i] = min((d[j] for j in nbrs), default=INF)
    S_prime = frozenset(
        i
        for i in range(1, n + 1)
        if i not in S_I_prime and network.in_neighbors(i) and min_nbr[i] != INF
    )
    return DistanceProfile(
        S_I=S_I,
        S_H=S_H,
        d=d,
        S_I_prime=S_I_prime,
        S_prime=S_prime,
        min_neighbor_dist=min_nbr,
    )


def load_instance(path: str | Path) -> tuple[EpidemicNetwork, InitialCondition, dict]:
    """Read an instance file; returns the network, initial condition and raw payload.

    Expected fields: ``n``, ``edges: [[j, i, a_ij], ...]``, ``h`` and the
    length-n arrays ``s0``, ``x0``, ``r0``. Extra fields are preserved in the
    returned payload for problem-specific parsers.
    """
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read instance file {path}: {exc}") from exc
    for key in ("n", "edges", "h", "s0", "x0", "r0"):
        if key not in payload:
            raise ValidationError(f"instance file {path} is missing field {key!r}")
    n = int(payload["n"])
    network = network_from_triples(n, payload["edges"], payload["h"])
    for key in ("s0", "x0", "r0"):
        if len(payload[key]) != n:
            raise ValidationError(f"field {key!r} must have length n={n}")
    init = InitialCondition(
        s0=np.asarray(payload["s0"], dtype=float),
        x0=np.asarray(payload["x0"], dtype=float),
        r0=np.asarray(payload["r0"], dtype=float),
    )
    return network, init, payload


def instance_payload(network: EpidemicNetwork, init: InitialCondition) -> dict:
    """Serializable dict for the instance-file schema (1-indexed edge triples)."""
    edges = sorted(network.edges)
    return {
        "n": network.n,
        "edges": [[j, i, float(network.weights[i - 1, j - 1])] for (j, i) in edges],
        "h": network.h,
        "s0": [float(v) for v in init.s0],
        "x0": [float(v) for v in init.x0],
        "r0": [float(v) for v in init.r0],
    }


def save_instance(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")
