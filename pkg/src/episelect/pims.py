"""Exact-measurement selection: pick a cheapest measurement set that makes the
two epidemic rates uniquely identifiable from noiseless readings.

The machinery works on the window [t1, t2]: each state-update step yields one
linear equation in (beta, delta) per node and per state kind, indexed as
(k, i, x) or (k, i, r) for k in [t1, t2-1]. An equation is usable once every
value appearing in its coefficients is either selected for measurement or
forced to zero by the infection-distance structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dynamics import (
    KIND_R,
    KIND_X,
    Measurement,
    Theta,
    simulate,
    state_is_zero,
)
from .errors import InfeasibleError, ValidationError
from .network import DistanceProfile, EpidemicNetwork, InitialCondition, distance_profile

RANK_RTOL = 1e-9


class Equation(NamedTuple):
    """Index of one update equation: state kind of node i stepped from time k."""

    time: int
    node: int
    kind: str

    def sort_key(self) -> tuple[int, int, int]:
        return (self.time, self.node, 0 if self.kind == KIND_X else 1)


@dataclass(frozen=True)
class PimsInstance:
    network: EpidemicNetwork
    init: InitialCondition
    profile: DistanceProfile
    t1: int
    t2: int
    cost_x: dict[tuple[int, int], float]
    cost_r: dict[tuple[int, int], float]

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValidationError(f"PIMS requires t1 < t2, got ({self.t1}, {self.t2})")
        if self.t1 < 0:
            raise ValidationError(f"t1 must be >= 0, got {self.t1}")
        for k in range(self.t1, self.t2 + 1):
            for i in range(1, self.network.n + 1):
                for name, costs in (("cost_x", self.cost_x), ("cost_r", self.cost_r)):
                    c = costs.get((k, i))
                    if c is None:
                        raise ValidationError(f"{name} missing entry for (k={k}, i={i})")
                    if c < 0:
                        raise ValidationError(f"{name}[{k},{i}] must be >= 0, got {c}")

    def cost_of(self, m: Measurement) -> float:
        table = self.cost_x if m.kind == KIND_X else self.cost_r
        return table[(m.time, m.node)]


def make_instance(network, init, t1, t2, cost_x, cost_r) -> PimsInstance:
    return PimsInstance(
        network=network,
        init=init,
        profile=distance_profile(network, init),
        t1=t1,
        t2=t2,
        cost_x=dict(cost_x),
        cost_r=dict(cost_r),
    )


@dataclass(frozen=True)
class ExactStrategy:
    """A chosen measurement set, with the generating equation pair when known."""

    selected: frozenset[Measurement]
    chosen_pair: tuple[Equation, Equation] | None = None


def candidate_set(instance: PimsInstance) -> frozenset[Measurement]:
    """All (i, k, kind) in the window whose state is not forced to zero.

    Positivity is decided purely by the distance structure: the rates are
    unknown in this setting, so nothing is simulated here.
    """
    out = []
    for k in range(instance.t1, instance.t2 + 1):
        for i in range(1, instance.network.n + 1):
            for kind in (KIND_X, KIND_R):
                if not state_is_zero(instance.profile, i, k, kind):
                    out.append(Measurement(i, k, kind))
    return frozenset(out)


def build_Q1_Q2(instance: PimsInstance) -> tuple[set[Equation], set[Equation]]:
    """Equation families with a provably rank-2 x-row / r-row pairing.

    Q1 holds x-equations whose infection-pressure coefficient is guaranteed
    positive (self-loop infected nodes at any time; otherwise nodes whose
    in-neighborhood is infected early enough). Q2 holds r-equations past the
    node's infection distance.
    """
    prof = instance.profile
    Q1: set[Equation] = set()
    Q2: set[Equation] = set()
    for k in range(instance.t1, instance.t2):
        for i in range(1, instance.network.n + 1):
            if i in prof.S_I_prime:
                Q1.add(Equation(k, i, KIND_X))
            elif i in prof.S_prime and k >= prof.min_neighbor_dist[i]:
                Q1.add(Equation(k, i, KIND_X))
            if prof.d[i] != float("inf") and k >= prof.d[i]:
                Q2.add(Equation(k, i, KIND_R))
    return Q1, Q2


def equation_support(instance: PimsInstance, eq: Equation) -> frozenset[Measurement]:
    """Measurements needed to determine the coefficients of one equation.

    Values forced to zero by the distance structure come for free, hence the
    restriction to the candidate set.
    """
    k, i = eq.time, eq.node
    if eq.kind == KIND_X:
        needed = [Measurement(i, k + 1, KIND_X), Measurement(i, k, KIND_R)]
        needed += [Measurement(j, k, KIND_X) for j in instance.network.closed_in_neighbors(i)]
    else:
        needed = [
            Measurement(i, k + 1, KIND_R),
            Measurement(i, k, KIND_R),
            Measurement(i, k, KIND_X),
        ]
    return frozenset(
        m for m in needed if not state_is_zero(instance.profile, m.node, m.time, m.kind)
    )


def strategy_cost(instance: PimsInstance, selected) -> float:
    return sum(instance.cost_of(m) for m in set(selected))


def pair_support(instance: PimsInstance, eq1: Equation, eq2: Equation) -> frozenset[Measurement]:
    return equation_support(instance, eq1) | equation_support(instance, eq2)


def algorithm1(instance: PimsInstance) -> ExactStrategy:
    """Cheapest union-support pair over Q1 x Q2; ties resolve lexicographically.

    Raises InfeasibleError when either family is empty, in which case the
    sufficient rank condition cannot produce a certified strategy.
    """
    Q1, Q2 = build_Q1_Q2(instance)
    if not Q1 or not Q2:
        raise InfeasibleError(
            f"sufficient condition infeasible: |Q1|={len(Q1)}, |Q2|={len(Q2)}"
        )
    supports = {eq: equation_support(instance, eq) for eq in Q1 | Q2}
    best = None
    for eq1 in sorted(Q1, key=Equation.sort_key):
        for eq2 in sorted(Q2, key=Equation.sort_key):
            cost = strategy_cost(instance, supports[eq1] | supports[eq2])
            if best is None or cost < best[0]:
                best = (cost, eq1, eq2)
    _, eq1, eq2 = best
    return ExactStrategy(selected=supports[eq1] | supports[eq2], chosen_pair=(eq1, eq2))


def proposition_numerator(instance: PimsInstance) -> float:
    """Upper bound on the returned strategy's cost: the cheapest co-timed
    x-equation support plus its companion r-measurements, minimized over Q1."""
    Q1, _ = build_Q1_Q2(instance)
    if not Q1:
        raise InfeasibleError("Q1 is empty")
    best = float("inf")
    for eq in Q1:
        k, i = eq.time, eq.node
        total = (
            instance.cost_r[(k + 1, i)]
            + instance.cost_r[(k, i)]
            + instance.cost_x[(k + 1, i)]
            + sum(instance.cost_x[(k, j)] for j in instance.network.closed_in_neighbors(i))
        )
        best = min(best, total)
    return best


@dataclass(frozen=True)
class IdentificationResult:
    ok: bool
    theta: Theta | None
    rank: int
    n_equations: int
    singular_values: tuple[float, ...]
    residual: float


def _usable_equations(instance: PimsInstance, selected: frozenset[Measurement]):
    """Equations whose coefficients are fully determined by the selection plus
    the forced zeros; anything needing an unmeasured positive value is dropped."""
    cands = candidate_set(instance)
    usable = []
    for k in range(instance.t1, instance.t2):
        for i in range(1, instance.network.n + 1):
            x_next = Measurement(i, k + 1, KIND_X)
            if x_next in cands and equation_support(instance, Equation(k, i, KIND_X)) <= selected:
                usable.append(Equation(k, i, KIND_X))
            r_next = Measurement(i, k + 1, KIND_R)
            x_now = Measurement(i, k, KIND_X)
            if (
                r_next in cands
                and x_now in cands
                and equation_support(instance, Equation(k, i, KIND_R)) <= selected
            ):
                usable.append(Equation(k, i, KIND_R))
    return usable


def identify_theta(
    instance: PimsInstance,
    strategy: ExactStrategy,
    theta_true: Theta,
) -> IdentificationResult:
    """Recover the rates from the strategy's noiseless measurements.

    Simulates the true trajectory, stacks every usable equation into a
    2-unknown linear system and solves it by least squares. The certificate is
    the numerical rank of the stacked coefficient matrix (relative threshold
    1e-9 on singular values); rank below 2 means identification failed.
    """
    net = instance.network
    traj = simulate(net, instance.init, theta_true, instance.t2)
    usable = _usable_equations(instance, strategy.selected)
    if not usable:
        return IdentificationResult(False, None, 0, 0, (), float("nan"))
    h, A = net.h, net.weights
    rows = np.zeros((len(usable), 2))
    lhs = np.zeros(len(usable))
    for row_idx, eq in enumerate(usable):
        k, idx = eq.time, eq.node - 1
        if eq.kind == KIND_X:
            pressure = float(A[idx] @ traj.x[k])
            rows[row_idx] = (h * traj.s[k, idx] * pressure, -h * traj.x[k, idx])
            lhs[row_idx] = traj.x[k + 1, idx] - traj.x[k, idx]
        else:
            rows[row_idx] = (0.0, h * traj.x[k, idx])
            lhs[row_idx] = traj.r[k + 1, idx] - traj.r[k, idx]
    svals = np.linalg.svd(rows, compute_uv=False)
    rank = int(np.sum(svals > RANK_RTOL * svals[0])) if svals[0] > 0 else 0
    if rank < 2:
        return IdentificationResult(False, None, rank, len(usable), tuple(svals), float("nan"))
    sol, res, *_ = np.linalg.lstsq(rows, lhs, rcond=None)
    residual = float(np.linalg.norm(rows @ sol - lhs))
    return IdentificationResult(
        True,
        Theta(beta=float(sol[0]), delta=float(sol[1])),
        rank,
        len(usable),
        tuple(float(v) for v in svals),
        residual,
    )


def load_costs(path: str | Path) -> tuple[int, int, dict, dict]:
    """Read a PIMS cost file: {"t1", "t2", "cost_x": [[k,i,c],...], "cost_r": [[k,i,b],...]}."""
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read cost file {path}: {exc}") from exc
    for key in ("t1", "t2", "cost_x", "cost_r"):
        if key not in payload:
            raise ValidationError(f"cost file {path} is missing field {key!r}")
    cost_x = {(int(k), int(i)): float(c) for (k, i, c) in payload["cost_x"]}
    cost_r = {(int(k), int(i)): float(c) for (k, i, c) in payload["cost_r"]}
    return int(payload["t1"]), int(payload["t2"]), cost_x, cost_r


def costs_payload(t1: int, t2: int, cost_x: dict, cost_r: dict) -> dict:
    return {
        "t1": t1,
        "t2": t2,
        "cost_x": [[k, i, c] for (k, i), c in sorted(cost_x.items())],
        "cost_r": [[k, i, c] for (k, i), c in sorted(cost_r.items())],
    }
