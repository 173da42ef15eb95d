"""Random-measurement selection: spend a test budget across nodes and times to
shrink the Bayesian error bound on the rate estimates.

Selections live on an integer lattice (how many test batches per measurement);
the lattice is expanded into a ground set of per-copy elements so that the
knapsack-greedy machinery and its submodularity-ratio guarantees apply. Copies
of one measurement carry identical information atoms, so scans collapse to one
representative per measurement with a remaining-copy counter; under the
lowest-copy tie-break this is exactly the element-by-element algorithm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .bayes import BetaPrior, eig2, log_det, trace_inverse
from .dynamics import KIND_R, KIND_X, Measurement
from .errors import InfeasibleError, ValidationError
from .network import (
    DistanceProfile,
    EpidemicNetwork,
    InitialCondition,
    distance_profile,
    instance_payload,
    load_instance,
    require_valid,
)

OBJECTIVE_A = "a"  # trace of the error bound (A-optimality)
OBJECTIVE_D = "d"  # log-determinant of the error bound (D-optimality)


@dataclass(frozen=True)
class PemsInstance:
    network: EpidemicNetwork
    init: InitialCondition
    profile: DistanceProfile
    t1: int
    t2: int
    cost_x: dict[tuple[int, int], float]
    cost_r: dict[tuple[int, int], float]
    zeta: dict[int, int]
    eta: dict[int, int]
    budget: float
    prior_beta: BetaPrior
    prior_delta: BetaPrior
    Nx: dict[int, int]
    Nr: dict[int, int]
    N: dict[int, int]

    def __post_init__(self):
        if not 1 <= self.t1 <= self.t2:
            raise ValidationError(f"need 1 <= t1 <= t2, got ({self.t1}, {self.t2})")
        if self.budget < 0:
            raise ValidationError(f"budget must be >= 0, got {self.budget}")
        for i in range(1, self.network.n + 1):
            if self.zeta[i] < 1 or self.eta[i] < 1:
                raise ValidationError(f"multiplicity caps must be >= 1 at node {i}")
            if self.zeta[i] * self.Nx[i] > self.N[i]:
                raise ValidationError(f"zeta_i * Nx_i exceeds population at node {i}")
            if self.eta[i] * self.Nr[i] > self.N[i]:
                raise ValidationError(f"eta_i * Nr_i exceeds population at node {i}")
            for k in range(self.t1, self.t2 + 1):
                for name, table in (("cost_x", self.cost_x), ("cost_r", self.cost_r)):
                    c = table.get((k, i))
                    if c is None or not c > 0:
                        raise ValidationError(f"{name}[{k},{i}] must be > 0, got {c}")
        require_valid(self.network, self.init, self.prior_beta.hi, self.prior_delta.hi)

    def measurements(self) -> list[Measurement]:
        out = []
        for i in range(1, self.network.n + 1):
            for k in range(self.t1, self.t2 + 1):
                for kind in (KIND_X, KIND_R):
                    out.append(Measurement(i, k, kind))
        return sorted(out, key=Measurement.sort_key)

    def unit_cost(self, m: Measurement) -> float:
        table = self.cost_x if m.kind == KIND_X else self.cost_r
        return table[(m.time, m.node)]

    def cap(self, m: Measurement) -> int:
        return self.zeta[m.node] if m.kind == KIND_X else self.eta[m.node]


@dataclass(frozen=True)
class Selection:
    """Point on the selection lattice: test-batch counts per measurement."""

    counts: dict[Measurement, int]

    def cost(self, instance: PemsInstance) -> float:
        return sum(instance.unit_cost(m) * c for m, c in self.counts.items())

    def total_copies(self) -> int:
        return sum(self.counts.values())

    def sorted_items(self):
        return sorted(self.counts.items(), key=lambda mc: mc[0].sort_key())


def selection_cost(instance: PemsInstance, mu: Selection) -> float:
    for m, c in mu.counts.items():
        if c < 0 or c > instance.cap(m):
            raise ValidationError(f"count {c} for {m.label()} outside the lattice")
    return mu.cost(instance)


class GroundElement(NamedTuple):
    """One copy of a measurement in the expanded ground set."""

    measurement: Measurement
    copy: int
    cost: float

    def sort_key(self):
        return (*self.measurement.sort_key(), self.copy)


class Group(NamedTuple):
    """All copies of one measurement: interchangeable, identical atoms."""

    measurement: Measurement
    cost: float
    cap: int


def build_groups(instance: PemsInstance, budget: float) -> list[Group]:
    """The ground set, grouped by measurement, after dropping copies whose
    individual cost already exceeds the budget (they can never be selected)."""
    groups = [
        Group(m, instance.unit_cost(m), instance.cap(m))
        for m in instance.measurements()
    ]
    return [g for g in groups if g.cost <= budget]


def selection_of(elements) -> Selection:
    counts: dict[Measurement, int] = {}
    for e in elements:
        counts[e.measurement] = counts.get(e.measurement, 0) + 1
    return Selection(counts=counts)


def information_of(atoms: dict[Measurement, np.ndarray], elements) -> np.ndarray:
    H = np.zeros((2, 2))
    for e in elements:
        H = H + atoms[e.measurement]
    return H


def objective_value(Fp: np.ndarray, H: np.ndarray, which: str) -> float:
    """Improvement of the chosen design criterion over the prior-only bound."""
    if which == OBJECTIVE_A:
        return trace_inverse(Fp) - trace_inverse(Fp + H)
    if which == OBJECTIVE_D:
        return log_det(Fp + H) - log_det(Fp)
    raise ValidationError(f"unknown objective {which!r}")


def objective(instance, atoms, Fp, Y, which) -> float:
    """Set-function value of a collection of ground elements.

    When an instance is supplied, the collection is checked against the
    per-measurement multiplicity caps (membership in the expanded ground set).
    """
    Y = list(Y)
    if instance is not None:
        counts: dict[Measurement, int] = {}
        for e in Y:
            counts[e.measurement] = counts.get(e.measurement, 0) + 1
        for m, c in counts.items():
            if c > instance.cap(m):
                raise ValidationError(f"{c} copies of {m.label()} exceed the cap")
    return objective_value(Fp, information_of(atoms, Y), which)


@dataclass(frozen=True)
class GreedyTrace:
    """Everything the ratio bounds need from one greedy run."""

    which: str
    budget: float
    groups: tuple[Group, ...]
    y1: GroundElement
    f1: float
    chain: tuple[GroundElement, ...]
    f2: float
    rejected: tuple[tuple[int, GroundElement], ...]
    final: str  # "Y1" or "Y2"

    def final_elements(self) -> tuple[GroundElement, ...]:
        return (self.y1,) if self.final == "Y1" else self.chain

    def final_value(self) -> float:
        return self.f1 if self.final == "Y1" else self.f2


def greedy(
    instance: PemsInstance,
    atoms: dict[Measurement, np.ndarray],
    Fp: np.ndarray,
    which: str,
    budget: float | None = None,
) -> tuple[GreedyTrace, Selection]:
    """Best-singleton versus cost-benefit greedy, keeping whichever scores higher.

    The greedy pass repeatedly takes the element with the best marginal gain
    per unit cost; an element that would overrun the budget is removed from the
    pool (only that element) and the scan continues. Ties break on the lowest
    (node, time, kind, copy) key.
    """
    B = instance.budget if budget is None else float(budget)
    groups = build_groups(instance, B)
    if not groups:
        raise InfeasibleError(f"no measurement copy is affordable under budget {B}")

    f1, y1 = None, None
    for g in groups:
        val = objective_value(Fp, atoms[g.measurement], which)
        if f1 is None or val > f1:
            f1, y1 = val, GroundElement(g.measurement, 1, g.cost)

    consumed = {g.measurement: 0 for g in groups}
    added = {g.measurement: 0 for g in groups}
    H2 = np.zeros((2, 2))
    f2 = 0.0
    spent = 0.0
    chain: list[GroundElement] = []
    rejected: list[tuple[int, GroundElement]] = []
    while True:
        best_ratio, best_group = None, None
        for g in groups:
            if consumed[g.measurement] >= g.cap:
                continue
            gain = objective_value(Fp, H2 + atoms[g.measurement], which) - f2
            ratio = gain / g.cost
            if best_ratio is None or ratio > best_ratio:
                best_ratio, best_group = ratio, g
        if best_group is None:
            break
        copy_idx = consumed[best_group.measurement] + 1
        elem = GroundElement(best_group.measurement, copy_idx, best_group.cost)
        consumed[best_group.measurement] = copy_idx
        if spent + best_group.cost <= B:
            chain.append(elem)
            added[best_group.measurement] += 1
            spent += best_group.cost
            H2 = H2 + atoms[best_group.measurement]
            f2 = objective_value(Fp, H2, which)
        else:
            rejected.append((len(chain), elem))

    trace = GreedyTrace(
        which=which,
        budget=B,
        groups=tuple(groups),
        y1=y1,
        f1=f1,
        chain=tuple(chain),
        f2=f2,
        rejected=tuple(rejected),
        final="Y1" if f1 > f2 else "Y2",
    )
    return trace, selection_of(trace.final_elements())


def _prefix_states(atoms, trace: GreedyTrace):
    """Yield (j, H(Y2^j), per-measurement counts in Y2^j) for j = 0..|Y2|."""
    H = np.zeros((2, 2))
    counts = {g.measurement: 0 for g in trace.groups}
    yield 0, H, dict(counts)
    for j, elem in enumerate(trace.chain, start=1):
        H = H + atoms[elem.measurement]
        counts[elem.measurement] += 1
        yield j, H, dict(counts)


def _eig_ratio(m: np.ndarray, eps_prime: float) -> float:
    l1, l2 = eig2(m)
    return max(l2 - eps_prime, 0.0) / (l1 + eps_prime)


@dataclass(frozen=True)
class Gamma1Bound:
    value: float
    witnesses: tuple[GroundElement | None, ...]  # z_j per prefix index


def gamma1_lower_bound(
    Fp: np.ndarray,
    atoms: dict[Measurement, np.ndarray],
    trace: GreedyTrace,
    eps_prime: float = 0.0,
    weyl_split: bool = False,
) -> Gamma1Bound:
    """Computable lower bound on the type-1 greedy submodularity ratio.

    For each greedy prefix, the witness z_j minimizes the small-to-large
    eigenvalue ratio of the information matrix after adding one more element;
    the bound multiplies the prefix ratio with the witness ratio and takes the
    minimum over prefixes. ``eps_prime`` shrinks every ratio to absorb a
    Frobenius-norm quadrature error on the matrices; ``weyl_split`` swaps in
    the looser variant that splits each eigenvalue by superadditivity before
    taking ratios.
    """
    if trace.which != OBJECTIVE_A:
        raise ValidationError("the ratio bound applies to the trace objective only")
    lam_Fp = eig2(Fp)
    terms: list[float] = []
    witnesses: list[GroundElement | None] = []
    for j, Hj, counts in _prefix_states(atoms, trace):
        candidates = [g for g in trace.groups if counts[g.measurement] < g.cap]
        if not candidates:
            witnesses.append(None)
            continue
        best_ratio, best_g = None, None
        for g in candidates:
            r = _eig_ratio(Fp + Hj + atoms[g.measurement], eps_prime)
            if best_ratio is None or r < best_ratio:
                best_ratio, best_g = r, g
        z = GroundElement(best_g.measurement, counts[best_g.measurement] + 1, best_g.cost)
        witnesses.append(z)
        if weyl_split:
            lam_H = eig2(Hj)
            lam_z = eig2(atoms[best_g.measurement])
            r1 = max(lam_Fp[1] + lam_H[1] - eps_prime, 0.0) / (lam_Fp[0] + lam_H[0] + eps_prime)
            r2 = max(lam_Fp[1] + lam_H[1] + lam_z[1] - eps_prime, 0.0) / (
                lam_Fp[0] + lam_H[0] + lam_z[0] + eps_prime
            )
        else:
            r1 = _eig_ratio(Fp + Hj, eps_prime)
            r2 = best_ratio
        terms.append(r1 * r2)
    value = min(terms) if terms else 0.0
    return Gamma1Bound(value=float(min(max(value, 0.0), 1.0)), witnesses=tuple(witnesses))


def gamma2_hat(
    Fp: np.ndarray,
    atoms: dict[Measurement, np.ndarray],
    trace: GreedyTrace,
    eps: float = 0.0,
) -> float:
    """Largest ratio certified against every budget-violating candidate.

    Scans all prefixes and every remaining element whose cost would overrun
    the budget; returns +inf when no such pair exists (vacuous constraint).
    """
    lhs = trace.f1 - eps / 2
    best = math.inf
    for j, Hj, counts in _prefix_states(atoms, trace):
        fj = objective_value(Fp, Hj, trace.which)
        cj = sum(e.cost for e in trace.chain[:j])
        for g in trace.groups:
            if counts[g.measurement] >= g.cap:
                continue
            if g.cost + cj <= trace.budget:
                continue
            rhs = objective_value(Fp, Hj + atoms[g.measurement], trace.which) - fj + eps
            if rhs > 0:
                best = min(best, lhs / rhs)
    return best


def guarantee(
    which: str,
    gamma1: float,
    gamma2: float,
    B: float,
    c_min: float,
    c_max: float,
    eps: float,
) -> tuple[float, float]:
    """(multiplicative fraction, additive slack) of the greedy guarantee."""
    if which == OBJECTIVE_D:
        fraction = 0.5 * (1 - math.exp(-1.0))
        slack = (B / c_min + 1.5) * eps
    elif which == OBJECTIVE_A:
        fraction = min(gamma2, 1.0) / 2 * (1 - math.exp(-gamma1))
        slack = ((B + c_max) / c_min + 1.0) * eps
    else:
        raise ValidationError(f"unknown objective {which!r}")
    return fraction, slack


def load_pems_instance(path: str | Path) -> PemsInstance:
    """Instance file: the network schema extended with the selection fields
    t1, t2, budget, cost_x, cost_r, zeta, eta, Nx, Nr, N and the two priors."""
    network, init, payload = load_instance(path)
    required = (
        "t1", "t2", "budget", "cost_x", "cost_r",
        "zeta", "eta", "Nx", "Nr", "N", "beta_prior", "delta_prior",
    )
    for key in required:
        if key not in payload:
            raise ValidationError(f"instance file {path} is missing field {key!r}")

    def per_node(name) -> dict[int, int]:
        values = payload[name]
        if len(values) != network.n:
            raise ValidationError(f"field {name!r} must have length n={network.n}")
        return {i + 1: int(values[i]) for i in range(network.n)}

    def prior(name) -> BetaPrior:
        p = payload[name]
        return BetaPrior(a=float(p["a"]), b=float(p["b"]), lo=float(p["lo"]), hi=float(p["hi"]))

    return PemsInstance(
        network=network,
        init=init,
        profile=distance_profile(network, init),
        t1=int(payload["t1"]),
        t2=int(payload["t2"]),
        cost_x={(int(k), int(i)): float(c) for (k, i, c) in payload["cost_x"]},
        cost_r={(int(k), int(i)): float(c) for (k, i, c) in payload["cost_r"]},
        zeta=per_node("zeta"),
        eta=per_node("eta"),
        budget=float(payload["budget"]),
        prior_beta=prior("beta_prior"),
        prior_delta=prior("delta_prior"),
        Nx=per_node("Nx"),
        Nr=per_node("Nr"),
        N=per_node("N"),
    )


def pems_payload(instance: PemsInstance) -> dict:
    payload = instance_payload(instance.network, instance.init)
    payload.update(
        {
            "t1": instance.t1,
            "t2": instance.t2,
            "budget": instance.budget,
            "cost_x": [[k, i, c] for (k, i), c in sorted(instance.cost_x.items())],
            "cost_r": [[k, i, c] for (k, i), c in sorted(instance.cost_r.items())],
            "zeta": [instance.zeta[i] for i in range(1, instance.network.n + 1)],
            "eta": [instance.eta[i] for i in range(1, instance.network.n + 1)],
            "Nx": [instance.Nx[i] for i in range(1, instance.network.n + 1)],
            "Nr": [instance.Nr[i] for i in range(1, instance.network.n + 1)],
            "N": [instance.N[i] for i in range(1, instance.network.n + 1)],
            "beta_prior": {
                "a": instance.prior_beta.a, "b": instance.prior_beta.b,
                "lo": instance.prior_beta.lo, "hi": instance.prior_beta.hi,
            },
            "delta_prior": {
                "a": instance.prior_delta.a, "b": instance.prior_delta.b,
                "lo": instance.prior_delta.lo, "hi": instance.prior_delta.hi,
            },
        }
    )
    return payload


def save_pems_instance(path: str | Path, instance: PemsInstance, extra: dict | None = None) -> None:
    payload = pems_payload(instance)
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")
