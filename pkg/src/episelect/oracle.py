"""Brute-force reference solvers and exhaustive auditors.

Everything here trades speed for certainty on desk-scale instances: hard
search-space guards refuse oversized inputs instead of truncating, and all
enumeration orders are lexicographic so ties resolve identically everywhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bayes import ThetaGrid, trace_inverse
from .dynamics import (
    KIND_R,
    KIND_X,
    Measurement,
    Theta,
    simulate_with_sensitivities,
    state_is_zero,
)
from .errors import SearchSpaceError
from .pems import (
    OBJECTIVE_A,
    OBJECTIVE_D,
    GreedyTrace,
    GroundElement,
    PemsInstance,
    Selection,
)
from .pims import Equation, ExactStrategy, PimsInstance, build_Q1_Q2

PEMS_GUARD = 10**8
PIMS_GUARD = 10**7
GAMMA_GUARD = 12
AUDIT_GUARD = 8
_CHUNK = 1 << 18


@dataclass(frozen=True)
class OracleReport:
    value: float
    optimizer: object
    enumerated: int
    space_size: int
    seconds: float


def brute_force_pems(
    instance: PemsInstance,
    atoms: dict[Measurement, np.ndarray],
    Fp: np.ndarray,
    which: str,
    budget: float | None = None,
) -> OracleReport:
    """Enumerate the full selection lattice and keep the best feasible point.

    Mixed-radix decoding of a running index gives the lexicographic order over
    count vectors (measurements sorted by key, counts ascending); the first
    maximum encountered is the reported optimizer.
    """
    start = time.perf_counter()
    B = instance.budget if budget is None else float(budget)
    measurements = instance.measurements()
    caps = np.array([instance.cap(m) for m in measurements], dtype=np.int64)
    space = 1
    for c in caps:
        space *= int(c) + 1
    if space > PEMS_GUARD:
        raise SearchSpaceError(f"selection lattice has {space} points, guard is {PEMS_GUARD}")
    costs = np.array([instance.unit_cost(m) for m in measurements])
    a11 = np.array([atoms[m][0, 0] for m in measurements])
    a12 = np.array([atoms[m][0, 1] for m in measurements])
    a22 = np.array([atoms[m][1, 1] for m in measurements])
    radices = caps + 1
    strides = np.ones(len(measurements), dtype=np.int64)
    for pos in range(len(measurements) - 2, -1, -1):
        strides[pos] = strides[pos + 1] * radices[pos + 1]
    f11, f12, f22 = Fp[0, 0], Fp[0, 1], Fp[1, 1]
    base = (
        trace_inverse(Fp)
        if which == OBJECTIVE_A
        else float(np.log(f11 * f22 - f12 * f12))
    )
    best_value, best_idx = -np.inf, -1
    for chunk_start in range(0, space, _CHUNK):
        idx = np.arange(chunk_start, min(space, chunk_start + _CHUNK), dtype=np.int64)
        counts = (idx[:, None] // strides[None, :]) % radices[None, :]
        feasible = counts @ costs <= B
        h11 = counts @ a11 + f11
        h12 = counts @ a12 + f12
        h22 = counts @ a22 + f22
        det = h11 * h22 - h12 * h12
        if which == OBJECTIVE_A:
            values = base - (h11 + h22) / det
        else:
            values = np.log(det) - base
        values[~feasible] = -np.inf
        pos = int(np.argmax(values))
        if values[pos] > best_value:
            best_value, best_idx = float(values[pos]), int(idx[pos])
    digits = (best_idx // strides) % radices
    counts_map = {
        m: int(c) for m, c in zip(measurements, digits) if c > 0
    }
    return OracleReport(
        value=best_value,
        optimizer=Selection(counts=counts_map),
        enumerated=space,
        space_size=space,
        seconds=time.perf_counter() - start,
    )


def brute_force_pims_pairs(instance: PimsInstance) -> OracleReport:
    """Exhaustive min-cost pair over Q1 x Q2, recomputing supports from the
    membership formulas rather than through the solver's helpers."""
    start = time.perf_counter()
    Q1, Q2 = build_Q1_Q2(instance)
    space = len(Q1) * len(Q2)
    if space > PIMS_GUARD:
        raise SearchSpaceError(f"pair space has {space} points, guard is {PIMS_GUARD}")
    prof = instance.profile
    net = instance.network

    def support(eq: Equation) -> frozenset[Measurement]:
        k, i = eq.time, eq.node
        if eq.kind == KIND_X:
            raw = {(i, k + 1, KIND_X), (i, k, KIND_R)}
            raw |= {(j, k, KIND_X) for j in net.closed_in_neighbors(i)}
        else:
            raw = {(i, k + 1, KIND_R), (i, k, KIND_R), (i, k, KIND_X)}
        return frozenset(
            Measurement(*t) for t in raw if not state_is_zero(prof, t[0], t[1], t[2])
        )

    best = None
    for eq1 in sorted(Q1, key=Equation.sort_key):
        s1 = support(eq1)
        for eq2 in sorted(Q2, key=Equation.sort_key):
            union = s1 | support(eq2)
            cost = sum(instance.cost_of(m) for m in union)
            if best is None or cost < best[0]:
                best = (cost, eq1, eq2, union)
    cost, eq1, eq2, union = best
    return OracleReport(
        value=cost,
        optimizer=ExactStrategy(selected=union, chosen_pair=(eq1, eq2)),
        enumerated=space,
        space_size=space,
        seconds=time.perf_counter() - start,
    )


def _expand_ground(trace: GreedyTrace) -> list[GroundElement]:
    return [
        GroundElement(g.measurement, copy, g.cost)
        for g in trace.groups
        for copy in range(1, g.cap + 1)
    ]


def _subset_values(f, ground):
    """f evaluated on every subset, indexed by bitmask over ``ground``."""
    values = np.zeros(1 << len(ground))
    for mask in range(1, 1 << len(ground)):
        values[mask] = f([e for b, e in enumerate(ground) if mask >> b & 1])
    return values


def exhaustive_gamma1(f, trace: GreedyTrace, tol: float = 1e-12) -> float:
    """The type-1 greedy submodularity ratio by full subset enumeration.

    Minimizes, over greedy prefixes and every subset with new elements and a
    positive joint gain, the summed-singleton gain divided by the joint gain.
    """
    ground = _expand_ground(trace)
    m = len(ground)
    if m > GAMMA_GUARD:
        raise SearchSpaceError(f"ground set has {m} elements, guard is {GAMMA_GUARD}")
    values = _subset_values(f, ground)
    bit_of = {e: b for b, e in enumerate(ground)}
    best = 1.0
    prefix_mask = 0
    prefix_masks = [0]
    for elem in trace.chain:
        prefix_mask |= 1 << bit_of[elem]
        prefix_masks.append(prefix_mask)
    for Yj in prefix_masks:
        fY = values[Yj]
        marg = np.zeros(m)
        for b in range(m):
            if not Yj >> b & 1:
                marg[b] = values[Yj | (1 << b)] - fY
        # summed singleton gains per subset, by peeling the lowest set bit
        lhs = np.zeros(1 << m)
        for mask in range(1, 1 << m):
            low = mask & -mask
            lhs[mask] = lhs[mask ^ low] + marg[low.bit_length() - 1]
        for A in range(1 << m):
            new = A & ~Yj
            if new == 0:
                continue
            denom = values[A | Yj] - fY
            if denom <= tol:
                continue
            best = min(best, lhs[new] / denom)
    return best


def submodularity_audit(f, ground, tol: float = 1e-9):
    """Check the diminishing-returns inequality on every (A subset of B, y) triple.

    Returns (True, None) on a pass, otherwise (False, (A, B, y)) with the first
    counterexample in enumeration order.
    """
    ground = sorted(ground, key=GroundElement.sort_key)
    m = len(ground)
    if m > AUDIT_GUARD:
        raise SearchSpaceError(f"ground set has {m} elements, guard is {AUDIT_GUARD}")
    values = _subset_values(f, ground)
    for Bmask in range(1 << m):
        for b in range(m):
            if Bmask >> b & 1:
                continue
            ybit = 1 << b
            gain_B = values[Bmask | ybit] - values[Bmask]
            A = Bmask
            while True:
                gain_A = values[A | ybit] - values[A]
                if gain_A < gain_B - tol:
                    elems = lambda mask: tuple(e for i, e in enumerate(ground) if mask >> i & 1)
                    return False, (elems(A), elems(Bmask), ground[b])
                if A == 0:
                    break
                A = (A - 1) & Bmask
    return True, None


def bcrlb_criterion(
    instance: PemsInstance,
    grid: ThetaGrid,
    Fp: np.ndarray,
    mu: Selection,
    which: str,
) -> float:
    """Design criterion of one lattice point, computed from first principles.

    Builds the per-rate-pair information of the selected tests, averages it
    over the prior grid, adds the prior information and evaluates the bound.
    Serves as the independent cross-check of the set-function route.
    """
    EF = np.zeros((2, 2))
    for beta, delta, w in grid.nodes():
        traj, sens = simulate_with_sensitivities(
            instance.network, instance.init, Theta(beta, delta), instance.t2
        )
        F = np.zeros((2, 2))
        for m, count in mu.counts.items():
            if count == 0:
                continue
            lam = traj.value(m.node, m.time, m.kind)
            if lam == 0:
                continue
            tests = instance.Nx[m.node] if m.kind == KIND_X else instance.Nr[m.node]
            g = sens.gradient(m.node, m.time, m.kind)
            F = F + (tests * count) / (lam * (1 - lam)) * np.outer(g, g)
        EF = EF + w * F
    bound = np.linalg.inv(Fp + EF)
    if which == OBJECTIVE_A:
        return float(np.trace(bound))
    if which == OBJECTIVE_D:
        sign, logdet = np.linalg.slogdet(bound)
        return float(sign * logdet) if sign > 0 else float("nan")
    raise ValueError(f"unknown objective {which!r}")
