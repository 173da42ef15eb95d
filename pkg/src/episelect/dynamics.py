"""Forward propagation of the networked SIR state and its rate sensitivities.

The recursion, per node i and step k, with infection pressure
P_i[k] = sum_{j in N̄_i} a_ij x_j[k]:

    s_i[k+1] = s_i[k] - h b s_i[k] P_i[k]
    x_i[k+1] = (1 - h d) x_i[k] + h b s_i[k] P_i[k]
    r_i[k+1] = r_i[k] + h d x_i[k]

Zeros forced by the infection-distance structure are produced exactly (the
recursion only multiplies and adds exact zeros), so zero/positive queries can
be answered without simulating. Sensitivities w.r.t. the two rates are stepped
jointly with the state by differentiating the recursion; no clamping anywhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .network import (
    DistanceProfile,
    EpidemicNetwork,
    InitialCondition,
    require_valid,
)

KIND_X = "x"
KIND_R = "r"
KINDS = (KIND_X, KIND_R)


class Measurement(NamedTuple):
    """Identity of one observable state value: (node, time, kind)."""

    node: int
    time: int
    kind: str

    def sort_key(self) -> tuple[int, int, int]:
        return (self.node, self.time, KINDS.index(self.kind))

    def label(self) -> str:
        return f"{self.kind}[{self.node}]@{self.time}"


@dataclass(frozen=True)
class Theta:
    """Infection rate and recovery rate, the two unknowns of the model."""

    beta: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.beta, self.delta])


@dataclass(frozen=True)
class SirTrajectory:
    """State arrays of shape (T+1, n); row k holds the proportions at time k."""

    s: np.ndarray
    x: np.ndarray
    r: np.ndarray

    @property
    def horizon(self) -> int:
        return self.s.shape[0] - 1

    def value(self, i: int, k: int, kind: str) -> float:
        arr = self.x if kind == KIND_X else self.r
        return float(arr[k, i - 1])


@dataclass(frozen=True)
class SensitivityTrajectory:
    """Partial derivatives of the state w.r.t. beta and delta, shape (T+1, n)."""

    ds_dbeta: np.ndarray
    dx_dbeta: np.ndarray
    dr_dbeta: np.ndarray
    ds_ddelta: np.ndarray
    dx_ddelta: np.ndarray
    dr_ddelta: np.ndarray

    def gradient(self, i: int, k: int, kind: str) -> np.ndarray:
        """[d/dbeta, d/ddelta] of x_i[k] or r_i[k]."""
        if kind == KIND_X:
            return np.array([self.dx_dbeta[k, i - 1], self.dx_ddelta[k, i - 1]])
        return np.array([self.dr_dbeta[k, i - 1], self.dr_ddelta[k, i - 1]])


def simulate(
    network: EpidemicNetwork,
    init: InitialCondition,
    theta: Theta,
    T: int,
) -> SirTrajectory:
    """Exact forward recursion for k = 0..T-1; O(T(n+|E|)) work."""
    require_valid(network, init, theta.beta, theta.delta)
    n = network.n
    h, b, d = network.h, theta.beta, theta.delta
    A = network.weights
    s = np.empty((T + 1, n))
    x = np.empty((T + 1, n))
    r = np.empty((T + 1, n))
    s[0], x[0], r[0] = init.s0, init.x0, init.r0
    for k in range(T):
        pressure = A @ x[k]
        newly = h * b * s[k] * pressure
        s[k + 1] = s[k] - newly
        x[k + 1] = (1 - h * d) * x[k] + newly
        r[k + 1] = r[k] + h * d * x[k]
    return SirTrajectory(s=s, x=x, r=r)


def simulate_with_sensitivities(
    network: EpidemicNetwork,
    init: InitialCondition,
    theta: Theta,
    T: int,
) -> tuple[SirTrajectory, SensitivityTrajectory]:
    """Step the state and all six rate sensitivities in one pass.

    The beta recursion differentiates each state equation w.r.t. beta; the
    delta recursion is the analogous differentiation w.r.t. delta. The initial
    condition does not depend on the rates, so all sensitivities start at zero.
    """
    require_valid(network, init, theta.beta, theta.delta)
    n = network.n
    h, b, d = network.h, theta.beta, theta.delta
    A = network.weights
    s = np.empty((T + 1, n))
    x = np.empty((T + 1, n))
    r = np.empty((T + 1, n))
    sb = np.zeros((T + 1, n))
    xb = np.zeros((T + 1, n))
    rb = np.zeros((T + 1, n))
    sd = np.zeros((T + 1, n))
    xd = np.zeros((T + 1, n))
    rd = np.zeros((T + 1, n))
    s[0], x[0], r[0] = init.s0, init.x0, init.r0
    for k in range(T):
        P = A @ x[k]
        dP_db = A @ xb[k]
        dP_dd = A @ xd[k]
        newly = h * b * s[k] * P
        # d/dbeta of h*b*s*P carries the product-rule term with s and the explicit b
        flow_b = h * ((sb[k] * b + s[k]) * P + s[k] * b * dP_db)
        flow_d = h * b * (sd[k] * P + s[k] * dP_dd)
        s[k + 1] = s[k] - newly
        x[k + 1] = (1 - h * d) * x[k] + newly
        r[k + 1] = r[k] + h * d * x[k]
        sb[k + 1] = sb[k] - flow_b
        xb[k + 1] = (1 - h * d) * xb[k] + flow_b
        rb[k + 1] = rb[k] + h * d * xb[k]
        sd[k + 1] = sd[k] - flow_d
        xd[k + 1] = -h * x[k] + (1 - h * d) * xd[k] + flow_d
        rd[k + 1] = rd[k] + h * x[k] + h * d * xd[k]
    return (
        SirTrajectory(s=s, x=x, r=r),
        SensitivityTrajectory(
            ds_dbeta=sb, dx_dbeta=xb, dr_dbeta=rb,
            ds_ddelta=sd, dx_ddelta=xd, dr_ddelta=rd,
        ),
    )


def state_is_zero(profile: DistanceProfile, i: int, k: int, kind: str) -> bool:
    """True iff the distance structure forces x_i[k] (or r_i[k]) to be exactly 0.

    x_i[k] is zero exactly when k < d_i; r_i[k] exactly when k <= d_i; both are
    identically zero for unreachable nodes.
    """
    d = profile.d[i]
    if d == float("inf"):
        return True
    if kind == KIND_X:
        return k < d
    return k <= d


def write_trajectory_csv(
    path: str | Path,
    traj: SirTrajectory,
    sens: SensitivityTrajectory | None = None,
) -> None:
    """One row per (k, i); sensitivity columns included when available."""
    n = traj.s.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["k", "i", "s", "x", "r"]
        if sens is not None:
            header += ["dx_dbeta", "dx_ddelta", "dr_dbeta", "dr_ddelta"]
        writer.writerow(header)
        for k in range(traj.horizon + 1):
            for idx in range(n):
                values = [traj.s[k, idx], traj.x[k, idx], traj.r[k, idx]]
                if sens is not None:
                    values += [
                        sens.dx_dbeta[k, idx],
                        sens.dx_ddelta[k, idx],
                        sens.dr_dbeta[k, idx],
                        sens.dr_ddelta[k, idx],
                    ]
                writer.writerow([k, idx + 1] + [repr(float(v)) for v in values])
