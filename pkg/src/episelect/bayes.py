"""Priors over the rate pair, quadrature over the prior, and the information
matrices that drive the random-measurement selection objectives.

All information matrices here are symmetric 2x2 arrays; eigenvalues, traces,
determinants and inverses use the closed 2x2 forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .dynamics import KIND_R, KIND_X, Measurement, Theta, simulate_with_sensitivities
from .errors import ValidationError

if TYPE_CHECKING:
    from .pems import PemsInstance

PSD_TOL = 1e-12


@dataclass(frozen=True)
class BetaPrior:
    """Beta(a, b) distribution linearly transformed onto the interval [lo, hi]."""

    a: float
    b: float
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.a > 1 and self.b > 1):
            raise ValidationError(f"shape parameters must exceed 1, got ({self.a}, {self.b})")
        if not self.lo < self.hi:
            raise ValidationError(f"support requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def pdf(self, theta):
        u = (np.asarray(theta, dtype=float) - self.lo) / self.width
        log_norm = math.lgamma(self.a) + math.lgamma(self.b) - math.lgamma(self.a + self.b)
        return u ** (self.a - 1) * (1 - u) ** (self.b - 1) / (math.exp(log_norm) * self.width)

    def score(self, theta):
        """d/dtheta of the log density."""
        u = (np.asarray(theta, dtype=float) - self.lo) / self.width
        return ((self.a - 1) / u - (self.b - 1) / (1 - u)) / self.width

    def mean(self) -> float:
        return self.lo + self.width * self.a / (self.a + self.b)


@dataclass(frozen=True)
class ThetaGrid:
    """Tensor-product midpoint rule over the prior box.

    Cell centers only (endpoints are never sampled, keeping the Beta score
    finite everywhere). Weights carry the joint prior density and are
    self-normalized to sum to exactly 1; the pre-normalization quadrature mass
    is kept in ``raw_mass`` as a convergence diagnostic.
    """

    betas: np.ndarray
    deltas: np.ndarray
    weights: np.ndarray  # shape (len(betas), len(deltas)), sums to 1
    raw_mass: float

    @property
    def n_I(self) -> int:
        return self.weights.size

    def nodes(self):
        """Yield (beta, delta, weight) in a fixed row-major order."""
        for qb, beta in enumerate(self.betas):
            for qd, delta in enumerate(self.deltas):
                yield float(beta), float(delta), float(self.weights[qb, qd])

    def expectation(self, values: np.ndarray) -> float:
        """Prior expectation of a quantity tabulated on the grid."""
        return float(np.sum(values * self.weights))


def build_grid(prior_beta: BetaPrior, prior_delta: BetaPrior, points_per_axis: int) -> ThetaGrid:
    """Midpoint nodes on the open box (lo,hi) x (lo,hi) of the two priors."""
    if points_per_axis < 2:
        raise ValidationError(f"points_per_axis must be >= 2, got {points_per_axis}")
    m = points_per_axis

    def centers(prior: BetaPrior) -> np.ndarray:
        step = prior.width / m
        return prior.lo + (np.arange(m) + 0.5) * step

    betas = centers(prior_beta)
    deltas = centers(prior_delta)
    cell_area = (prior_beta.width / m) * (prior_delta.width / m)
    density = np.outer(prior_beta.pdf(betas), prior_delta.pdf(deltas))
    raw = cell_area * density
    raw_mass = float(raw.sum())
    return ThetaGrid(betas=betas, deltas=deltas, weights=raw / raw_mass, raw_mass=raw_mass)


def compute_Fp(prior_beta: BetaPrior, prior_delta: BetaPrior, grid: ThetaGrid) -> np.ndarray:
    """Prior information matrix: quadrature of the outer product of the score.

    Independence of the two priors makes the off-diagonal vanish analytically,
    so it is set to exact zero rather than integrated.
    """
    score_b = prior_beta.score(grid.betas)
    score_d = prior_delta.score(grid.deltas)
    f11 = grid.expectation(score_b[:, None] ** 2 * np.ones_like(grid.weights))
    f22 = grid.expectation(np.ones_like(grid.weights) * score_d[None, :] ** 2)
    Fp = np.array([[f11, 0.0], [0.0, f22]])
    if min(eig2(Fp)) <= 0:
        raise ValidationError(f"prior information matrix is not positive definite: {Fp}")
    return Fp


def compute_H_atoms(instance: "PemsInstance", grid: ThetaGrid) -> dict[Measurement, np.ndarray]:
    """Prior-averaged per-test information matrix of every candidate measurement.

    One sensitivity simulation per grid node, reused for every (node, time,
    kind); atoms are independent of the copy index, so the lattice multiplicity
    is applied later at accumulation time. States forced to zero contribute the
    zero matrix.
    """
    net, init = instance.network, instance.init
    n = net.n
    t1, t2 = instance.t1, instance.t2
    window = range(t1, t2 + 1)
    Nx = np.array([instance.Nx[i] for i in range(1, n + 1)], dtype=float)
    Nr = np.array([instance.Nr[i] for i in range(1, n + 1)], dtype=float)
    # accumulators indexed [time-offset, node, component] for (11, 12, 22)
    acc = {KIND_X: np.zeros((len(window), n, 3)), KIND_R: np.zeros((len(window), n, 3))}
    for beta, delta, w in grid.nodes():
        traj, sens = simulate_with_sensitivities(net, init, Theta(beta, delta), t2)
        for off, k in enumerate(window):
            for kind, state, g1, g2, Ntests in (
                (KIND_X, traj.x[k], sens.dx_dbeta[k], sens.dx_ddelta[k], Nx),
                (KIND_R, traj.r[k], sens.dr_dbeta[k], sens.dr_ddelta[k], Nr),
            ):
                if np.any(state >= 1 - 1e-12):
                    raise ValidationError(
                        f"state {kind} reaches 1 at time {k} under theta=({beta}, {delta})"
                    )
                factor = np.zeros(n)
                positive = state > 0
                factor[positive] = w * Ntests[positive] / (state[positive] * (1 - state[positive]))
                acc[kind][off, :, 0] += factor * g1 * g1
                acc[kind][off, :, 1] += factor * g1 * g2
                acc[kind][off, :, 2] += factor * g2 * g2
    atoms: dict[Measurement, np.ndarray] = {}
    for off, k in enumerate(window):
        for idx in range(n):
            for kind in (KIND_X, KIND_R):
                a11, a12, a22 = acc[kind][off, idx]
                atoms[Measurement(idx + 1, k, kind)] = np.array([[a11, a12], [a12, a22]])
    return atoms


def eig2(m: np.ndarray) -> tuple[float, float]:
    """Closed-form eigenvalues of a symmetric 2x2, ordered |l1| >= |l2|."""
    tr = float(m[0, 0] + m[1, 1])
    det = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    disc = tr * tr - 4 * det
    if disc < -1e-12:
        raise ValidationError(f"negative discriminant {disc}; matrix is not symmetric enough")
    root = math.sqrt(max(disc, 0.0))
    lo, hi = (tr - root) / 2, (tr + root) / 2
    return (hi, lo) if abs(hi) >= abs(lo) else (lo, hi)


def is_psd(m: np.ndarray, tol: float = PSD_TOL) -> bool:
    # eig2 orders by magnitude, so take the true minimum here
    return min(eig2(m)) >= -tol


def trace_inverse(m: np.ndarray) -> float:
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return float(tr / det)


def log_det(m: np.ndarray) -> float:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det <= 0:
        raise ValidationError(f"matrix is singular or indefinite, det={det}")
    return math.log(float(det))


def inverse2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
