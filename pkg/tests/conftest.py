"""Shared generators for seeded property tests."""

import numpy as np
import pytest

from episelect import pems
from episelect.bayes import BetaPrior
from episelect.dynamics import Theta
from episelect.network import InitialCondition, distance_profile, network_from_triples


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def random_network_instance(rng, n_max=8):
    """A random valid (network, init) pair plus the rate box it supports."""
    n = int(rng.integers(1, n_max + 1))
    h = float(rng.uniform(0.05, 0.3))
    triples = []
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            p = 0.3 if i == j else 0.4
            if rng.random() < p:
                triples.append((j, i, float(rng.uniform(0.5, 1.5))))
    beta_cap, delta_cap = 5.0, 0.95 / h
    row_sums = np.zeros(n)
    for (j, i, w) in triples:
        row_sums[i - 1] += w
    if row_sums.max() > 0:
        scale = 0.95 / (h * beta_cap * row_sums.max())
        triples = [(j, i, w * scale) for (j, i, w) in triples]
    network = network_from_triples(n, triples, h)
    x0 = np.where(rng.random(n) < 0.5, rng.uniform(0.005, 0.05, n), 0.0)
    init = InitialCondition(s0=1 - x0, x0=x0, r0=np.zeros(n))
    return network, init, beta_cap, delta_cap


def random_theta(rng, beta_cap, delta_cap) -> Theta:
    return Theta(
        beta=float(rng.uniform(0.05, 1.0) * beta_cap),
        delta=float(rng.uniform(0.05, 0.95) * delta_cap),
    )


def small_pems_instance(seed, n=2, zeta=2, eta=2, t1=2, t2=2, budget=100.0):
    """A tiny instance whose expanded ground set has n*(t2-t1+1)*(zeta+eta) elements."""
    rng = philox(seed, stream=99)
    h = 0.1
    edges = [(1, 1), (1, 2), (2, 1)][: 3 if n >= 2 else 1]
    raw = rng.uniform(0.5, 1.5, size=len(edges))
    rows = np.zeros(n)
    for (j, i), w in zip(edges, raw):
        rows[i - 1] += w
    prior_beta = BetaPrior(6, 3, 3, 7)
    prior_delta = BetaPrior(3, 4, 1, 4)
    scale = 0.99 / (h * prior_beta.hi * rows.max())
    network = network_from_triples(n, [(j, i, w * scale) for (j, i), w in zip(edges, raw)], h)
    x0 = rng.uniform(0.01, 0.06, size=n)
    init = InitialCondition(s0=1 - x0, x0=x0, r0=np.zeros(n))
    window = range(t1, t2 + 1)
    cost_x = {(k, i): float(rng.integers(1, 4)) for k in window for i in range(1, n + 1)}
    cost_r = {(k, i): float(rng.integers(1, 4)) for k in window for i in range(1, n + 1)}
    return pems.PemsInstance(
        network=network,
        init=init,
        profile=distance_profile(network, init),
        t1=t1,
        t2=t2,
        cost_x=cost_x,
        cost_r=cost_r,
        zeta={i: zeta for i in range(1, n + 1)},
        eta={i: eta for i in range(1, n + 1)},
        budget=budget,
        prior_beta=prior_beta,
        prior_delta=prior_delta,
        Nx={i: 100 for i in range(1, n + 1)},
        Nr={i: 100 for i in range(1, n + 1)},
        N={i: 1000 for i in range(1, n + 1)},
    )


@pytest.fixture(scope="session")
def paper_small_setup():
    """One paper-small instance with its grid, prior information and atoms."""
    from episelect.bayes import build_grid, compute_Fp, compute_H_atoms
    from episelect.experiments import generate_instance

    instance = generate_instance(0, "paper_small")
    grid = build_grid(instance.prior_beta, instance.prior_delta, 17)
    Fp = compute_Fp(instance.prior_beta, instance.prior_delta, grid)
    atoms = compute_H_atoms(instance, grid)
    return instance, grid, Fp, atoms
