"""Seeded instance generation and budget-sweep experiments.

Instance randomness comes from numpy's counter-based Philox generator; the
algorithm identifier and seed are recorded in every generated file and CSV so
runs can be reproduced bit-for-bit. Replication r of a sweep uses the derived
key (seed, r), which makes replications independent of worker count and order.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracle, pems, pims
from .bayes import BetaPrior, build_grid, compute_Fp, compute_H_atoms
from .dynamics import Theta
from .errors import SearchSpaceError, ValidationError
from .network import InitialCondition, distance_profile, network_from_triples

RNG_ID = "numpy-philox-4x64"

# 5-node demonstration topology (directed ring with two chords and two
# self-loops); edge weights are drawn per seed, so only the support is fixed.
SMALL_TOPOLOGY = (
    (1, 2), (2, 3), (3, 4), (4, 5), (5, 1),
    (1, 3), (3, 5),
    (1, 1), (4, 4),
)

TEMPLATES = ("paper_small", "paper_large")


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate_instance(seed: int, template: str = "paper_small") -> pems.PemsInstance:
    """Build one randomized instance of the named template.

    Both templates share the bundled 5-node topology, h = 0.1, one mostly
    infected seed node, batch sizes of 100 tests against populations of 1000,
    and unit costs drawn uniformly from {1, 2, 3} (recovered-state tests cost
    the same as infected-state tests). The small template observes only time 5
    with at most two batches per measurement; the large template observes
    times 1..5 with up to ten batches and a sharper infection-rate prior.
    Edge weights are drawn uniformly and rescaled so the step-size assumption
    holds with margin 0.99 at the top of the prior box.
    """
    if template not in TEMPLATES:
        raise ValidationError(f"unknown template {template!r}")
    rng = _rng(seed)
    h = 0.1
    n = 5
    if template == "paper_small":
        t1, t2 = 5, 5
        cap = 2
        prior_beta = BetaPrior(a=6, b=3, lo=3, hi=7)
    else:
        t1, t2 = 1, 5
        cap = 10
        prior_beta = BetaPrior(a=8, b=3, lo=3, hi=7)
    prior_delta = BetaPrior(a=3, b=4, lo=1, hi=4)

    edges = sorted(SMALL_TOPOLOGY)
    raw = rng.uniform(0.5, 1.5, size=len(edges))
    row_sums = np.zeros(n)
    for (j, i), w in zip(edges, raw):
        row_sums[i - 1] += w
    scale = 0.99 / (h * prior_beta.hi * row_sums.max())
    triples = [(j, i, w * scale) for (j, i), w in zip(edges, raw)]
    network = network_from_triples(n, triples, h)

    x0 = np.full(n, 0.01)
    x0[0] = 0.05
    init = InitialCondition(s0=1 - x0, x0=x0, r0=np.zeros(n))

    cost_x, cost_r = {}, {}
    for k in range(t1, t2 + 1):
        for i in range(1, n + 1):
            c = int(rng.integers(1, 4))
            cost_x[(k, i)] = float(c)
            cost_r[(k, i)] = float(c)

    total = sum(cap * c for c in cost_x.values()) + sum(cap * c for c in cost_r.values())
    instance = pems.PemsInstance(
        network=network,
        init=init,
        profile=distance_profile(network, init),
        t1=t1,
        t2=t2,
        cost_x=cost_x,
        cost_r=cost_r,
        zeta={i: cap for i in range(1, n + 1)},
        eta={i: cap for i in range(1, n + 1)},
        budget=total / 2,
        prior_beta=prior_beta,
        prior_delta=prior_delta,
        Nx={i: 100 for i in range(1, n + 1)},
        Nr={i: 100 for i in range(1, n + 1)},
        N={i: 1000 for i in range(1, n + 1)},
    )
    return instance


def generation_metadata(seed: int, template: str) -> dict:
    return {"template": template, "rng": {"algorithm": RNG_ID, "seed": seed}}


def generate_pims_costs(seed: int, n: int, t1: int, t2: int):
    """Window costs for the exact-measurement problem, drawn from {1, 2, 3}
    on an independent stream of the same seed."""
    if not t1 < t2:
        raise ValidationError(f"PIMS window needs t1 < t2, got ({t1}, {t2})")
    rng = _rng(seed, stream=1)
    cost_x, cost_r = {}, {}
    for k in range(t1, t2 + 1):
        for i in range(1, n + 1):
            cost_x[(k, i)] = float(rng.integers(1, 4))
            cost_r[(k, i)] = float(rng.integers(1, 4))
    return cost_x, cost_r


def pims_instance_from_template(
    seed: int, template: str = "paper_small", t1: int = 3, t2: int = 5
) -> pims.PimsInstance:
    base = generate_instance(seed, template)
    cost_x, cost_r = generate_pims_costs(seed, base.network.n, t1, t2)
    return pims.make_instance(base.network, base.init, t1, t2, cost_x, cost_r)


def draw_theta(rng: np.random.Generator, instance) -> Theta:
    """A rate pair inside the prior box (the box satisfies the assumptions)."""
    beta = rng.uniform(instance.prior_beta.lo, instance.prior_beta.hi)
    delta = rng.uniform(instance.prior_delta.lo, instance.prior_delta.hi)
    return Theta(float(beta), float(delta))


@dataclass(frozen=True)
class QuadratureError:
    """Grid-doubling estimates of the integration error (reported, not certified)."""

    eps: float
    eps_prime: float
    points_per_axis: int


def estimate_quadrature_error(
    instance: pems.PemsInstance, points_per_axis: int
) -> QuadratureError:
    """Compare the working grid against a doubled grid.

    ``eps`` bounds |approx - exact| of the objective values via twice the
    largest observed change on a family of sampled subsets (each singleton,
    each full-multiplicity measurement, and the full ground set), for both
    objectives. ``eps_prime`` bounds the Frobenius error of any accumulated
    information matrix by summing the per-atom changes at full multiplicity.
    """
    grids = [
        build_grid(instance.prior_beta, instance.prior_delta, p)
        for p in (points_per_axis, 2 * points_per_axis)
    ]
    Fps = [compute_Fp(instance.prior_beta, instance.prior_delta, g) for g in grids]
    atom_sets = [compute_H_atoms(instance, g) for g in grids]
    measurements = instance.measurements()

    eps_prime = float(np.linalg.norm(Fps[0] - Fps[1]))
    for m in measurements:
        eps_prime += instance.cap(m) * float(np.linalg.norm(atom_sets[0][m] - atom_sets[1][m]))

    samples: list[dict] = []
    samples += [{m: 1} for m in measurements]
    samples += [{m: instance.cap(m)} for m in measurements]
    samples.append({m: instance.cap(m) for m in measurements})
    eps = 0.0
    for counts in samples:
        Hs = []
        for atoms in atom_sets:
            H = np.zeros((2, 2))
            for m, c in counts.items():
                H = H + c * atoms[m]
            Hs.append(H)
        for which in (pems.OBJECTIVE_A, pems.OBJECTIVE_D):
            v0 = pems.objective_value(Fps[0], Hs[0], which)
            v1 = pems.objective_value(Fps[1], Hs[1], which)
            eps = max(eps, 2 * abs(v0 - v1))
    return QuadratureError(eps=eps, eps_prime=eps_prime, points_per_axis=points_per_axis)


@dataclass(frozen=True)
class ExperimentSpec:
    """A reproducible sweep: identical spec and seed give byte-identical CSV."""

    template: str = "paper_small"
    instance_path: str | None = None
    mode: str = "pems"
    objective: str = "d"
    budgets: tuple[float, ...] | None = None
    replications: int = 1
    seed: int = 0
    grid_points: int = 33
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.mode not in ("pems", "pims"):
            raise ValidationError(f"unknown mode {self.mode!r}")


def default_budgets(instance: pems.PemsInstance, steps: int = 10) -> tuple[float, ...]:
    """Evenly spaced budgets from the cheapest single copy to the full ground set."""
    costs = [instance.unit_cost(m) for m in instance.measurements()]
    total = sum(instance.cap(m) * instance.unit_cost(m) for m in instance.measurements())
    return tuple(float(b) for b in np.linspace(min(costs), total, steps))


def _load_replication_instance(spec: ExperimentSpec, rep: int) -> pems.PemsInstance:
    if spec.instance_path:
        return pems.load_pems_instance(spec.instance_path)
    return generate_instance(_derive_seed(spec.seed, rep), spec.template)


def _derive_seed(master: int, rep: int) -> int:
    # replications use independent Philox streams keyed by (master, rep)
    return master * 1_000_003 + rep


PEMS_COLUMNS = (
    "replication", "B", "greedy_value", "opt_value",
    "gamma1_lb", "gamma2_hat", "guarantee_fraction",
)
PIMS_COLUMNS = (
    "replication", "cost", "pair_oracle_cost", "bound_numerator", "rank", "max_theta_err",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _pems_replication_rows(spec: ExperimentSpec, rep: int, budgets) -> list[tuple]:
    instance = _load_replication_instance(spec, rep)
    grid = build_grid(instance.prior_beta, instance.prior_delta, spec.grid_points)
    Fp = compute_Fp(instance.prior_beta, instance.prior_delta, grid)
    atoms = compute_H_atoms(instance, grid)
    c_min = min(instance.unit_cost(m) for m in instance.measurements())
    rows = []
    for B in budgets:
        if B < c_min:
            rows.append((rep, B, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        trace, _ = pems.greedy(instance, atoms, Fp, spec.objective, budget=B)
        greedy_value = trace.final_value()
        try:
            opt = oracle.brute_force_pems(instance, atoms, Fp, spec.objective, budget=B).value
        except SearchSpaceError:
            opt = None
        if spec.objective == pems.OBJECTIVE_A:
            g1 = pems.gamma1_lower_bound(Fp, atoms, trace).value
            g2 = pems.gamma2_hat(Fp, atoms, trace, eps=0.0)
            fraction, _ = pems.guarantee(spec.objective, g1, g2, B, 1.0, 1.0, 0.0)
        else:
            g1 = g2 = None
            fraction, _ = pems.guarantee(spec.objective, 0.0, 0.0, B, 1.0, 1.0, 0.0)
        rows.append((rep, B, greedy_value, opt, g1, g2, fraction))
    return rows


def _pims_replication_rows(spec: ExperimentSpec, rep: int) -> list[tuple]:
    seed = _derive_seed(spec.seed, rep)
    instance = pims_instance_from_template(seed, spec.template)
    strategy = pims.algorithm1(instance)
    cost = pims.strategy_cost(instance, strategy.selected)
    bound = pims.proposition_numerator(instance)
    pair_cost = oracle.brute_force_pims_pairs(instance).value
    rng = _rng(seed, stream=2)
    base = generate_instance(seed, spec.template)
    max_err, rank = 0.0, 2
    for _ in range(5):
        theta = draw_theta(rng, base)
        result = pims.identify_theta(instance, strategy, theta)
        rank = min(rank, result.rank)
        if result.ok:
            err = max(abs(result.theta.beta - theta.beta), abs(result.theta.delta - theta.delta))
            max_err = max(max_err, err)
        else:
            max_err = float("inf")
    return [(rep, cost, pair_cost, bound, rank, max_err)]


def _replication_worker(args):
    spec_dict, rep, budgets = args
    spec = ExperimentSpec(**spec_dict)
    if spec.mode == "pems":
        return _pems_replication_rows(spec, rep, budgets)
    return _pims_replication_rows(spec, rep)


def run_sweep(spec: ExperimentSpec) -> str:
    """Run every replication and return the finished CSV text.

    Rows are sorted by (replication, budget); per-budget means over the
    populated cells are appended. Oracle cells beyond the search-space guard
    stay empty rather than being approximated.
    """
    budgets = spec.budgets
    if spec.mode == "pems" and budgets is None:
        budgets = default_budgets(_load_replication_instance(spec, 0))
    jobs = [
        ({f.name: getattr(spec, f.name) for f in spec.__dataclass_fields__.values()}, rep, budgets)
        for rep in range(spec.replications)
    ]
    if spec.workers <= 1:
        results = [_replication_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_replication_worker, jobs))
    rows = [row for chunk in results for row in chunk]
    rows.sort(key=lambda r: r[:2])

    columns = PEMS_COLUMNS if spec.mode == "pems" else PIMS_COLUMNS
    out = io.StringIO()
    out.write("# schema-version: 1\n")
    out.write(f"# rng: {RNG_ID} seed={spec.seed}\n")
    out.write(
        f"# spec: mode={spec.mode} objective={spec.objective} template={spec.template}"
        f" replications={spec.replications} grid-points={spec.grid_points}\n"
    )
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) for v in row) + "\n")
    if spec.mode == "pems" and budgets:
        for B in budgets:
            cells = ["mean", _fmt(B)]
            for col in range(2, len(PEMS_COLUMNS)):
                values = [r[col] for r in rows if r[1] == B and r[col] is not None]
                finite = [v for v in values if not (isinstance(v, float) and math.isnan(v))]
                cells.append(_fmt(sum(finite) / len(finite)) if finite else "")
            out.write(",".join(cells) + "\n")
    return out.getvalue()


def sweep_and_write(spec: ExperimentSpec, path, plot: bool = True) -> list[str]:
    """Write the sweep CSV; render its figures next to it unless disabled."""
    text = run_sweep(spec)
    Path(path).write_text(text)
    written = [str(path)]
    if plot and spec.mode == "pems":
        from .plotting import render_sweep_figures

        written += render_sweep_figures(text, path)
    return written
