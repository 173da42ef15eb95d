import math

import numpy as np
import pytest

from conftest import philox, small_pems_instance
from episelect import pems
from episelect.bayes import build_grid, compute_Fp, compute_H_atoms
from episelect.dynamics import Measurement
from episelect.errors import SearchSpaceError
from episelect.experiments import generate_instance, pims_instance_from_template
from episelect.oracle import (
    bcrlb_criterion,
    brute_force_pems,
    brute_force_pims_pairs,
    exhaustive_gamma1,
    submodularity_audit,
)
from episelect.pems import GroundElement, build_groups, greedy, objective, selection_of


def setup_instance(seed=0, **kwargs):
    inst = small_pems_instance(seed, **kwargs)
    grid = build_grid(inst.prior_beta, inst.prior_delta, 9)
    Fp = compute_Fp(inst.prior_beta, inst.prior_delta, grid)
    atoms = compute_H_atoms(inst, grid)
    return inst, grid, Fp, atoms


def expanded_ground(inst):
    return [
        GroundElement(g.measurement, copy, g.cost)
        for g in build_groups(inst, math.inf)
        for copy in range(1, g.cap + 1)
    ]


def test_brute_force_zero_budget():
    inst, _, Fp, atoms = setup_instance()
    report = brute_force_pems(inst, atoms, Fp, "d", budget=0.0)
    assert report.value == 0.0
    assert report.optimizer.counts == {}
    assert report.enumerated == report.space_size


def test_brute_force_space_size_is_analytic():
    inst, _, Fp, atoms = setup_instance()
    report = brute_force_pems(inst, atoms, Fp, "a", budget=1.0)
    expected = 1
    for m in inst.measurements():
        expected *= inst.cap(m) + 1
    assert report.space_size == expected


def test_brute_force_full_budget_takes_all_copies():
    inst, _, Fp, atoms = setup_instance(1)
    total = sum(g.cap * g.cost for g in build_groups(inst, math.inf))
    report = brute_force_pems(inst, atoms, Fp, "d", budget=total)
    for m in inst.measurements():
        assert report.optimizer.counts.get(m, 0) == inst.cap(m)


def test_brute_force_dominates_greedy():
    for seed in range(6):
        inst, _, Fp, atoms = setup_instance(seed)
        for which in ("a", "d"):
            for budget in (3.0, 6.0, 9.0):
                trace, _ = greedy(inst, atoms, Fp, which, budget=budget)
                report = brute_force_pems(inst, atoms, Fp, which, budget=budget)
                assert report.value >= trace.final_value() - 1e-12


def test_brute_force_guard_refuses_large_lattice():
    inst = generate_instance(0, "paper_large")
    with pytest.raises(SearchSpaceError):
        brute_force_pems(inst, {}, np.eye(2), "d")


def test_pims_pairs_guard():
    inst = pims_instance_from_template(0, t1=1, t2=1500)
    with pytest.raises(SearchSpaceError):
        brute_force_pims_pairs(inst)


def test_pims_pairs_singleton_space():
    import episelect.pims as pims
    from episelect.network import InitialCondition, network_from_triples

    net = network_from_triples(1, [(1, 1, 1.0)], 0.1)
    init = InitialCondition(s0=np.array([0.95]), x0=np.array([0.05]), r0=np.array([0.0]))
    inst = pims.make_instance(
        net, init, 1, 2, {(1, 1): 1.0, (2, 1): 1.0}, {(1, 1): 1.0, (2, 1): 1.0}
    )
    report = brute_force_pims_pairs(inst)
    assert report.space_size == 1
    assert report.optimizer.chosen_pair == (
        pims.Equation(1, 1, "x"),
        pims.Equation(1, 1, "r"),
    )


def test_exhaustive_gamma1_submodular_cases():
    # the log-det improvement is submodular, so the exhaustive ratio is 1
    for seed in (0, 1, 2):
        inst, _, Fp, atoms = setup_instance(seed)
        trace, _ = greedy(inst, atoms, Fp, "d", budget=6.0)
        f = lambda Y: objective(inst, atoms, Fp, Y, "d")
        assert exhaustive_gamma1(f, trace) == pytest.approx(1.0, abs=1e-9)


def test_exhaustive_gamma1_diagonal_trace_case():
    inst, _, _, _ = setup_instance(3)
    Fp = np.diag([2.0, 1.0])
    atoms = {
        g.measurement: np.diag([0.4 * (i + 1), 0.2]) for i, g in enumerate(build_groups(inst, math.inf))
    }
    trace, _ = greedy(inst, atoms, Fp, "a", budget=6.0)
    f = lambda Y: objective(inst, atoms, Fp, Y, "a")
    assert exhaustive_gamma1(f, trace) == pytest.approx(1.0, abs=1e-9)


def test_exhaustive_gamma1_dominates_lemma_bound():
    for seed in range(6):
        inst, _, Fp, atoms = setup_instance(seed)
        trace, _ = greedy(inst, atoms, Fp, "a", budget=7.0)
        f = lambda Y: objective(inst, atoms, Fp, Y, "a")
        exact = exhaustive_gamma1(f, trace)
        bound = pems.gamma1_lower_bound(Fp, atoms, trace).value
        assert exact >= bound - 1e-9, seed


def test_exhaustive_gamma1_guard():
    inst, _, Fp, atoms = setup_instance(0, zeta=4, eta=4)  # 16 elements
    trace, _ = greedy(inst, atoms, Fp, "a", budget=5.0)
    with pytest.raises(SearchSpaceError):
        exhaustive_gamma1(lambda Y: objective(inst, atoms, Fp, Y, "a"), trace)


def test_audit_passes_logdet_and_constant():
    inst, _, Fp, atoms = setup_instance(4)
    ground = expanded_ground(inst)
    ok, ce = submodularity_audit(lambda Y: objective(inst, atoms, Fp, Y, "d"), ground)
    assert ok and ce is None
    ok, _ = submodularity_audit(lambda Y: 1.23, ground)
    assert ok


def test_audit_catches_known_violation():
    # a pure coverage-threshold function is not submodular
    inst, _, _, _ = setup_instance(5)
    ground = expanded_ground(inst)[:4]
    f = lambda Y: float(len(list(Y)) >= 2)
    ok, (A, B, y) = submodularity_audit(f, ground)
    assert not ok
    assert f([*A, y]) - f(list(A)) < f([*B, y]) - f(list(B))


def test_audit_catches_nonsubmodular_trace_objective():
    # mixed-direction rank-one atoms break submodularity of the trace objective
    Fp = np.diag([1.56, 2.85])
    vectors = [np.array([1.5, -5.9]), np.array([0.46, 0.23]), np.array([-3.3, 3.5])]
    ms = [Measurement(i + 1, 1, "x") for i in range(3)]
    atoms = {m: np.outer(v, v) for m, v in zip(ms, vectors)}
    ground = [GroundElement(m, 1, 1.0) for m in ms]
    f = lambda Y: pems.objective_value(Fp, pems.information_of(atoms, Y), "a")
    ok, counterexample = submodularity_audit(f, ground)
    assert not ok
    A, B, y = counterexample
    assert f([*A, y]) - f(list(A)) < f([*B, y]) - f(list(B)) - 1e-9


def test_audit_guard():
    inst, _, Fp, atoms = setup_instance(0, zeta=3, eta=3)  # 12 elements
    ground = expanded_ground(inst)
    with pytest.raises(SearchSpaceError):
        submodularity_audit(lambda Y: 0.0, ground)


def test_set_function_matches_lattice_route():
    # the copy-sum of prior-averaged atoms must equal the prior average of the
    # per-rate information of the selected tests, end to end
    inst, grid, Fp, atoms = setup_instance(6)
    ground = expanded_ground(inst)
    rng = philox(42)
    base_a = bcrlb_criterion(inst, grid, Fp, pems.Selection({}), "a")
    base_d = bcrlb_criterion(inst, grid, Fp, pems.Selection({}), "d")
    for _ in range(8):
        take = rng.random(len(ground)) < 0.4
        Y = [e for e, t in zip(ground, take) if t]
        mu = selection_of(Y)
        for which, base in (("a", base_a), ("d", base_d)):
            set_route = objective(inst, atoms, Fp, Y, which)
            lattice_route = base - bcrlb_criterion(inst, grid, Fp, mu, which)
            assert set_route == pytest.approx(lattice_route, abs=1e-9)


def test_brute_force_deterministic():
    inst, _, Fp, atoms = setup_instance(7)
    r1 = brute_force_pems(inst, atoms, Fp, "a", budget=4.0)
    r2 = brute_force_pems(inst, atoms, Fp, "a", budget=4.0)
    assert r1.optimizer.counts == r2.optimizer.counts and r1.value == r2.value
