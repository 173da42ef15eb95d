import json

import pytest

from episelect.cli import main
from episelect.experiments import (
    ExperimentSpec,
    default_budgets,
    generate_instance,
    run_sweep,
)
from episelect.network import validate
from episelect.pems import load_pems_instance


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_generate_templates_validate():
    for template in ("paper_small", "paper_large"):
        for seed in (0, 1, 2):
            inst = generate_instance(seed, template)
            report = validate(
                inst.network, inst.init, inst.prior_beta.hi, inst.prior_delta.hi
            )
            assert report.ok, report.violations


def test_paper_small_constants():
    inst = generate_instance(0, "paper_small")
    assert inst.network.h == 0.1
    assert (inst.t1, inst.t2) == (5, 5)
    assert inst.init.x0[0] == 0.05 and inst.init.s0[0] == 0.95
    assert all(inst.init.x0[i] == 0.01 for i in range(1, 5))
    assert all(inst.zeta[i] == 2 and inst.eta[i] == 2 for i in inst.zeta)
    assert all(inst.Nx[i] == 100 and inst.Nr[i] == 100 and inst.N[i] == 1000 for i in inst.Nx)
    assert (inst.prior_beta.a, inst.prior_beta.b) == (6, 3)
    assert (inst.prior_beta.lo, inst.prior_beta.hi) == (3, 7)
    assert (inst.prior_delta.a, inst.prior_delta.b) == (3, 4)
    assert (inst.prior_delta.lo, inst.prior_delta.hi) == (1, 4)
    assert set(inst.cost_x.values()) <= {1.0, 2.0, 3.0}
    assert inst.cost_x == inst.cost_r


def test_paper_large_constants():
    inst = generate_instance(0, "paper_large")
    assert (inst.t1, inst.t2) == (1, 5)
    assert all(inst.zeta[i] == 10 and inst.eta[i] == 10 for i in inst.zeta)
    assert (inst.prior_beta.a, inst.prior_beta.b) == (8, 3)


def test_generated_weights_respect_margin():
    inst = generate_instance(3, "paper_small")
    h, beta_max = inst.network.h, inst.prior_beta.hi
    worst = max(h * beta_max * inst.network.row_sum(i) for i in range(1, 6))
    assert worst == pytest.approx(0.99, abs=1e-12)


def test_gen_cli_writes_instance_and_costs(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    costs_path = tmp_path / "costs.json"
    code = run_cli(
        "gen", "--template", "paper_small", "--seed", 5, "--out", inst_path,
        "--pims-costs", costs_path, "--pims-window", "3:5",
    )
    assert code == 0
    loaded = load_pems_instance(inst_path)
    assert loaded.t1 == 5
    payload = json.loads(inst_path.read_text())
    assert payload["rng"]["algorithm"] == "numpy-philox-4x64"
    costs = json.loads(costs_path.read_text())
    assert costs["t1"] == 3 and costs["t2"] == 5


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run_cli("gen", "--seed", 9, "--out", a)
    run_cli("gen", "--seed", 9, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_pims_solve_cli(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    costs_path = tmp_path / "costs.json"
    run_cli("gen", "--seed", 2, "--out", inst_path, "--pims-costs", costs_path)
    capsys.readouterr()
    code = run_cli(
        "pims", "solve", "--instance", inst_path, "--costs", costs_path,
        "--theta-true", "4.5,2.0",
    )
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("# schema-version: 1")
    assert "# rank: 2" in out
    beta_hat = next(
        float(l.split(":")[1]) for l in out.splitlines() if l.startswith("# beta_hat")
    )
    assert beta_hat == pytest.approx(4.5, abs=1e-8)


def test_pems_solve_cli(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    run_cli("gen", "--seed", 3, "--out", inst_path)
    capsys.readouterr()
    code = run_cli(
        "pems", "solve", "--instance", inst_path, "--objective", "a",
        "--budget-sweep", "2:8:3", "--bounds", "--grid-points", "7",
    )
    out = capsys.readouterr().out
    assert code == 0
    lines = [l for l in out.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "B,greedy_value,opt_value,gamma1_lb,gamma2_hat,guarantee_fraction"
    assert len(lines) == 1 + 3  # budgets 2, 5, 8
    first = lines[1].split(",")
    assert float(first[0]) == 2.0
    assert float(first[1]) > 0 and float(first[2]) > 0
    assert 0 < float(first[3]) <= 1


def test_oracle_cli_pems_and_audit(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    run_cli("gen", "--seed", 4, "--out", inst_path)
    capsys.readouterr()
    code = run_cli(
        "oracle", "pems", "--instance", inst_path, "--objective", "d",
        "--budget", "6", "--grid-points", "7",
    )
    out = capsys.readouterr().out
    assert code == 0
    header, row = [l for l in out.splitlines() if not l.startswith("#")][:2]
    assert header == "value,optimizer,space_size,seconds"
    assert int(row.split(",")[2]) == 3**10


def test_oracle_cli_guard_exit_code(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    run_cli("gen", "--template", "paper_large", "--seed", 0, "--out", inst_path)
    capsys.readouterr()
    code = run_cli(
        "oracle", "pems", "--instance", inst_path, "--grid-points", "5"
    )
    assert code == 3


def test_cli_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code = run_cli("pems", "solve", "--instance", bad, "--objective", "a")
    assert code == 2


def test_default_budget_range():
    inst = generate_instance(0, "paper_small")
    budgets = default_budgets(inst)
    costs = [inst.unit_cost(m) for m in inst.measurements()]
    total = sum(inst.cap(m) * inst.unit_cost(m) for m in inst.measurements())
    assert budgets[0] == min(costs)
    assert budgets[-1] == pytest.approx(total)
    assert len(budgets) == 10


def test_sweep_budget_below_costs_gives_zero_rows():
    spec = ExperimentSpec(
        replications=1, seed=1, grid_points=5, budgets=(0.0, 3.0), objective="d"
    )
    text = run_sweep(spec)
    rows = [l for l in text.splitlines() if l and not l.startswith("#")][1:]
    zero_row = rows[0].split(",")
    assert float(zero_row[1]) == 0.0
    assert all(float(v) == 0.0 for v in zero_row[2:])


def test_sweep_reproducible_and_worker_invariant(tmp_path):
    kwargs = dict(
        template="paper_small", objective="a", replications=2, seed=3,
        grid_points=5, budgets=(2.0, 5.0),
    )
    first = run_sweep(ExperimentSpec(workers=1, **kwargs))
    second = run_sweep(ExperimentSpec(workers=1, **kwargs))
    forked = run_sweep(ExperimentSpec(workers=2, **kwargs))
    assert first == second == forked
    assert first.startswith("# schema-version: 1\n")
    # whenever the optimum cell is populated, the guarantee inequality holds
    rows = [l.split(",") for l in first.splitlines() if l and l[0].isdigit()]
    checked = 0
    for row in rows:
        if row[3]:
            assert float(row[2]) >= float(row[6]) * float(row[3]) - 1e-9
            checked += 1
    assert checked


def test_grid_points_env_override(monkeypatch):
    from episelect.cli import build_parser

    monkeypatch.setenv("EPISELECT_GRID_POINTS", "11")
    args = build_parser().parse_args(["sweep", "--out", "x.csv"])
    assert args.grid_points == 11


def test_sweep_cli_writes_csv_and_figures(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = run_cli(
        "sweep", "--template", "paper_small", "--seed", 0, "--replications", 1,
        "--objective", "a", "--grid-points", "5", "--budgets", "2:8:3",
        "--out", out,
    )
    assert code == 0
    assert out.exists()
    assert (tmp_path / "sweep_values.png").exists()
    assert (tmp_path / "sweep_gamma1.png").exists()
    assert (tmp_path / "sweep_guarantee.png").exists()
    text = out.read_text()
    assert "# rng: numpy-philox-4x64 seed=0" in text
    mean_rows = [l for l in text.splitlines() if l.startswith("mean,")]
    assert len(mean_rows) == 3


def test_sweep_cli_no_plot(tmp_path):
    out = tmp_path / "sweep.csv"
    code = run_cli(
        "sweep", "--seed", 0, "--replications", 1, "--objective", "d",
        "--grid-points", "5", "--budgets", "3:3:1", "--out", out, "--no-plot",
    )
    assert code == 0
    assert not (tmp_path / "sweep_values.png").exists()


def test_sweep_mean_rows_respect_logdet_guarantee():
    spec = ExperimentSpec(
        objective="d", replications=2, seed=4, grid_points=7, budgets=(3.0, 9.0, 15.0)
    )
    text = run_sweep(spec)
    mean_rows = [l.split(",") for l in text.splitlines() if l.startswith("mean,")]
    assert len(mean_rows) == 3
    for row in mean_rows:
        greedy_value, opt_value = float(row[2]), float(row[3])
        assert greedy_value >= 0.31 * opt_value


def test_sweep_paper_large_reports_bound_without_oracle():
    spec = ExperimentSpec(
        template="paper_large", objective="a", replications=1, seed=2,
        grid_points=5, budgets=(4.0, 8.0),
    )
    text = run_sweep(spec)
    rows = [l.split(",") for l in text.splitlines() if l and l[0].isdigit()]
    assert rows, text
    for row in rows:
        assert row[3] == ""          # optimum beyond the enumeration guard
        assert 0 < float(row[4]) <= 1  # ratio bound still populated


def test_sweep_pims_mode(tmp_path):
    spec = ExperimentSpec(mode="pims", replications=3, seed=5, grid_points=5)
    text = run_sweep(spec)
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "replication,cost,pair_oracle_cost,bound_numerator,rank,max_theta_err"
    assert len(lines) == 4
    for line in lines[1:]:
        parts = line.split(",")
        assert float(parts[1]) == float(parts[2])  # algorithm matches pair oracle
        assert float(parts[1]) <= float(parts[3]) + 1e-9
        assert int(float(parts[4])) == 2
        assert float(parts[5]) < 1e-8
