"""Acceptance criteria, one test per criterion.

Each test records its verdict through ``record_criterion`` before asserting, so
the terminal summary prints one PASS/FAIL line per criterion even when a test
fails. Run with ``pytest tests/test_acceptance.py -v``.
"""
import subprocess
import sys
import time

import numpy as np
import pytest

from backup_shield.backup import NumericRK4, flow, flow_arrays, pendulum_backup_pair, pendulum_flow_closed_form
from backup_shield.dynamics import fd_jacobian, pendulum_plant
from backup_shield.filters import DecisionStatus, assemble, assemble_decoupled, decide
from backup_shield.params import PendulumParams, build_backup_filter
from backup_shield.qp import QpProblem, Status, brute_force_oracle, solve
from backup_shield.sets import SUBSETS, GridSpec, compute_grids, membership_margin, verify_nesting
from backup_shield.sim import SimConfig, run

from conftest import record_criterion

PARAMS = PendulumParams()
PLANT = pendulum_plant()
K = PARAMS.K


def check(number, name, passed, detail):
    record_criterion(number, name, bool(passed), detail)
    assert passed, detail


@pytest.fixture(scope="module")
def grid301():
    t0 = time.perf_counter()
    grids = compute_grids(PARAMS, GridSpec())
    return grids, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sim_logs():
    out = {}
    for choice in ("backup", "hocbf"):
        t0 = time.perf_counter()
        out[choice] = (run(SimConfig(dt=0.01, t_end=20.0, filter_choice=choice)), time.perf_counter() - t0)
    return out


def test_c01_analytic_flow_oracle():
    rng = np.random.default_rng(1)
    xs = np.column_stack([rng.uniform(-2, 2, 50), rng.uniform(-1.5, 1.5, 50)])
    thetas = np.linspace(0.0, 8.0, 161)
    t0 = time.perf_counter()
    phi, _ = flow_arrays(pendulum_backup_pair(K, flow_mode=NumericRK4(1e-3)), PLANT, xs, thetas)
    ref = np.array([[pendulum_flow_closed_form(K, x, th).phi for th in thetas] for x in xs])
    elapsed = time.perf_counter() - t0
    err = float(np.max(np.abs(phi - ref)))
    check(1, "analytic flow vs RK4", err < 1e-6 and elapsed < 5.0,
          f"max state error {err:.2e} (< 1e-6), {elapsed:.2f} s (< 5 s)")


def test_c02_sensitivity_vs_finite_differences():
    rng = np.random.default_rng(2)
    pair = pendulum_backup_pair(K)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        x = np.array([rng.uniform(-2, 2), rng.uniform(-1.5, 1.5)])
        theta = float(rng.uniform(0.0, 8.0))
        (s,) = flow(pair, PLANT, x, [theta])
        fd = fd_jacobian(lambda z: flow(pair, PLANT, z, [theta])[0].phi, x)
        worst = max(worst, float(np.linalg.norm(s.Q - fd) / np.linalg.norm(fd)))
    elapsed = time.perf_counter() - t0
    check(2, "sensitivity vs central differences", worst < 1e-4 and elapsed < 5.0,
          f"max relative error {worst:.2e} (< 1e-4), {elapsed:.2f} s (< 5 s)")


def test_c03_equilibrium_limit():
    rng = np.random.default_rng(3)
    pair = pendulum_backup_pair(K)
    worst = 0.0
    for _ in range(20):
        x = np.array([rng.uniform(-2, 2), rng.uniform(-1.5, 1.5)])
        (s,) = flow(pair, PLANT, x, [40.0])
        worst = max(worst, float(np.max(np.abs(s.phi - [x[0] + x[1] / K, 0.0]))))
    check(3, "flow limit at theta=40", worst <= 1e-6, f"max deviation {worst:.2e} (<= 1e-6)")


def _feasible_problem(rng, m):
    k = int(rng.integers(1, 9))
    G = rng.normal(size=(k, m))
    anchor = rng.uniform(-1.0, 1.0, m)
    w = G @ anchor + rng.uniform(0.05, 1.0, k)
    return QpProblem(rng.uniform(-1.5, 1.5, m), G, w)


def _infeasible_problem(rng, m):
    # two opposing halfspaces with a gap, plus random extra rows
    g = rng.normal(size=m)
    g /= np.linalg.norm(g)
    c = rng.uniform(-1.0, 1.0)
    gap = rng.uniform(0.1, 1.0)
    extra = rng.normal(size=(int(rng.integers(0, 4)), m))
    G = np.vstack([g, -g, extra])
    w = np.concatenate([[c], [-(c + gap)], extra @ rng.uniform(-1, 1, m) + 0.5])
    return QpProblem(rng.uniform(-1.5, 1.5, m), G, w)


def test_c04_qp_oracle_equivalence():
    rng = np.random.default_rng(4)
    box, n_grid = (-3.0, 3.0), 201
    slack = 2 * (box[1] - box[0]) / n_grid
    t0 = time.perf_counter()
    worst, bad = 0.0, []
    for i in range(200):
        p = _feasible_problem(rng, 1 + i % 2)
        sol = solve(p)
        ref = brute_force_oracle(p, box, n_grid)
        if sol.status is not Status.OPTIMAL or ref is None:
            bad.append(i)
            continue
        # compare in distance-to-u_d, the square root of the objective
        d_sol = float(np.linalg.norm(sol.u_star - p.u_d))
        d_ref = float(np.linalg.norm(ref - p.u_d))
        gap = d_ref - d_sol
        worst = max(worst, abs(gap))
        if gap < -1e-9 or gap > slack:
            bad.append(i)
    disagree = 0
    for i in range(50):
        p = _infeasible_problem(rng, 1 + i % 2)
        if solve(p).status is not Status.INFEASIBLE or brute_force_oracle(p, box, n_grid) is not None:
            disagree += 1
    elapsed = time.perf_counter() - t0
    check(4, "QP vs brute-force oracle", not bad and disagree == 0 and elapsed < 30.0,
          f"{200 - len(bad)}/200 feasible within slack {slack:.3f} (worst {worst:.2e}), "
          f"{50 - disagree}/50 infeasible verdicts agree, {elapsed:.1f} s (< 30 s)")


def test_c05_set_geometry(grid301):
    grids, elapsed = grid301
    report = verify_nesting(grids)
    c = report.counts
    chain = [c["Cp"], c["SIphi"], c["SIphiu"], c["SIp"], c["Sb"]]
    strict = c["SIphi"] > c["SIphiu"] > c["SIp"] > c["Sb"]
    per_rel = ", ".join(f"{k}: {len(v)}" for k, v in report.violations.items())
    check(5, "set nesting on 301x301 grid", report.ok and strict and elapsed < 60.0,
          f"violations [{per_rel}], counts Cp/SIphi/SIphiu/SIp/Sb = {chain}, {elapsed:.1f} s (< 60 s)")


@pytest.mark.slow
def test_c06_recursive_feasibility(grid301):
    grids, _ = grid301
    filt = build_backup_filter(PARAMS)
    states = GridSpec().states()[grids["SIp"].margin >= 1e-3]
    infeasible, kb_bad, worst = 0, 0, 0.0
    for x in states:
        d = decide(filt, x)
        if d.status is not DecisionStatus.OPTIMAL:
            infeasible += 1
        p = assemble(filt, x)
        v = float(np.max(p.G @ np.atleast_1d(filt.pair.k_b(x)) - p.w))
        worst = max(worst, v)
        kb_bad += v > 1e-8
    n = len(states)
    check(6, "feasibility inside SIp", infeasible == 0 and kb_bad == 0,
          f"optimal at {n - infeasible}/{n} nodes, k_b satisfies all rows at {n - kb_bad}/{n} "
          f"(worst row violation {worst:.2e}, tolerance 1e-8)")


def test_c07_backup_filter_safety(sim_logs):
    logs, elapsed = sim_logs["backup"]
    worst = max(lg.max_violation for lg in logs)
    failures = [lg.failure for lg in logs if lg.failure]
    check(7, "backup filter keeps all constraints", worst <= 1e-6 and not failures and elapsed < 30.0,
          f"max violation {worst:.2e} (<= 1e-6) over {len(logs)} runs, {elapsed:.1f} s (< 30 s)")


def test_c08_baseline_contrast(sim_logs):
    logs, _ = sim_logs["hocbf"]
    details, ok = [], True
    for lg in logs:
        input_power = float(np.max(-lg.H[:, 2:6]))
        n_infeasible = lg.infeasible_steps
        ok &= input_power > 1e-3 and n_infeasible >= 1
        details.append(f"x0={lg.initial_state}: input/power violation {input_power:.3f}, "
                       f"{n_infeasible} infeasible steps")
    check(8, "HOCBF baseline violates and goes infeasible", ok, "; ".join(details))


def test_c09_decoupled_equivalence():
    filt = build_backup_filter(PARAMS, constraint_subset=[0, 1, 2, 3])
    subset = [filt.projections[j] for j in SUBSETS["SIphiu"]]
    rng = np.random.default_rng(9)
    states = []
    while len(states) < 50:
        x = np.array([rng.uniform(-2.2, 2.2), rng.uniform(-1.5, 1.5)])
        if membership_margin(x, subset, filt.pair, filt.plant, PARAMS.T, PARAMS.N_c) >= 0:
            states.append(x)
    worst, mismatch = 0.0, 0
    for x in states:
        a, b = solve(assemble(filt, x)), solve(assemble_decoupled(filt, x))
        if a.status is not b.status:
            mismatch += 1
            continue
        if a.status is Status.OPTIMAL:
            diff = float(np.max(np.abs(a.u_star - b.u_star)))
            worst = max(worst, diff)
            mismatch += diff > 1e-8
    check(9, "decoupled program matches full program", mismatch == 0,
          f"{50 - mismatch}/50 states agree within 1e-8 (worst |du| {worst:.2e})")


@pytest.mark.slow
def test_c10_determinism(tmp_path):
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "backup_shield.cli", "simulate", "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = [n for n in names if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    check(10, "byte-identical simulate output", names and len(same) == len(names),
          f"{len(same)}/{len(names)} CSV files identical")
