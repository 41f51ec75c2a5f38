"""Acceptance criteria 1-8 at their stated tolerances.

Each test records a one-line PASS/FAIL summary that is printed at the end of
the session, then asserts the criterion.
"""
import time

import numpy as np

from nsdp.config import ExperimentConfig
from nsdp.control import l2_norm_sq
from nsdp.experiments import run_control, run_offline, simulate_one, timing_harness
from nsdp.grid import GridSpec, build_operators, divergence_tr, lid_driven_bc
from nsdp.ns_full import ForcingSpec, FullModel, FullState, advection_tr, integrate
from nsdp.ns_reduced import ReducedModel, lift_state, project_state, reduced_integrate
from nsdp.oracles import VectorModel
from nsdp.pod_deim import (ReducedBasis, SnapshotSet, assemble_reduced, build_reduced_basis,
                           sampled_advection_U, sampled_advection_V)
from nsdp.sylvester import SylvesterFactorization, kron_solve
from nsdp.tsa import ControlGrid, backward_dp, build_tree, enumerate_costs, full_tree_count, path_cost, synthesize_control

from conftest import general_bc


def test_criterion_1_sylvester(report_line):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_res = worst_dev = 0.0
    for _ in range(100):
        m, k = rng.integers(1, 11, size=2)
        A = rng.standard_normal((m, m)) + 3 * m * np.eye(m)
        B = rng.standard_normal((k, k)) + 3 * k * np.eye(k)
        C = rng.standard_normal((m, k))
        X = SylvesterFactorization(A, B).solve(C)
        worst_res = max(worst_res, np.linalg.norm(A @ X + X @ B - C) / (1 + np.linalg.norm(C)))
        worst_dev = max(worst_dev, np.abs(X - kron_solve(A, B, C)).max())
    elapsed = time.perf_counter() - t0
    ok = worst_res <= 1e-10 and worst_dev <= 1e-10 and elapsed < 1.0
    report_line("criterion 1 sylvester", ok,
                f"rel residual {worst_res:.2e}, kron deviation {worst_dev:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_full_model(report_line):
    t0 = time.perf_counter()
    g = GridSpec(6, 6)
    ops = build_operators(g)
    bc = lid_driven_bc()
    rng = np.random.default_rng(7)
    model, oracle = FullModel(ops, 0.05, bc), VectorModel(g, 0.05, bc)
    s = FullState(0.3 * rng.standard_normal(g.shape_u), 0.3 * rng.standard_normal(g.shape_v), np.zeros(g.shape_p))
    U, V = s.U, s.V
    dev = 0.0
    for j in range(5):
        s = model.step(s)
        U, V, P = oracle.step(U, V, t=j * 0.05, gamma=model.last_gamma)
        dev = max(dev, np.abs(s.U - U).max(), np.abs(s.V - V).max(), np.abs(s.P - P).max())

    g = GridSpec(64, 64)
    ops = build_operators(g)
    model = FullModel(ops, 0.05, bc)
    tr = bc.traces(g)
    s = FullState.zeros(g)
    max_div = 0.0
    for _ in range(400):
        s = model.step(s)
        max_div = max(max_div, np.abs(divergence_tr(s.U, s.V, ops, tr)).max())
    elapsed = time.perf_counter() - t0
    ok = dev <= 1e-9 and max_div <= 1e-8 and elapsed < 60
    report_line("criterion 2 full model", ok,
                f"oracle deviation {dev:.2e}, max divergence {max_div:.2e} over 400 steps, {elapsed:.1f}s")
    assert ok


def test_criterion_3_rom_fidelity_and_timing(report_line):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(test=1, n=128, tol=1e-3, T=20.0, dt=0.05).resolved()
    _, summary = simulate_one(cfg, 128)
    err = max(summary["max_diff_U"], summary["max_diff_V"])
    rows = timing_harness([64, 128, 256], steps=20, repeats=7)
    red = [r["reduced"] for r in rows]
    full = [r["full"] for r in rows]
    ratio = max(red) / min(red)
    elapsed = time.perf_counter() - t0
    fidelity = summary["max_diff_U"] <= 5e-3
    timing = ratio <= 1.5 and full[0] < full[1] < full[2]
    ok = fidelity and timing and elapsed < 300
    report_line("criterion 3 rom fidelity/timing", ok,
                f"max|U-U_rom|={summary['max_diff_U']:.2e} (V {summary['max_diff_V']:.2e}, bound 5e-3); "
                f"reduced s/step ratio {ratio:.2f}; full s/step {', '.join(f'{x:.2e}' for x in full)}; {elapsed:.0f}s")
    assert fidelity, f"ROM error {err:.3e} exceeds 5e-3"
    assert timing and elapsed < 300


def _scalar_toy(X, a, t):
    return 0.9 * X + 0.5 * a + 0.1 * np.sin(3 * X) * (1 + t)


def test_criterion_4_dp_exactness(report_line):
    L = lambda X, a, t: (X[:, 0] - 0.2) ** 2 + 0.1 * a**2
    g = lambda X: X[:, 0] ** 2
    ctrl = ControlGrid((-1.0, 1.0))
    tree = build_tree(_scalar_toy, [0.5], ctrl, 0.1, 5)
    vt = backward_dp(tree, L, g)
    costs = enumerate_costs(_scalar_toy, [0.5], ctrl, 0.1, 5, L, g)
    _, jseq, _ = synthesize_control(tree, vt)
    gap = abs(path_cost(tree, jseq, L, g) - vt.root)
    ok = len(costs) == 32 and vt.root == min(costs.values()) and gap <= 1e-12
    report_line("criterion 4 dp exactness", ok,
                f"V(root)={vt.root!r}, enumeration min={float(min(costs.values()))!r}, path gap {gap:.1e}")
    assert ok


def test_criterion_5_tree_cardinality_and_pruning(report_line):
    counts = {}
    for M in (2, 3, 5):
        tree = build_tree(_scalar_toy, [0.5], ControlGrid.uniform(0.0, 1.0, M), 0.1, 10)
        counts[M] = (tree.n_nodes, full_tree_count(M, 10))
    expected = {2: 2047, 3: 88573, 5: 12207031}
    counts_ok = all(counts[M] == (expected[M], expected[M]) for M in expected)

    # pruning in the boundary-control setting that the reported node counts refer to
    cfg = ExperimentConfig(test=4).resolved()
    problem, basis, rops, _ = run_offline(cfg)
    res = [run_control(problem, basis, rops, ControlGrid.uniform(0.0, 1.0, M).values) for M in (2, 3, 5)]
    below = all(r["nodes"] < r["full_nodes"] for r in res)
    ratios = [r["ratio_p"] for r in res]
    increasing = ratios[0] < ratios[1] < ratios[2]
    ok = counts_ok and below and increasing
    report_line("criterion 5 tree cardinality/pruning", ok,
                f"unpruned {[counts[M][0] for M in (2, 3, 5)]}; pruned nodes {[r['nodes'] for r in res]} "
                f"(eps_T={cfg.eps_T:.2g}); Ratio_p {', '.join(f'{x:.3g}' for x in ratios)}")
    assert ok


def test_criterion_6_subdomain_control(report_line):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(test=3).resolved()
    problem, basis, rops, _ = run_offline(cfg)
    r2 = run_control(problem, basis, rops, [0.0, 1.0])
    r3 = run_control(problem, basis, rops, [0.0, 0.5, 1.0])
    elapsed = time.perf_counter() - t0
    unc = r2["J_uncontrolled"]
    ok = (r2["J_controlled"] <= unc / 2 and r3["J_controlled"] <= unc / 2
          and r3["J_controlled"] <= r2["J_controlled"] and elapsed < 600)
    report_line("criterion 6 subdomain control", ok,
                f"J_unc={unc:.3e}, J(M=2)={r2['J_controlled']:.3e}, J(M=3)={r3['J_controlled']:.3e}, {elapsed:.0f}s")
    assert ok


def test_criterion_7_boundary_control(report_line):
    cfg = ExperimentConfig(test=4).resolved()
    problem, basis, rops, _ = run_offline(cfg)
    res = [run_control(problem, basis, rops, ControlGrid.uniform(0.0, 1.0, M).values) for M in (2, 3, 5)]
    J = [r["J_controlled"] for r in res]
    monotone = J[0] >= J[1] >= J[2] and J[2] < J[0]
    ref = problem.reference["signal"]
    lo, hi = float(np.min(ref)), float(np.max(ref))
    means = [float(np.mean(r["control_signal"])) for r in res]
    hull = all(lo <= m <= hi for m in means)
    ok = monotone and hull
    report_line("criterion 7 boundary control", ok,
                f"pressure mismatch M=2,3,5: {', '.join(f'{x:.3e}' for x in J)} (uncontrolled {res[0]['J_uncontrolled']:.3e}); "
                f"control means {', '.join(f'{m:.3f}' for m in means)} in [{lo:.3f}, {hi:.3f}]")
    assert ok


def test_criterion_8_property_suites(report_line):
    # basis orthonormality on the cavity snapshots
    g = GridSpec(32, 32)
    ops = build_operators(g)
    bc = lid_driven_bc()
    traj = integrate(FullState.zeros(g), FullModel(ops, 0.05, bc), 100, record=True)
    snaps = SnapshotSet()
    snaps.extend(traj.snapshots)
    basis = build_reduced_basis(snaps, 1e-4)
    ortho = max(np.abs(B.T @ B - np.eye(B.shape[1])).max() for B in basis.bases().values())

    # DEIM samples against lift-then-sample
    rops = assemble_reduced(ops, basis, bc, gamma_up=0.7)
    deim = 0.0
    for s in traj.states[10::30]:
        Uh, Vh = basis.U_l.T @ s.U @ basis.U_r, basis.V_l.T @ s.V @ basis.V_r
        FU, FV = advection_tr(basis.U_l @ Uh @ basis.U_r.T, basis.V_l @ Vh @ basis.V_r.T, g, bc.traces(g), 0.7)
        deim = max(deim,
                   np.abs(sampled_advection_U(Uh, Vh, rops) - FU[np.ix_(basis.idx_U_l, basis.idx_U_r)]).max(),
                   np.abs(sampled_advection_V(Uh, Vh, rops) - FV[np.ix_(basis.idx_V_l, basis.idx_V_r)]).max())

    # full-rank reduced model against the full model
    g16 = GridSpec(16, 16)
    ops16 = build_operators(g16)
    bc16 = general_bc()
    rng = np.random.default_rng(3)
    forcing = ForcingSpec(shapes=[(rng.standard_normal(g16.shape_u), rng.standard_normal(g16.shape_v))], gamma_up=0.5)
    s0 = FullState(0.2 * rng.standard_normal(g16.shape_u), 0.2 * rng.standard_normal(g16.shape_v), np.zeros(g16.shape_p))
    signal = [0.5 * np.sin(j) for j in range(10)]
    full = integrate(s0, FullModel(ops16, 0.05, bc16, forcing), 10, signal)
    ident = ReducedBasis.identity(ops16)
    rm = ReducedModel(assemble_reduced(ops16, ident, bc16, forcing, gamma_up=0.5), 0.05)
    red = reduced_integrate(project_state(s0, ident), rm, 10, signal)
    rom = max(max(np.abs(lift_state(r, ident).U - f.U).max(), np.abs(lift_state(r, ident).V - f.V).max())
              for r, f in zip(red[1:], full.states[1:]))

    # discrete L2 quadrature of sin^2 sin^2
    g64 = GridSpec(64, 64)
    Xu, Yu = g64.mesh_u()
    quad = abs(l2_norm_sq(np.sin(np.pi * Xu) * np.sin(np.pi * Yu), np.zeros(g64.shape_v), g64) - 0.25)

    ok = ortho <= 1e-12 and deim <= 1e-9 and rom <= 1e-8 and quad <= 1e-3
    report_line("criterion 8 property suites", ok,
                f"orthonormality {ortho:.1e}, DEIM oracle {deim:.1e}, full-rank ROM {rom:.1e}, quadrature {quad:.1e}")
    assert ok
