"""Problem setups and pipelines behind the command-line interface.

Test 1: lid-driven cavity, full versus reduced integration and timings.
Test 2: distributed control towards the long-time (stationary) state.
Test 3: subdomain control driving the flow to rest.
Test 4: Dirichlet boundary control tracking a reference final pressure.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .control import (CostSpec, DirichletBoundary, Distributed, Subdomain, ReducedTreeProblem,
                      actuated_model, check_compatibility, cost_trace, l2_norm_sq,
                      make_target_stationary, write_cost_csv)
from .grid import BoundaryConditions, GridSpec, build_operators, homogeneous_bc, lid_driven_bc
from .ns_full import ForcingSpec, FullModel, FullState, integrate
from .ns_reduced import ReducedModel, lift_state, project_state, reduced_integrate
from .oracles import VectorModel
from .pod_deim import (ReducedBasis, SnapshotSet, assemble_reduced, build_reduced_basis,
                       qdeim_indices)
from .storage import (ArtifactError, load_reduced, read_rows_csv, save_reduced, write_field,
                      write_rows_csv)
from .tsa import (ControlGrid, backward_dp, build_tree, full_tree_count, pruning_ratio,
                  synthesize_control, write_tree_csv)

log = logging.getLogger(__name__)

OFFLINE_DIR = "offline"


def sine_initial_state(grid: GridSpec) -> FullState:
    """``u0 = v0 = sin(pi x) sin(pi y)`` sampled at the staggered unknowns."""
    Xu, Yu = grid.mesh_u()
    Xv, Yv = grid.mesh_v()
    return FullState(np.sin(np.pi * Xu) * np.sin(np.pi * Yu),
                     np.sin(np.pi * Xv) * np.sin(np.pi * Yv), np.zeros(grid.shape_p))


def parabola(s):
    return s * (1.0 - s)


@dataclass
class Problem:
    cfg: ExperimentConfig
    grid: GridSpec
    ops: object
    bc: BoundaryConditions
    init: FullState
    actuation: object = None
    cost: Optional[CostSpec] = None
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    reference: dict = field(default_factory=dict)

    def full_model(self, dt: Optional[float] = None):
        model, bc, forcing = actuated_model(self.ops, dt or self.cfg.dt, self.actuation, self.bc, self.forcing)
        return model, bc, forcing


def setup(cfg: ExperimentConfig, grid: Optional[GridSpec] = None) -> Problem:
    cfg = cfg.resolved()
    g = grid or GridSpec(cfg.n, cfg.n, r=cfg.r)
    ops = build_operators(g)
    if cfg.test == 1:
        return Problem(cfg, g, ops, lid_driven_bc(), FullState.zeros(g))
    if cfg.test == 2:
        # the target is always the long-time cavity state; the controlled
        # dynamics run either with the same lid or with walls at rest
        target, change = make_target_stationary(ops, lid_driven_bc(), cfg.dt, cfg.T_target)
        bc = lid_driven_bc() if cfg.test2_bc == "lid" else homogeneous_bc()
        nrm = np.sqrt(l2_norm_sq(target.U, target.V, g))
        if nrm == 0:
            raise ValueError("stationary target is zero; the shape function is undefined")
        act = Distributed([(target.U / nrm, target.V / nrm)])
        cost = CostSpec(target=target, gamma_pen=cfg.gamma_pen, lam=cfg.lam)
        return Problem(cfg, g, ops, bc, FullState.zeros(g), act, cost,
                       reference={"target_change": change})
    if cfg.test == 3:
        act = Subdomain(((0.3, 0.7), (0.3, 0.7)), direction=(-1.0, -1.0))
        cost = CostSpec(target=None, running=False, gamma_pen=cfg.gamma_pen, lam=cfg.lam)
        return Problem(cfg, g, ops, homogeneous_bc(), sine_initial_state(g), act, cost)
    # test 4
    ref_bc = BoundaryConditions(u_N=lambda s, t, a: parabola(s) * np.sin(t))
    init = sine_initial_state(g)
    ref = integrate(init, FullModel(ops, cfg.dt, ref_bc), cfg.n_t)
    act = DirichletBoundary(lambda s, t, a: parabola(s) * a, wall="N", component="u")
    cost = CostSpec(target=ref.states, kind="pressure", running=False, dt=cfg.dt, lam=cfg.lam)
    signal = np.sin(cfg.dt * np.arange(cfg.n_t))
    return Problem(cfg, g, ops, homogeneous_bc(), init, act, cost,
                   reference={"states": ref.states, "signal": signal})


# --------------------------------------------------------------------------
# offline phase

def offline_snapshots(problem: Problem):
    """Snapshots from a coarse full-order control tree (or one run for Test 1)."""
    cfg = problem.cfg
    model, bc, _ = problem.full_model()
    snaps = SnapshotSet()
    gammas = []
    if cfg.test == 1:
        traj = integrate(problem.init, model, cfg.n_t, 0.0, record=True)
        snaps.extend(traj.snapshots)
        return snaps, max(traj.gammas), {"edges": 1, "steps": cfg.n_t}
    lo, hi = min(cfg.controls), max(cfg.controls)
    ctrl = ControlGrid.uniform(lo, hi, cfg.offline_M)
    sub = int(round(cfg.offline_dt / cfg.dt))
    levels = max(1, int(round(cfg.T / cfg.offline_dt)))
    snaps.extend({"U": [problem.init.U], "V": [problem.init.V], "P": [problem.init.P]})
    frontier = [problem.init]
    edges = 0
    for _ in range(levels):
        nxt = []
        for node in frontier:
            for j in range(ctrl.M):
                traj = integrate(node, model, sub, ctrl[j], record=True)
                rec = dict(traj.snapshots)
                for k in ("U", "V", "P"):
                    rec[k] = rec[k][1:]  # the edge start is already stored
                snaps.extend(rec)
                gammas.extend(traj.gammas)
                nxt.append(traj.final)
                edges += 1
        frontier = nxt
    return snaps, max(gammas), {"edges": edges, "steps": edges * sub, "levels": levels,
                                "offline_controls": list(ctrl.values)}


def run_offline(cfg: ExperimentConfig, out: Optional[Path] = None):
    cfg = cfg.resolved()
    problem = setup(cfg)
    _, bc, forcing = problem.full_model()
    if cfg.test in (1, 4):
        check_compatibility(bc, problem.grid, controls=cfg.controls or (0.0,))
    t0 = time.perf_counter()
    snaps, gamma_up, info = offline_snapshots(problem)
    t1 = time.perf_counter()
    basis = build_reduced_basis(snaps, cfg.tol, deim_tol=cfg.deim_tol, pressure_tol=cfg.pressure_tol)
    rops = assemble_reduced(problem.ops, basis, bc, forcing, gamma_up=gamma_up)
    t2 = time.perf_counter()
    info.update({"n_snapshots": snaps.n_s, "snapshot_seconds": t1 - t0, "reduction_seconds": t2 - t1,
                 "test": cfg.test, "dt": cfg.dt, "T": cfg.T})
    if out is not None:
        save_reduced(Path(out) / OFFLINE_DIR, basis, rops, extra={"config": cfg.to_dict(), "offline": _jsonable(info)})
    return problem, basis, rops, info


def _jsonable(d):
    return json.loads(json.dumps(d, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


# --------------------------------------------------------------------------
# online control phase

def run_control(problem: Problem, basis: ReducedBasis, rops, controls, out: Optional[Path] = None):
    """Tree DP on the reduced model, then replay of the synthesized control on the full model."""
    cfg = problem.cfg
    grid = ControlGrid(tuple(controls))
    t0 = time.perf_counter()
    rm = ReducedModel(rops, cfg.dt)
    prob = ReducedTreeProblem(rm, basis, problem.cost)
    tree = build_tree(prob.dyn, prob.root(problem.init), grid, cfg.dt, cfg.n_t, cfg.eps_T,
                      prune_dims=prob.prune_dims, max_nodes=cfg.max_nodes)
    t1 = time.perf_counter()
    vt = backward_dp(tree, prob.running if problem.cost.running else None, prob.terminal, cfg.lam)
    seq, jseq, path = synthesize_control(tree, vt)
    t2 = time.perf_counter()

    model, _, _ = problem.full_model()
    ctrl_traj = integrate(problem.init, model, cfg.n_t, list(seq))
    unc_traj = integrate(problem.init, model, cfg.n_t, 0.0)
    rows_c = cost_trace(ctrl_traj.states, list(seq), problem.cost, problem.grid, cfg.dt)
    rows_u = cost_trace(unc_traj.states, [0.0] * cfg.n_t, problem.cost, problem.grid, cfg.dt)
    M = grid.M
    res = {
        "M": M,
        "controls": list(grid.values),
        "J_controlled": float(rows_c[-1][2]),
        "J_uncontrolled": float(rows_u[-1][2]),
        "V_root": float(vt.root),
        "nodes": tree.n_nodes,
        "full_nodes": full_tree_count(M, cfg.n_t),
        "ratio_p": pruning_ratio(tree),
        "eps_T": cfg.eps_T,
        "control_signal": [float(a) for a in seq],
        "tree_seconds": t1 - t0,
        "dp_seconds": t2 - t1,
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        times = [cfg.dt * j for j in range(cfg.n_t)]
        write_rows_csv(out / f"control_M{M}.csv", ["t", "alpha", "control_index"],
                       [(repr(t), repr(float(a)), j) for t, a, j in zip(times, seq, jseq)])
        write_cost_csv(out / f"cost_trace_M{M}.csv", rows_c)
        write_cost_csv(out / "cost_trace_uncontrolled.csv", rows_u)
        write_tree_csv(out / f"tree_M{M}.csv", tree, vt)
        fin = ctrl_traj.final
        for name, X in (("U", fin.U), ("V", fin.V), ("P", fin.P)):
            write_field(out / f"controlled_{name}_M{M}.bin", X)
    return res


CONTROL_COLUMNS = ["M", "J_controlled", "J_uncontrolled", "V_root", "nodes", "full_nodes", "ratio_p",
                   "eps_T", "mean_control"]


def control_sets(cfg: ExperimentConfig):
    if cfg.m_sweep:
        lo, hi = min(cfg.controls), max(cfg.controls)
        return [list(ControlGrid.uniform(lo, hi, int(m)).values) for m in cfg.m_sweep]
    return [list(cfg.controls)]


def cmd_control(cfg: ExperimentConfig, out: Path, from_artifacts: bool = True):
    cfg = cfg.resolved()
    if cfg.test == 1:
        raise ValueError("test 1 has no control problem; use simulate")
    problem = setup(cfg)
    if from_artifacts:
        basis, rops, man = load_reduced(Path(out) / OFFLINE_DIR)
        saved = man.get("extra", {}).get("config", {})
        for key in ("test", "n", "dt", "r", "T", "test2_bc"):
            if key in saved and saved[key] != getattr(cfg, key):
                raise ArtifactError(f"offline artifacts were built with {key}={saved[key]}, "
                                    f"config has {getattr(cfg, key)}")
    else:
        _, basis, rops, _ = run_offline(cfg)
    results = [run_control(problem, basis, rops, c, out) for c in control_sets(cfg)]
    rows = [[r["M"], r["J_controlled"], r["J_uncontrolled"], r["V_root"], r["nodes"], r["full_nodes"],
             r["ratio_p"], r["eps_T"], float(np.mean(r["control_signal"]))] for r in results]
    write_rows_csv(Path(out) / "control_summary.csv", CONTROL_COLUMNS, [[repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row] for row in rows])
    return results


# --------------------------------------------------------------------------
# simulation and timings

def _elapsed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def simulate_one(cfg: ExperimentConfig, n: int, out: Optional[Path] = None):
    """Full matrix, optional vector oracle and reduced run of the uncontrolled problem."""
    c = cfg.override(n=n)
    problem = setup(c)
    model, bc, forcing = problem.full_model()
    n_t = c.n_t
    rows = []
    t0 = time.perf_counter()
    traj = integrate(problem.init, model, n_t, 0.0, record=True)
    t_full = time.perf_counter() - t0
    rows.append(("matrix", n, n_t, t_full, t_full / n_t, ""))
    summary = {"n": n, "steps": n_t}
    if n <= c.vector_max_n and not forcing.shapes:
        vm = VectorModel(problem.grid, c.dt, bc)
        U, V = problem.init.U, problem.init.V
        t0 = time.perf_counter()
        for j in range(n_t):
            U, V, _ = vm.step(U, V, j * c.dt, 0.0, gamma=traj.gammas[j])
        t_vec = time.perf_counter() - t0
        rows.append(("vector-oracle", n, n_t, t_vec, t_vec / n_t, ""))
        summary["vector_vs_matrix_max"] = float(max(abs(U - traj.final.U).max(), abs(V - traj.final.V).max()))
    snaps = SnapshotSet()
    snaps.extend(traj.snapshots)
    basis = build_reduced_basis(snaps, c.tol, deim_tol=c.deim_tol, pressure_tol=c.pressure_tol)
    rops = assemble_reduced(problem.ops, basis, bc, forcing, gamma_up=max(traj.gammas))
    rm = ReducedModel(rops, c.dt)
    r0 = project_state(problem.init, basis)
    t0 = time.perf_counter()
    rstates = reduced_integrate(r0, rm, n_t)
    t_red = time.perf_counter() - t0
    ranks = basis.ranks()
    rows.append(("reduced", n, n_t, t_red, t_red / n_t, json.dumps(ranks, sort_keys=True)))
    lifted = lift_state(rstates[-1], basis)
    dU, dV = traj.final.U - lifted.U, traj.final.V - lifted.V
    summary.update({"max_diff_U": float(abs(dU).max()), "max_diff_V": float(abs(dV).max()),
                    "max_div": float(max(abs(s) for s in _divs(traj.states, problem)))})
    if out is not None:
        out = Path(out)
        write_field(out / f"diff_U_n{n}.bin", dU)
        write_field(out / f"diff_V_n{n}.bin", dV)
        write_field(out / f"full_U_n{n}.bin", traj.final.U)
        write_field(out / f"reduced_U_n{n}.bin", lifted.U)
    return rows, summary


def _divs(states, problem: Problem):
    from .grid import divergence
    return [np.abs(divergence(s.U, s.V, problem.ops, problem.bc, s.t)).max() for s in states[1:]]


TIMING_COLUMNS = ["model", "n", "steps", "seconds", "seconds_per_step", "ranks"]


def cmd_simulate(cfg: ExperimentConfig, out: Path):
    cfg = cfg.resolved()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = list(cfg.sizes) if cfg.sizes else [cfg.n]
    rows, summaries = [], []
    for n in sizes:
        r, s = simulate_one(cfg, int(n), out)
        rows += r
        summaries.append(s)
    write_rows_csv(out / "timing.csv", TIMING_COLUMNS,
                   [(m, n, k, repr(t), repr(tp), rk) for m, n, k, t, tp, rk in rows])
    keys = sorted({k for s in summaries for k in s})
    write_rows_csv(out / "simulate_summary.csv", keys, [[s.get(k, "") for k in keys] for s in summaries])
    return rows, summaries


def random_basis(ops, ranks: dict, seed: int = 0) -> ReducedBasis:
    """Random orthonormal bases of prescribed ranks (timing only)."""
    rng = np.random.default_rng(seed)
    g = ops.grid

    def orth(m, k):
        return np.linalg.qr(rng.standard_normal((m, k)))[0]

    mu, nu = g.shape_u
    mv, nv = g.shape_v
    k, p = ranks["k"], ranks["p"]
    b = dict(U_l=orth(mu, k), U_r=orth(nu, k), V_l=orth(mv, k), V_r=orth(nv, k),
             P_l=orth(g.n_x, k), P_r=orth(g.n_y, k),
             Phi_U_l=orth(mu, p), Phi_U_r=orth(nu, p), Phi_V_l=orth(mv, p), Phi_V_r=orth(nv, p))
    idx = {f"idx_{s}": qdeim_indices(b[f"Phi_{s}"]) for s in ("U_l", "U_r", "V_l", "V_r")}
    return ReducedBasis(**b, **idx)


def timing_harness(sizes, k: int = 12, p: int = 24, steps: int = 20, repeats: int = 5, dt: float = 0.05):
    """Per-step wall time of the full and reduced steppers with fixed ranks.

    Sizes are timed round-robin and the minimum over ``repeats`` rounds is
    kept, so background load affects all sizes alike.
    """
    bc = lid_driven_bc()
    runs = {}
    for n in sizes:
        g = GridSpec(n, n)
        ops = build_operators(g)
        fm = FullModel(ops, dt, bc)
        basis = random_basis(ops, {"k": k, "p": p})
        rm = ReducedModel(assemble_reduced(ops, basis, bc, gamma_up=1.0), dt)
        runs[n] = (_stepper(fm.step, FullState.zeros(g), steps),
                   _stepper(rm.step, project_state(FullState.zeros(g), basis), steps))
    best = {n: [np.inf, np.inf] for n in sizes}
    for rnd in range(repeats + 1):
        for n in sizes:
            for i, fn in enumerate(runs[n]):
                t = _elapsed(fn)
                if rnd:  # round 0 is a warm-up
                    best[n][i] = min(best[n][i], t)
    return [{"n": n, "full": best[n][0] / steps, "reduced": best[n][1] / steps} for n in sizes]


def _stepper(step, state, steps):
    def run():
        s = state
        for _ in range(steps):
            s = step(s)
    return run


# --------------------------------------------------------------------------
# report

def cmd_report(cfg: ExperimentConfig, out: Path):
    out = Path(out)
    timing = out / "timing.csv"
    control = out / "control_summary.csv"
    manifest = out / OFFLINE_DIR / "manifest.json"
    if not (timing.exists() or control.exists() or manifest.exists()):
        raise ArtifactError(f"missing artifacts: no timing, control or offline outputs in {out}")
    lines = ["# Experiment report", ""]
    table_rows = []
    if manifest.exists():
        man = json.loads(manifest.read_text())
        lines += ["## Reduced bases", "", "| family | k_left | k_right |", "|---|---|---|"]
        for fam, (kl, kr) in sorted(man["ranks"].items()):
            lines.append(f"| {fam} | {kl} | {kr} |")
        lines += ["", f"tolerances: {json.dumps(man['tolerances'], sort_keys=True)}", ""]
    if timing.exists():
        lines += ["## Timings", "", "| model | n | steps | s/step |", "|---|---|---|---|"]
        for r in read_rows_csv(timing):
            lines.append(f"| {r['model']} | {r['n']} | {r['steps']} | {float(r['seconds_per_step']):.3e} |")
        lines.append("")
    if control.exists():
        rows = read_rows_csv(control)
        lines += ["## Control", "", "| M | J | nodes | Ratio_p |", "|---|---|---|---|"]
        unc = None
        for r in rows:
            lines.append(f"| {r['M']} | {float(r['J_controlled']):.3e} | {r['nodes']} | {float(r['ratio_p']):.3g} |")
            table_rows.append([r["M"], r["J_controlled"], r["nodes"], r["ratio_p"]])
            unc = r["J_uncontrolled"]
        if unc is not None:
            lines += ["", f"uncontrolled J: {float(unc):.3e}"]
        lines.append("")
        write_rows_csv(out / "report_table.csv", ["M", "J", "nodes", "Ratio_p"], table_rows)
    (out / "report.md").write_text("\n".join(lines))
    return out / "report.md"
