import numpy as np
import pytest

from nsdp.control import (CostSpec, DirichletBoundary, Subdomain, ReducedTreeProblem, actuated_model,
                          check_compatibility, cost_trace, l2_norm_sq, pressure_mismatch, running_cost,
                          terminal_cost, write_cost_csv)
from nsdp.grid import BoundaryConditions, GridSpec, build_operators, homogeneous_bc
from nsdp.ns_full import FullState, integrate
from nsdp.ns_reduced import ReducedModel, project_state
from nsdp.pod_deim import ReducedBasis, assemble_reduced


def test_pressure_mismatch_ignores_constants(rng):
    g = GridSpec(5, 4)
    P = rng.standard_normal(g.shape_p)
    Q = rng.standard_normal(g.shape_p)
    assert pressure_mismatch(P + 3.0, Q - 1.0, g) == pytest.approx(pressure_mismatch(P, Q, g))
    assert pressure_mismatch(P, P + 2.0, g) == pytest.approx(0.0, abs=1e-24)


def test_subdomain_shape_fields():
    g = GridSpec(10, 10)
    pu, pv = Subdomain(direction=(-1.0, 0.5)).shape_fields(g)[0]
    Xu, Yu = g.mesh_u()
    inside = (np.abs(Xu - 0.5) <= 0.2 + 1e-12) & (np.abs(Yu - 0.5) <= 0.2 + 1e-12)
    assert np.array_equal(pu, -1.0 * inside)
    assert set(np.unique(pv)) == {0.0, 0.5}


def test_dirichlet_boundary_control():
    act = DirichletBoundary(lambda s, t, a: a * s * (1 - s))
    bc = act.boundary_conditions(homogeneous_bc())
    g = GridSpec(8, 8)
    tr = bc.traces(g, 0.0, 2.0)
    x = g.x_faces()
    assert np.allclose(tr.uN, 2.0 * x * (1 - x))
    check_compatibility(bc, g, controls=(0.0, 1.0))
    with pytest.raises(ValueError):
        DirichletBoundary(lambda s, t, a: s, wall="Q")
    leaky = BoundaryConditions(v_N=lambda s, t, a: a + 0 * s)
    with pytest.raises(ValueError):
        check_compatibility(leaky, g, controls=(1.0,))


def test_cost_spec_validation_and_targets():
    g = GridSpec(4, 4)
    with pytest.raises(ValueError):
        CostSpec(kind="pressure")
    with pytest.raises(ValueError):
        CostSpec(gamma_pen=-1.0)
    states = [FullState.zeros(g, t=k * 0.1) for k in range(3)]
    c = CostSpec(target=states, dt=0.1)
    assert c.target_at(0.15, g) is states[1]
    assert c.target_at(None, g) is states[-1]
    with pytest.raises(KeyError):
        c.target_at(0.5, g)


def test_cost_trace_accumulates(rng):
    g = GridSpec(6, 6)
    ops = build_operators(g)
    model, _, _ = actuated_model(ops, 0.1, Subdomain(), homogeneous_bc())
    s0 = FullState(rng.standard_normal(g.shape_u), rng.standard_normal(g.shape_v), np.zeros(g.shape_p))
    traj = integrate(s0, model, 4, [1.0, 0.0, 1.0, 0.5])
    cost = CostSpec(gamma_pen=0.1, lam=0.5)
    rows = cost_trace(traj.states, traj.controls, cost, g, 0.1)
    assert len(rows) == 5
    inc = [r[1] for r in rows]
    assert rows[-1][2] == pytest.approx(sum(inc))
    j1 = 0.1 * np.exp(-0.5 * 0.1) * running_cost(traj.states[1], 0.0, 0.1, cost, g)
    assert inc[1] == pytest.approx(j1)
    assert inc[-1] == pytest.approx(np.exp(-0.5 * 0.4) * terminal_cost(traj.final, cost, g))


def test_write_cost_csv(tmp_path):
    write_cost_csv(tmp_path / "c.csv", [(0.0, 1.0, 1.0), (0.1, 0.5, 1.5)])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t,J_running,J_cumulative"
    assert lines[2] == "0.1,0.5,1.5"


@pytest.mark.parametrize("kind", ["velocity", "pressure"])
def test_reduced_costs_match_full_costs_at_full_rank(kind, rng):
    g = GridSpec(8, 7)
    ops = build_operators(g)
    act = Subdomain(direction=(-1.0, -1.0))
    _, bc, forcing = actuated_model(ops, 0.1, act, homogeneous_bc())
    basis = ReducedBasis.identity(ops)
    rm = ReducedModel(assemble_reduced(ops, basis, bc, forcing, gamma_up=0.5), 0.1)
    target = FullState(rng.standard_normal(g.shape_u), rng.standard_normal(g.shape_v), rng.standard_normal(g.shape_p))
    cost = CostSpec(target=target, kind=kind, gamma_pen=0.01)
    prob = ReducedTreeProblem(rm, basis, cost)
    s0 = FullState(rng.standard_normal(g.shape_u), rng.standard_normal(g.shape_v), rng.standard_normal(g.shape_p))
    X = prob.root(s0)[None, :]
    assert prob.running(X, 0.7, 0.0)[0] == pytest.approx(running_cost(s0, 0.7, 0.0, cost, g), rel=1e-10)
    assert prob.terminal(X)[0] == pytest.approx(terminal_cost(s0, cost, g), rel=1e-10)
    X1 = prob.dyn(X, 0.7, 0.0)
    Uh, Vh, _ = prob.unpack(X1)
    s1 = rm.step(project_state(s0, basis), 0.7)
    assert np.allclose(Uh[0], s1.Uh)
    assert np.allclose(Vh[0], s1.Vh)


def test_l2_norm_is_weighted_sum():
    g = GridSpec(4, 5, b_x=2.0)
    U = np.ones(g.shape_u)
    V = np.zeros(g.shape_v)
    assert l2_norm_sq(U, V, g) == pytest.approx(g.h_x * g.h_y * U.size)
