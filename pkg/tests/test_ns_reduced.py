import numpy as np

from nsdp.grid import GridSpec, build_operators, lid_driven_bc
from nsdp.ns_full import ForcingSpec, FullModel, FullState, integrate
from nsdp.ns_reduced import ReducedModel, lift_state, project_state, reduced_integrate
from nsdp.pod_deim import ReducedBasis, SnapshotSet, assemble_reduced, build_reduced_basis

from conftest import general_bc


def _setup(n=16, gamma=0.5):
    g = GridSpec(n, n)
    ops = build_operators(g)
    rng = np.random.default_rng(11)
    psi = (rng.standard_normal(g.shape_u), rng.standard_normal(g.shape_v))
    forcing = ForcingSpec(shapes=[psi], gamma_up=gamma)
    s0 = FullState(0.2 * rng.standard_normal(g.shape_u), 0.2 * rng.standard_normal(g.shape_v), np.zeros(g.shape_p))
    return g, ops, forcing, s0


def test_full_rank_rom_equals_fom():
    g, ops, forcing, s0 = _setup()
    bc = general_bc()
    signal = [0.3 * np.cos(j) for j in range(10)]
    full = integrate(s0, FullModel(ops, 0.05, bc, forcing), 10, signal)
    b = ReducedBasis.identity(ops)
    rm = ReducedModel(assemble_reduced(ops, b, bc, forcing, gamma_up=0.5), 0.05)
    red = reduced_integrate(project_state(s0, b), rm, 10, signal)
    for fs, rs in zip(full.states[1:], red[1:]):
        lifted = lift_state(rs, b)
        assert np.abs(lifted.U - fs.U).max() <= 1e-8
        assert np.abs(lifted.V - fs.V).max() <= 1e-8
        assert np.abs(lifted.P - fs.P).max() <= 1e-8


def test_batched_step_matches_single_steps():
    g, ops, forcing, s0 = _setup(n=10)
    b = ReducedBasis.identity(ops)
    rm = ReducedModel(assemble_reduced(ops, b, lid_driven_bc(), forcing, gamma_up=0.5), 0.05)
    r0 = project_state(s0, b)
    Ub = np.stack([r0.Uh, 2 * r0.Uh, -r0.Uh])
    Vb = np.stack([r0.Vh, 2 * r0.Vh, -r0.Vh])
    alphas = np.array([0.0, 0.5, -1.0])
    Un, Vn, Pn = rm.step_arrays(Ub, Vb, alphas)
    for i in range(3):
        single = rm.step(type(r0)(Ub[i], Vb[i], r0.Ph), alphas[i])
        assert np.allclose(Un[i], single.Uh, atol=1e-13)
        assert np.allclose(Pn[i], single.Ph, atol=1e-12)


def test_truncated_rom_error_shrinks_with_tolerance():
    g = GridSpec(24, 24)
    ops = build_operators(g)
    bc = lid_driven_bc()
    full = integrate(FullState.zeros(g), FullModel(ops, 0.05, bc), 60, record=True)
    snaps = SnapshotSet()
    snaps.extend(full.snapshots)
    errs = []
    for tol in (1e-3, 1e-4, 1e-5):
        b = build_reduced_basis(snaps, tol)
        assert b.ranks()["U"][0] < g.n_x - 1
        rm = ReducedModel(assemble_reduced(ops, b, bc, gamma_up=max(full.gammas)), 0.05)
        red = reduced_integrate(project_state(FullState.zeros(g), b), rm, 60)
        errs.append(np.abs(lift_state(red[-1], b).U - full.final.U).max())
    assert errs[0] < 5e-3
    assert errs[0] > errs[1] > errs[2]


def test_project_lift_round_trip():
    g, ops, _, s0 = _setup(n=8)
    b = ReducedBasis.identity(ops)
    back = lift_state(project_state(s0, b), b)
    assert np.allclose(back.U, s0.U) and np.allclose(back.V, s0.V)
