import numpy as np
import pytest

from helpers import fitted_poisson_oracle
from sbmrom.assembly import FieldSolution, ProblemConfig, assemble_stokes, solve_fom
from sbmrom.errors import InvalidInputError, RomStabilityError
from sbmrom.geometry import GeometryParams, build_surrogate, full_domain
from sbmrom.mesh import assemble_mass, generate_structured
from sbmrom.rom import (
    PodBasis,
    ReducedSystem,
    collect_snapshots,
    enrich,
    mass_apply,
    mass_norm,
    pod,
    project,
    relative_error,
    sample_parameters,
    solve_rom,
    supremizer_snapshots,
)

# ---------------------------------------------------------------------------
# parameter sampling


def test_equispaced_1d_covers_endpoints():
    mus = sample_parameters([(-0.65, 0.65)], 3, "equispaced")
    np.testing.assert_allclose(mus[:, 0], [-0.65, 0.0, 0.65])


def test_random_sampling_reproducible():
    box = [(-1.5, -1.0), (-0.15, 0.15)]
    a = sample_parameters(box, 4, "random", seed=42)
    b = sample_parameters(box, 4, "random", seed=42)
    np.testing.assert_array_equal(a, b)
    assert np.all(a[:, 0] >= -1.5) and np.all(a[:, 0] <= -1.0)
    assert np.all(a[:, 1] >= -0.15) and np.all(a[:, 1] <= 0.15)


def test_equispaced_2d_grid():
    mus = sample_parameters([(-1.0, 1.0), (0.0, 2.0)], 36, "equispaced")
    assert mus.shape == (36, 2)
    assert {(-1.0, 0.0), (1.0, 2.0), (-1.0, 2.0), (1.0, 0.0)} <= {
        tuple(m) for m in mus
    }
    with pytest.raises(InvalidInputError):
        sample_parameters([(-1.0, 1.0), (0.0, 2.0)], 35, "equispaced")


def test_degenerate_dimension_pinned():
    mus = sample_parameters([(-1.5, -1.5), (-0.65, 0.65)], 5, "equispaced")
    np.testing.assert_array_equal(mus[:, 0], -1.5)
    np.testing.assert_allclose(mus[:, 1], np.linspace(-0.65, 0.65, 5))


def test_empty_box_rejected():
    with pytest.raises(InvalidInputError):
        sample_parameters([(1.0, 0.0)], 3)


# ---------------------------------------------------------------------------
# POD with the mass inner product


@pytest.fixture(scope="module")
def small_mass():
    mesh = generate_structured((0.0, 1.0, 0.0, 1.0), 6, 6)
    return assemble_mass(mesh)


def test_pod_single_snapshot(small_mass):
    rng = np.random.default_rng(0)
    u = rng.normal(size=small_mass.shape[0])
    basis = pod(u[:, None], small_mass, 1)
    nrm = mass_norm(small_mass, u)
    np.testing.assert_allclose(basis.modes[:, 0] * nrm, u * np.sign(basis.modes[0, 0] * u[0]), rtol=1e-12)
    assert basis.eigenvalues[0] == pytest.approx(nrm**2, rel=1e-12)


def test_pod_two_orthogonal_snapshots(small_mass):
    rng = np.random.default_rng(1)
    a = rng.normal(size=small_mass.shape[0])
    b = rng.normal(size=small_mass.shape[0])
    # M-orthogonalize and normalize to the same M-norm
    b = b - (b @ mass_apply(small_mass, a)) / (a @ mass_apply(small_mass, a)) * a
    a = a / mass_norm(small_mass, a)
    b = b / mass_norm(small_mass, b)
    s = np.column_stack([a, b])
    basis = pod(s, small_mass, 2)
    assert basis.eigenvalues[0] == pytest.approx(basis.eigenvalues[1], rel=1e-10)
    # same span: projectors agree
    proj_pod = basis.modes @ (basis.modes.T @ small_mass.toarray())
    proj_ref = s @ np.linalg.solve(s.T @ small_mass @ s, s.T @ small_mass.toarray())
    np.testing.assert_allclose(proj_pod, proj_ref, atol=1e-10)


@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.parametrize("ncomp,ncols", [(1, 50), (2, 37)])
def test_pod_optimality_brute_force(small_mass, ncomp, ncols):
    """Projection error energy equals the truncated eigenvalue sum."""
    rng = np.random.default_rng(2 + ncomp)
    n = small_mass.shape[0] * ncomp
    # correlated snapshots with fast decay, like a parametric family
    base = rng.normal(size=(n, 6))
    coef = rng.normal(size=(6, ncols)) * (0.5 ** np.arange(6))[:, None]
    s = base @ coef + 0.01 * rng.normal(size=(n, ncols))
    basis = pod(s, small_mass, ncols)
    lam = basis.eigenvalues
    for n_r in range(1, basis.n_modes + 1):
        modes = basis.truncated(n_r)
        proj = modes @ (modes.T @ mass_apply(small_mass, s))
        err = s - proj
        energy = float(np.einsum("nk,nk->", err, mass_apply(small_mass, err)))
        tail = float(lam[n_r:].sum())
        assert energy == pytest.approx(tail, rel=1e-8, abs=1e-10 * lam[0])


def test_pod_orthonormality(small_mass):
    rng = np.random.default_rng(5)
    s = rng.normal(size=(small_mass.shape[0], 30))
    basis = pod(s, small_mass, 30)
    gram = basis.modes.T @ mass_apply(small_mass, basis.modes)
    assert np.abs(gram - np.eye(basis.n_modes)).max() <= 1e-8


def test_pod_rank_truncation_warns(small_mass):
    rng = np.random.default_rng(6)
    u = rng.normal(size=small_mass.shape[0])
    s = np.column_stack([u, 2.0 * u, -0.5 * u])  # rank one
    with pytest.warns(UserWarning):
        basis = pod(s, small_mass, 3)
    assert basis.n_modes == 1
    assert np.all(basis.eigenvalues >= 0.0)
    assert np.all(np.diff(basis.eigenvalues) <= 1e-12 * basis.eigenvalues[0])


def test_pod_input_contracts(small_mass):
    with pytest.raises(InvalidInputError):
        pod(np.zeros((small_mass.shape[0], 3)), small_mass, 2)
    rng = np.random.default_rng(7)
    s = rng.normal(size=(small_mass.shape[0], 3))
    with pytest.raises(InvalidInputError):
        pod(s, small_mass, 0)
    with pytest.raises(InvalidInputError):
        pod(s, small_mass, 4)


# ---------------------------------------------------------------------------
# snapshots


def test_collect_snapshots_shapes_and_determinism():
    calls = []

    def fake_solver(mu):
        calls.append(tuple(mu))
        u = np.full(6, float(mu[0]))
        return FieldSolution(u=u, p=u[:3] * 2.0, mu=tuple(mu))

    mus = np.array([[1.0], [1.0], [2.0]])
    s_u, s_p = collect_snapshots(mus, fake_solver)
    assert s_u.shape == (6, 3)
    assert s_p.shape == (3, 3)
    assert np.array_equal(s_u[:, 0], s_u[:, 1])  # duplicated sample, identical bytes
    assert calls == [(1.0,), (1.0,), (2.0,)]


def test_collect_snapshots_reports_failing_sample():
    def bad_solver(mu):
        if mu[0] > 1.5:
            raise InvalidInputError("boom")
        return FieldSolution(u=np.ones(4), p=np.ones(2))

    with pytest.raises(InvalidInputError, match="sample 1.*2.0"):
        collect_snapshots(np.array([[1.0], [2.0]]), bad_solver)


# ---------------------------------------------------------------------------
# enrichment solves


def test_supremizer_constant_pressure_gives_zero():
    mesh = generate_structured((-2.0, 2.0, -1.0, 1.0), 24, 12)
    geom = GeometryParams(kind="circle", mu=(-1.5, 0.0), radius=0.2)
    surr = build_surrogate(mesh, geom)
    s_p = np.ones((mesh.n_nodes, 1))
    s = supremizer_snapshots(s_p, mesh, [surr], ProblemConfig())
    assert s.shape == (2 * mesh.n_nodes, 1)
    assert np.abs(s).max() <= 1e-12


def test_supremizer_linear_pressure_matches_fitted_oracle():
    mesh = generate_structured((-2.0, 2.0, -1.0, 1.0), 24, 12)
    surr = full_domain(mesh)
    s_p = mesh.nodes[:, 0][:, None]  # p = x, so the load is -(1, 0)
    s = supremizer_snapshots(s_p, mesh, [surr], ProblemConfig())
    oracle = fitted_poisson_oracle(mesh, (-1.0, 0.0))
    n = mesh.n_nodes
    scale = max(np.abs(oracle).max(), 1.0)
    assert np.abs(s[:n, 0] - oracle[:, 0]).max() <= 1e-10 * scale
    assert np.abs(s[n:, 0] - oracle[:, 1]).max() <= 1e-10 * scale


def test_supremizer_ghost_entries_zero():
    mesh = generate_structured((-2.0, 2.0, -1.0, 1.0), 32, 16)
    geom = GeometryParams(kind="circle", mu=(-1.5, 0.0), radius=0.25)
    surr = build_surrogate(mesh, geom)
    rng = np.random.default_rng(8)
    s_p = rng.normal(size=(mesh.n_nodes, 3))
    s_p[surr.ghost_nodes] = 0.0
    s = supremizer_snapshots(s_p, mesh, [surr] * 3, ProblemConfig())
    assert s.shape[1] == 3
    n = mesh.n_nodes
    assert np.all(s[surr.ghost_nodes] == 0.0)
    assert np.all(s[n + surr.ghost_nodes] == 0.0)


def test_enrich_concatenation(small_mass):
    rng = np.random.default_rng(9)
    n = 2 * small_mass.shape[0]
    bu = pod(rng.normal(size=(n, 4)), small_mass, 4, inner_product="mass-x2")
    bs = pod(rng.normal(size=(n, 3)), small_mass, 3, inner_product="mass-x2")
    assert enrich(bu, bs, 0) is bu.modes
    lt = enrich(bu, bs, 2)
    assert lt.shape == (n, 6)
    np.testing.assert_array_equal(lt[:, :4], bu.modes)
    np.testing.assert_array_equal(lt[:, 4:], bs.modes[:, :2])
    # each group stays internally orthonormal, no cross re-orthonormalization
    gram = lt.T @ mass_apply(small_mass, lt)
    np.testing.assert_allclose(gram[:4, :4], np.eye(4), atol=1e-8)
    np.testing.assert_allclose(gram[4:, 4:], np.eye(2), atol=1e-8)
    assert np.abs(gram[:4, 4:]).max() > 1e-8  # groups are not mutually orthogonal


# ---------------------------------------------------------------------------
# projection and reduced solves


@pytest.fixture(scope="module")
def small_flow():
    mesh = generate_structured((-2.0, 2.0, -1.0, 1.0), 32, 16)
    geom = GeometryParams(kind="circle", mu=(-1.5, 0.1), radius=0.2)
    surr = build_surrogate(mesh, geom)
    sys = assemble_stokes(mesh, surr, ProblemConfig())
    sol = solve_fom(sys, mu=(-1.5, 0.1))
    return mesh, surr, sys, sol


def test_project_identity_basis_reproduces_full(small_flow):
    _, surr, sys, sol = small_flow
    na = surr.n_active_nodes
    red = project(sys, np.eye(2 * na), np.eye(na))
    np.testing.assert_allclose(red.Ar, sys.A.toarray(), atol=1e-14)
    np.testing.assert_allclose(red.Br, sys.B.toarray(), atol=1e-14)
    np.testing.assert_allclose(red.Cr, sys.C.toarray(), atol=1e-14)
    rsol = solve_rom(red)
    np.testing.assert_allclose(rsol.u, sol.u, atol=1e-8)
    np.testing.assert_allclose(rsol.p, sol.p, atol=1e-8)


def test_project_single_mode_matches_dense_oracle(small_flow):
    mesh, _, sys, sol = small_flow
    m = assemble_mass(mesh)
    lu = sol.u[:, None] / mass_norm(m, sol.u)
    lp = sol.p[:, None] / mass_norm(m, sol.p)
    red = project(sys, lu, lp)
    assert red.Ar.shape == (1, 1)
    rsol = solve_rom(red)
    # dense brute-force oracle for the 2x2 reduced system
    n = mesh.n_nodes
    rows_u = np.concatenate([sys.active_nodes, n + sys.active_nodes])
    uu, pp = lu[rows_u, 0], lp[sys.active_nodes, 0]
    k = np.array(
        [
            [uu @ (sys.A @ uu), uu @ (sys.B.T @ pp)],
            [pp @ ((sys.B + sys.Bhat) @ uu), pp @ (sys.C @ pp)],
        ]
    )
    f = np.array([uu @ sys.F_g, pp @ sys.F_q])
    ab = np.linalg.solve(k, f)
    assert rsol.a[0] == pytest.approx(ab[0], rel=1e-12)
    assert rsol.b[0] == pytest.approx(ab[1], rel=1e-12)


def test_projection_preserves_symmetry(small_flow):
    mesh, _, sys, _ = small_flow
    rng = np.random.default_rng(10)
    lu = rng.normal(size=(2 * mesh.n_nodes, 5))
    lp = rng.normal(size=(mesh.n_nodes, 4))
    red = project(sys, lu, lp)
    assert np.abs(red.Ar - red.Ar.T).max() <= 1e-10 * np.abs(red.Ar).max()


def test_project_dimension_mismatch(small_flow):
    _, _, sys, _ = small_flow
    with pytest.raises(InvalidInputError):
        project(sys, np.ones((7, 2)), np.ones((5, 1)))


def test_solve_rom_zero_rhs(small_flow):
    _, _, sys, _ = small_flow
    rng = np.random.default_rng(11)
    lu = rng.normal(size=(2 * sys.n_active, 3))
    lp = rng.normal(size=(sys.n_active, 2))
    red = project(sys, lu, lp)
    red.Fgr = np.zeros_like(red.Fgr)
    red.Fqr = np.zeros_like(red.Fqr)
    rsol = solve_rom(red)
    assert np.abs(rsol.a).max() <= 1e-14
    assert np.abs(rsol.b).max() <= 1e-14


def test_solve_rom_singular_advises_enrichment(small_flow):
    _, _, sys, _ = small_flow
    red = ReducedSystem(
        Ar=np.zeros((2, 2)),
        Br=np.zeros((1, 2)),
        Bhatr=np.zeros((1, 2)),
        Cr=np.zeros((1, 1)),
        Fgr=np.ones(2),
        Fqr=np.ones(1),
        basis_u=np.zeros((2 * sys.n_active, 2)),
        basis_p=np.zeros((sys.n_active, 1)),
        system=sys,
    )
    with pytest.raises(RomStabilityError, match="supremizer"):
        solve_rom(red)


def test_relative_error_contracts(small_flow):
    mesh, _, _, sol = small_flow
    m = assemble_mass(mesh)
    from sbmrom.rom import ReducedSolution

    same = ReducedSolution(a=None, b=None, u=sol.u.copy(), p=sol.p.copy())
    assert relative_error(sol, same, m) == (0.0, 0.0)
    zero = ReducedSolution(a=None, b=None, u=np.zeros_like(sol.u), p=np.zeros_like(sol.p))
    e_u, e_p = relative_error(sol, zero, m)
    assert e_u == pytest.approx(1.0)
    assert e_p == pytest.approx(1.0)
    null = FieldSolution(u=np.zeros_like(sol.u), p=np.zeros_like(sol.p))
    with pytest.raises(InvalidInputError):
        relative_error(null, same, m)


def test_training_point_reproduction():
    """Untruncated bases reproduce a stored snapshot through the online path."""
    from sbmrom.pipeline import Study, run_offline, reproduce_training_point

    mesh = generate_structured((-2.0, 2.0, -1.0, 1.0), 32, 16)
    study = Study(
        mesh=mesh,
        physics=ProblemConfig(),
        geometry_kind="circle",
        radius=0.2,
        parameter_box=np.array([(-1.5, -1.5), (-0.3, 0.3)]),
        sample_count=6,
        mode_schedule=(6,),
        velocity_ratio=1,
        pressure_ratio=1,
        supremizer_ratio=1,
        use_supremizers=False,
        timing_repeats=1,
    )
    off = run_offline(study)
    e_u, e_p = reproduce_training_point(study, off, 2)
    assert e_u <= 1e-6
    assert e_p <= 1e-5
