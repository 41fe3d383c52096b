import numpy as np
import pytest

from inflap import (FEFunction, InvalidArgumentError,
                    SolverFailure, SolverConfig, SpaceP1, apply_dirichlet,
                    assemble_step, build_initial_mesh, default_initializer,
                    diffusion_tensor, fe_hessian, fixed_point_solve,
                    gradients, interpolate, l2_norm, refine, registry,
                    solve_linear, uniform_refine)
from inflap.solver import ProblemData
import scipy.sparse as sp

from conftest import brute_saddle, schur_eliminate

CLASSICAL = registry()["classical"].data
ARONSSON = registry()["aronsson"].data


# ------------------------------------------------------------ diffusion tensor

def test_diffusion_tensor_formula():
    mesh = build_initial_mesh(1)
    space = SpaceP1(mesh)
    # gradient (1, 0) on every element
    u = interpolate(space, lambda x, y: x + 0.0 * y)
    tensors = diffusion_tensor(u, tau=2.0)
    assert np.allclose(tensors, [[1.5, 0.0], [0.0, 0.5]])

    # degenerate gradient: only the relaxation part survives
    flat = FEFunction(space, np.zeros(space.dof_count))
    tensors = diffusion_tensor(flat, tau=4.0)
    assert np.allclose(tensors, 0.25 * np.eye(2))

    diag = interpolate(space, lambda x, y: x + y)
    tensors = diffusion_tensor(diag, tau=1.0)
    assert np.allclose(tensors, [[1.5, 0.5], [0.5, 1.5]])


def test_diffusion_tensor_eigenvalue_bounds():
    mesh = refine(build_initial_mesh(2), {0, 3, 9})
    space = SpaceP1(mesh)
    rng = np.random.default_rng(2)
    for tau in (0.1, 1.0, 1000.0):
        u = FEFunction(space, rng.standard_normal(space.dof_count))
        eigs = np.linalg.eigvalsh(diffusion_tensor(u, tau))
        assert eigs.min() >= 1.0 / tau - 1e-12
        assert eigs.max() <= 1.0 + 1.0 / tau + 1e-12


def test_diffusion_tensor_rejects_bad_parameters():
    mesh = build_initial_mesh(1)
    u = interpolate(SpaceP1(mesh), lambda x, y: x)
    with pytest.raises(InvalidArgumentError):
        diffusion_tensor(u, tau=0.0)


# -------------------------------------------------------------------- assembly

def test_step_matrix_sparsity_stencil():
    # rows may reach the vertex patch plus the patches of edge neighbors
    mesh = build_initial_mesh(2)
    u = interpolate(SpaceP1(mesh), lambda x, y: x * x + y * y)
    matrix, _ = assemble_step(mesh, u, fe_hessian(u), CLASSICAL)

    patches = {i: set() for i in range(mesh.vertex_count)}
    for k, verts in enumerate(mesh.triangle_vertices):
        for i in verts:
            patches[int(i)].add(k)
    neighbors = {}
    for t0, t1 in mesh.edge_triangles:
        if t1 >= 0:
            neighbors.setdefault(int(t0), set()).add(int(t1))
            neighbors.setdefault(int(t1), set()).add(int(t0))
    matrix = matrix.tocsr()
    for i in range(mesh.vertex_count):
        allowed = set()
        for k in patches[i]:
            allowed.update(mesh.triangle_vertices[k])
            for other in neighbors.get(k, ()):
                allowed.update(mesh.triangle_vertices[other])
        row = matrix.getrow(i)
        touched = set(row.indices[np.abs(row.data) > 1e-14])
        assert touched <= allowed


def test_rhs_vanishes_for_affine_previous_iterate_and_zero_f():
    mesh = build_initial_mesh(2)
    space = SpaceP1(mesh)
    problem = ProblemData(f=lambda x, y: np.zeros(np.shape(x)),
                          g=lambda x, y: x, tau=5.0)
    u = interpolate(space, lambda x, y: 2.0 * x - y)
    _, rhs = assemble_step(mesh, u, fe_hessian(u), problem)
    interior = ~mesh.vertex_on_boundary
    assert np.abs(rhs[interior]).max() <= 1e-13


def test_assembly_against_coupled_saddle_oracle():
    # brute-force coupled system, Schur-eliminated onto the vertex block
    mesh = build_initial_mesh(1)
    space = SpaceP1(mesh)
    u = interpolate(space, lambda x, y: x * x + y * y)
    matrix, rhs = assemble_step(mesh, u, fe_hessian(u), CLASSICAL)

    saddle, rhs_for, _ = brute_saddle(mesh, u.coefficients, CLASSICAL.f,
                                      CLASSICAL.g, CLASSICAL.tau, dirichlet=False)
    oracle_matrix = schur_eliminate(saddle, mesh.vertex_count)
    oracle_rhs = rhs_for(np.asarray(fe_hessian(u).coefficients.reshape(-1, 2, 2)))

    assert np.abs(matrix.toarray() - oracle_matrix).max() <= 1e-12
    assert np.abs(rhs - oracle_rhs[:mesh.vertex_count]).max() <= 1e-12


def test_assemble_step_rejects_mesh_mismatch():
    mesh = build_initial_mesh(1)
    other = build_initial_mesh(2)
    u = interpolate(SpaceP1(mesh), lambda x, y: x)
    wrong = interpolate(SpaceP1(other), lambda x, y: x)
    with pytest.raises(InvalidArgumentError):
        assemble_step(mesh, wrong, fe_hessian(u), CLASSICAL)


@pytest.mark.parametrize("steps", [1, 2])
def test_eliminated_iterates_match_coupled_system(steps):
    # meshes up to 32 triangles, iterate both paths and compare
    for mesh in (build_initial_mesh(1),
                 uniform_refine(build_initial_mesh(1)),
                 refine(uniform_refine(build_initial_mesh(1)), {0, 5})):
        assert mesh.triangle_count <= 32
        space = SpaceP1(mesh)
        u_ours = interpolate(space, lambda x, y: x * x + y * y)
        u_oracle = u_ours
        for _ in range(steps):
            matrix, rhs = assemble_step(mesh, u_ours, fe_hessian(u_ours), CLASSICAL)
            matrix, rhs = apply_dirichlet(matrix, rhs, space, CLASSICAL.g)
            u_ours = FEFunction(space, solve_linear(matrix, rhs))

            saddle, rhs_for, _ = brute_saddle(mesh, u_oracle.coefficients,
                                              CLASSICAL.f, CLASSICAL.g,
                                              CLASSICAL.tau)
            h_prev = np.asarray(fe_hessian(u_oracle).coefficients.reshape(-1, 2, 2))
            full = np.linalg.solve(saddle, rhs_for(h_prev))
            u_oracle = FEFunction(space, full[:mesh.vertex_count])
        assert np.abs(u_ours.coefficients - u_oracle.coefficients).max() <= 1e-10


# ------------------------------------------------------------------- dirichlet

def test_dirichlet_rows_and_values():
    mesh = build_initial_mesh(2)
    space = SpaceP1(mesh)
    u = interpolate(space, lambda x, y: x * x + y * y)
    matrix, rhs = assemble_step(mesh, u, fe_hessian(u), CLASSICAL)

    zeroed, zrhs = apply_dirichlet(matrix, rhs, space,
                                   lambda x, y: np.zeros(np.shape(x)))
    assert np.abs(zrhs[space.boundary_dofs]).max() == 0.0

    matrix, rhs = apply_dirichlet(matrix, rhs, space, CLASSICAL.g)
    solution = solve_linear(matrix, rhs)
    coords = mesh.vertex_coords[space.boundary_dofs]
    assert solution[space.boundary_dofs] == pytest.approx(
        (coords ** 2).sum(axis=1), abs=1e-12)
    corner = np.flatnonzero((mesh.vertex_coords == [1.0, 1.0]).all(axis=1))[0]
    assert solution[corner] == pytest.approx(2.0)


# ---------------------------------------------------------------- linear solve

def test_solve_linear_identity_and_diagonal():
    identity = sp.identity(4, format="csr")
    rhs = np.array([1.0, -2.0, 3.0, 0.5])
    assert np.allclose(solve_linear(identity, rhs), rhs)

    system = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 4.0]]))
    assert np.allclose(solve_linear(system, np.array([2.0, 4.0])), [1.0, 1.0])


def test_solve_linear_residual_contract():
    rng = np.random.default_rng(8)
    dense = rng.standard_normal((20, 20)) + 20.0 * np.eye(20)
    matrix = sp.csr_matrix(dense)
    rhs = rng.standard_normal(20)
    x = solve_linear(matrix, rhs, SolverConfig())
    residual = np.linalg.norm(matrix @ x - rhs) / np.linalg.norm(rhs)
    assert residual <= 1e-10


@pytest.mark.filterwarnings("ignore::scipy.sparse.linalg.MatrixRankWarning")
def test_solve_linear_singular_system_fails():
    singular = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverFailure) as info:
        solve_linear(singular, np.array([1.0, 0.0]))
    assert info.value.residual is None or info.value.residual > 1e-10


# ----------------------------------------------------------------- initializer

def test_initializer_reproduces_affine_data():
    mesh = build_initial_mesh(2)
    problem = ProblemData(f=lambda x, y: np.zeros(np.shape(x)),
                          g=lambda x, y: 1.0 + x - 2.0 * y, tau=1.0)
    u0 = default_initializer(mesh, problem)
    expected = interpolate(SpaceP1(mesh), problem.g)
    assert np.abs(u0.coefficients - expected.coefficients).max() <= 1e-10


def test_initializer_has_usable_gradient():
    mesh = build_initial_mesh(2)
    u0 = default_initializer(mesh, CLASSICAL)
    assert np.linalg.norm(gradients(u0), axis=1).max() > 0.0


# ----------------------------------------------------------------- fixed point

def test_classical_converges_quickly():
    for mesh in (build_initial_mesh(2), uniform_refine(build_initial_mesh(2))):
        report = fixed_point_solve(mesh, CLASSICAL)
        assert report.converged
        assert report.iterations <= 5
        assert len(report.increments) == report.iterations
        assert report.increments[-1] <= 10.0 * mesh.diameters.max() ** 2


def test_aronsson_converges_within_twenty():
    for tau in (1.0, 10.0):
        from dataclasses import replace
        problem = replace(ARONSSON, tau=tau)
        mesh = uniform_refine(build_initial_mesh(2))
        report = fixed_point_solve(mesh, problem)
        assert report.converged
        assert report.iterations <= 20


def test_immediate_convergence_counts_one_iteration():
    mesh = build_initial_mesh(2)
    settled = fixed_point_solve(mesh, CLASSICAL).solution
    report = fixed_point_solve(mesh, CLASSICAL, initial=settled)
    assert report.converged
    assert report.iterations == 1


def test_fixed_point_idempotence_within_tolerance():
    mesh = uniform_refine(build_initial_mesh(2))
    config = SolverConfig()
    report = fixed_point_solve(mesh, CLASSICAL, config)
    again = fixed_point_solve(mesh, CLASSICAL, config, initial=report.solution)
    space = SpaceP1(mesh)
    drift = l2_norm(FEFunction(space, again.solution.coefficients
                               - report.solution.coefficients))
    assert drift <= config.increment_tol_factor * mesh.diameters.max() ** 2


def test_fixed_point_rejects_foreign_initial_guess():
    mesh = build_initial_mesh(1)
    other = build_initial_mesh(2)
    guess = interpolate(SpaceP1(other), lambda x, y: x)
    with pytest.raises(InvalidArgumentError):
        fixed_point_solve(mesh, CLASSICAL, initial=guess)


def test_exact_solution_residual_under_refinement():
    # the scheme reproduces the quadratic exact solution: the interpolant
    # solves the discrete system to rounding noise on every level, which
    # is the strongest form of the residual-decay property
    mesh = build_initial_mesh(2)
    for _ in range(4):
        space = SpaceP1(mesh)
        star = interpolate(space, CLASSICAL.exact_solution)
        matrix, rhs = assemble_step(mesh, star, fe_hessian(star), CLASSICAL)
        matrix, rhs = apply_dirichlet(matrix, rhs, space, CLASSICAL.g)
        assert np.linalg.norm(matrix @ star.coefficients - rhs) <= 1e-12
        mesh = uniform_refine(mesh)
