"""Quick self-checks on small meshes, used by the ``check`` subcommand."""

from __future__ import annotations

from math import factorial

import numpy as np

from .estimator import estimate
from .fespace import (FEFunction, SpaceP1, integrate, interpolate, l2_error,
                      tensor_values, triangle_rule)
from .hessian import fe_hessian, hessian_operator
from .mesh import (build_initial_mesh, conformity_errors, min_angle_degrees,
                   refine, uniform_refine)
from .solver import (ProblemData, SolverConfig, apply_dirichlet, assemble_step,
                     default_initializer, diffusion_tensor, solve_linear)


def _mesh_suite():
    mesh = build_initial_mesh(2)
    rng = np.random.default_rng(7)
    for _ in range(40):
        marked = rng.choice(mesh.triangle_count, size=2, replace=False)
        mesh = refine(mesh, marked)
    problems = conformity_errors(mesh)
    ok = not problems
    ok &= abs(mesh.areas.sum() - 4.0) <= 1e-10
    ok &= min_angle_degrees(mesh) >= 22.5 - 1e-9
    return ok, f"{mesh.triangle_count} triangles, {len(problems)} conformity violations"


def _quadrature_suite():
    worst = 0.0
    for order in (1, 2, 4, 6):
        rule = triangle_rule(order)
        for m in range(order + 1):
            for n in range(order + 1 - m):
                approx = 0.5 * np.sum(rule.weights * rule.points[:, 1] ** m
                                      * rule.points[:, 2] ** n)
                exact = factorial(m) * factorial(n) / factorial(m + n + 2)
                worst = max(worst, abs(approx - exact))
    return worst <= 1e-14, f"worst monomial defect {worst:.2e}"


def _interpolation_suite():
    mesh = uniform_refine(build_initial_mesh(2))
    space = SpaceP1(mesh)
    u = interpolate(space, lambda x, y: 1.0 + 2.0 * x - 3.0 * y)
    err = l2_error(u, lambda x, y: 1.0 + 2.0 * x - 3.0 * y)
    vol = integrate(lambda x, y: np.ones(np.shape(x)), mesh)
    ok = err <= 1e-12 and abs(vol - 4.0) <= 1e-12
    return ok, f"affine interpolation error {err:.2e}, volume defect {abs(vol - 4.0):.2e}"


def _hessian_suite():
    mesh = refine(build_initial_mesh(2), [0, 5])
    space = SpaceP1(mesh)
    affine = interpolate(space, lambda x, y: 0.25 - 1.5 * x + 0.75 * y)
    worst_affine = np.abs(fe_hessian(affine).coefficients).max()

    rng = np.random.default_rng(11)
    operator = hessian_operator(mesh)
    worst_consistency = 0.0
    worst_paths = 0.0
    for _ in range(5):
        v = FEFunction(space, rng.standard_normal(space.dof_count))
        mats = tensor_values(fe_hessian(v))
        lhs = np.einsum("t,trc->rc", mesh.areas, mats)
        grad = np.einsum("tid,ti->td", mesh.basis_gradients,
                         v.coefficients[mesh.triangle_vertices])
        rhs = np.zeros((2, 2))
        for edge in mesh.boundary_edge_ids:
            owner = mesh.edge_triangles[edge, 0]
            rhs += mesh.edge_lengths[edge] * np.outer(grad[owner], mesh.edge_normals[edge])
        worst_consistency = max(worst_consistency, np.abs(lhs - rhs).max())
        worst_paths = max(worst_paths, np.abs(
            operator.apply(v).coefficients - fe_hessian(v).coefficients).max())
    ok = worst_affine <= 1e-12 and worst_consistency <= 1e-12 and worst_paths <= 1e-13
    return ok, (f"affine {worst_affine:.2e}, consistency {worst_consistency:.2e}, "
                f"operator vs direct {worst_paths:.2e}")


def _solver_suite():
    mesh = build_initial_mesh(2)
    space = SpaceP1(mesh)
    problem = ProblemData(f=lambda x, y: np.full(np.shape(x), 2.0),
                          g=lambda x, y: x * x + y * y, tau=1000.0)
    u0 = default_initializer(mesh, problem)
    tensors = diffusion_tensor(u0, problem.tau)
    eigs = np.linalg.eigvalsh(tensors)
    lo, hi = 1.0 / problem.tau - 1e-12, 1.0 + 1.0 / problem.tau + 1e-12
    ok = bool((eigs >= lo).all() and (eigs <= hi).all())

    matrix, rhs = assemble_step(mesh, u0, fe_hessian(u0), problem)
    matrix, rhs = apply_dirichlet(matrix, rhs, space, problem.g)
    solution = solve_linear(matrix, rhs, SolverConfig())
    boundary_defect = np.abs(
        solution[space.boundary_dofs]
        - (mesh.vertex_coords[space.boundary_dofs] ** 2).sum(axis=1)).max()
    ok &= boundary_defect <= 1e-12
    return ok, f"eigenvalue bounds hold: {ok}, boundary defect {boundary_defect:.2e}"


def _estimator_suite():
    mesh = build_initial_mesh(2)
    space = SpaceP1(mesh)
    affine = interpolate(space, lambda x, y: 1.0 + x - 2.0 * y)
    zero_f = lambda x, y: np.zeros(np.shape(x))
    indicators = estimate(mesh, affine, affine, zero_f, tau=1.0)
    ok = indicators.global_estimate <= 1e-12 and indicators.eta_total <= 1e-12
    partition = abs(np.sum(indicators.eta ** 2)
                    - np.sum(indicators.interior ** 2) - np.sum(indicators.jumps ** 2))
    ok &= partition <= 1e-14
    return ok, (f"zero case {indicators.global_estimate:.2e}, "
                f"partition defect {partition:.2e}")


def run_checks(printer=print) -> bool:
    """Run every suite, print one pass/fail line each, return overall success."""
    suites = [
        ("mesh refinement", _mesh_suite),
        ("quadrature exactness", _quadrature_suite),
        ("interpolation and integration", _interpolation_suite),
        ("recovered hessian", _hessian_suite),
        ("step assembly and boundary", _solver_suite),
        ("residual estimator", _estimator_suite),
    ]
    all_ok = True
    for name, suite in suites:
        ok, detail = suite()
        printer(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        all_ok &= ok
    return all_ok
