"""Linearised steps and the relaxed fixed-point loop.

Each step freezes the gradient direction of the previous iterate in the
diffusion tensor

    A = (p (x) p) / |p|^2 + I / tau,      p = grad of the previous iterate,

tests A : H[next iterate] with the P1 hat functions, and augments the
right-hand side with trace(H[previous]) / tau.  The tensor-valued unknown
is eliminated locally (its mass matrix is diagonal for elementwise
constants), so the linear system is of vertex size and generally
nonsymmetric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DivergenceError, InvalidArgumentError, SolverFailure
from .fespace import (FEFunction, SpaceP1, evaluate_field, gradients, l2_norm,
                      physical_points, tensor_trace, triangle_rule)
from .hessian import HessianOperator, fe_hessian, hessian_operator
from .mesh import Triangulation

logger = logging.getLogger(__name__)


@dataclass
class ProblemData:
    """Right-hand side, Dirichlet data and relaxation parameter.

    ``f`` must not change sign on the domain; ``tau`` acts as the
    timestep of the underlying pseudo-evolution.  Exact solution and
    gradient are optional and only used for error reporting.
    """

    f: Callable
    g: Callable
    exact_solution: Optional[Callable] = None
    exact_gradient: Optional[Callable] = None
    tau: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise InvalidArgumentError("tau must be positive")


@dataclass
class SolverConfig:
    increment_tol_factor: float = 10.0
    max_iterations: int = 100
    gradient_floor: float = 1e-10
    linear_solver_tol: float = 1e-10

    def __post_init__(self):
        if min(self.increment_tol_factor, self.max_iterations,
               self.gradient_floor, self.linear_solver_tol) <= 0:
            raise InvalidArgumentError("solver configuration values must be positive")


@dataclass
class SolveReport:
    """Outcome of a fixed-point solve.

    ``iterations`` counts linear solves; ``previous`` is the iterate one
    step before ``solution``, the pair the a posteriori estimator wants.
    """

    solution: FEFunction
    hessian: FEFunction
    iterations: int
    increments: list[float] = field(default_factory=list)
    converged: bool = False
    previous: Optional[FEFunction] = None


def diffusion_tensor(u: FEFunction, tau: float, eps: float = 1e-10) -> np.ndarray:
    """Per-element tensors (p (x) p) / max(|p|^2, eps) + I / tau, shape (nt, 2, 2).

    The floor only guards the exact 0/0 case; whenever |p|^2 >= eps the
    projection part has eigenvalues {0, 1}, so the spectrum always sits
    inside [1/tau, 1 + 1/tau].
    """
    if tau <= 0 or eps <= 0:
        raise InvalidArgumentError("tau and eps must be positive")
    grad = gradients(u)
    denom = np.maximum((grad ** 2).sum(axis=1), eps)
    out = grad[:, :, None] * grad[:, None, :] / denom[:, None, None]
    out[:, 0, 0] += 1.0 / tau
    out[:, 1, 1] += 1.0 / tau
    return out


def load_vector(mesh: Triangulation, f, order: int = 4) -> np.ndarray:
    """Vertex vector of integrals of f against the hat functions."""
    rule = triangle_rule(order)
    pts = physical_points(mesh, rule)
    vals = evaluate_field(f, pts[..., 0], pts[..., 1])
    per_vertex = vals @ (rule.weights[:, None] * rule.points)   # (nt, 3)
    out = np.zeros(mesh.vertex_count)
    np.add.at(out, mesh.triangle_vertices, mesh.areas[:, None] * per_vertex)
    return out


def assemble_step(mesh: Triangulation, u_prev: FEFunction, h_prev: FEFunction,
                  problem: ProblemData, config: SolverConfig | None = None,
                  operator: HessianOperator | None = None):
    """Matrix and right-hand side of one linearised step.

    The matrix applies the hat-function test of A[u_prev] : H[.] with the
    tensor unknown eliminated through the recovered-Hessian operator; the
    right-hand side integrates f (order-4 quadrature) plus the elementwise
    constant trace(h_prev) / tau.  Pass ``operator`` to reuse an assembled
    Hessian map across iterations.
    """
    config = config if config is not None else SolverConfig()
    if u_prev.space.mesh is not mesh or h_prev.space.mesh is not mesh:
        raise InvalidArgumentError("u_prev and h_prev must live on the given mesh")
    if operator is None:
        operator = hessian_operator(mesh)
    elif operator.mesh is not mesh:
        raise InvalidArgumentError("hessian operator belongs to a different mesh")

    nt = mesh.triangle_count
    tensors = diffusion_tensor(u_prev, problem.tau, config.gradient_floor)
    # frobenius pairing with each element's tensor block
    pairing = sp.csr_matrix((tensors.reshape(-1), np.arange(4 * nt),
                             4 * np.arange(nt + 1)), shape=(nt, 4 * nt))
    # hat-function integrals: |K|/3 on each vertex of K
    test = sp.csr_matrix((np.repeat(mesh.areas / 3.0, 3),
                          mesh.triangle_vertices.reshape(-1),
                          3 * np.arange(nt + 1)),
                         shape=(nt, mesh.vertex_count))
    matrix = (test.T @ (pairing @ operator.matrix)).tocsr()

    rhs = load_vector(mesh, problem.f)
    relax = mesh.areas * tensor_trace(h_prev) / (3.0 * problem.tau)
    np.add.at(rhs, mesh.triangle_vertices, relax[:, None])
    return matrix, rhs


def apply_dirichlet(matrix: sp.spmatrix, rhs: np.ndarray, space: SpaceP1, g):
    """Impose boundary values by row replacement with a right-hand side lift.

    Boundary rows become identity rows with g(vertex) on the right, and
    the boundary columns are folded into the right-hand side of the
    interior rows.  Returns new objects.
    """
    boundary = space.boundary_dofs
    coords = space.mesh.vertex_coords[boundary]
    values = evaluate_field(g, coords[:, 0], coords[:, 1])

    n = space.dof_count
    lifted = np.zeros(n)
    lifted[boundary] = values
    interior = np.ones(n)
    interior[boundary] = 0.0

    new_rhs = interior * (rhs - matrix @ lifted)
    new_rhs[boundary] = values
    keep = sp.diags(interior)
    pin = sp.diags(1.0 - interior)
    new_matrix = (keep @ matrix @ keep + pin).tocsr()
    return new_matrix, new_rhs


def solve_linear(matrix: sp.spmatrix, rhs: np.ndarray,
                 config: SolverConfig | None = None) -> np.ndarray:
    """Direct sparse solve with an explicit relative-residual check."""
    config = config if config is not None else SolverConfig()
    solution = spla.spsolve(matrix.tocsc(), rhs)
    scale = np.linalg.norm(rhs)
    residual = np.linalg.norm(matrix @ solution - rhs) if np.isfinite(solution).all() else np.inf
    relative = residual / scale if scale > 0 else residual
    if not relative <= config.linear_solver_tol:
        raise SolverFailure(
            f"linear solve reached relative residual {relative:.3e} "
            f"(tolerance {config.linear_solver_tol:.1e})", residual=relative)
    return solution


def default_initializer(mesh: Triangulation, problem: ProblemData) -> FEFunction:
    """Poisson start-up guess: the P1 solution of laplace(u) = f, u = g.

    Away from its critical points the guess has a usable gradient
    direction, which keeps the first diffusion tensor well defined.
    """
    space = SpaceP1(mesh)
    local = mesh.areas[:, None, None] * np.einsum(
        "tid,tjd->tij", mesh.basis_gradients, mesh.basis_gradients)
    verts = mesh.triangle_vertices
    rows = np.repeat(verts, 3, axis=1).reshape(-1)
    cols = np.tile(verts, (1, 3)).reshape(-1)
    stiffness = sp.coo_matrix((local.reshape(-1), (rows, cols)),
                              shape=(space.dof_count, space.dof_count)).tocsr()
    rhs = -load_vector(mesh, problem.f)
    matrix, rhs = apply_dirichlet(stiffness, rhs, space, problem.g)
    return FEFunction(space, solve_linear(matrix, rhs))


def fixed_point_solve(mesh: Triangulation, problem: ProblemData,
                      config: SolverConfig | None = None,
                      initial: FEFunction | None = None) -> SolveReport:
    """Iterate linearised steps until the L2 increment drops below 10 h^2.

    The tolerance is ``increment_tol_factor * h^2`` with h the largest
    element diameter.  Divergence (five consecutive growing increments
    that gain a factor ten) raises ``DivergenceError``; a failed linear
    solve propagates with its iteration index attached.
    """
    config = config if config is not None else SolverConfig()
    space = SpaceP1(mesh)
    if initial is None:
        current = default_initializer(mesh, problem)
    else:
        if initial.space.mesh is not mesh:
            raise InvalidArgumentError("initial guess lives on a different mesh")
        current = initial

    operator = hessian_operator(mesh)
    h = float(mesh.diameters.max())
    tolerance = config.increment_tol_factor * h * h
    increments: list[float] = []

    previous = None
    for iteration in range(1, config.max_iterations + 1):
        h_prev = fe_hessian(current)
        matrix, rhs = assemble_step(mesh, current, h_prev, problem, config, operator)
        matrix, rhs = apply_dirichlet(matrix, rhs, space, problem.g)
        try:
            coefficients = solve_linear(matrix, rhs, config)
        except SolverFailure as failure:
            failure.iteration = iteration
            raise
        if not np.isfinite(coefficients).all():
            raise DivergenceError("iterate has non-finite coefficients",
                                  iteration=iteration)
        proposed = FEFunction(space, coefficients)
        increment = l2_norm(FEFunction(space, proposed.coefficients - current.coefficients))
        increments.append(increment)
        logger.debug("iteration %d: increment %.3e (tolerance %.3e)",
                     iteration, increment, tolerance)
        if increment <= tolerance:
            return SolveReport(proposed, fe_hessian(proposed), iteration,
                               increments, True, previous=current)
        if iteration >= 6 and increments[-1] > 10.0 * increments[-6] \
                and all(b > a for a, b in zip(increments[-6:-1], increments[-5:])):
            raise DivergenceError(
                f"increments grew tenfold over five iterations "
                f"(last {increment:.3e}); try a smaller tau", iteration=iteration)
        previous = current
        current = proposed

    return SolveReport(current, fe_hessian(current), config.max_iterations,
                       increments, False, previous=previous)
