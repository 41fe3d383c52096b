"""Shared brute-force oracles for the test suite.

Everything here recomputes geometry from scratch (affine solves, explicit
edge dictionaries, plain loops) so it stays independent of the vectorised
code paths it is used to check.
"""

import numpy as np

from inflap.fespace import triangle_rule


def tri_area(mesh, k):
    p = mesh.vertex_coords[mesh.triangle_vertices[k]]
    return 0.5 * abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                     - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))


def affine_gradient(mesh, k, values):
    """Gradient on element k from a 3x3 Vandermonde solve."""
    p = mesh.vertex_coords[mesh.triangle_vertices[k]]
    vander = np.column_stack([np.ones(3), p])
    return np.linalg.solve(vander, values[mesh.triangle_vertices[k]])[1:]


def hat_gradients(mesh, k):
    p = mesh.vertex_coords[mesh.triangle_vertices[k]]
    vander = np.column_stack([np.ones(3), p])
    rows = []
    for i in range(3):
        unit = np.zeros(3)
        unit[i] = 1.0
        rows.append(np.linalg.solve(vander, unit)[1:])
    return np.array(rows)


def edge_dictionary(mesh):
    """Sorted endpoint pair -> list of adjacent triangle ids."""
    edges = {}
    for k, verts in enumerate(mesh.triangle_vertices):
        v = [int(x) for x in verts]
        for a, b in ((v[0], v[1]), (v[1], v[2]), (v[2], v[0])):
            edges.setdefault((min(a, b), max(a, b)), []).append(k)
    return edges


def outward_normal(mesh, k, a, b):
    pa, pb = mesh.vertex_coords[a], mesh.vertex_coords[b]
    t = pb - pa
    n = np.array([-t[1], t[0]]) / np.linalg.norm(t)
    centroid = mesh.vertex_coords[mesh.triangle_vertices[k]].mean(axis=0)
    if n @ (0.5 * (pa + pb) - centroid) < 0:
        n = -n
    return n


def brute_saddle(mesh, u_prev_coeffs, f, g, tau, eps=1e-10, dirichlet=True):
    """Dense coupled system in the unknowns [U (nv); H (4 nt, row-major)].

    The first nv rows test A[u_prev] : H with the hat functions (Dirichlet
    rows replaced when requested); the remaining rows impose the
    elementwise Hessian identity |K| H = edge terms(U).  Returns the
    matrix, a callable producing the right-hand side for given previous
    Hessian matrices, and the boundary dof ids.
    """
    nv, nt = mesh.vertex_count, mesh.triangle_count
    tris = mesh.triangle_vertices
    coords = mesh.vertex_coords
    n = nv + 4 * nt
    matrix = np.zeros((n, n))

    tensors = []
    for k in range(nt):
        grad = affine_gradient(mesh, k, u_prev_coeffs)
        denom = max(grad @ grad, eps)
        tensors.append(np.outer(grad, grad) / denom + np.eye(2) / tau)
    tensors = np.array(tensors)

    boundary = np.flatnonzero(mesh.vertex_on_boundary)
    for k in range(nt):
        w = tri_area(mesh, k) / 3.0
        for i in tris[k]:
            for r in range(2):
                for c in range(2):
                    matrix[i, nv + 4 * k + 2 * r + c] += w * tensors[k, r, c]

    for k in range(nt):
        for comp in range(4):
            matrix[nv + 4 * k + comp, nv + 4 * k + comp] = tri_area(mesh, k)

    for (a, b), adjacent in edge_dictionary(mesh).items():
        length = np.linalg.norm(coords[b] - coords[a])
        weight = 0.5 if len(adjacent) == 2 else 1.0
        for k in adjacent:
            normal = outward_normal(mesh, k, a, b)
            for source in adjacent:
                basis = hat_gradients(mesh, source)
                for i in range(3):
                    col = tris[source][i]
                    for r in range(2):
                        for c in range(2):
                            matrix[nv + 4 * k + 2 * r + c, col] -= \
                                weight * length * basis[i, r] * normal[c]

    if dirichlet:
        for i in boundary:
            matrix[i, :] = 0.0
            matrix[i, i] = 1.0

    rule = triangle_rule(4)

    def rhs_for(h_prev_mats):
        rhs = np.zeros(n)
        for k in range(nt):
            area = tri_area(mesh, k)
            trace = h_prev_mats[k, 0, 0] + h_prev_mats[k, 1, 1]
            p = coords[tris[k]]
            for wq, lam in zip(rule.weights, rule.points):
                x, y = lam @ p
                value = float(f(x, y)) + trace / tau
                for i in range(3):
                    rhs[tris[k][i]] += area * wq * value * lam[i]
        if dirichlet:
            for i in boundary:
                rhs[i] = float(g(coords[i, 0], coords[i, 1]))
        return rhs

    return matrix, rhs_for, boundary


def schur_eliminate(matrix, nv):
    """Fold the Hessian block back onto the vertex block.

    The lower-right block is diagonal, so H = D^-1 B U substitutes
    directly into the upper rows.
    """
    coupling = matrix[:nv, nv:]
    diag = np.diag(matrix[nv:, nv:]).copy()
    to_u = -matrix[nv:, :nv]
    return matrix[:nv, :nv] + coupling @ (to_u / diag[:, None])
