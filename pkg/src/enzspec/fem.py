"""P1 finite elements on tagged meshes.

Assembles the Neumann stiffness matrix and the per-region consistent mass
matrices, and provides subdomain Neumann/Dirichlet solves, variational
boundary-flux functionals, norms and interpolation.  All matrices are kept
per region so that coefficient-weighted forms (stiffness weighted by a
piecewise-constant permittivity, the mass B_delta = M_D + delta*M_S) are
exact linear combinations of the assembled pieces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .linalg import LUFactors, SparseMatrix, lu_factor
from .mesh import INCLUSION, SHELL, Mesh

__all__ = [
    "CoefficientField",
    "AssembledForms",
    "FEFunction",
    "FemError",
    "assemble",
    "element_gradients",
    "divergence_load_vector",
    "edge_flux_load",
    "solve_neumann",
    "solve_dirichlet",
    "boundary_flux",
    "norms",
    "interpolate",
]


class FemError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant scalar coefficient, one value per region."""

    value_inclusion: complex
    value_shell: complex

    @classmethod
    def permittivity(cls, delta: complex) -> "CoefficientField":
        return cls(1.0, delta)


@dataclass
class FEFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if len(self.values) != self.mesh.n_vertices:
            raise FemError("nodal value count does not match the mesh")


def _triangle_geometry(mesh: Mesh):
    """Areas and barycentric gradients for all triangles, vectorized."""
    p = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1])
    if np.any(area <= 0):
        raise FemError("degenerate or inverted triangle in assembly")
    # grad lambda_i = (y_j - y_k, x_k - x_j) / (2 area), (i, j, k) cyclic
    grads = np.empty((len(area), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        grads[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    grads /= (2.0 * area)[:, None, None]
    return area, grads


_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class AssembledForms:
    """Stiffness and mass matrices split by region.

    A = A_D + A_S has kernel exactly the constants on a connected mesh;
    M = M_D + M_S is the consistent mass.  mass_for / stiffness_for build
    coefficient-weighted combinations without reassembly.
    """

    def __init__(self, mesh: Mesh):
        area, grads = _triangle_geometry(mesh)
        nt = mesh.n_triangles
        tri = mesh.triangles

        rows = np.repeat(tri, 3, axis=1).ravel()            # i index
        cols = np.tile(tri, (1, 3)).ravel()                 # j index
        k_local = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
        m_local = _LOCAL_MASS[None, :, :] * area[:, None, None]

        def build(mask):
            sel = np.repeat(mask, 9)
            a = SparseMatrix(mesh.n_vertices, rows[sel], cols[sel],
                             k_local.reshape(nt, 9)[mask].ravel())
            m = SparseMatrix(mesh.n_vertices, rows[sel], cols[sel],
                             m_local.reshape(nt, 9)[mask].ravel())
            return a, m

        mask_d = mesh.regions == INCLUSION
        mask_s = mesh.regions == SHELL
        self.mesh = mesh
        self.areas = area
        self.grads = grads
        self.A_D, self.M_D = build(mask_d)
        self.A_S, self.M_S = build(mask_s)
        self.A = self.A_D + self.A_S
        self.M = self.M_D + self.M_S

    def stiffness_for(self, coeff: CoefficientField) -> SparseMatrix:
        return self.A_D.scaled(coeff.value_inclusion) + self.A_S.scaled(coeff.value_shell)

    def mass_for(self, coeff: CoefficientField) -> SparseMatrix:
        return self.M_D.scaled(coeff.value_inclusion) + self.M_S.scaled(coeff.value_shell)

    def mass_delta(self, delta: complex) -> SparseMatrix:
        return self.mass_for(CoefficientField.permittivity(delta))


def assemble(mesh: Mesh) -> AssembledForms:
    return AssembledForms(mesh)


def element_gradients(forms: AssembledForms, values: np.ndarray) -> np.ndarray:
    """Per-triangle constant gradient of a P1 function, shape (nt, 2)."""
    v = np.asarray(values)[forms.mesh.triangles]             # (nt, 3)
    return np.einsum("ti,tid->td", v, forms.grads)


def divergence_load_vector(forms: AssembledForms, field: np.ndarray) -> np.ndarray:
    """b_i = integral of F . grad(phi_i) for a per-triangle constant field F."""
    field = np.asarray(field)
    contrib = np.einsum("td,tid->ti", field, forms.grads) * forms.areas[:, None]
    b = np.zeros(forms.mesh.n_vertices, dtype=contrib.dtype)
    np.add.at(b, forms.mesh.triangles.ravel(), contrib.ravel())
    return b


def edge_flux_load(mesh: Mesh, tag: int, edge_flux) -> np.ndarray:
    """Nodal load from edge-wise constant normal flux g on edges of a tag:
    b_i = integral over the tagged edges of g * phi_i."""
    sel = np.nonzero(mesh.edge_tags == tag)[0]
    edge_flux = np.broadcast_to(np.asarray(edge_flux), (len(sel),))
    b = np.zeros(mesh.n_vertices, dtype=np.result_type(edge_flux.dtype, float))
    for g, e in zip(edge_flux, sel):
        a, c = mesh.edges[e]
        length = np.linalg.norm(mesh.vertices[c] - mesh.vertices[a])
        b[a] += 0.5 * g * length
        b[c] += 0.5 * g * length
    return b


def _weighted_mean(forms: AssembledForms, values: np.ndarray) -> complex:
    m1 = forms.M.matvec(np.ones(forms.mesh.n_vertices))
    return np.dot(m1, values) / m1.sum()


def solve_neumann(forms: AssembledForms, load: np.ndarray,
                  compat_tol: float = 1e-8, stiffness: SparseMatrix | None = None) -> FEFunction:
    """Pure-Neumann solve A h = load with mean-zero normalization.

    `load` is an assembled nodal right-hand side (use edge_flux_load and/or
    divergence_load_vector to build it).  The compatibility condition is
    that the load sums to zero; an imbalance beyond compat_tol times the
    load scale is an error, since the singular system is then unsolvable.
    """
    a = stiffness if stiffness is not None else forms.A
    load = np.asarray(load)
    scale = max(1.0, float(np.abs(load).sum()))
    imbalance = abs(load.sum())
    if imbalance > compat_tol * scale:
        raise FemError(f"Neumann compatibility violated: flux imbalance {imbalance:.3e} "
                       f"(relative {imbalance / scale:.3e})")
    n = forms.mesh.n_vertices
    m1 = forms.M.matvec(np.ones(n))
    dtype = np.result_type(a.dtype, load.dtype)
    # Lagrange multiplier pins the M-weighted mean of the solution
    big = scipy.sparse.bmat([[a.csr.astype(dtype), m1[:, None]],
                             [m1[None, :], None]], format="csc")
    rhs = np.concatenate([load.astype(dtype), [0.0]])
    sol = lu_factor(big).solve(rhs)
    h = sol[:n]
    h = h - _weighted_mean(forms, h)   # exact re-normalization
    # residual modulo the multiplier direction m1 (the singular system's range gap)
    r = a.matvec(h) - load
    r = r - np.dot(m1, r) / np.dot(m1, m1) * m1
    res = np.linalg.norm(r) / scale
    if res > 1e-8:
        raise FemError(f"Neumann solve residual too large: {res:.3e}")
    return FEFunction(forms.mesh, h)


def solve_dirichlet(forms: AssembledForms, boundary_values: dict,
                    load: np.ndarray | None = None,
                    stiffness: SparseMatrix | None = None) -> FEFunction:
    """Solve A h = load with nodal Dirichlet data per boundary tag.

    boundary_values maps edge tag -> scalar, callable(x, y) or nodal array.
    Data must be supplied for every tag present on the mesh.
    """
    mesh = forms.mesh
    a = stiffness if stiffness is not None else forms.A
    present = set(int(t) for t in np.unique(mesh.edge_tags))
    missing = present - set(boundary_values)
    if missing:
        raise FemError(f"missing Dirichlet data for boundary role(s) {sorted(missing)}")

    n = mesh.n_vertices
    dtype = np.result_type(a.dtype, np.asarray(load).dtype if load is not None else float,
                           *[np.asarray(v).dtype if isinstance(v, np.ndarray) else float
                             for v in boundary_values.values()])
    u = np.zeros(n, dtype=dtype)
    constrained = np.zeros(n, dtype=bool)
    for tag, data in boundary_values.items():
        nodes = mesh.boundary_vertices(tag)
        if callable(data):
            u[nodes] = [data(*mesh.vertices[v]) for v in nodes]
        elif isinstance(data, np.ndarray) and data.shape == (n,):
            u[nodes] = data[nodes]
        else:
            u[nodes] = data
        constrained[nodes] = True

    b = np.zeros(n, dtype=dtype) if load is None else np.asarray(load).astype(dtype)
    free = ~constrained
    acsr = a.csr.astype(dtype)
    rhs = b[free] - (acsr @ u)[free]
    aff = acsr[free][:, free]
    if aff.shape[0]:
        u[free] = lu_factor(aff.tocsc()).solve(rhs)
    # Galerkin residual on the free nodes
    res = np.linalg.norm((acsr @ u - b)[free])
    scale = max(1.0, np.linalg.norm(u), np.linalg.norm(b))
    if res > 1e-8 * scale:
        raise FemError(f"Dirichlet solve residual too large: {res:.3e}")
    return FEFunction(mesh, u)


def boundary_flux(forms: AssembledForms, values: np.ndarray, tag: int,
                  field: np.ndarray | None = None,
                  stiffness: SparseMatrix | None = None) -> complex:
    """Variationally consistent outward flux of (grad h + F) through the
    edges of a tag: the discrete residual A h + b_F summed over the tag's
    nodes equals the boundary integral of the normal component."""
    a = stiffness if stiffness is not None else forms.A
    r = a.matvec(np.asarray(values))
    if field is not None:
        r = r + divergence_load_vector(forms, field)
    nodes = forms.mesh.boundary_vertices(tag)
    total = r[nodes].sum()
    return total if np.iscomplexobj(r) else float(total)


def norms(forms: AssembledForms, values: np.ndarray, region: int | None = None):
    """(L2 norm, H1 seminorm) over the whole mesh or one region."""
    v = np.asarray(values)
    if region is None:
        m, a = forms.M, forms.A
    elif region == INCLUSION:
        m, a = forms.M_D, forms.A_D
    elif region == SHELL:
        m, a = forms.M_S, forms.A_S
    else:
        raise FemError(f"unknown region {region}")
    vc = np.conj(v)
    l2 = float(np.sqrt(abs(np.dot(vc, m.matvec(v)))))
    h1 = float(np.sqrt(abs(np.dot(vc, a.matvec(v)))))
    return l2, h1


def interpolate(mesh: Mesh, fn) -> FEFunction:
    vals = np.array([fn(x, y) for x, y in mesh.vertices])
    return FEFunction(mesh, vals)
