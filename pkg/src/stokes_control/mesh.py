"""
Structured two-level triangulations.

Coarse meshes are built on an integer lattice so that vertices shared between
cells (and between the sub-squares of the L-shape) are identified exactly.
The fine mesh is the red refinement of the coarse one: every coarse triangle
is split into four by joining its edge midpoints, so the fine lattice is the
coarse lattice with half the spacing.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class BoundaryTag(IntEnum):
    DIRICHLET = 1
    CONTROL = 2
    NEUMANN = 3


PRESETS = ("unit-square-example", "l-shape-example", "mixed-square")

_ALIASES = {
    "square": "unit-square-example",
    "unit-square": "unit-square-example",
    "lshape": "l-shape-example",
    "l-shape": "l-shape-example",
    "mixed": "mixed-square",
}


@dataclass(frozen=True)
class DomainSpec:
    """
    Polygonal domain with one boundary tag per polygon edge.

    Edge ``k`` joins ``polygon[k]`` to ``polygon[k + 1]`` (cyclically) and
    carries ``edge_tags[k]``.
    """

    preset: str
    polygon: np.ndarray
    edge_tags: tuple
    origin: tuple
    # cells of the unit lattice (i, j) that make up the domain when n = 1,
    # given as a list of (i0, j0, width, height) blocks in units of 1/n
    blocks: tuple
    unit: float

    @property
    def area(self):
        x, y = self.polygon[:, 0], self.polygon[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def has_neumann(self):
        return BoundaryTag.NEUMANN in self.edge_tags

    @property
    def has_dirichlet(self):
        return BoundaryTag.DIRICHLET in self.edge_tags


def make_domain(preset):
    """Return the :class:`DomainSpec` for a preset name (aliases accepted)."""
    name = _ALIASES.get(preset, preset)
    D, C, N = BoundaryTag.DIRICHLET, BoundaryTag.CONTROL, BoundaryTag.NEUMANN
    if name == "unit-square-example":
        poly = [(0, 0), (1, 0), (1, 1), (0, 1)]
        return DomainSpec(name, np.array(poly, float), (D, C, C, C),
                          (0.0, 0.0), ((0, 0, 1, 1),), 1.0)
    if name == "mixed-square":
        poly = [(0, 0), (1, 0), (1, 1), (0, 1)]
        return DomainSpec(name, np.array(poly, float), (D, N, D, C),
                          (0.0, 0.0), ((0, 0, 1, 1),), 1.0)
    if name == "l-shape-example":
        poly = [(-0.5, -0.5), (0, -0.5), (0, 0), (0.5, 0), (0.5, 0.5),
                (-0.5, 0.5)]
        # three half-unit sub-squares: lower-left, upper-left, upper-right
        return DomainSpec(name, np.array(poly, float), (C, D, D, C, C, C),
                          (-0.5, -0.5), ((0, 0, 1, 1), (0, 1, 1, 1),
                                         (1, 1, 1, 1)), 0.5)
    raise ValueError("unknown domain preset: {!r}".format(preset))


@dataclass(frozen=True)
class TriMesh:
    """Single-level triangulation on an integer lattice."""

    lattice: np.ndarray      # (nv, 2) integer coordinates
    triangles: np.ndarray    # (nt, 3), counterclockwise
    spacing: float           # lattice step
    origin: tuple

    @property
    def vertices(self):
        return np.asarray(self.origin) + self.spacing * self.lattice

    @property
    def num_vertices(self):
        return self.lattice.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def areas(self):
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self):
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]],
                     axis=1)
        return np.sqrt((e ** 2).sum(axis=2)).max(axis=1)

    def edges(self):
        """
        Unique undirected edges.

        Returns
        -------
        edges : (ne, 2) int array, sorted vertex pairs
        tri_edges : (nt, 3) int array; local edge k joins local vertices
            k and k+1
        counts : (ne,) number of triangles sharing each edge
        """
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(flat, axis=0, return_inverse=True,
                                           return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    def boundary_edges(self):
        """Boundary edges oriented as in their (unique) triangle."""
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]],
                         axis=1).reshape(-1, 2)
        _, inverse, counts = np.unique(np.sort(local, axis=1), axis=0,
                                       return_inverse=True, return_counts=True)
        on_bnd = counts[inverse.ravel()] == 1
        return local[on_bnd]


def build_coarse(domain, n):
    """
    Structured coarse triangulation of a preset domain.

    Every lattice cell is split by its lower-left to upper-right diagonal.
    For the L-shape ``n`` counts cells per half-unit side.

    Parameters
    ----------
    domain : DomainSpec or str
    n : int, n >= 1

    Returns
    -------
    TriMesh
    """
    if isinstance(domain, str):
        domain = make_domain(domain)
    if int(n) != n or n < 1:
        raise ValueError("subdivision count must be a positive integer")
    n = int(n)
    cells = []
    for i0, j0, w, hgt in domain.blocks:
        ii, jj = np.meshgrid(np.arange(i0 * n, (i0 + w) * n),
                             np.arange(j0 * n, (j0 + hgt) * n), indexing="xy")
        cells.append(np.stack([ii.ravel(), jj.ravel()], axis=1))
    cells = np.concatenate(cells)
    corners = np.concatenate([cells, cells + [1, 0], cells + [1, 1],
                              cells + [0, 1]])
    # lexicographic (y, x) order gives row-major numbering
    lattice, inv = np.unique(corners[:, ::-1], axis=0, return_inverse=True)
    lattice = lattice[:, ::-1]
    inv = inv.ravel()
    nc = cells.shape[0]
    v00, v10, v11, v01 = (inv[k * nc:(k + 1) * nc] for k in range(4))
    tris = np.empty((2 * nc, 3), dtype=np.int64)
    tris[0::2] = np.stack([v00, v10, v11], axis=1)
    tris[1::2] = np.stack([v00, v11, v01], axis=1)
    return TriMesh(lattice.astype(np.int64), tris, domain.unit / n,
                   domain.origin)


def check_conforming(mesh):
    """Raise ``ValueError`` unless the mesh is a positively oriented,
    conforming triangulation."""
    if np.any(mesh.areas() <= 0):
        raise ValueError("mesh has degenerate or clockwise triangles")
    t = mesh.triangles
    directed = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]],
                        axis=1).reshape(-1, 2)
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    if np.any(dcounts > 1):
        raise ValueError("non-conforming mesh: edge traversed twice in the "
                         "same direction")
    edges, _, counts = mesh.edges()
    if np.any(counts > 2):
        raise ValueError("non-conforming mesh: edge shared by more than two "
                         "triangles")
    # a hanging node sits in the interior of an edge that only one side sees
    lat = mesh.lattice
    for a, b in edges[counts == 1]:
        pa, pb = lat[a], lat[b]
        d = pb - pa
        rel = lat - pa
        cross = d[0] * rel[:, 1] - d[1] * rel[:, 0]
        dot = rel @ d
        inside = (cross == 0) & (dot > 0) & (dot < d @ d)
        if np.any(inside):
            raise ValueError("non-conforming mesh: hanging node on edge "
                             "({}, {})".format(a, b))


@dataclass(frozen=True)
class TwoLevelMesh:
    """
    Coarse mesh, its red refinement and the maps between them.

    Fine vertices ``0..nv_coarse-1`` coincide with the coarse vertices; fine
    vertex ``nv_coarse + e`` is the midpoint of coarse edge ``e``.  Fine
    triangles ``4k..4k+3`` are the children of coarse triangle ``k``, the last
    of them being the interior (midpoint) child.
    """

    coarse: TriMesh
    fine: TriMesh
    parent: np.ndarray            # (nt_fine,) coarse triangle index
    coarse_edges: np.ndarray      # (ne_coarse, 2)
    midpoint: np.ndarray          # (ne_coarse,) fine vertex index
    domain: DomainSpec = None
    boundary: "BoundaryData" = None

    @property
    def h(self):
        return float(self.fine.diameters().max())

    @property
    def H(self):
        return float(self.coarse.diameters().max())


def refine_red(coarse, domain=None):
    """
    Red (midpoint) refinement of a conforming coarse mesh.

    If ``domain`` is given the boundary is classified as well.
    """
    check_conforming(coarse)
    edges, tri_edges, _ = coarse.edges()
    nvc = coarse.num_vertices
    lattice = np.concatenate([2 * coarse.lattice,
                              coarse.lattice[edges[:, 0]]
                              + coarse.lattice[edges[:, 1]]])
    mid = nvc + np.arange(edges.shape[0])
    a, b, c = coarse.triangles.T
    mab, mbc, mca = (mid[tri_edges[:, k]] for k in range(3))
    children = np.stack([
        np.stack([a, mab, mca], axis=1),
        np.stack([mab, b, mbc], axis=1),
        np.stack([mca, mbc, c], axis=1),
        np.stack([mab, mbc, mca], axis=1),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(coarse.num_triangles), 4)
    fine = TriMesh(lattice, children, coarse.spacing / 2, coarse.origin)
    mesh = TwoLevelMesh(coarse, fine, parent, edges, mid, domain)
    if domain is not None:
        bd = classify_boundary(mesh, domain)
        mesh = TwoLevelMesh(coarse, fine, parent, edges, mid, domain, bd)
    return mesh


@dataclass(frozen=True)
class BoundaryData:
    """Boundary classification of the fine mesh (and coarse edge tags)."""

    edges: np.ndarray            # (nb, 2) fine boundary edges
    tags: np.ndarray             # (nb,) BoundaryTag values
    coarse_edges: np.ndarray
    coarse_tags: np.ndarray
    dirichlet_closure: np.ndarray   # vertices on closure(Gamma_D)
    control_closure: np.ndarray     # vertices on closure(Gamma_C)
    neumann_closure: np.ndarray     # vertices on closure(Gamma_N)
    control_vertices: np.ndarray    # Gamma_C vertices not touching D or N
    num_vertices: int = field(default=0)

    def vertex_codes(self):
        """Integer code per fine vertex: 0 interior, otherwise the tag of the
        vertex, junctions taking the pinned (Dirichlet/Neumann) tag."""
        code = np.zeros(self.num_vertices, dtype=np.int64)
        code[self.control_closure] = BoundaryTag.CONTROL
        code[self.neumann_closure] = BoundaryTag.NEUMANN
        code[self.dirichlet_closure] = BoundaryTag.DIRICHLET
        return code


def _tag_edges(mesh, bedges, domain):
    """Tag each boundary edge by the polygon segment containing it."""
    # polygon in lattice units of this mesh (exact for the presets)
    poly = np.rint((domain.polygon - np.asarray(domain.origin))
                   / mesh.spacing).astype(np.int64)
    if not np.allclose(poly * mesh.spacing + np.asarray(domain.origin),
                       domain.polygon, atol=1e-14):
        raise ValueError("polygon vertices are not lattice points")
    lat = mesh.lattice
    pa, pb = lat[bedges[:, 0]], lat[bedges[:, 1]]
    tags = np.zeros(len(bedges), dtype=np.int64)
    nseg = len(poly)
    for k in range(nseg):
        s0, s1 = poly[k], poly[(k + 1) % nseg]
        d = s1 - s0
        on = np.ones(len(bedges), dtype=bool)
        for q in (pa, pb):
            rel = q - s0
            cross = d[0] * rel[:, 1] - d[1] * rel[:, 0]
            dot = rel @ d
            on &= (cross == 0) & (dot >= 0) & (dot <= d @ d)
        if np.any(on & (tags != 0)):
            raise ValueError("boundary edge lies on two polygon segments")
        tags[on] = domain.edge_tags[k]
    if np.any(tags == 0):
        raise ValueError("{} boundary edge(s) straddle tagged segments or lie "
                         "off the polygon".format(int(np.sum(tags == 0))))
    return tags


def classify_boundary(mesh, domain):
    """
    Tag fine and coarse boundary edges and derive the vertex sets.

    A control vertex lies on Gamma_C and is not an endpoint of any Dirichlet
    or Neumann edge.
    """
    if isinstance(domain, str):
        domain = make_domain(domain)
    fb = mesh.fine.boundary_edges()
    ftags = _tag_edges(mesh.fine, fb, domain)
    cb = mesh.coarse.boundary_edges()
    ctags = _tag_edges(mesh.coarse, cb, domain)

    def closure(tag):
        return np.unique(fb[ftags == tag].ravel())

    dcl = closure(BoundaryTag.DIRICHLET)
    ccl = closure(BoundaryTag.CONTROL)
    ncl = closure(BoundaryTag.NEUMANN)
    control = np.setdiff1d(ccl, np.union1d(dcl, ncl))
    return BoundaryData(fb, ftags, cb, ctags, dcl, ccl, ncl, control,
                        mesh.fine.num_vertices)


def build_two_level(domain, n):
    """Coarse mesh with ``n`` subdivisions, refined and classified."""
    if isinstance(domain, str):
        domain = make_domain(domain)
    return refine_red(build_coarse(domain, n), domain)


def mesh_sizes(mesh):
    """
    Return ``(h, H, spacing)``: max fine diameter, max coarse diameter and
    the fine lattice step.
    """
    return mesh.h, mesh.H, mesh.fine.spacing


def level_to_n(example, level):
    """
    Coarse subdivision count for a study level.

    Square: level ``i`` has fine spacing ``2**-i`` (coarse ``n = 2**(i-1)``).
    L-shape: level ``i`` has ``2**i`` coarse cells per half-unit side.
    """
    name = _ALIASES.get(example, example)
    if level < 1:
        raise ValueError("levels start at 1")
    if name in ("unit-square-example", "mixed-square"):
        return 2 ** (level - 1)
    if name == "l-shape-example":
        return 2 ** level
    raise ValueError("unknown domain preset: {!r}".format(example))
