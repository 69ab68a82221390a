"""Structured meshes of simplices or axis-aligned parallelotopes in 2D/3D.

Meshes are built over an axis-aligned box domain by splitting a tensor grid
of cells. Parallelotope meshes keep the grid cells; simplex meshes split
each cell into 2 triangles (2D) or 6 tetrahedra (3D, Kuhn split). All
element maps are affine: x = origin_T + J_T @ xhat, with xhat in the unit
simplex or in (-1, 1)^d.

Meshes are immutable after construction and safe to share across threads.
"""

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .elements import make_element_pair
from .errors import DataFormatError, OutOfDomainError

KINDS = ("simplex", "parallelotope")

# Kuhn split of the unit cube: one tet per permutation of the axes, walking
# from corner 0 to corner 7; vertices are re-ordered where needed so every
# affine map has positive determinant.
_KUHN_PERMS = list(itertools.permutations(range(3)))


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box domain [lower, upper] in R^d, d in {2, 3}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("domain corners must be 1D arrays of equal length")
        if lo.size not in (2, 3):
            raise ValueError(f"domain dimension must be 2 or 3, got {lo.size}")
        if not np.all(hi > lo):
            raise ValueError("domain upper corner must exceed lower corner componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    @property
    def extents(self):
        return self.upper - self.lower

    @property
    def volume(self):
        return float(np.prod(self.extents))


@dataclass(frozen=True)
class Patch:
    """Elements whose closures touch the closure of the center element."""

    center: int
    members: tuple


class Mesh:
    """Conforming structured mesh with per-element affine geometry.

    Attributes
    ----------
    dim : int
    kind : str
        'simplex' or 'parallelotope'.
    cell_kind : str
        Reference cell name: 'triangle', 'tet', 'quad' or 'hex'.
    vertices : ndarray (n_vertices, dim)
    elements : ndarray (n_elements, n_loc) int
    h : float
        Max element diameter.
    quasi_uniformity : float
        Max/min element diameter at build time.
    """

    def __init__(self, domain, cells_per_axis, kind, vertices, elements):
        if kind not in KINDS:
            raise ValueError(f"unknown mesh kind {kind!r}")
        self.domain = domain
        self.cells_per_axis = tuple(int(c) for c in cells_per_axis)
        self.kind = kind
        self.dim = domain.dim
        self.cell_kind = _cell_kind(kind, self.dim)
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        self.n_vertices = len(self.vertices)
        self.n_elements = len(self.elements)
        if self.elements.ndim != 2 or (
            self.n_elements and (self.elements.min() < 0
                                 or self.elements.max() >= self.n_vertices)
        ):
            raise ValueError("element connectivity indexes nonexistent vertices")
        self._pair = make_element_pair(self.cell_kind)
        self._build_geometry()
        self._build_adjacency()
        self.vertices.setflags(write=False)
        self.elements.setflags(write=False)

    # -- construction helpers -------------------------------------------

    def _build_geometry(self):
        verts = self.vertices[self.elements]  # (ne, nl, d)
        d = self.dim
        if self.kind == "simplex":
            origin = verts[:, 0, :]
            jac = np.stack([verts[:, k + 1, :] - origin for k in range(d)], axis=2)
            ref_vol = 1.0 / np.prod(np.arange(1, d + 1))
        else:
            # parallelotope corners: affine map from (-1,1)^d
            origin = verts.mean(axis=1)
            axis_corner = [1, 3, 4]  # corners sharing an edge with corner 0
            jac = np.stack(
                [(verts[:, axis_corner[k], :] - verts[:, 0, :]) / 2.0 for k in range(d)],
                axis=2,
            )
            ref_vol = 2.0 ** d
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise ValueError("mesh contains an element with nonpositive volume")
        self.element_origin = origin
        self.jacobians = jac
        self.inv_jacobians = np.linalg.inv(jac)
        self.det_jacobians = det
        self.volumes = det * ref_vol
        diffs = verts[:, :, None, :] - verts[:, None, :, :]
        diam = np.sqrt((diffs ** 2).sum(axis=3)).max(axis=(1, 2))
        self.diameters = diam
        self.h = float(diam.max())
        self.quasi_uniformity = float(diam.max() / diam.min())
        for arr in (self.element_origin, self.jacobians, self.inv_jacobians,
                    self.det_jacobians, self.volumes, self.diameters):
            arr.setflags(write=False)

    def _build_adjacency(self):
        counts = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.add.at(counts[1:], self.elements.ravel(), 1)
        offsets = np.cumsum(counts)
        order = np.argsort(self.elements.ravel(), kind="stable")
        self._v2e_data = (order // self.elements.shape[1]).astype(np.int64)
        self._v2e_offsets = offsets
        self._v2e_data.setflags(write=False)
        self._v2e_offsets.setflags(write=False)

    # -- queries ---------------------------------------------------------

    def vertex_elements(self, v):
        """Ids of elements containing vertex v (ascending)."""
        return self._v2e_data[self._v2e_offsets[v]:self._v2e_offsets[v + 1]]

    @property
    def element_pair(self):
        return self._pair

    def map_to_physical(self, elem_ids, ref_points):
        """F_T(xhat) for per-point element ids; both arrays length m."""
        eid = np.asarray(elem_ids, dtype=np.int64)
        ref = np.atleast_2d(np.asarray(ref_points, dtype=float))
        return self.element_origin[eid] + np.einsum(
            "mkd,md->mk", self.jacobians[eid], ref
        )

    def map_to_reference(self, elem_ids, points):
        """Inverse affine map, per-point element ids."""
        eid = np.asarray(elem_ids, dtype=np.int64)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.einsum(
            "mdk,mk->md", self.inv_jacobians[eid], pts - self.element_origin[eid]
        )

    def __repr__(self):
        cells = "x".join(str(c) for c in self.cells_per_axis)
        return (f"Mesh({self.kind}, {self.dim}D, cells={cells}, "
                f"{self.n_elements} elements, {self.n_vertices} vertices, h={self.h:.4g})")


def _cell_kind(kind, dim):
    if kind == "simplex":
        return "triangle" if dim == 2 else "tet"
    return "quad" if dim == 2 else "hex"


def build_structured_mesh(domain, cells_per_axis, kind):
    """Mesh an axis-aligned box with a structured grid of cells.

    Parameters
    ----------
    domain : Domain
    cells_per_axis : sequence of int, length d, all >= 1
    kind : str
        'parallelotope' keeps the grid cells; 'simplex' splits every cell
        into 2 triangles (2D) or 6 tetrahedra (3D).
    """
    cells = tuple(int(c) for c in cells_per_axis)
    if len(cells) != domain.dim:
        raise ValueError("cells_per_axis length must match domain dimension")
    if any(c < 1 for c in cells):
        raise ValueError(f"cells_per_axis must all be >= 1, got {cells}")
    d = domain.dim
    axes = [np.linspace(domain.lower[k], domain.upper[k], cells[k] + 1) for k in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([g.ravel() for g in grids], axis=1)

    nv = [cells[k] + 1 for k in range(d)]

    def vid(idx):
        # flat vertex id from d-index (ij indexing, x fastest-varying last)
        out = idx[0]
        for k in range(1, d):
            out = out * nv[k] + idx[k]
        return out

    cell_ranges = [np.arange(c) for c in cells]
    cgrid = np.meshgrid(*cell_ranges, indexing="ij")
    cidx = np.stack([g.ravel() for g in cgrid], axis=1)  # (ncells, d)

    if d == 2:
        i, j = cidx[:, 0], cidx[:, 1]
        v00 = vid((i, j))
        v10 = vid((i + 1, j))
        v11 = vid((i + 1, j + 1))
        v01 = vid((i, j + 1))
        if kind == "parallelotope":
            elements = np.stack([v00, v10, v11, v01], axis=1)
        else:
            tri1 = np.stack([v00, v10, v11], axis=1)
            tri2 = np.stack([v00, v11, v01], axis=1)
            elements = np.empty((2 * len(cidx), 3), dtype=np.int64)
            elements[0::2] = tri1
            elements[1::2] = tri2
    else:
        i, j, k = cidx[:, 0], cidx[:, 1], cidx[:, 2]
        corners = {}
        for di, dj, dk in itertools.product((0, 1), repeat=3):
            corners[(di, dj, dk)] = vid((i + di, j + dj, k + dk))
        if kind == "parallelotope":
            elements = np.stack(
                [
                    corners[0, 0, 0], corners[1, 0, 0], corners[1, 1, 0], corners[0, 1, 0],
                    corners[0, 0, 1], corners[1, 0, 1], corners[1, 1, 1], corners[0, 1, 1],
                ],
                axis=1,
            )
        else:
            tets = []
            for perm in _KUHN_PERMS:
                walk = [(0, 0, 0)]
                cur = [0, 0, 0]
                for axis in perm:
                    cur = cur.copy()
                    cur[axis] += 1
                    walk.append(tuple(cur))
                # odd permutations give a negative determinant; swap to fix
                sign = _perm_sign(perm)
                if sign < 0:
                    walk[1], walk[2] = walk[2], walk[1]
                tets.append(np.stack([corners[w] for w in walk], axis=1))
            elements = np.empty((6 * len(cidx), 4), dtype=np.int64)
            for t, tet in enumerate(tets):
                elements[t::6] = tet
    return Mesh(domain, cells, kind, vertices, elements)


def _perm_sign(perm):
    sign = 1
    p = list(perm)
    for a in range(len(p)):
        for b in range(a + 1, len(p)):
            if p[a] > p[b]:
                sign = -sign
    return sign


def refine_uniform(mesh):
    """Halve every grid cell; h drops by exactly 2 on structured meshes."""
    cells = tuple(2 * c for c in mesh.cells_per_axis)
    return build_structured_mesh(mesh.domain, cells, mesh.kind)


# -- point location -------------------------------------------------------

_REF_TOL = 1e-10


def _inside_reference(kind, ref, tol=_REF_TOL):
    if kind in ("triangle", "tet"):
        return (ref.min(axis=1) >= -tol) & (ref.sum(axis=1) <= 1.0 + tol)
    return np.abs(ref).max(axis=1) <= 1.0 + tol


def locate_points(mesh, points):
    """Find the containing element and reference coordinates of each point.

    Points on shared faces/vertices resolve to the smallest containing
    element id. Raises OutOfDomainError (with offending indices) for points
    outside the closed domain.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != mesh.dim:
        raise ValueError("point dimension does not match mesh dimension")
    dom = mesh.domain
    tol = 1e-12 * float(dom.extents.max())
    bad = np.nonzero(
        (pts < dom.lower - tol).any(axis=1) | (pts > dom.upper + tol).any(axis=1)
    )[0]
    if bad.size:
        raise OutOfDomainError(
            f"{bad.size} point(s) outside the domain (first at index {bad[0]})",
            indices=bad,
        )
    cells = np.asarray(mesh.cells_per_axis)
    widths = dom.extents / cells
    frac = (pts - dom.lower) / widths
    cell_idx = np.clip(np.floor(frac).astype(np.int64), 0, cells - 1)

    near = np.abs(frac - np.rint(frac)).min(axis=1) < 1e-9
    eids = np.full(len(pts), -1, dtype=np.int64)
    refs = np.zeros_like(pts)

    fast = np.nonzero(~near)[0]
    if fast.size:
        flat = _flat_cell(mesh, cell_idx[fast])
        sub = _sub_count(mesh)
        remaining = fast
        flat_rem = flat
        for s in range(sub):
            if remaining.size == 0:
                break
            cand = flat_rem * sub + s
            ref = mesh.map_to_reference(cand, pts[remaining])
            ok = _inside_reference(mesh.cell_kind, ref)
            hit = remaining[ok]
            eids[hit] = cand[ok]
            refs[hit] = ref[ok]
            remaining = remaining[~ok]
            flat_rem = flat_rem[~ok]
        near_extra = remaining
    else:
        near_extra = np.array([], dtype=np.int64)

    slow = np.concatenate([np.nonzero(near)[0], near_extra])
    for p in slow:
        eid, ref = _locate_slow(mesh, pts[p], cell_idx[p], frac[p])
        eids[p] = eid
        refs[p] = ref
    return eids, refs


def _sub_count(mesh):
    if mesh.kind == "parallelotope":
        return 1
    return 2 if mesh.dim == 2 else 6


def _flat_cell(mesh, cidx):
    cells = mesh.cells_per_axis
    out = cidx[..., 0]
    for k in range(1, mesh.dim):
        out = out * cells[k] + cidx[..., k]
    return out


def _locate_slow(mesh, x, cidx, frac):
    cells = np.asarray(mesh.cells_per_axis)
    cand_axes = []
    for k in range(mesh.dim):
        opts = {int(cidx[k])}
        if abs(frac[k] - round(frac[k])) < 1e-9:
            b = int(round(frac[k]))
            for c in (b - 1, b):
                if 0 <= c < cells[k]:
                    opts.add(c)
        cand_axes.append(sorted(opts))
    sub = _sub_count(mesh)
    candidates = []
    for combo in itertools.product(*cand_axes):
        flat = _flat_cell(mesh, np.asarray(combo))
        candidates.extend(range(int(flat) * sub, int(flat) * sub + sub))
    for eid in sorted(candidates):
        ref = mesh.map_to_reference(np.asarray([eid]), x[None, :])[0]
        if _inside_reference(mesh.cell_kind, ref[None, :])[0]:
            return eid, ref
    raise RuntimeError(f"point {x} not located in any candidate element")


def locate_point(mesh, x):
    """Single-point convenience wrapper around locate_points."""
    eids, refs = locate_points(mesh, np.asarray(x, dtype=float)[None, :])
    return int(eids[0]), refs[0]


def element_patch(mesh, eid):
    """All elements whose closure intersects the closure of element `eid`.

    On a conforming mesh that is exactly the set of elements sharing at
    least one vertex with `eid` (itself included).
    """
    if not 0 <= eid < mesh.n_elements:
        raise ValueError(f"element id {eid} out of range")
    members = set()
    for v in mesh.elements[eid]:
        members.update(mesh.vertex_elements(int(v)).tolist())
    return Patch(center=int(eid), members=tuple(sorted(members)))


# -- persistence / export -------------------------------------------------

_VTK_CELL_TYPES = {"triangle": 5, "quad": 9, "tet": 10, "hex": 12}


def to_vtk(mesh, path):
    """Write the mesh as legacy ASCII VTK (POINTS/CELLS/CELL_TYPES)."""
    nl = mesh.elements.shape[1]
    lines = [
        "# vtk DataFile Version 3.0",
        "fetps mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    for v in mesh.vertices:
        coords = list(v) + [0.0] * (3 - mesh.dim)
        lines.append(" ".join(f"{c:.17g}" for c in coords))
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (nl + 1)}")
    for e in mesh.elements:
        lines.append(" ".join([str(nl)] + [str(int(v)) for v in e]))
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    ct = _VTK_CELL_TYPES[mesh.cell_kind]
    lines.extend([str(ct)] * mesh.n_elements)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def mesh_to_dict(mesh):
    """JSON-ready description: vertices, elements, kind, plus grid provenance."""
    return {
        "kind": mesh.kind,
        "dim": mesh.dim,
        "vertices": mesh.vertices.tolist(),
        "elements": mesh.elements.tolist(),
        "structured": {
            "lower": mesh.domain.lower.tolist(),
            "upper": mesh.domain.upper.tolist(),
            "cells_per_axis": list(mesh.cells_per_axis),
        },
    }


def mesh_from_dict(data):
    try:
        kind = data["kind"]
        grid = data["structured"]
        domain = Domain(np.asarray(grid["lower"]), np.asarray(grid["upper"]))
        cells = grid["cells_per_axis"]
        vertices = np.asarray(data["vertices"], dtype=float)
        elements = np.asarray(data["elements"], dtype=np.int64)
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"invalid mesh description: {exc}") from exc
    mesh = Mesh(domain, cells, kind, vertices, elements)
    return mesh


def save_mesh_json(mesh, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(mesh_to_dict(mesh), f)


def load_mesh_json(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid mesh JSON: {exc}") from exc
    return mesh_from_dict(data)
