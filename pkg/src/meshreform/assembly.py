"""Placing replacement parts and restoring the original contact graph."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .mesh import SurfaceSamples, TriangleMesh, sample_surface, Part
from .obb import OrientedBox
from .part_analysis import PartDescriptor

logger = logging.getLogger(__name__)

# sign patterns of proper rotations when axes are matched by extent order
_PROPER_SIGNS = np.array([
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
])


@dataclass
class PlacedPart:
    """A database part posed at a query part's location.

    The replacement's OBB frame is mapped onto the query part's frame and
    its dominant dimension is scaled to match; the two cross dimensions (and
    therefore thickness) stay untouched. ``displacement`` holds the contact
    restoration offset.
    """

    part_id: int
    source_index: int
    linear: np.ndarray                     # (3, 3) rotation @ axis scale
    offset: np.ndarray                     # (3,) translation before displacement
    scale: float                           # factor along the dominant axis
    box: OrientedBox                       # placed OBB (pre-displacement)
    displacement: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def transform_points(self, pts):
        return np.atleast_2d(pts) @ self.linear.T + (self.offset + self.displacement)

    def placed_box(self) -> OrientedBox:
        return OrientedBox(self.box.center + self.displacement,
                           self.box.axes.copy(), self.box.half_extents.copy())

    def placed_mesh(self, db) -> TriangleMesh:
        src = db.part(self.source_index).mesh
        if src is None:
            raise ValueError(f"database part {self.source_index} has no mesh")
        return TriangleMesh(self.transform_points(src.vertices), src.faces.copy())

    def placed_samples(self, db, n=2000, seed=0) -> SurfaceSamples:
        mesh = self.placed_mesh(db)
        return sample_surface(Part(id=self.part_id, mesh=mesh), n, seed=seed)

    def placed_descriptor(self, db) -> PartDescriptor:
        """Descriptor of the placed geometry, recomputed analytically from
        the source descriptor (no re-fitting)."""
        src = db.part(self.source_index).descriptor
        box = self.placed_box()
        mesh = self.placed_mesh(db)
        area_ratio = mesh.surface_area() / box.surface_area if box.surface_area > 0 else np.inf
        from .part_analysis import (CURVILINEAR_AREA_RATIO, ELONGATION_RATIO,
                                    LINEAR_AREA_RATIO)
        extents = box.extents
        elongated = extents[0] >= ELONGATION_RATIO * max(extents[1], 1e-30)
        seg = np.stack([box.center - box.half_extents[0] * box.axes[0],
                        box.center + box.half_extents[0] * box.axes[0]])
        bary = self.transform_points(src.barycenter)[0]
        return PartDescriptor(
            obb=box, size_vec=extents.copy(), area_ratio=float(area_ratio),
            thickness=src.thickness, thickness_fallback=src.thickness_fallback,
            is_linear=bool(elongated and area_ratio >= LINEAR_AREA_RATIO),
            curvilinear=bool(area_ratio < CURVILINEAR_AREA_RATIO),
            dominant_axis=box.axes[0].copy(), segment=seg, barycenter=bary)


def place_replacements(descriptors: dict, assignment, db,
                       query_samples: Optional[dict] = None,
                       rms_points=400, seed=0) -> list:
    """Pose each assigned database part at its query part.

    Axes are matched by descending extent; among the four proper-rotation
    alignments the one with the smallest sample RMS to the query part wins.
    The dominant extent is scaled to match the query part's.
    """
    placed = []
    for pid in sorted(descriptors):
        q = descriptors[pid]
        src_idx = int(assignment.labels[pid]) if hasattr(assignment, "labels") \
            else int(assignment[pid])
        r = db.part(src_idx).descriptor
        if q.obb.degenerate or r.obb.degenerate or r.obb.half_extents[0] <= 0:
            raise ValueError(f"degenerate OBB for part {pid} or candidate {src_idx}")
        scale = q.obb.half_extents[0] / r.obb.half_extents[0]
        s_diag = np.diag([scale, 1.0, 1.0])

        r_mesh = db.part(src_idx).mesh
        cand_pts = None
        if r_mesh is not None:
            n = min(rms_points, max(3 * len(r_mesh.faces), 16))
            cand_pts = sample_surface(Part(id=src_idx, mesh=r_mesh), n, seed=seed).positions
        q_pts = None
        if query_samples is not None and pid in query_samples:
            q_pts = query_samples[pid].positions[:rms_points]

        best = None
        best_rms = np.inf
        for signs in _PROPER_SIGNS:
            axes_q = q.obb.axes * signs[:, None]
            linear = axes_q.T @ s_diag @ r.obb.axes
            offset = q.obb.center - linear @ r.obb.center
            if cand_pts is None or q_pts is None:
                best = (linear, offset, axes_q)
                break
            mapped = cand_pts @ linear.T + offset
            rms = float(np.sqrt(kernels.nearest_sq_dists(mapped, q_pts).mean()))
            if rms < best_rms:
                best_rms = rms
                best = (linear, offset, axes_q)
        linear, offset, axes_q = best
        box = OrientedBox(q.obb.center.copy(), axes_q.copy(),
                          np.array([q.obb.half_extents[0],
                                    r.obb.half_extents[1],
                                    r.obb.half_extents[2]]))
        placed.append(PlacedPart(part_id=pid, source_index=src_idx,
                                 linear=linear, offset=offset, scale=float(scale),
                                 box=box))
    return placed


# ---------------------------------------------------------------------------
# contact restoration
# ---------------------------------------------------------------------------

def closest_point_on_placed(placed: PlacedPart, db, point, samples=None):
    """Closest surface point of a placed part to ``point``: nearest sample,
    refined by projecting onto that sample's triangle."""
    if samples is None:
        samples = placed.placed_samples(db)
    d2 = ((samples.positions - point) ** 2).sum(axis=1)
    k = int(np.argmin(d2))
    mesh_src = db.part(placed.source_index).mesh
    face = mesh_src.faces[samples.face_indices[k]]
    tri = placed.transform_points(mesh_src.vertices[face])
    return _project_point_triangle(np.asarray(point, dtype=float), tri)


def _project_point_triangle(p, tri):
    a, b, c = tri
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0 and d2 <= 0:
        return a
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        return a + ab * (d1 / (d1 - d3))
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        return a + ac * (d2 / (d2 - d6))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + (c - b) * w
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


@dataclass
class RestoreReport:
    displacements: dict
    fixed: dict                  # component index -> fixed part id
    objective_before: float
    objective_after: float
    foot_points: dict            # edge key -> (p_i, p_j)


def restore_contacts(placed: list, contact_graph, db,
                     foot_samples: Optional[dict] = None):
    """Translate placed parts so the original contact points close up.

    Per connected component of the part-part contact graph, the part with
    the most contacts is fixed (ties to the smallest id) and the quadratic
    gap objective is minimized in closed form through its normal equations
    (one graph Laplacian solve per coordinate). Ground edges carry no second
    part and do not enter the solve. Returns (new placed list, report).
    """
    by_id = {p.part_id: p for p in placed}
    edges = [e for e in contact_graph.part_edges()
             if e.i in by_id and e.j in by_id]

    if foot_samples is None:
        foot_samples = {p.part_id: p.placed_samples(db) for p in placed}

    foot = {}
    for e in edges:
        pi = closest_point_on_placed(by_id[e.i], db, e.contact_point, foot_samples[e.i])
        pj = closest_point_on_placed(by_id[e.j], db, e.contact_point, foot_samples[e.j])
        foot[e.key()] = (pi, pj)

    # connected components over parts that share edges
    comp = {pid: pid for pid in by_id}

    def find(a):
        while comp[a] != a:
            comp[a] = comp[comp[a]]
            a = comp[a]
        return a

    for e in edges:
        comp[find(e.i)] = find(e.j)
    groups = {}
    for pid in by_id:
        groups.setdefault(find(pid), []).append(pid)

    degree = {pid: 0 for pid in by_id}
    for e in edges:
        degree[e.i] += 1
        degree[e.j] += 1

    disp = {pid: np.zeros(3) for pid in by_id}
    fixed = {}
    for gi, members in enumerate(sorted(groups.values(), key=min)):
        members = sorted(members)
        anchor = max(members, key=lambda pid: (degree[pid], -pid))
        fixed[gi] = anchor
        free = [pid for pid in members if pid != anchor]
        if not free:
            if degree[anchor] == 0:
                logger.warning("part %d has no contacts; left in place", anchor)
            continue
        col = {pid: k for k, pid in enumerate(free)}
        lap = np.zeros((len(free), len(free)))
        rhs = np.zeros((len(free), 3))
        for e in edges:
            if find(e.i) != find(anchor):
                continue
            g = foot[e.key()][0] - foot[e.key()][1]   # p_i - p_j
            if e.i in col:
                lap[col[e.i], col[e.i]] += 1
                rhs[col[e.i]] -= g
            if e.j in col:
                lap[col[e.j], col[e.j]] += 1
                rhs[col[e.j]] += g
            if e.i in col and e.j in col:
                lap[col[e.i], col[e.j]] -= 1
                lap[col[e.j], col[e.i]] -= 1
        sol = np.linalg.solve(lap, rhs)
        for pid, k in col.items():
            disp[pid] = sol[k]

    def objective(displacements):
        total = 0.0
        for e in edges:
            pi, pj = foot[e.key()]
            gap = (pi + displacements[e.i]) - (pj + displacements[e.j])
            total += float(gap @ gap)
        return total

    before = objective({pid: np.zeros(3) for pid in by_id})
    after = objective(disp)
    out = [PlacedPart(p.part_id, p.source_index, p.linear.copy(), p.offset.copy(),
                      p.scale,
                      OrientedBox(p.box.center.copy(), p.box.axes.copy(),
                                  p.box.half_extents.copy()),
                      displacement=p.displacement + disp[p.part_id])
           for p in placed]
    return out, RestoreReport(displacements=disp, fixed=fixed,
                              objective_before=before, objective_after=after,
                              foot_points=foot)


def repose_to_segment(placed: PlacedPart, new_segment):
    """Rigidly (plus dominant-axis stretch) map a placed part so its segment
    endpoints land on ``new_segment``."""
    box = placed.placed_box()
    old = np.stack([box.center - box.half_extents[0] * box.axes[0],
                    box.center + box.half_extents[0] * box.axes[0]])
    new = np.asarray(new_segment, dtype=float)
    d_old = old[1] - old[0]
    d_new = new[1] - new[0]
    l_old = np.linalg.norm(d_old)
    l_new = np.linalg.norm(d_new)
    if l_old <= 0 or l_new <= 0:
        return placed
    u = d_old / l_old
    v = d_new / l_new
    rot = _minimal_rotation(u, v)
    stretch = np.eye(3) + (l_new / l_old - 1.0) * np.outer(u, u)
    m = rot @ stretch
    t = new[0] - m @ old[0]
    linear = m @ placed.linear
    offset = m @ (placed.offset + placed.displacement) + t
    axes = box.axes @ rot.T
    if np.linalg.det(axes) < 0:
        axes[2] = -axes[2]
    new_box = OrientedBox(0.5 * (new[0] + new[1]), axes,
                          np.array([0.5 * l_new, box.half_extents[1], box.half_extents[2]]))
    return PlacedPart(placed.part_id, placed.source_index, linear, offset,
                      placed.scale * float(l_new / l_old), new_box)


def _minimal_rotation(u, v):
    """Smallest rotation taking unit vector u to unit vector v."""
    c = float(np.clip(u @ v, -1.0, 1.0))
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # antiparallel: rotate 180 degrees about any orthogonal axis
        helper = np.array([1.0, 0, 0]) if abs(u[0]) < 0.9 else np.array([0, 1.0, 0])
        axis = np.cross(u, helper)
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    axis = axis / s
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + s * k + (1 - c) * (k @ k)
