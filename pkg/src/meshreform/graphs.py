"""Contact and repetition graphs of a normalized multi-component model."""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .mesh import Model, SurfaceSamples
from .part_analysis import PartDescriptor

logger = logging.getLogger(__name__)

GROUND_ID = -1
DEFAULT_CONTACT_DISTANCE = 0.01
CURVILINEAR_NEIGHBORHOOD = 0.05
CONGRUENCE_EXTENT_TOL = 0.02
CONGRUENCE_RMS_TOL = 0.01


@dataclass
class ContactEdge:
    i: int
    j: int                      # GROUND_ID for ground contacts
    contact_point: np.ndarray
    angle: Optional[float] = None   # degrees in [0, 90], None when not defined
    is_ground: bool = False
    min_distance: float = 0.0

    def key(self):
        return (self.i, self.j)

    def other(self, pid):
        return self.j if pid == self.i else self.i

    def to_json(self):
        return {
            "i": self.i, "j": self.j,
            "contact_point": np.asarray(self.contact_point).tolist(),
            "angle": self.angle,
            "is_ground": self.is_ground,
            "min_distance": self.min_distance,
        }

    @classmethod
    def from_json(cls, d):
        return cls(d["i"], d["j"], np.array(d["contact_point"]), d["angle"],
                   d["is_ground"], d.get("min_distance", 0.0))


@dataclass
class ContactGraph:
    nodes: list
    edges: list = field(default_factory=list)

    def part_edges(self):
        return [e for e in self.edges if not e.is_ground]

    def ground_edges(self):
        return [e for e in self.edges if e.is_ground]

    def edges_of(self, pid):
        return [e for e in self.edges if pid in (e.i, e.j)]

    def degree(self, pid, include_ground=True):
        return sum(1 for e in self.edges_of(pid) if include_ground or not e.is_ground)

    def find_edge(self, i, j):
        a, b = min(i, j), max(i, j)
        for e in self.edges:
            if (e.i, e.j) == (a, b):
                return e
        return None

    def to_json(self):
        return {"nodes": self.nodes, "edges": [e.to_json() for e in self.edges]}

    @classmethod
    def from_json(cls, d):
        return cls(d["nodes"], [ContactEdge.from_json(e) for e in d["edges"]])


@dataclass
class RepetitionGraph:
    nodes: list
    edges: list = field(default_factory=list)  # (i, j) pairs, i < j

    def classes(self):
        """Congruence classes as sorted lists (transitive closure)."""
        parent = {n: n for n in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.edges:
            parent[find(i)] = find(j)
        groups = {}
        for n in self.nodes:
            groups.setdefault(find(n), []).append(n)
        return [sorted(g) for g in sorted(groups.values(), key=min)]

    def partners(self, pid):
        for cls_ in self.classes():
            if pid in cls_:
                return [p for p in cls_ if p != pid]
        return []

    def to_json(self):
        return {"nodes": self.nodes, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, d):
        return cls(d["nodes"], [tuple(e) for e in d["edges"]])


# ---------------------------------------------------------------------------
# contact graph
# ---------------------------------------------------------------------------

def build_contact_graph(model: Model, d_c=DEFAULT_CONTACT_DISTANCE,
                        samples=None, sample_count=8000, seed=0) -> ContactGraph:
    """Edges between part pairs whose sampled surfaces come within ``d_c``.

    Distances are measured between sample sets, not exact triangles: an
    upper bound on the true surface distance that tightens with sampling
    density, which is why contact analysis samples densely. The contact
    point is the barycenter of both parts' samples that lie within ``d_c``
    of the other part's samples. Parts whose lowest vertex is within
    ``d_c`` of the model's minimum z get an extra ground edge
    (``j == GROUND_ID``); the input is assumed z-up.

    ``samples`` maps part id to SurfaceSamples; when omitted, each part is
    sampled densely here.
    """
    from .mesh import sample_surface

    if d_c <= 0:
        raise ValueError("d_c must be positive")
    if samples is None:
        samples = {p.id: sample_surface(p, sample_count, seed=seed) for p in model.parts}

    ids = [p.id for p in model.parts]
    pts = {pid: samples[pid].positions for pid in ids}
    aabb = {pid: (pts[pid].min(axis=0), pts[pid].max(axis=0)) for pid in ids}

    graph = ContactGraph(nodes=list(ids))
    for i, j in itertools.combinations(ids, 2):
        lo = np.maximum(aabb[i][0], aabb[j][0]) - d_c
        hi = np.minimum(aabb[i][1], aabb[j][1]) + d_c
        if (lo > hi).any():
            continue
        a = pts[i][((pts[i] >= lo) & (pts[i] <= hi)).all(axis=1)]
        b = pts[j][((pts[j] >= lo) & (pts[j] <= hi)).all(axis=1)]
        if len(a) == 0 or len(b) == 0:
            continue
        d2a = kernels.nearest_sq_dists(a, b)
        dmin = float(np.sqrt(d2a.min()))
        if dmin >= d_c:
            continue
        d2b = kernels.nearest_sq_dists(b, a)
        near = np.vstack([a[d2a < d_c * d_c], b[d2b < d_c * d_c]])
        graph.edges.append(ContactEdge(i, j, near.mean(axis=0), min_distance=dmin))

    # ground contacts (z-up convention)
    all_min_z = min(float(p.mesh.vertices[:, 2].min()) for p in model.parts)
    for p in model.parts:
        if float(p.mesh.vertices[:, 2].min()) < all_min_z + d_c:
            low = pts[p.id][pts[p.id][:, 2] < all_min_z + d_c]
            if len(low) == 0:
                low = p.mesh.vertices[p.mesh.vertices[:, 2] < all_min_z + d_c]
            cp = low.mean(axis=0)
            cp = np.array([cp[0], cp[1], all_min_z])
            graph.edges.append(ContactEdge(p.id, GROUND_ID, cp, is_ground=True))
    return graph


def _angle_leg(desc: PartDescriptor, samples: SurfaceSamples, contact_point,
               radius=CURVILINEAR_NEIGHBORHOOD):
    """Direction of a part at a contact, or None when the part is neither
    linear nor locally linear (curvilinear) there."""
    if desc.is_linear:
        return desc.dominant_axis
    if desc.curvilinear and samples is not None:
        rel = samples.positions - np.asarray(contact_point)
        local = samples.positions[(rel * rel).sum(axis=1) < radius * radius]
        if len(local) >= 5:
            centered = local - local.mean(axis=0)
            w, v = np.linalg.eigh(centered.T @ centered)
            if np.sqrt(w[2]) >= 3.0 * np.sqrt(max(w[1], 0.0)):
                return v[:, 2]
    return None


def fold_angle_deg(u, v):
    """Angle between two directions folded into [0, 90] degrees."""
    c = abs(float(np.dot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return float(np.degrees(np.arccos(np.clip(c, 0.0, 1.0))))


def estimate_contact_angle(di: PartDescriptor, dj: PartDescriptor,
                           edge: ContactEdge,
                           samples_i: Optional[SurfaceSamples] = None,
                           samples_j: Optional[SurfaceSamples] = None,
                           radius=CURVILINEAR_NEIGHBORHOOD) -> Optional[float]:
    """Contact angle between the two parts' legs, or None."""
    leg_i = _angle_leg(di, samples_i, edge.contact_point, radius)
    leg_j = _angle_leg(dj, samples_j, edge.contact_point, radius)
    if leg_i is None or leg_j is None:
        return None
    return fold_angle_deg(leg_i, leg_j)


def annotate_contact_angles(graph: ContactGraph, descriptors: dict,
                            samples: dict, radius=CURVILINEAR_NEIGHBORHOOD):
    """Fill ``angle`` on every part-part edge, in place."""
    for e in graph.part_edges():
        e.angle = estimate_contact_angle(
            descriptors[e.i], descriptors[e.j], e,
            samples.get(e.i), samples.get(e.j), radius)
    return graph


# ---------------------------------------------------------------------------
# repetition graph
# ---------------------------------------------------------------------------

def _alignments():
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            out.append((perm, np.array(signs)))
    return out


_ALIGNMENTS = _alignments()


def congruence_rms(desc_a: PartDescriptor, pts_a, desc_b: PartDescriptor, pts_b,
                   stop_below=None):
    """Smallest symmetric RMS nearest-point distance over the 48 box-frame
    alignments (axis permutations and reflections) mapping b onto a.

    Alignments abort as soon as their running distance sum exceeds the best
    one so far; ``stop_below`` short-circuits the scan once an alignment is
    clearly congruent.
    """
    a_local_axes = desc_a.obb.axes
    a_c = desc_a.obb.center
    b_local = desc_b.obb.to_local(pts_b)
    count = len(pts_a) + len(pts_b)
    best_sum = np.inf
    for perm, signs in _ALIGNMENTS:
        mapped = (b_local[:, perm] * signs) @ a_local_axes + a_c
        cap = best_sum if np.isfinite(best_sum) else 1e30
        d2 = kernels.nearest_sq_sum_capped(mapped, pts_a, cap)
        if not np.isfinite(d2):
            continue
        d2 += kernels.nearest_sq_sum_capped(pts_a, mapped, cap - d2)
        if d2 < best_sum:
            best_sum = d2
            if stop_below is not None and np.sqrt(best_sum / count) < stop_below:
                break
    return float(np.sqrt(best_sum / count))


def build_repetition_graph(model: Model, descriptors: dict, samples: dict,
                           extent_tol=CONGRUENCE_EXTENT_TOL,
                           rms_tol=CONGRUENCE_RMS_TOL,
                           max_points=1000) -> RepetitionGraph:
    """Congruence edges between parts with matching extents and small aligned
    RMS; the result is transitively closed into cliques."""
    ids = [p.id for p in model.parts]
    graph = RepetitionGraph(nodes=list(ids))
    direct = []
    for i, j in itertools.combinations(ids, 2):
        ea, eb = descriptors[i].size_vec, descriptors[j].size_vec
        if (np.abs(ea - eb) > extent_tol * np.maximum(ea, eb) + 1e-12).any():
            continue
        pa = samples[i].positions[:max_points]
        pb = samples[j].positions[:max_points]
        rms = congruence_rms(descriptors[i], pa, descriptors[j], pb,
                             stop_below=0.5 * rms_tol)
        if rms < rms_tol:
            direct.append((i, j))
    # transitive closure: edges of the union-find cliques
    tmp = RepetitionGraph(nodes=list(ids), edges=direct)
    edges = []
    for cls_ in tmp.classes():
        edges.extend(itertools.combinations(cls_, 2))
    graph.edges = edges
    return graph
