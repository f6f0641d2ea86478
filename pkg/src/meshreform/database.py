"""Exemplar database: tagged parts, contacting pairs, angle histograms,
and the k-means candidate set used during reform."""

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mesh import Material, Model, TriangleMesh, normalize_model, sample_surface
from .graphs import (annotate_contact_angles, build_contact_graph,
                     build_repetition_graph)
from .part_analysis import PartDescriptor, analyze_part
from .similarity import orientation_angles

logger = logging.getLogger(__name__)

DB_VERSION = 1
ANGLE_BIN_WIDTH = 5.0
ANGLE_BIN_COUNT = 18
FEASIBILITY_THRESHOLD = 0.03


class DatabaseVersionError(ValueError):
    pass


@dataclass
class ExemplarPart:
    index: int
    descriptor: PartDescriptor
    material: Material
    source_model: str
    cluster_id: Optional[int] = None
    mesh: Optional[TriangleMesh] = None
    congruent_duplicate: bool = False

    def to_json(self, with_mesh=True):
        d = {
            "index": self.index,
            "descriptor": self.descriptor.to_json(),
            "material": self.material.value,
            "source_model": self.source_model,
            "cluster_id": self.cluster_id,
            "congruent_duplicate": self.congruent_duplicate,
        }
        if with_mesh and self.mesh is not None:
            d["mesh"] = {"vertices": self.mesh.vertices.tolist(),
                         "faces": self.mesh.faces.tolist()}
        return d

    @classmethod
    def from_json(cls, d):
        mesh = None
        if d.get("mesh") is not None:
            mesh = TriangleMesh(np.array(d["mesh"]["vertices"]),
                                np.array(d["mesh"]["faces"]))
        return cls(d["index"], PartDescriptor.from_json(d["descriptor"]),
                   Material(d["material"]), d["source_model"],
                   d.get("cluster_id"), mesh, d.get("congruent_duplicate", False))


@dataclass
class ExemplarContact:
    u: int
    v: int
    barycenter_distance: float
    angle: Optional[float]
    orientation_vec: np.ndarray
    joint_kind: Optional[str] = None

    def to_json(self):
        return {
            "u": self.u, "v": self.v,
            "barycenter_distance": self.barycenter_distance,
            "angle": self.angle,
            "orientation_vec": np.asarray(self.orientation_vec).tolist(),
            "joint_kind": self.joint_kind,
        }

    @classmethod
    def from_json(cls, d):
        return cls(d["u"], d["v"], d["barycenter_distance"], d["angle"],
                   np.array(d["orientation_vec"]), d.get("joint_kind"))


@dataclass
class AngleHistogram:
    """Contact-angle histogram for one material pair: 18 bins of 5 degrees
    over [0, 90]."""

    material: str  # "wood" or "metal"
    bins: np.ndarray = field(default_factory=lambda: np.zeros(ANGLE_BIN_COUNT))

    @property
    def total(self):
        return float(self.bins.sum())

    @staticmethod
    def bin_of(angle):
        return min(int(angle // ANGLE_BIN_WIDTH), ANGLE_BIN_COUNT - 1)

    @staticmethod
    def bin_center(k):
        return (k + 0.5) * ANGLE_BIN_WIDTH

    def add(self, angle):
        self.bins[self.bin_of(angle)] += 1

    def frequencies(self):
        if self.total == 0:
            raise ValueError(f"empty {self.material} angle histogram")
        return self.bins / self.total

    def smoothed_frequencies(self):
        """Raw frequencies convolved with a one-bin triangular kernel
        [0.25, 0.5, 0.25] (zero padded at the ends)."""
        f = self.frequencies()
        out = 0.5 * f
        out[1:] += 0.25 * f[:-1]
        out[:-1] += 0.25 * f[1:]
        return out

    def feasibility(self, angle):
        return float(self.smoothed_frequencies()[self.bin_of(angle)])

    def to_json(self):
        return {"material": self.material, "bins": self.bins.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(d["material"], np.array(d["bins"], dtype=float))


@dataclass
class Database:
    parts: list = field(default_factory=list)
    contacts: list = field(default_factory=list)
    histograms: dict = field(default_factory=dict)  # "wood"/"metal" -> AngleHistogram
    candidates: list = field(default_factory=list)  # part indices

    def part(self, index) -> ExemplarPart:
        return self.parts[index]

    def tagged_contacts(self):
        return [c for c in self.contacts if c.joint_kind is not None]


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------

@dataclass
class DatabaseSource:
    """One training model plus optional per-contact joint tags keyed by
    frozenset of the two part names."""

    model: Model
    name: str = ""
    joint_tags: Optional[dict] = None


def build_database(sources, d_c=0.01, descriptor_samples=1000,
                   contact_samples=8000, seed=0, normalized=False) -> Database:
    """Run the full per-model analysis over tagged models.

    Every part must carry a wood/metal/other tag; parts tagged other are
    excluded from the database entirely. Congruent duplicates are recorded so
    candidate clustering can keep one instance per class.
    """
    db = Database(histograms={
        "wood": AngleHistogram("wood"),
        "metal": AngleHistogram("metal"),
    })
    for si, src in enumerate(sources):
        model = src.model
        name = src.name or f"model_{si}"
        for p in model.parts:
            if p.material == Material.UNTAGGED:
                raise ValueError(f"untagged part {p.id} ({p.name!r}) in model {name}")
        kept = [p for p in model.parts if p.material != Material.OTHER]
        if not kept:
            continue
        sub = Model(parts=kept, global_scale=model.global_scale)
        if not normalized:
            sub = normalize_model(sub)

        samples = {p.id: sample_surface(p, descriptor_samples, seed=seed) for p in sub.parts}
        dense = {p.id: sample_surface(p, contact_samples, seed=seed + 1) for p in sub.parts}
        descriptors = {p.id: analyze_part(p, samples[p.id]) for p in sub.parts}
        graph = build_contact_graph(sub, d_c=d_c, samples=dense)
        annotate_contact_angles(graph, descriptors, samples)
        rep = build_repetition_graph(sub, descriptors, samples)

        index_of = {}
        congruent_dup = set()
        for cls_ in rep.classes():
            congruent_dup.update(cls_[1:])
        for p in sub.parts:
            idx = len(db.parts)
            index_of[p.id] = idx
            db.parts.append(ExemplarPart(
                index=idx, descriptor=descriptors[p.id], material=p.material,
                source_model=name, mesh=p.mesh, cluster_id=None,
                congruent_duplicate=p.id in congruent_dup))

        names = {p.id: p.name for p in sub.parts}
        for e in graph.part_edges():
            du = descriptors[e.i]
            dv = descriptors[e.j]
            kind = None
            if src.joint_tags:
                kind = src.joint_tags.get(frozenset((names[e.i], names[e.j])))
            contact = ExemplarContact(
                u=index_of[e.i], v=index_of[e.j],
                barycenter_distance=float(np.linalg.norm(du.barycenter - dv.barycenter)),
                angle=e.angle,
                orientation_vec=orientation_angles(du.obb.axes, dv.obb.axes),
                joint_kind=kind)
            db.contacts.append(contact)
            mats = (db.parts[contact.u].material, db.parts[contact.v].material)
            if e.angle is not None and mats[0] == mats[1]:
                db.histograms[mats[0].value].add(e.angle)
    return db


def merge_databases(dbs) -> Database:
    """Concatenate several databases (training folds, incremental corpora).

    Part indices are offset, histograms are summed, and the candidate set is
    cleared; re-run :func:`cluster_candidates` if reform needs one.
    """
    import dataclasses

    out = Database(histograms={
        "wood": AngleHistogram("wood"),
        "metal": AngleHistogram("metal"),
    })
    for db in dbs:
        offset = len(out.parts)
        for p in db.parts:
            out.parts.append(dataclasses.replace(p, index=p.index + offset,
                                                 cluster_id=None))
        for c in db.contacts:
            out.contacts.append(dataclasses.replace(c, u=c.u + offset,
                                                    v=c.v + offset))
        for key, h in db.histograms.items():
            out.histograms[key].bins = out.histograms[key].bins + h.bins
    return out


def part_feature(part: ExemplarPart):
    """5-d clustering feature: sorted OBB extents, area ratio, thickness."""
    d = part.descriptor
    return np.array([d.size_vec[0], d.size_vec[1], d.size_vec[2],
                     d.area_ratio, d.thickness])


def _kmeans(features, k, seed, max_iters=100):
    """Deterministic k-means++ / Lloyd. Returns (labels, centers, sse_trace)."""
    rng = np.random.default_rng(seed)
    n = len(features)
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(n)]
    d2 = ((features - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[c] = features[rng.integers(n)]
            continue
        centers[c] = features[np.searchsorted(np.cumsum(d2 / total), rng.random())]
        d2 = np.minimum(d2, ((features - centers[c]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=int)
    sse_trace = []
    for _ in range(max_iters):
        dist = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        sse_trace.append(float(dist[np.arange(n), new_labels].sum()))
        for c in range(k):
            members = features[new_labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
        if (new_labels == labels).all() and len(sse_trace) > 1:
            break
        labels = new_labels
    return labels, centers, sse_trace


def cluster_candidates(db: Database, k=80, seed=0) -> Database:
    """Select representative parts: drop congruent duplicates, k-means the
    rest on the 5-d features, keep the member nearest each centroid."""
    pool = [p for p in db.parts if not p.congruent_duplicate]
    if len(pool) <= k:
        db.candidates = [p.index for p in pool]
        for p in pool:
            p.cluster_id = p.index
        return db
    feats = np.stack([part_feature(p) for p in pool])
    labels, centers, sse = _kmeans(feats, k, seed)
    if any(b > a + 1e-9 for a, b in zip(sse, sse[1:])):
        raise AssertionError("k-means SSE increased")
    db.candidates = []
    for c in range(k):
        member_idx = np.flatnonzero(labels == c)
        if len(member_idx) == 0:
            continue
        d2 = ((feats[member_idx] - centers[c]) ** 2).sum(axis=1)
        rep = pool[member_idx[int(np.argmin(d2))]]
        db.candidates.append(rep.index)
    for p, lab in zip(pool, labels):
        p.cluster_id = int(lab)
    db.candidates.sort()
    return db


def angle_feasibility(db: Database, material: Material, angle: float) -> float:
    """Smoothed histogram frequency of the angle's bin for a same-material
    pair. Mixed-material contacts are not scored here (treated feasible by
    the configuration stage)."""
    key = material.value if isinstance(material, Material) else str(material)
    if key not in db.histograms:
        raise ValueError(f"no histogram for material {material}")
    return db.histograms[key].feasibility(angle)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_database(db: Database, path):
    doc = {
        "version": DB_VERSION,
        "parts": [p.to_json() for p in db.parts],
        "contacts": [c.to_json() for c in db.contacts],
        "histograms": {k: h.to_json() for k, h in db.histograms.items()},
        "candidates": list(db.candidates),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_database(path) -> Database:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("version")
    if version != DB_VERSION:
        raise DatabaseVersionError(
            f"database version {version!r} not supported (expected {DB_VERSION})")
    db = Database(
        parts=[ExemplarPart.from_json(p) for p in doc["parts"]],
        contacts=[ExemplarContact.from_json(c) for c in doc["contacts"]],
        histograms={k: AngleHistogram.from_json(h) for k, h in doc["histograms"].items()},
        candidates=list(doc["candidates"]),
    )
    return db
