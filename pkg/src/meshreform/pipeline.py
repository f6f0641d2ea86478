"""Pipeline orchestration: preprocess, suggest, reform, restore, optimize
angles, infer joints, refine, form joints, export.

Every stage persists its artifacts under the output directory and all
randomness flows from the single config seed, so re-running any stage
reproduces identical downstream results.
"""

import json
import logging
import os
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import assembly, config_opt, fabrication, inference
from .database import (Database, DatabaseSource, build_database,
                       cluster_candidates, load_database)
from .graphs import (ContactGraph, GROUND_ID, annotate_contact_angles,
                     build_contact_graph, build_repetition_graph,
                     estimate_contact_angle)
from .mesh import (Material, Model, Part, TriangleMesh, load_model,
                   normalize_model, sample_surface, save_model)
from .part_analysis import analyze_part
from .similarity import SimilarityParams, orientation_angles

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    d_c: float = 0.01
    similarity: SimilarityParams = field(default_factory=SimilarityParams)
    alpha: float = 0.1
    beta: float = 20.0
    bp_max_iters: int = 100
    bp_damping: float = 0.5
    bp_tol: float = 1e-6
    bp_algorithm: str = "max_product"
    feasibility_threshold: float = 0.03
    thickness_bin: float = 0.005
    wall_margin: float = 0.004
    penetration: float = 0.3
    tenon_face_scale: float = 0.5
    knn_k: int = 5
    surface_samples: int = 1000
    contact_samples: int = 8000
    candidates_k: int = 80
    enumeration_cap: int = 4096
    seed: int = 0
    target_materials: object = "suggest"   # "suggest" | "all=wood" | "all=metal" | {pid: mat}
    compact_parts: list = field(default_factory=list)
    joint_overrides: dict = field(default_factory=dict)   # (i, j) -> kind

    def to_json(self):
        d = asdict(self)
        d["similarity"] = self.similarity.to_json()
        d["joint_overrides"] = {f"{i},{j}": k for (i, j), k in self.joint_overrides.items()}
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "similarity" in d:
            d["similarity"] = SimilarityParams.from_json(d["similarity"])
        if "joint_overrides" in d:
            d["joint_overrides"] = {
                tuple(int(x) for x in k.split(",")): v
                for k, v in d["joint_overrides"].items()}
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class ModelAnalysis:
    model: Model
    samples: dict
    dense_samples: dict
    descriptors: dict
    contact_graph: ContactGraph
    repetition_graph: object

    def materials(self):
        return {p.id: p.material for p in self.model.parts}


def analyze_model(model: Model, cfg: PipelineConfig,
                  normalized=False) -> ModelAnalysis:
    """Normalize, sample, describe, and build both structure graphs.

    Parts tagged ``other`` (screws, pads, non-key elements) are dropped up
    front; they take no part in analysis, inference, or reform.
    """
    kept = [p for p in model.parts if p.material != Material.OTHER]
    if len(kept) != len(model.parts):
        logger.info("ignoring %d part(s) tagged other", len(model.parts) - len(kept))
        model = Model(parts=kept, global_scale=model.global_scale)
    if not model.parts:
        raise ValueError("model has no analyzable parts (all tagged other)")
    if not normalized:
        model = normalize_model(model)
    samples = {p.id: sample_surface(p, cfg.surface_samples, seed=cfg.seed)
               for p in model.parts}
    dense = {p.id: sample_surface(p, cfg.contact_samples, seed=cfg.seed + 1)
             for p in model.parts}
    descriptors = {p.id: analyze_part(p, samples[p.id], bin_width=cfg.thickness_bin)
                   for p in model.parts}
    graph = build_contact_graph(model, d_c=cfg.d_c, samples=dense)
    annotate_contact_angles(graph, descriptors, samples)
    rep = build_repetition_graph(model, descriptors, samples)
    return ModelAnalysis(model=model, samples=samples, dense_samples=dense,
                         descriptors=descriptors, contact_graph=graph,
                         repetition_graph=rep)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def suggest_materials(analysis: ModelAnalysis, db: Database,
                      cfg: PipelineConfig):
    graph = inference.build_material_factor_graph(
        analysis.descriptors, analysis.contact_graph, analysis.repetition_graph,
        db, params=cfg.similarity, alpha=cfg.alpha, beta=cfg.beta)
    result = inference.run_loopy_bp(graph, max_iters=cfg.bp_max_iters,
                                    damping=cfg.bp_damping, tol=cfg.bp_tol,
                                    algorithm=cfg.bp_algorithm)
    return {pid: result.labels[pid] for pid in result.labels}, result


def resolve_targets(analysis: ModelAnalysis, db: Database, cfg: PipelineConfig):
    spec = cfg.target_materials
    ids = [p.id for p in analysis.model.parts]
    if spec == "suggest":
        targets, _ = suggest_materials(analysis, db, cfg)
        return targets
    if isinstance(spec, str) and spec.startswith("all="):
        mat = Material(spec.split("=", 1)[1])
        return {pid: mat for pid in ids}
    if isinstance(spec, dict):
        out = {}
        for pid in ids:
            raw = spec.get(pid, spec.get(str(pid)))
            if raw is None:
                raise ValueError(f"no target material for part {pid}")
            out[pid] = Material(raw) if not isinstance(raw, Material) else raw
        return out
    raise ValueError(f"bad target material spec {spec!r}")


def reform_assignment(analysis: ModelAnalysis, targets, db: Database,
                      cfg: PipelineConfig):
    graph = inference.build_reform_factor_graph(
        analysis.descriptors, analysis.contact_graph, analysis.repetition_graph,
        targets, db, compact=set(cfg.compact_parts), params=cfg.similarity,
        alpha=cfg.alpha, beta=cfg.beta)
    return inference.run_loopy_bp(graph, max_iters=cfg.bp_max_iters,
                                  damping=cfg.bp_damping, tol=cfg.bp_tol,
                                  algorithm=cfg.bp_algorithm)


def place_and_restore(analysis: ModelAnalysis, assignment, db: Database,
                      cfg: PipelineConfig):
    placed = assembly.place_replacements(analysis.descriptors, assignment, db,
                                         query_samples=analysis.samples,
                                         seed=cfg.seed)
    placed, report = assembly.restore_contacts(placed, analysis.contact_graph, db)
    return placed, report


@dataclass
class ReformedState:
    """Placed parts plus the contact data recomputed on them."""

    placed: dict                 # part id -> PlacedPart
    descriptors: dict
    graph: ContactGraph
    materials: dict
    repetition: object = None    # query model's repetition graph


def reformed_state(analysis: ModelAnalysis, placed, targets, db: Database,
                   cfg: PipelineConfig, restore_report=None) -> ReformedState:
    """Rebuild contact points and angles on the placed parts, keeping the
    original topology."""
    by_id = {p.part_id: p for p in placed}
    descriptors = {pid: by_id[pid].placed_descriptor(db) for pid in by_id}
    samples = {pid: by_id[pid].placed_samples(db, n=cfg.surface_samples, seed=cfg.seed)
               for pid in by_id}
    graph = ContactGraph(nodes=list(by_id))
    for e in analysis.contact_graph.edges:
        cp = np.asarray(e.contact_point, dtype=float)
        if e.is_ground:
            disp = by_id[e.i].displacement if e.i in by_id else 0.0
            graph.edges.append(type(e)(e.i, GROUND_ID, cp + disp, None, True))
            continue
        if restore_report is not None and e.key() in restore_report.foot_points:
            pi, pj = restore_report.foot_points[e.key()]
            cp = 0.5 * ((pi + restore_report.displacements[e.i])
                        + (pj + restore_report.displacements[e.j]))
        new_e = type(e)(e.i, e.j, cp)
        new_e.angle = estimate_contact_angle(descriptors[e.i], descriptors[e.j],
                                             new_e, samples[e.i], samples[e.j])
        graph.edges.append(new_e)
    return ReformedState(placed=by_id, descriptors=descriptors, graph=graph,
                         materials=dict(targets),
                         repetition=analysis.repetition_graph)


def optimize_angles(state: ReformedState, db: Database, cfg: PipelineConfig):
    """Angle feasibility assessment, enumeration, optimization, selection.
    Returns (selected Configuration or None, constraints, configs)."""
    parts = {}
    ground_parts = {e.i for e in state.graph.ground_edges()}
    for pid, desc in state.descriptors.items():
        parts[pid] = config_opt.PartState(
            id=pid, segment=desc.segment.copy(), thickness=desc.thickness,
            material=state.materials[pid], has_ground=pid in ground_parts,
            box=None if desc.is_linear else desc.obb)
    constraints = config_opt.assess_angle_feasibility(
        state.graph, state.materials, db, threshold=cfg.feasibility_threshold)
    if not constraints:
        return None, [], []
    fixed = config_opt.determine_fixed_parts(parts, state.graph, constraints,
                                             repetition=state.repetition)
    sets = config_opt.enumerate_configurations(constraints, state.graph, parts,
                                               fixed=fixed,
                                               cap=cfg.enumeration_cap)
    if not sets:
        logger.warning("no valid slide/rotate set; keeping configuration rigid")
        return (config_opt.all_rigid_configuration(constraints, parts, db,
                                                   state.materials),
                constraints, [])
    configs = [config_opt.optimize_configuration(
        s, constraints, parts, state.graph, db=db, materials=state.materials,
        d_c=cfg.d_c) for s in sets]
    try:
        best = config_opt.select_best_configuration(configs)
    except ValueError:
        logger.warning("no configuration satisfied support; keeping rigid")
        best = config_opt.all_rigid_configuration(constraints, parts, db,
                                                  state.materials)
    return best, constraints, configs


def apply_configuration(state: ReformedState, configuration, db,
                        cfg: PipelineConfig) -> ReformedState:
    """Re-pose moved parts onto their optimized segments, drop the
    configuration's broken contacts, and refresh descriptors and angles."""
    if configuration is None or not configuration.moved_parts:
        return state
    placed = dict(state.placed)
    for pid in configuration.moved_parts:
        placed[pid] = assembly.repose_to_segment(placed[pid],
                                                 configuration.segments[pid])
    dropped = {tuple(e) for e in configuration.dropped_edges}
    dropped_ground = set(configuration.dropped_ground)
    graph = ContactGraph(nodes=state.graph.nodes)
    for e in state.graph.edges:
        if e.is_ground and e.i in dropped_ground:
            continue
        if not e.is_ground and e.key() in dropped:
            continue
        graph.edges.append(e)
    moved = ReformedState(placed=placed, descriptors=state.descriptors,
                          graph=graph, materials=state.materials,
                          repetition=state.repetition)
    return reformed_refresh(moved, db, cfg)


def _query_contacts(state: ReformedState):
    out = []
    for e in state.graph.part_edges():
        di = state.descriptors[e.i]
        dj = state.descriptors[e.j]
        out.append(fabrication.QueryContact(
            edge=e.key(),
            materials=(state.materials[e.i], state.materials[e.j]),
            descriptors=(di, dj),
            barycenter_distance=float(np.linalg.norm(di.barycenter - dj.barycenter)),
            orientation_vec=orientation_angles(di.obb.axes, dj.obb.axes),
            contact_point=np.asarray(e.contact_point, dtype=float)))
    return out


def infer_joints(state: ReformedState, db: Database, cfg: PipelineConfig):
    return fabrication.infer_joint_types(_query_contacts(state), db,
                                         k=cfg.knn_k, params=cfg.similarity,
                                         overrides=cfg.joint_overrides)


def refine_and_form(state: ReformedState, assignments, cfg: PipelineConfig):
    boxes = {pid: d.obb for pid, d in state.descriptors.items()}
    refinement = fabrication.refine_part_dimensions(
        assignments, boxes, wall_margin=cfg.wall_margin,
        penetration=cfg.penetration)
    geometry = []
    for a in assignments:
        try:
            geometry.append(fabrication.form_joint_geometry(
                a, refinement.boxes, d_c=cfg.d_c,
                face_scale=cfg.tenon_face_scale, penetration=cfg.penetration))
        except ValueError as exc:
            logger.warning("joint %s not formed: %s", a.edge, exc)
    return refinement, geometry


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def _dump(out_dir, name, payload):
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Material):
        return obj.value
    raise TypeError(f"not serializable: {type(obj)}")


def run_pipeline(model_path, db_path, cfg: PipelineConfig, out_dir,
                 model: Optional[Model] = None,
                 db: Optional[Database] = None) -> dict:
    """Run all stages; returns a summary dict. Artifacts and per-stage logs
    are written under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    summary = {"stages": {}}
    t_all = time.perf_counter()
    # input loading stays outside the stage wrapper: bad inputs are the
    # caller's problem (exit 2), stage failures are ours (exit 3)
    t0 = time.perf_counter()
    if model is None:
        model = load_model(model_path)
    if db is None:
        db = load_database(db_path)
    summary["stages"]["load"] = {"seconds": time.perf_counter() - t0}
    stage = "preprocess"
    try:
        t0 = time.perf_counter()
        analysis = analyze_model(model, cfg)
        _dump(out_dir, "01_analysis.json", {
            "descriptors": {pid: d.to_json() for pid, d in analysis.descriptors.items()},
            "contact_graph": analysis.contact_graph.to_json(),
            "repetition_graph": analysis.repetition_graph.to_json(),
        })
        summary["stages"][stage] = {
            "seconds": time.perf_counter() - t0,
            "parts": len(model.parts),
            "contacts": len(analysis.contact_graph.part_edges()),
        }

        stage = "materials"
        t0 = time.perf_counter()
        targets = resolve_targets(analysis, db, cfg)
        _dump(out_dir, "02_targets.json", {str(k): v.value for k, v in targets.items()})
        summary["stages"][stage] = {"seconds": time.perf_counter() - t0,
                                    "targets": {str(k): v.value for k, v in targets.items()}}

        stage = "reform"
        t0 = time.perf_counter()
        assignment = reform_assignment(analysis, targets, db, cfg)
        _dump(out_dir, "03_assignment.json", {
            "labels": {str(k): int(v) for k, v in assignment.labels.items()},
            "log_potential": assignment.log_potential,
            "converged": assignment.converged,
            "iterations": assignment.iterations,
        })
        summary["stages"][stage] = {"seconds": time.perf_counter() - t0,
                                    "log_potential": assignment.log_potential,
                                    "converged": assignment.converged}

        stage = "restore"
        t0 = time.perf_counter()
        placed, report = place_and_restore(analysis, assignment, db, cfg)
        _dump(out_dir, "04_restore.json", {
            "displacements": {str(k): v.tolist() for k, v in report.displacements.items()},
            "objective_before": report.objective_before,
            "objective_after": report.objective_after,
        })
        summary["stages"][stage] = {"seconds": time.perf_counter() - t0,
                                    "objective_before": report.objective_before,
                                    "objective_after": report.objective_after}
        state = reformed_state(analysis, placed, targets, db, cfg,
                               restore_report=report)

        stage = "optimize-angles"
        t0 = time.perf_counter()
        best, constraints, configs = optimize_angles(state, db, cfg)
        if best is not None:
            state = apply_configuration(state, best, db, cfg)
        _dump(out_dir, "05_configuration.json", {
            "constraints": [{"edge": list(c.edge), "angle": c.angle,
                             "target": c.target, "feasibility": c.feasibility}
                            for c in constraints],
            "n_configurations": len(configs),
            "selected": None if best is None else {
                "index": best.index, "objective": best.objective,
                "opt_value": best.opt_value,
                "dropped_edges": [list(e) for e in best.dropped_edges],
                "new_contacts": [list(e) for e in best.new_contacts],
                "moved_parts": best.moved_parts,
                "feasibility_report": best.feasibility_report,
            },
        })
        summary["stages"][stage] = {"seconds": time.perf_counter() - t0,
                                    "constraints": len(constraints),
                                    "configurations": len(configs),
                                    "objective": None if best is None else best.objective}

        stage = "infer-joints"
        t0 = time.perf_counter()
        assignments = infer_joints(state, db, cfg)
        _dump(out_dir, "06_joints.json", [a.to_json() for a in assignments])
        summary["stages"][stage] = {"seconds": time.perf_counter() - t0,
                                    "joints": len(assignments),
                                    "ambiguous": sum(a.joint.ambiguous for a in assignments)}

        stage = "refine"
        t0 = time.perf_counter()
        refinement, geometry = refine_and_form(state, assignments, cfg)
        _dump(out_dir, "07_refinement.json", {
            "scales": {str(k): v.tolist() for k, v in refinement.scales.items()},
            "violations": refinement.violations,
            "kkt_residual": refinement.kkt_residual,
        })
        summary["stages"][stage] = {"seconds": time.perf_counter() - t0,
                                    "violations": len(refinement.violations),
                                    "kkt_residual": refinement.kkt_residual}

        stage = "export"
        t0 = time.perf_counter()
        spec = fabrication.FabricationSpec(
            parts=[fabrication.PartSpec(
                part_id=pid, material=state.materials[pid],
                dimensions=refinement.boxes[pid].extents)
                for pid in sorted(state.placed)],
            joints=assignments, geometry=geometry)
        part_meshes = {}
        for pid, p in state.placed.items():
            mesh = p.placed_mesh(db)
            scales = refinement.scales.get(pid)
            if scales is not None and not np.allclose(scales, 1.0):
                mesh = _scale_mesh_in_box(mesh, refinement.boxes[pid], scales)
            part_meshes[pid] = mesh
        fabrication.export_spec(spec, out_dir, part_meshes=part_meshes)
        reformed = Model(parts=[
            Part(id=pid, mesh=part_meshes[pid], material=state.materials[pid],
                 name=f"part_{pid}")
            for pid in sorted(part_meshes)])
        save_model(reformed, os.path.join(out_dir, "reformed_model.obj"))
        summary["stages"][stage] = {"seconds": time.perf_counter() - t0}
    except Exception as exc:
        _dump(out_dir, "failure.json", {"stage": stage, "error": str(exc)})
        raise StageError(stage, exc) from exc

    summary["total_seconds"] = time.perf_counter() - t_all
    _dump(out_dir, "summary.json", summary)
    return summary


def reformed_refresh(state: ReformedState, db, cfg) -> ReformedState:
    """Recompute descriptors and contact angles after re-posing."""
    descriptors = {pid: p.placed_descriptor(db) for pid, p in state.placed.items()}
    samples = {pid: p.placed_samples(db, n=cfg.surface_samples, seed=cfg.seed)
               for pid, p in state.placed.items()}
    graph = ContactGraph(nodes=state.graph.nodes)
    for e in state.graph.edges:
        if e.is_ground:
            graph.edges.append(e)
            continue
        new_e = type(e)(e.i, e.j, np.asarray(e.contact_point, dtype=float))
        new_e.angle = estimate_contact_angle(descriptors[e.i], descriptors[e.j],
                                             new_e, samples[e.i], samples[e.j])
        graph.edges.append(new_e)
    return ReformedState(placed=state.placed, descriptors=descriptors,
                         graph=graph, materials=state.materials,
                         repetition=state.repetition)


def _scale_mesh_in_box(mesh: TriangleMesh, box, scales) -> TriangleMesh:
    local = (mesh.vertices - box.center) @ box.axes.T
    local = local * np.asarray(scales)
    return TriangleMesh(local @ box.axes + box.center, mesh.faces.copy())


# ---------------------------------------------------------------------------
# source directories (generator output / training corpora)
# ---------------------------------------------------------------------------

def write_sources(sources, out_dir):
    """One polygon file + material sidecar + joint tag file per model."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for src in sources:
        base = os.path.join(out_dir, src.name)
        save_model(src.model, base + ".obj")
        materials = {p.name: p.material.value for p in src.model.parts}
        with open(base + ".materials.json", "w") as fh:
            json.dump(materials, fh, indent=2)
        if src.joint_tags:
            tags = [[*sorted(k), v] for k, v in sorted(
                src.joint_tags.items(), key=lambda kv: sorted(kv[0]))]
            with open(base + ".joints.json", "w") as fh:
                json.dump(tags, fh, indent=2)
        names.append(src.name)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump({"models": names}, fh, indent=2)
    return out_dir


def read_sources(dir_path):
    with open(os.path.join(dir_path, "manifest.json")) as fh:
        names = json.load(fh)["models"]
    sources = []
    for name in names:
        base = os.path.join(dir_path, name)
        model = load_model(base + ".obj", material_sidecar=base + ".materials.json")
        tags = None
        if os.path.exists(base + ".joints.json"):
            with open(base + ".joints.json") as fh:
                tags = {frozenset((a, b)): kind for a, b, kind in json.load(fh)}
        sources.append(DatabaseSource(model=model, name=name, joint_tags=tags))
    return sources


def build_database_from_config(sources, cfg: PipelineConfig) -> Database:
    db = build_database(sources, d_c=cfg.d_c,
                        descriptor_samples=cfg.surface_samples,
                        contact_samples=cfg.contact_samples, seed=cfg.seed)
    return cluster_candidates(db, k=cfg.candidates_k, seed=cfg.seed)
