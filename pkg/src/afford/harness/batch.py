"""Batch evaluation over the procedural suite or a dataset directory."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from afford.errors import InvalidInputError
from afford.geometry.mesh import TriMesh, load_mesh
from afford.geometry.pose import Pose, super_fibonacci
from afford.harness.procedural import benchmark_suite, build_mesh, ground_truth
from afford.physics.config import WorldConfig
from afford.pipeline import classify, up_matches
from afford.reasoner.core import Provider, ProviderConfig, make_provider

log = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
POSE_TOLERANCE_DEG = 15.0


@dataclass(frozen=True)
class BatchItem:
    """One object to classify; ``functional_ups`` are in the mesh frame."""

    name: str
    mesh: TriMesh
    affordance: str
    kind: str = ""
    label: bool | None = None
    functional_ups: tuple = ()
    adversarial: bool = False


def suite_items() -> list[BatchItem]:
    out = []
    for item in benchmark_suite():
        truth = ground_truth(item.spec)
        out.append(BatchItem(item.name, build_mesh(item.spec), item.affordance, item.kind,
                             truth.labels[item.kind], truth.functional_ups, item.adversarial))
    return out


def write_dataset(items: list[BatchItem], directory) -> Path:
    """Meshes as OFF files plus a JSONL manifest with the labels."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for it in items:
        fname = f"{it.name}.off"
        (d / fname).write_text(it.mesh.to_off(), encoding="utf-8")
        rows.append({
            "name": it.name, "file": fname, "affordance": it.affordance, "kind": it.kind, "label": it.label,
            "functional_ups": [list(map(float, u)) for u in it.functional_ups], "adversarial": it.adversarial,
        })
    (d / MANIFEST).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")
    return d


def load_dataset(directory, affordance: str | None = None) -> list[BatchItem]:
    """Read a dataset directory.

    With a manifest, its rows give names, affordances and labels. Without
    one, every OFF/OBJ file is loaded unlabelled for ``affordance``.
    """
    d = Path(directory)
    if not d.is_dir():
        raise InvalidInputError(f"{d} is not a directory")
    manifest = d / MANIFEST
    items = []
    if manifest.exists():
        for line in manifest.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            r = json.loads(line)
            items.append(BatchItem(
                r["name"], load_mesh(d / r["file"]), affordance or r["affordance"], r.get("kind", ""),
                r.get("label"), tuple(tuple(u) for u in r.get("functional_ups", ())), bool(r.get("adversarial")),
            ))
    else:
        if affordance is None:
            raise InvalidInputError("a dataset without a manifest needs an affordance name")
        for path in sorted(p for p in d.iterdir() if p.suffix.lower() in (".off", ".obj")):
            items.append(BatchItem(path.stem, load_mesh(path), affordance))
    if not items:
        raise InvalidInputError(f"dataset {d} is empty")
    return items


def initial_pose(seed: int, index: int) -> Pose:
    """Seeded random pose: a member of the quasi-uniform rotation sequence and a small offset."""
    rng = np.random.default_rng([seed, index])
    qs = super_fibonacci(211)
    return Pose(qs[int(rng.integers(len(qs)))], rng.uniform(-0.5, 0.5, size=3))


def _row(item: BatchItem, index: int, seed: int, world: WorldConfig, provider: Provider,
         validate: bool, n_orientations: int) -> dict:
    pose = initial_pose(seed, index)
    mesh = item.mesh.transformed(pose)
    ups = [pose.rotate(np.asarray(u, dtype=float)) for u in item.functional_ups]
    row = {
        "index": index, "name": item.name, "affordance": item.affordance, "kind": item.kind,
        "label": item.label, "adversarial": item.adversarial, "initial_pose": pose.to_dict(),
        "effective_affordance": None, "predicted": None, "predicted_ablated": None,
        "correct": False, "correct_ablated": False, "optimal_pose_id": None, "optimal_up": None,
        "functional_pose_correct": None, "best_score": None, "max_score": None,
        "n_stable_poses": 0, "n_candidates": 0, "error": None,
    }
    try:
        c = classify(mesh, item.affordance, provider, world, seed=seed + index, n_orientations=n_orientations,
                     validate=validate, with_ablation=True)
    except Exception as exc:  # a failed object is scored as incorrect and the batch goes on
        log.error("object %s failed: %s", item.name, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    v, a = c.verdict, c.ablated
    scores = [r["score"] for r in v.per_pose_report]
    row.update({
        "effective_affordance": c.analysis.effective_affordance,
        "predicted": v.functional,
        "predicted_ablated": a.functional,
        "n_stable_poses": len(c.stable_poses),
        "n_candidates": sum(r["candidate"] for r in v.per_pose_report),
        "max_score": max(scores) if scores else None,
    })
    if v.functional:
        row["optimal_pose_id"] = v.optimal_pose_id
        row["optimal_up"] = [float(x) for x in v.optimal_pose.body_frame_up]
        row["best_score"] = v.best_interaction.score
        if ups:
            row["functional_pose_correct"] = up_matches(v.optimal_pose, ups, POSE_TOLERANCE_DEG)
    if item.label is not None:
        row["correct"] = v.functional == item.label
        row["correct_ablated"] = a.functional == item.label
    return row


@dataclass
class BatchReport:
    rows: list[dict]
    validation_enabled: bool = True
    seed: int = 0
    timings: list[float] = field(default_factory=list)

    def _labelled(self) -> list[dict]:
        return [r for r in self.rows if r["label"] is not None]

    def confusion(self, ablated: bool = False) -> dict:
        key = "predicted_ablated" if ablated else "predicted"
        c = {"tp": 0, "fp": 0, "tn": 0, "fn": 0, "unlabelled": 0}
        for r in self.rows:
            if r["label"] is None:
                c["unlabelled"] += 1
                continue
            # an errored object counts as the wrong answer
            pred = (not r["label"]) if r[key] is None else r[key]
            c[("t" if pred == r["label"] else "f") + ("p" if pred else "n")] += 1
        return c

    def accuracy(self, ablated: bool = False, rows: list[dict] | None = None) -> float | None:
        rows = self._labelled() if rows is None else [r for r in rows if r["label"] is not None]
        if not rows:
            return None
        key = "correct_ablated" if ablated else "correct"
        return sum(bool(r[key]) for r in rows) / len(rows)

    def per_class(self) -> dict:
        out = {}
        for kind in sorted({r["kind"] for r in self._labelled()}):
            rows = [r for r in self.rows if r["kind"] == kind]
            out[kind] = {"n": len(rows), "accuracy": self.accuracy(rows=rows),
                         "accuracy_ablated": self.accuracy(True, rows)}
        return out

    def functional_pose_accuracy(self) -> float | None:
        tps = [r for r in self.rows if r["label"] and r["predicted"] and r["functional_pose_correct"] is not None]
        if not tps:
            return None
        return sum(bool(r["functional_pose_correct"]) for r in tps) / len(tps)

    def to_dict(self) -> dict:
        adversarial = [r for r in self.rows if r["adversarial"]]
        return {
            "n_objects": len(self.rows),
            "seed": self.seed,
            "validation_enabled": self.validation_enabled,
            "confusion": self.confusion(),
            "accuracy": self.accuracy(),
            "n_correct": sum(bool(r["correct"]) for r in self.rows),
            "per_class": self.per_class(),
            "functional_pose_accuracy": self.functional_pose_accuracy(),
            "ablated": {
                "confusion": self.confusion(ablated=True),
                "accuracy": self.accuracy(ablated=True),
                "n_correct": sum(bool(r["correct_ablated"]) for r in self.rows),
            },
            "adversarial": {
                "n": len(adversarial),
                "accuracy": self.accuracy(rows=adversarial),
                "accuracy_ablated": self.accuracy(True, adversarial),
                "flipped": sum(bool(r["correct"]) and not r["correct_ablated"] for r in adversarial),
            },
            "n_errors": sum(r["error"] is not None for r in self.rows),
        }

    def timing_stats(self) -> dict:
        t = np.asarray(self.timings, dtype=float)
        if t.size == 0:
            return {"n": 0}
        return {"n": int(t.size), "total_s": float(t.sum()), "mean_s": float(t.mean()),
                "max_s": float(t.max()), "per_object_s": [float(x) for x in t]}


_worker_state: dict = {}


def _worker_init(provider_cfg: ProviderConfig, record_dir) -> None:
    _worker_state["provider"] = make_provider(provider_cfg, record_dir)


def _worker_run(args) -> tuple[dict, float]:
    item, index, seed, world, validate, n_orientations = args
    t0 = time.perf_counter()
    row = _row(item, index, seed, world, _worker_state["provider"], validate, n_orientations)
    return row, time.perf_counter() - t0


def run_batch(
    items: list[BatchItem],
    provider_cfg: ProviderConfig | None = None,
    config: WorldConfig | None = None,
    seed: int = 0,
    validate: bool = True,
    n_orientations: int = 64,
    workers: int = 1,
    record_dir=None,
    provider: Provider | None = None,
) -> BatchReport:
    """Classify every item; rows come back in input order whatever the worker count."""
    if not items:
        raise InvalidInputError("dataset is empty")
    config = config or WorldConfig()
    provider_cfg = provider_cfg or ProviderConfig()
    jobs = [(it, i, seed, config, validate, n_orientations) for i, it in enumerate(items)]
    if workers > 1 and provider is None:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(provider_cfg, record_dir)) as pool:
            results = list(pool.map(_worker_run, jobs))
    else:
        _worker_state["provider"] = provider or make_provider(provider_cfg, record_dir)
        results = [_worker_run(j) for j in jobs]
    rows = [r for r, _ in results]
    return BatchReport(rows, validate, seed, [t for _, t in results])


CSV_COLUMNS = ("index", "name", "kind", "affordance", "effective_affordance", "label", "predicted",
               "predicted_ablated", "correct", "correct_ablated", "adversarial", "functional_pose_correct",
               "optimal_pose_id", "best_score", "max_score", "n_stable_poses", "n_candidates", "error")


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_report(report: BatchReport, out_dir, figures: bool = True) -> Path:
    """results.jsonl, summary.json and report.csv are deterministic; timing.json is not."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "results.jsonl").write_text("".join(_dumps(r) + "\n" for r in report.rows), encoding="utf-8")
    (d / "summary.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(d / "report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(report.rows)
    (d / "timing.json").write_text(json.dumps(report.timing_stats(), indent=2) + "\n", encoding="utf-8")
    if figures:
        from afford.harness.plots import write_figures

        write_figures(report, d / "figures")
    return d


__all__ = [
    "BatchItem",
    "BatchReport",
    "initial_pose",
    "load_dataset",
    "run_batch",
    "suite_items",
    "write_dataset",
    "write_report",
]
