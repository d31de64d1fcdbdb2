"""Command-line entry point: ``afford <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from afford.errors import AffordError, InvalidInputError, ProviderError
from afford.geometry.mesh import load_mesh
from afford.physics.config import WorldConfig
from afford.reasoner.core import PROVIDER_KINDS, ProviderConfig, make_provider

EXIT_FUNCTIONAL = 0
EXIT_NOT_FUNCTIONAL = 3
EXIT_INPUT = 4
EXIT_PROVIDER = 5
EXIT_PIPELINE = 6

log = logging.getLogger("afford")


def _configs(args) -> tuple[WorldConfig, ProviderConfig]:
    if args.config:
        from afford.harness.config import load_config

        world, provider = load_config(args.config)
    else:
        world, provider = WorldConfig(), ProviderConfig()
    changes = {}
    if args.provider:
        changes["kind"] = args.provider
    if args.fixtures_dir:
        changes["fixtures_dir"] = str(args.fixtures_dir)
    if changes:
        provider = ProviderConfig(**{**dataclasses.asdict(provider), **changes})
    return world, provider


def _emit(doc, args, filename: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_stable_poses(args) -> int:
    from afford.stable_pose import find_stable_poses

    world, _ = _configs(args)
    mesh = load_mesh(args.mesh)
    poses = find_stable_poses(mesh, n_orientations=args.n_orientations, seed=args.seed, config=world)
    _emit([p.to_dict() for p in poses], args, "stable_poses.json")
    return 0


def cmd_analyze(args) -> int:
    from afford.analysis import analyze
    from afford.pipeline import build_profile, describe_task
    from afford.stable_pose import find_stable_poses

    world, pcfg = _configs(args)
    provider = make_provider(pcfg)
    mesh = load_mesh(args.mesh)
    task = describe_task(mesh, args.affordance)
    analysis = analyze(task, provider)
    _emit(analysis.to_dict(), args, "analysis.json")
    if args.profile:
        if not args.out:
            raise InvalidInputError("--profile needs --out")
        poses = find_stable_poses(mesh, n_orientations=args.n_orientations, seed=args.seed, config=world)
        profile = build_profile(task, analysis, mesh, poses, provider)
        d = profile.save(Path(args.out) / "profile")
        (d / "stable_poses.json").write_text(json.dumps([p.to_dict() for p in poses], indent=2) + "\n")
    return 0


def cmd_imagine(args) -> int:
    from afford.imagination import run_plan
    from afford.profile import ImaginationProfile
    from afford.stable_pose import StablePose, find_stable_poses

    world, _ = _configs(args)
    mesh = load_mesh(args.mesh)
    bundle = Path(args.profile)
    profile = ImaginationProfile.load(bundle)
    sp_file = bundle / "stable_poses.json"
    if sp_file.exists():
        poses = [StablePose.from_dict(d) for d in json.loads(sp_file.read_text())]
    else:
        poses = find_stable_poses(mesh, n_orientations=args.n_orientations, seed=args.seed, config=world)
    out = Path(args.out) if args.out else None
    lines = []
    for pose_id in sorted(profile.trajectories):
        if pose_id >= len(poses):
            raise InvalidInputError(f"profile refers to stable pose {pose_id}, only {len(poses)} known")
        descriptions = {p.plan_id: p.description for p in profile.plans.get(pose_id, [])}
        for traj in sorted(profile.trajectories[pose_id], key=lambda t: t.plan_id):
            worlds: list = []
            r = run_plan(mesh, poses[pose_id], profile.agent, profile.offsets, traj, world, pose_id,
                         description=descriptions.get(traj.plan_id, ""), world_out=worlds)
            lines.append(r.to_json())
            if args.snapshots and out is not None:
                snap = out / "snapshots"
                snap.mkdir(parents=True, exist_ok=True)
                (snap / f"pose{pose_id}_plan{traj.plan_id}.json").write_text(json.dumps(worlds[0].snapshot()))
                (snap / f"pose{pose_id}_plan{traj.plan_id}.obj").write_text(worlds[0].to_obj())
    text = "".join(line + "\n" for line in lines)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.jsonl").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_classify(args) -> int:
    from afford.pipeline import classify

    world, pcfg = _configs(args)
    mesh = load_mesh(args.mesh)
    c = classify(mesh, args.affordance, make_provider(pcfg), world, seed=args.seed,
                 n_orientations=args.n_orientations, validate=not args.no_pose_validation)
    _emit(c.verdict.to_dict(), args, "verdict.json")
    return EXIT_FUNCTIONAL if c.verdict.functional else EXIT_NOT_FUNCTIONAL


def _batch_items(args):
    from afford.harness.batch import load_dataset, suite_items

    if args.dataset:
        return load_dataset(args.dataset, args.affordance)
    return suite_items()


def _print_summary(report) -> None:
    s = report.to_dict()
    sys.stdout.write(
        f"objects {s['n_objects']}  accuracy {s['accuracy']}  functional-pose accuracy "
        f"{s['functional_pose_accuracy']}  ablated accuracy {s['ablated']['accuracy']}  errors {s['n_errors']}\n"
    )


def cmd_batch(args) -> int:
    from afford.harness.batch import run_batch, write_report

    world, pcfg = _configs(args)
    report = run_batch(_batch_items(args), pcfg, world, seed=args.seed, validate=not args.no_pose_validation,
                       n_orientations=args.n_orientations, workers=args.workers)
    write_report(report, args.out or "afford_out", figures=not args.no_figures)
    _print_summary(report)
    return 0


def cmd_record_fixtures(args) -> int:
    from afford.harness.batch import run_batch, write_report

    world, pcfg = _configs(args)
    if pcfg.kind == "replay":
        raise InvalidInputError("record fixtures from the heuristic or remote provider, not from replay")
    target = Path(args.fixtures_dir or pcfg.fixtures_dir or "fixtures")
    pcfg = dataclasses.replace(pcfg, fixtures_dir=None)
    report = run_batch(_batch_items(args), pcfg, world, seed=args.seed, validate=not args.no_pose_validation,
                       n_orientations=args.n_orientations, workers=args.workers, record_dir=target)
    if args.out:
        write_report(report, args.out, figures=not args.no_figures)
    n = len(list(target.glob("*.json")))
    sys.stdout.write(f"{n} fixtures in {target}\n")
    return 0


def cmd_gen_dataset(args) -> int:
    from afford.harness.batch import suite_items, write_dataset

    d = write_dataset(suite_items(), args.out or "dataset")
    sys.stdout.write(f"wrote {d}\n")
    return 0


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags with suppressed defaults so that
    # "afford --seed 3 batch" and "afford batch --seed 3" mean the same
    def d(value):
        return argparse.SUPPRESS if suppress else value

    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--provider", choices=PROVIDER_KINDS, default=d(None),
                   help="reasoning provider (default from config, else heuristic)")
    c.add_argument("--seed", type=int, default=d(0))
    c.add_argument("--config", default=d(None), help="flat key = value config file")
    c.add_argument("--out", default=d(None), help="output directory")
    c.add_argument("--fixtures-dir", default=d(None), help="fixture directory for replay or recording")
    c.add_argument("--n-orientations", type=int, default=d(64), help="drop count for stable poses")
    c.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    p = argparse.ArgumentParser(prog="afford", description="Affordance classification by simulated interaction.",
                                parents=[_common(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stable-poses", parents=[common], help="stable resting poses of a mesh")
    s.add_argument("mesh")
    s.set_defaults(func=cmd_stable_poses)

    s = sub.add_parser("analyze", parents=[common], help="affordance analysis of a mesh")
    s.add_argument("mesh")
    s.add_argument("affordance")
    s.add_argument("--profile", action="store_true", help="also write the imagination profile bundle")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("imagine", parents=[common], help="simulate a saved profile bundle")
    s.add_argument("mesh")
    s.add_argument("profile", help="profile bundle directory")
    s.add_argument("--snapshots", action="store_true", help="write per-scenario scene snapshots")
    s.set_defaults(func=cmd_imagine)

    s = sub.add_parser("classify", parents=[common], help="full pipeline on one mesh")
    s.add_argument("mesh")
    s.add_argument("affordance")
    s.add_argument("--no-pose-validation", action="store_true", help="skip the pose validation step")
    s.set_defaults(func=cmd_classify)

    for name, func, helptext in (("batch", cmd_batch, "evaluate the suite or a dataset"),
                                 ("record-fixtures", cmd_record_fixtures, "run a batch and record provider answers")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--dataset", help="dataset directory (default: the built-in procedural suite)")
        s.add_argument("--affordance", help="affordance name for every object (overrides the manifest)")
        s.add_argument("--no-pose-validation", action="store_true")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--no-figures", action="store_true")
        s.set_defaults(func=func)

    s = sub.add_parser("gen-dataset", parents=[common], help="write the procedural suite as OFF files")
    s.set_defaults(func=cmd_gen_dataset)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProviderError as exc:
        log.error("%s", exc)
        return EXIT_PROVIDER
    except (InvalidInputError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except AffordError as exc:
        log.error("%s", exc)
        return EXIT_PIPELINE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
