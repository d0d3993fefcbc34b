"""Command-line front end.

Exit codes: 0 success, 2 validation error (bad documents, missing files),
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import documents
from .errors import NumericalError, ValidationError
from .gradcheck import check_term_gradients
from .kinematics import forward_kinematics
from .meshio import write_obj, write_ply
from .metrics import evaluate
from .pipeline import RetargetRequest, retarget

GRAD_TERMS = ("contact", "orientation", "interpen", "self_pen", "fingertip")


def _build_request(problem: documents.ResolvedProblem, model) -> RetargetRequest:
    return RetargetRequest(
        object_mesh=problem.object_mesh,
        demo=problem.demo,
        model=model,
        hyperparams=problem.hyperparams,
        stage_b_schedule=problem.stage_b_schedule,
        stage_c_schedule=problem.stage_c_schedule,
        finger_init_strategy=problem.finger_init_strategy,
        loss_mask=problem.loss_mask,
        discrete_bins=problem.discrete_bins,
        wrench=problem.wrench,
        direction_samples=problem.direction_samples,
        seed=problem.seed,
    )


def cmd_retarget(args) -> int:
    problem = documents.load_problem(args.problem)
    model = documents.load_gripper(
        args.gripper, link_samples=problem.gripper_link_samples, seed=problem.seed + 2
    )
    result = retarget(_build_request(problem, model))
    doc = documents.build_result_doc(
        problem,
        model.name,
        result.final_config,
        {
            "after_init": result.breakdown_after_init,
            "after_fingers": result.breakdown_after_fingers,
            "final": result.breakdown_final,
        },
        result.metrics,
        result.warnings,
    )
    documents.write_doc(args.out, doc)
    if args.trace:
        documents.write_trace_csv(args.trace, result.trace)
    return 0


def cmd_evaluate(args) -> int:
    problem = documents.load_problem(args.problem)
    model = documents.load_gripper(
        args.gripper, link_samples=problem.gripper_link_samples, seed=problem.seed + 2
    )
    config = documents.load_config_doc(args.config)
    report = evaluate(
        problem.object_mesh,
        problem.demo,
        model,
        config,
        problem.hyperparams,
        problem.wrench,
        direction_samples=problem.direction_samples,
        seed=problem.seed,
    )
    doc = {
        "schema_version": documents.SCHEMA_VERSION,
        "tool_version": documents.TOOL_VERSION,
        "metrics": report.to_dict(),
    }
    documents.write_doc(args.out, doc)
    return 0


def cmd_heatmap(args) -> int:
    if (args.gripper is None) != (args.config is None):
        raise ValidationError("--gripper and --config must be given together")
    problem = documents.load_problem(args.problem)
    obj = problem.object_mesh
    if args.gripper is not None:
        model = documents.load_gripper(
            args.gripper, link_samples=problem.gripper_link_samples, seed=problem.seed + 2
        )
        config = documents.load_config_doc(args.config)
        source_points = forward_kinematics(model, config).sample_points
    else:
        source_points = problem.demo.hand_mesh.sample_points
    # evaluate the soft-contact field at the mesh vertices for coloring
    from scipy.spatial import cKDTree

    d, _ = cKDTree(source_points).query(obj.vertices)
    values = np.exp(-d / problem.hyperparams.heatmap_falloff)
    red = np.floor(255.0 * values + 0.5).astype(np.uint8)
    blue = np.floor(255.0 * (1.0 - values) + 0.5).astype(np.uint8)
    colors = np.stack([red, np.zeros_like(red), blue], axis=1)
    write_ply(args.out, obj.vertices, obj.faces, colors)
    return 0


def cmd_fk(args) -> int:
    model = documents.load_gripper(args.gripper)
    config = documents.load_config_doc(args.config)
    posed = forward_kinematics(model, config)
    parts = []
    for i, link in enumerate(model.links):
        verts = link.mesh.vertices @ posed.link_rotations[i].T + posed.link_translations[i]
        parts.append((link.name, verts, link.mesh.faces))
    write_obj(args.out, parts)
    return 0


def cmd_check_grads(args) -> int:
    problem = documents.load_problem(args.problem, cli_seed=args.seed)
    model = documents.load_gripper(
        args.gripper, link_samples=problem.gripper_link_samples, seed=problem.seed + 2
    )
    terms = [args.term] if args.term else list(GRAD_TERMS)
    for term in terms:
        if term not in GRAD_TERMS:
            raise ValidationError(f"unknown loss term {term!r}")
    worst = check_term_gradients(
        model,
        problem.object_mesh,
        problem.demo,
        problem.hyperparams,
        terms=terms,
        configs=args.configs,
        seed=args.seed if args.seed is not None else problem.seed,
    )
    ok = True
    for term, err in worst.items():
        status = "ok" if err < 1e-3 else "FAIL"
        print(f"{term:12s} max relative error {err:.3e}  {status}")
        ok = ok and err < 1e-3
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspmimic",
        description="Retarget human grasp demonstrations to multi-fingered grippers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retarget", help="run the full pipeline and write a result document")
    p.add_argument("--problem", required=True)
    p.add_argument("--gripper", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="optional CSV path for the refinement trace")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("evaluate", help="compute metrics for a given pose without optimizing")
    p.add_argument("--problem", required=True)
    p.add_argument("--gripper", required=True)
    p.add_argument("--config", required=True, help="result document or explicit pose document")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="write the object mesh as a colored PLY")
    p.add_argument("--problem", required=True)
    p.add_argument("--gripper", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("fk", help="export the posed gripper as OBJ")
    p.add_argument("--gripper", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("check-grads", help="compare analytic gradients against finite differences")
    p.add_argument("--problem", required=True)
    p.add_argument("--gripper", required=True)
    p.add_argument("--term", default=None, choices=GRAD_TERMS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--configs", type=int, default=5)
    p.set_defaults(func=cmd_check_grads)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())
