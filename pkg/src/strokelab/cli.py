"""Command-line entry points: train, simulate, refine, segment, gen-demos,
and the feedback-session service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import promp, segment, sim


def _load_scenario(path: str | None) -> sim.ScenarioConfig:
    if path is None:
        return sim.ScenarioConfig()
    return sim.load_scenario(path)


def _metrics_doc(metrics: sim.ExperimentMetrics, extra: dict | None = None) -> str:
    doc = metrics.as_dict()
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def cmd_train(args) -> int:
    demo_dir = Path(args.demo_dir)
    files = sorted(demo_dir.glob("*.rec"))
    if len(files) < 2:
        print(f"error: need at least 2 recording files in {demo_dir}", file=sys.stderr)
        return 1
    scenario = _load_scenario(args.scenario)
    try:
        demos = [segment.load_recording(f) for f in files]
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    dofs = {d.n_dof for d in demos}
    if len(dofs) != 1:
        print(f"error: demos disagree on DoF count: {sorted(dofs)}", file=sys.stderr)
        return 1
    try:
        params, z_hit = sim.train_base_primitive(scenario, demos, n_basis=args.n_basis)
    except (ValueError, segment.NoStroke) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    promp.save_params(params, args.out)

    # per-demo ridge reconstruction RMSE on the phase grid
    basis = params.basis
    phi = promp.basis_matrix(basis.phase_grid(), basis)
    gram = cho_factor(phi.T @ phi + promp.DEFAULT_RIDGE * np.eye(basis.n_basis))
    for f, rec in zip(files, demos):
        arm_rec = segment.Recording(timestamps=rec.timestamps, positions=rec.positions[:, 1:])
        s, e = segment.segment_stroke(arm_rec)
        tau = promp.Trajectory(timestamps=rec.timestamps[s:e + 1],
                               positions=rec.positions[s:e + 1, 1:])
        q = promp.resample_to_phase(tau, basis.n_phase)
        w = cho_solve(gram, phi.T @ q)
        rmse = float(np.sqrt(np.mean((q - phi @ w) ** 2)))
        print(f"{f.name}: reconstruction RMSE {rmse:.6f} rad")
    print(f"hit phase (mean over demos): {z_hit:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_gen_demos(args) -> int:
    scenario = _load_scenario(args.scenario)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    demos = sim.scripted_demos(scenario, n_demos=args.count, seed=args.seed,
                               variation_std=args.variation)
    for i, rec in enumerate(demos):
        segment.save_recording(rec, out_dir / f"demo_{i:03d}.rec")
    print(f"wrote {len(demos)} demos to {out_dir}")
    return 0


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario)
    try:
        params = promp.load_params(args.params)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load primitive: {exc}", file=sys.stderr)
        return 1
    metrics, outcomes = sim.run_experiment(params, args.balls, scenario, args.seed)
    out = _metrics_doc(metrics, {"seed": args.seed})
    if args.out:
        Path(args.out).write_text(out)
    sys.stdout.write(out)
    if args.log_dir:
        log_dir = Path(args.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        names = tuple(["rail"] + [f"j{i+1}" for i in range(scenario.n_arm)])
        for i, o in enumerate(outcomes):
            rec = segment.Recording(timestamps=o.executed.timestamps,
                                    positions=o.executed.positions,
                                    joint_names=names)
            segment.save_recording(rec, log_dir / f"episode_{i:03d}.rec")
            sidecar = {
                "hit": o.hit,
                "min_racket_ball_distance": o.min_racket_ball_distance,
                "return_crossed_net": o.return_crossed_net,
                "return_hit_pillar_zone": o.return_hit_pillar_zone,
                "reward": o.reward,
                "swung": o.swung,
            }
            (log_dir / f"episode_{i:03d}.outcome.json").write_text(
                json.dumps(sidecar, sort_keys=True, indent=1) + "\n")
    return 0


def cmd_refine(args) -> int:
    if args.batch not in (20, 50):
        print("error: --batch must be 20 or 50", file=sys.stderr)
        return 1
    scenario = _load_scenario(args.scenario)
    if args.temperature is not None:
        scenario.temperature = args.temperature
    try:
        params = promp.load_params(args.params)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load primitive: {exc}", file=sys.stderr)
        return 1
    report = sim.refinement_experiment(
        params, scenario, rounds=args.rounds, batch_n=args.batch, seed=args.seed)
    rows = [{"round": "base", **report.base_metrics.as_dict()}]
    for r in report.rounds:
        rows.append({
            "round": r.round_index,
            "batch_n": r.batch_n,
            "n_used": r.n_used,
            **r.eval_metrics.as_dict(),
        })
    doc = json.dumps({"seed": args.seed, "batch": args.batch, "rows": rows},
                     sort_keys=True, indent=1) + "\n"
    sys.stdout.write(doc)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "refine_metrics.json").write_text(doc)
    promp.save_params(report.final_params, out_dir / "refined_params.json")
    return 0


def cmd_segment(args) -> int:
    try:
        rec = segment.load_recording(args.recording)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        start, end = segment.segment_stroke(rec, v_on=args.v_on, v_off=args.v_off)
    except segment.NoStroke:
        print(json.dumps({"stroke": None}) + "\n", end="")
        return 0
    doc = {"stroke": {"start_index": start, "end_index": end,
                      "t_start": float(rec.timestamps[start]),
                      "t_end": float(rec.timestamps[end])}}
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import FeedbackService, create_app

    scenario = _load_scenario(args.scenario)
    if args.temperature is not None:
        scenario.temperature = args.temperature
    params = promp.load_params(args.params)
    service = FeedbackService(
        out_dir=Path(args.out_dir), scenario=scenario, base_params=params,
        batch_n=args.batch, rounds=args.rounds, seed=args.seed)
    app = create_app(service)
    uvicorn.run(app, host="127.0.0.1", port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strokelab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a primitive from demonstration recordings")
    p.add_argument("--demo-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario")
    p.add_argument("--n-basis", type=int, default=8)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gen-demos", help="write scripted stroke demonstrations")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scenario")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variation", type=float, default=0.02)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("simulate", help="run a consecutive-ball evaluation")
    p.add_argument("--params", required=True)
    p.add_argument("--scenario")
    p.add_argument("--balls", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.add_argument("--log-dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("refine", help="oracle-feedback refinement experiment")
    p.add_argument("--params", required=True)
    p.add_argument("--scenario")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--batch", type=int, default=20, choices=(20, 50))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("segment", help="locate the stroke in a recording")
    p.add_argument("--recording", required=True)
    p.add_argument("--v-on", type=float, default=0.5)
    p.add_argument("--v-off", type=float, default=0.1)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("serve", help="run the human-feedback rating service")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--params", required=True)
    p.add_argument("--scenario")
    p.add_argument("--batch", type=int, default=20, choices=(20, 50))
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
