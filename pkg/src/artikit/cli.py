"""Command-line entry point (``artikit``).

Exit codes: 0 success, 1 validation or verification failure, 2 usage error,
3 I/O or remote failure.  Every command accepts ``--json`` for
machine-readable output on stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .assembler import AssembledModel, assemble_at_rest
from .errors import ArtikitError, HttpError, StoreIoError
from .export import export_animation, export_scene, export_urdf
from .metrics import JointRecord, chamfer, evaluate_clouds, hausdorff, iogt, joint_set_metrics
from .orchestrator import AgentBinding, Budgets, RemoteChat, RuleBased, load_task, run_pipeline
from .part import AABB, TriangleMesh, load_programs, parse_program, sample_surface
from .plan import AssemblyPlan, parse_plan, to_internal, validate_plan
from .store import ExperienceCase, ExperienceStore, cases_for_prompt

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("artikit")


class UsageError(Exception):
    pass


# ----------------------------------------------------------------- config


DEFAULTS: dict[str, dict[str, str]] = {
    "remote": {"endpoint": "", "model": "", "templates": ""},
    "budgets": {"exec_retries": "5", "code_regens": "2", "design_rollbacks": "2"},
    "pipeline": {"seed": "0", "workers": "1"},
}


def load_config(path: str | None) -> configparser.ConfigParser:
    """Defaults, overlaid by the INI file at ``path`` if given."""
    cfg = configparser.ConfigParser()
    cfg.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file {path} not found")
        cfg.read(path, encoding="utf-8")
    return cfg


def _seed(args: argparse.Namespace, cfg: configparser.ConfigParser, fallback: Any = None) -> int:
    if args.seed is not None:
        return args.seed
    if fallback is not None:
        return int(fallback)
    return cfg.getint("pipeline", "seed")


# ------------------------------------------------------------------ io


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_plan(path: str) -> AssemblyPlan:
    return parse_plan(_read(path))


def _assembled(args: argparse.Namespace) -> AssembledModel:
    plan = _load_plan(args.plan)
    report = validate_plan(plan)
    if not report.ok:
        raise _Invalid(report.to_json())
    return assemble_at_rest(plan, load_programs(plan, args.parts))


def _parse_q(plan: AssemblyPlan, text: str | None) -> dict[str, tuple[float, ...]]:
    """``{"joint": [values]}`` in plan units (deg, mm) to kernel units."""
    if not text:
        return {}
    raw = json.loads(_read(text[1:]) if text.startswith("@") else text)
    if not isinstance(raw, dict):
        raise UsageError("--q expects a JSON object {joint_id: [values]}")
    out = {}
    for jid, vals in raw.items():
        try:
            joint = plan.joint(jid)
        except KeyError:
            raise UsageError(f"unknown joint id {jid!r}") from None
        vals = vals if isinstance(vals, list) else [vals]
        if len(vals) != joint.dof:
            raise UsageError(f"joint {jid!r} takes {joint.dof} values, got {len(vals)}")
        out[jid] = tuple(to_internal(float(v), k) for v, k in zip(vals, joint.kinds))
    return out


def _load_cloud(path: str, points: int, seed: int) -> np.ndarray:
    """Raw clouds (.xyz, .npy) load as-is; meshes and part programs are surface-sampled."""
    p = Path(path)
    if p.suffix == ".npy":
        return np.load(p).reshape(-1, 3)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".obj":
        return TriangleMesh.from_obj(text).sample(points, seed)
    if p.suffix == ".json":
        return sample_surface(parse_program(text), points, seed)
    return np.loadtxt(text.splitlines(), ndmin=2).reshape(-1, 3)


class _Invalid(Exception):
    def __init__(self, payload: dict) -> None:
        super().__init__("validation failed")
        self.payload = payload


def _emit(args: argparse.Namespace, payload: Any, text: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif text is not None:
        print(text)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))


# --------------------------------------------------------------- commands


def cmd_plan_validate(args, cfg) -> int:
    try:
        plan = _load_plan(args.plan)
    except ArtikitError as exc:
        _emit(args, {"ok": False, "error": str(exc)}, f"invalid plan: {exc}")
        return EXIT_FAIL
    report = validate_plan(plan)
    lines = [f"{'ok' if report.ok else 'INVALID'}: {plan.name} ({len(plan.parts)} parts, DOF {report.computed_dof})"]
    lines += [f"  [{v.code}] {v.message}" for v in report.violations]
    _emit(args, report.to_json(), "\n".join(lines))
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_assemble(args, cfg) -> int:
    model = _assembled(args)
    data = model.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(data, indent=2), encoding="utf-8")
    lines = [f"{pid}: t={[round(c, 6) for c in p.translation]} q={[round(c, 6) for c in p.rotation.quat]}" for pid, p in model.poses.items()]
    _emit(args, data, "\n".join(lines))
    return EXIT_OK


def cmd_fk(args, cfg) -> int:
    model = _assembled(args)
    q = _parse_q(model.plan, args.q)
    posed = model.at(q)
    for w in posed.warnings:
        print(w, file=sys.stderr)
    _emit(args, posed.to_json())
    return EXIT_OK


def cmd_animate(args, cfg) -> int:
    model = _assembled(args)
    paths = export_animation(model, args.frames, args.out)
    _emit(args, {"frames": [str(p) for p in paths]}, f"wrote {len(paths)} pose files to {args.out}")
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    from .verifier import verify

    model = _assembled(args)
    report = verify(model, samples=args.samples, frames_per_dof=args.frames, seed=_seed(args, cfg))
    lines = [f"{'PASS' if report.passed else 'FAIL'}: {model.plan.name}"]
    lines += [f"  {c.name}: {c.cls} {c.evidence}" for c in report.failures]
    _emit(args, report.to_json(), "\n".join(lines))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_export(args, cfg) -> int:
    model = _assembled(args)
    if args.format == "urdf":
        doc, path = export_urdf(model, args.out, args.resolution)
        problems = doc.lint(Path(path).parent)
        data = {"urdf": str(path), "links": len(doc.links), "joints": len(doc.joints), "lint": problems}
        _emit(args, data, f"wrote {path} ({len(doc.links)} links, {len(doc.joints)} joints)")
        return EXIT_OK if not problems else EXIT_FAIL
    path = export_scene(model, _parse_q(model.plan, args.q), args.out, args.resolution)
    _emit(args, {"scene": str(path)}, f"wrote {path}")
    return EXIT_OK


def cmd_metrics(args, cfg) -> int:
    if args.metric == "joints":
        def records(path: str) -> list[JointRecord]:
            return [JointRecord(d["type"], tuple(d["origin"]), tuple(d["axis"])) for d in json.loads(_read(path))]

        data = joint_set_metrics(records(args.a), records(args.b), args.threshold)
        data["matches"] = [list(m) for m in data["matches"]]
        _emit(args, data, f"typeAccuracy={data['typeAccuracy']:.6g} f1={data['f1']:.6g}")
        return EXIT_OK
    seed = _seed(args, cfg)
    a, b = _load_cloud(args.a, args.points, seed), _load_cloud(args.b, args.points, seed + 1)
    if args.icp or args.normalize:
        scores = evaluate_clouds(a, b, use_icp=args.icp, mode="diagonal" if args.normalize == "diagonal" else "unitCube")
        data = scores.to_json()
    else:
        data = {"pcd": chamfer(a, b), "hd": hausdorff(a, b), "iogt": iogt(AABB.of_points(a), AABB.of_points(b))}
    data["metric"] = args.metric
    data["value"] = data[{"cd": "pcd", "hd": "hd", "iogt": "iogt"}[args.metric]]
    _emit(args, data, f"{args.metric}={data['value']:.12g}")
    return EXIT_OK


def _chooser(args):
    if args.choose is not None:
        return args.choose
    if not sys.stdin.isatty():
        return 0

    def ask(summaries: Sequence[str]) -> int:
        for i, s in enumerate(summaries):
            print(f"  [{i}] {s}", file=sys.stderr)
        reply = input(f"choose an alternative [0-{len(summaries) - 1}, default 0]: ").strip()
        return int(reply) if reply else 0

    return ask


def cmd_pipeline_run(args, cfg) -> int:
    task = load_task(args.task)
    budgets = Budgets(
        cfg.getint("budgets", "exec_retries"),
        cfg.getint("budgets", "code_regens"),
        cfg.getint("budgets", "design_rollbacks"),
    )
    if args.agents == "stub":
        if not args.fixtures:
            raise UsageError("--agents stub needs --fixtures DIR")
        agents = AgentBinding.from_fixtures(args.fixtures)
    else:
        remote = dict(cfg["remote"])
        if args.endpoint:
            remote["endpoint"] = args.endpoint
        if args.model:
            remote["model"] = args.model
        if not remote.get("endpoint") or not remote.get("model"):
            raise UsageError("--agents remote needs an endpoint and model (flags or [remote] in --config)")
        chat = RemoteChat.from_config(remote)
        agents = AgentBinding(chat, chat, RuleBased(), RuleBased(), RuleBased())
    store = ExperienceStore(args.store) if args.store else None
    workers = args.workers if args.workers is not None else cfg.getint("pipeline", "workers")
    result = run_pipeline(task, agents, budgets, _seed(args, cfg, task.get("seed")), store, _chooser(args), workers)
    data = {"trace": result.trace.to_json(), "assembly": result.model.to_json() if result.model else None}
    if args.out and result.model is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.json").write_text(json.dumps(data["trace"], indent=2), encoding="utf-8")
        (out / "assembly.json").write_text(json.dumps(data["assembly"], indent=2), encoding="utf-8")
        (out / "plan.json").write_text(json.dumps(result.plan.to_json(), indent=2), encoding="utf-8")
        for pid, prog in result.geometries.items():
            (out / "parts").mkdir(exist_ok=True)
            (out / "parts" / f"{pid}.json").write_text(json.dumps(prog.to_json(), indent=2), encoding="utf-8")
    tr = result.trace
    text = f"{tr.status}: {' -> '.join(tr.transitions)}\ncalls: {tr.calls}"
    if tr.failure:
        text += f"\nfailure: {tr.failure}"
    _emit(args, data, text)
    return EXIT_OK if result.ok else EXIT_FAIL


def cmd_store(args, cfg) -> int:
    store = ExperienceStore(args.store)
    if args.action == "add":
        case = ExperienceCase(args.partition, args.requirement, args.plan_digest, tuple(args.issue), tuple(args.heuristic))
        cid = store.add_case(case)
        _emit(args, {"id": cid}, cid)
    elif args.action == "query":
        hits = store.query(args.text, args.context, args.k_good, args.k_issue)
        data = [{"id": h.case.id, **c} for h, c in zip(hits, cases_for_prompt(hits))]
        _emit(args, data, "\n".join(f"{d['score']:.4f} {d['partition']:5s} {d['requirement']}" for d in data) or "(no cases)")
    else:
        stats = store.stats()
        _emit(args, stats, " ".join(f"{k}={v}" for k, v in stats.items()))
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("plan")
    model.add_argument("--parts", required=True, help="directory of part-program JSON files")

    p = argparse.ArgumentParser(prog="artikit", description="Articulated assembly toolkit")
    p.add_argument("--version", action="version", version=f"artikit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="plan utilities").add_subparsers(dest="action", required=True)
    v = plan.add_parser("validate", parents=[common])
    v.add_argument("plan")
    v.set_defaults(func=cmd_plan_validate)

    a = sub.add_parser("assemble", parents=[common, model], help="pose every part at rest")
    a.add_argument("--out")
    a.set_defaults(func=cmd_assemble)

    f = sub.add_parser("fk", parents=[common, model], help="forward kinematics")
    f.add_argument("--q", help='JSON {"joint": [values in deg/mm]} or @file')
    f.set_defaults(func=cmd_fk)

    an = sub.add_parser("animate", parents=[common, model], help="write keyframe pose files")
    an.add_argument("--frames", type=int, default=5, help="frames per degree of freedom")
    an.add_argument("--out", required=True)
    an.set_defaults(func=cmd_animate)

    ve = sub.add_parser("verify", parents=[common, model], help="coincidence and interference checks")
    ve.add_argument("--samples", type=int, default=2048)
    ve.add_argument("--frames", type=int, default=5)
    ve.set_defaults(func=cmd_verify)

    ex = sub.add_parser("export", help="URDF or scene export")
    exs = ex.add_subparsers(dest="format", required=True)
    for fmt in ("urdf", "scene"):
        e = exs.add_parser(fmt, parents=[common, model])
        e.add_argument("--out", required=True)
        e.add_argument("--resolution", type=int, default=64)
        if fmt == "scene":
            e.add_argument("--q", help='JSON {"joint": [values in deg/mm]} or @file')
        e.set_defaults(func=cmd_export)

    me = sub.add_parser("metrics", help="shape and joint metrics")
    mes = me.add_subparsers(dest="metric", required=True)
    for m in ("cd", "hd", "iogt"):
        c = mes.add_parser(m, parents=[common], help="inputs as .xyz text, .npy, OBJ mesh or part-program JSON")
        c.add_argument("a", help="prediction")
        c.add_argument("b", help="ground truth")
        c.add_argument("--icp", action="store_true", help="align with ICP first")
        c.add_argument("--normalize", choices=["unit-cube", "unitCube", "diagonal"])
        c.add_argument("--points", type=int, default=1000, help="samples per mesh or part program")
        c.set_defaults(func=cmd_metrics)
    j = mes.add_parser("joints", parents=[common], help="joint lists as JSON [{type, origin, axis}]")
    j.add_argument("a", help="prediction")
    j.add_argument("b", help="ground truth")
    j.add_argument("--threshold", type=float, default=0.25)
    j.set_defaults(func=cmd_metrics)

    pl = sub.add_parser("pipeline", help="run the agent pipeline").add_subparsers(dest="action", required=True)
    r = pl.add_parser("run", parents=[common])
    r.add_argument("task")
    r.add_argument("--agents", choices=["stub", "remote"], default="stub")
    r.add_argument("--fixtures", help="stub fixture directory (role/step-indexed JSON)")
    r.add_argument("--choose", type=int, help="brainstorm alternative to take")
    r.add_argument("--store", help="experience store directory")
    r.add_argument("--workers", type=int)
    r.add_argument("--endpoint")
    r.add_argument("--model")
    r.add_argument("--out", help="write trace, plan, parts and assembly here")
    r.set_defaults(func=cmd_pipeline_run)

    st = sub.add_parser("store", help="experience store").add_subparsers(dest="action", required=True)
    sa = st.add_parser("add", parents=[common])
    sa.add_argument("store")
    sa.add_argument("--partition", choices=["Good", "Issue"], required=True)
    sa.add_argument("--requirement", required=True)
    sa.add_argument("--plan-digest", default="")
    sa.add_argument("--issue", action="append", default=[])
    sa.add_argument("--heuristic", action="append", default=[])
    sq = st.add_parser("query", parents=[common])
    sq.add_argument("store")
    sq.add_argument("text")
    sq.add_argument("--context", choices=["design", "generation"], default="design")
    sq.add_argument("--k-good", type=int, default=3)
    sq.add_argument("--k-issue", type=int, default=2)
    ss = st.add_parser("stats", parents=[common])
    ss.add_argument("store")
    for s in (sa, sq, ss):
        s.set_defaults(func=cmd_store)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"artikit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _Invalid as exc:
        _emit(args, exc.payload, "invalid plan:\n" + "\n".join(f"  [{v['code']}] {v['message']}" for v in exc.payload["violations"]))
        return EXIT_FAIL
    except (StoreIoError, HttpError, OSError) as exc:
        print(f"artikit: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArtikitError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"artikit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
