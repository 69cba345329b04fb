"""Pipeline state machine: design, per-part generation, validation, assembly,
verification, review, with budgeted retries and keep/regenerate/new rollback.

Agents are callables ``agent(role, context) -> str`` returning JSON text.
:class:`StubScript` replays fixtures, :class:`RemoteChat` talks to an
OpenAI-style chat endpoint, and :class:`RuleBased` stands in for the
judging roles (the kernel checks always run regardless of what is bound).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

from .assembler import AssembledModel, assemble_at_rest
from .errors import (
    AgentProtocolError,
    ArityMismatch,
    ArtikitError,
    HttpError,
    MissingGeometry,
    MissingSource,
    MirrorUnsupportedPrimitive,
    ParseError,
    SchemaError,
)
from .part import PartProgram, check_realization, parse_program
from .plan import AssemblyPlan, PartSpec, expand_derived, plan_from_dict, validate_plan
from .report import CODE, DESIGN, EXEC
from .store import ExperienceCase, ExperienceStore, cases_for_prompt, digest
from .verifier import verify

log = logging.getLogger(__name__)

STAGES = ("DESIGN", "GENERATE", "VALIDATE_PART", "ASSEMBLE", "VERIFY")
ROLES = ("design", "generation", "part_validator", "assembly_verifier", "review")

# failure kind -> error class
RULES = {
    "plan_violation": DESIGN,
    "parse": EXEC,
    "schema": EXEC,
    "arity": EXEC,
    "realization": CODE,
    "validator_agent": CODE,
    "coincidence": CODE,
    "interference": DESIGN,
    "sweep": DESIGN,
    "verifier_agent": DESIGN,
    "assembly": CODE,
}


# ------------------------------------------------------------------ agents


class Agent(Protocol):
    def __call__(self, role: str, context: Mapping[str, Any]) -> str: ...


class StubScript:
    """Replays scripted responses; the last response repeats once a script runs out.

    Scripts are keyed by ``context["part_id"]`` (empty string for roles that
    are not per-part).  Dict responses are serialized to JSON; strings are
    returned verbatim, which is how malformed output is injected.
    """

    def __init__(self, scripts: Mapping[str, Sequence[Any]]) -> None:
        self.scripts = {k: list(v) for k, v in scripts.items()}
        self.calls: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_dir(cls, root: str | Path) -> StubScript:
        root = Path(root)
        scripts: dict[str, list[Any]] = {}

        def load(d: Path) -> list[Any]:
            out = []
            for f in sorted(p for p in d.iterdir() if p.is_file()):
                text = f.read_text(encoding="utf-8")
                out.append(json.loads(text) if f.suffix == ".json" else text)
            return out

        top = load(root)
        if top:
            scripts[""] = top
        for sub in sorted(p for p in root.iterdir() if p.is_dir()):
            scripts[sub.name] = load(sub)
        return cls(scripts)

    def __call__(self, role: str, context: Mapping[str, Any]) -> str:
        key = str(context.get("part_id", ""))
        script = self.scripts.get(key) or self.scripts.get("*")
        if not script:
            raise AgentProtocolError(f"stub for {role} has no script for {key!r}")
        with self._lock:
            i = self.calls.get(key, 0)
            self.calls[key] = i + 1
        resp = script[min(i, len(script) - 1)]
        return resp if isinstance(resp, str) else json.dumps(resp)


class RuleBased:
    """Default judge/review role: defers to the kernel checks."""

    def __call__(self, role: str, context: Mapping[str, Any]) -> str:
        if role == "review":
            return json.dumps(rule_review(context))
        if role == "classifier":
            return json.dumps({"class": context["rule_class"], "justification": "rule table"})
        return json.dumps({"pass": True, "evidence": "rule-based checks only"})


def rule_review(context: Mapping[str, Any]) -> dict:
    errors = context.get("errors", [])
    issues = sorted({f"{e['class']} at {e['stage']}: {e['message']}" for e in errors})
    heuristics = []
    if context.get("status") == "DONE":
        types = sorted({j["type"] for j in context.get("plan", {}).get("joints", [])})
        heuristics.append(f"a {len(context.get('plan', {}).get('parts', []))}-part plan with {', '.join(types) or 'no'} joints assembled cleanly")
    for e in errors:
        if e["class"] == DESIGN:
            heuristics.append("check swept clearance between moving parts before committing the plan")
            break
    return {
        "partition": "Good" if context.get("status") == "DONE" else "Issue",
        "issues": issues,
        "heuristics": heuristics,
    }


_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.S)


def extract_json(text: str) -> str:
    """Body of the first fenced block, else the outermost ``{...}`` span."""
    m = _FENCE.search(text)
    if m:
        return m.group(1).strip()
    lo, hi = text.find("{"), text.rfind("}")
    if 0 <= lo < hi:
        return text[lo : hi + 1]
    return text.strip()


DEFAULT_TEMPLATES = {
    "design": "You design articulated assemblies. Reply with one JSON assembly plan.",
    "generation": "You write part programs (primitive CSG). Reply with one JSON part program.",
    "part_validator": 'You judge one generated part. Reply with JSON {"pass": bool, "evidence": str}.',
    "assembly_verifier": 'You judge an assembled model. Reply with JSON {"pass": bool, "evidence": str}.',
    "review": 'Summarize this run. Reply with JSON {"partition": "Good"|"Issue", "issues": [], "heuristics": []}.',
    "classifier": 'Classify this failure. Reply with JSON {"class": "CODE"|"DESIGN"|"EXEC", "justification": str}.',
}

Transport = Callable[[str, dict, dict, float], tuple[int, Any]]


def requests_transport(url: str, payload: dict, headers: dict, timeout: float) -> tuple[int, Any]:
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise HttpError(f"request failed: {exc}") from exc
    try:
        body = resp.json()
    except ValueError:
        body = resp.text
    return resp.status_code, body


class RemoteChat:
    """OpenAI-style chat-completions client for one or more roles."""

    BACKOFF = (1.0, 4.0)

    def __init__(
        self,
        endpoint: str,
        model: str,
        templates: Mapping[str, str] | None = None,
        api_key_env: str = "ARTIKIT_API_KEY",
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        timeout: float = 120.0,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.templates = {**DEFAULT_TEMPLATES, **(templates or {})}
        self.api_key_env = api_key_env
        self.transport = transport or requests_transport
        self.sleep = sleep
        self.timeout = timeout
        self.retries = 0
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, cfg: Mapping[str, str], **kw: Any) -> RemoteChat:
        templates = {}
        tdir = cfg.get("templates")
        if tdir:
            for f in Path(tdir).glob("*.txt"):
                templates[f.stem] = f.read_text(encoding="utf-8")
        return cls(cfg["endpoint"], cfg["model"], templates, **kw)

    def messages(self, role: str, context: Mapping[str, Any]) -> list[dict]:
        return [
            {"role": "system", "content": self.templates.get(role, DEFAULT_TEMPLATES["design"])},
            {"role": "user", "content": json.dumps(dict(context), indent=1, sort_keys=True)},
        ]

    def __call__(self, role: str, context: Mapping[str, Any]) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise HttpError(f"environment variable {self.api_key_env} is not set")
        payload = {"model": self.model, "messages": self.messages(role, context), "temperature": 0}
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        attempt = 0
        while True:
            try:
                status, body = self.transport(self.endpoint, payload, headers, self.timeout)
                if status != 200:
                    raise HttpError(f"HTTP {status}", status)
                break
            except HttpError:
                if attempt >= len(self.BACKOFF):
                    raise
                with self._lock:
                    self.retries += 1
                self.sleep(self.BACKOFF[attempt])
                attempt += 1
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ParseError("response has no choices[0].message.content") from None
        return extract_json(content)


def ask_agent(agent: Agent, role: str, context: Mapping[str, Any], parse: Callable[[str], Any]) -> tuple[Any, int]:
    """Call ``agent`` and parse its output, re-asking once on malformed output.

    Returns the parsed value and the number of calls made (1 or 2).
    """
    text = agent(role, context)
    try:
        return parse(text), 1
    except (ParseError, SchemaError, ValueError) as exc:
        feedback = [*context.get("feedback", []), f"previous reply was malformed ({exc}); reply with valid JSON only"]
        text = agent(role, {**context, "feedback": feedback})
        try:
            return parse(text), 2
        except (ParseError, SchemaError, ValueError) as exc2:
            raise AgentProtocolError(f"{role}: malformed output after re-ask: {exc2}") from None


def _json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})") from None


def _verdict(text: str) -> dict:
    d = _json(text)
    if not isinstance(d, dict) or not isinstance(d.get("pass"), bool):
        raise SchemaError("$.pass", "expected a boolean verdict")
    return d


@dataclass
class AgentBinding:
    design: Agent
    generation: Agent
    part_validator: Agent = field(default_factory=RuleBased)
    assembly_verifier: Agent = field(default_factory=RuleBased)
    review: Agent = field(default_factory=RuleBased)
    classifier: Agent | None = None

    def check(self) -> None:
        for role in ROLES:
            if getattr(self, role) is None:
                raise ValueError(f"agent role {role!r} is not bound")

    @classmethod
    def from_fixtures(cls, root: str | Path) -> AgentBinding:
        """Stub agents from ``root/<role>/``; absent judge roles fall back to rules."""
        root = Path(root)
        kw: dict[str, Agent] = {}
        for role in ROLES + ("classifier",):
            d = root / role
            if d.is_dir():
                kw[role] = StubScript.from_dir(d)
        if "design" not in kw or "generation" not in kw:
            raise FileNotFoundError(f"{root} needs design/ and generation/ fixture directories")
        return cls(**kw)  # type: ignore[arg-type]

    def agents(self) -> list[Agent]:
        out = [getattr(self, r) for r in ROLES]
        if self.classifier is not None:
            out.append(self.classifier)
        return out


# ------------------------------------------------------------------- trace


@dataclass
class Budgets:
    exec_retries: int = 5
    code_regens: int = 2
    design_rollbacks: int = 2

    def to_json(self) -> dict:
        return {
            "exec_retries": self.exec_retries,
            "code_regens": self.code_regens,
            "design_rollbacks": self.design_rollbacks,
        }


@dataclass(frozen=True)
class ErrorRecord:
    stage: str
    cls: str
    message: str
    part: str | None = None
    kind: str = ""
    evidence: Mapping[str, Any] = field(default_factory=dict)
    justification: str | None = None

    def to_json(self) -> dict:
        out = {"stage": self.stage, "class": self.cls, "kind": self.kind, "message": self.message}
        if self.part is not None:
            out["part"] = self.part
        if self.evidence:
            out["evidence"] = dict(self.evidence)
        if self.justification is not None:
            out["justification"] = self.justification
        return out


class RunTrace:
    """Append-only run log; safe for appends from concurrent part workers."""

    def __init__(self, budgets: Budgets) -> None:
        self.transitions: list[str] = []
        self.calls: dict[str, int] = {r: 0 for r in ROLES}
        self.errors: list[ErrorRecord] = []
        self.status: str | None = None
        self.failure: str | None = None
        self.budgets = budgets
        self.exec_used: dict[str, int] = {}
        self.code_used: dict[str, int] = {}
        self.design_rollbacks = 0
        self.routes: list[dict] = []
        self.alternatives: list[str] = []
        self.http_retries = 0
        self._lock = threading.Lock()

    def enter(self, state: str) -> None:
        with self._lock:
            self.transitions.append(state)

    def count(self, role: str, n: int = 1) -> None:
        with self._lock:
            self.calls[role] = self.calls.get(role, 0) + n

    def record(self, err: ErrorRecord) -> None:
        with self._lock:
            self.errors.append(err)

    def finish(self, status: str, failure: str | None = None) -> None:
        self.status = status
        self.failure = failure

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "failure": self.failure,
            "transitions": list(self.transitions),
            "calls": dict(self.calls),
            "errors": [e.to_json() for e in self.errors],
            "budgets": {
                "limits": self.budgets.to_json(),
                "exec_retries": dict(sorted(self.exec_used.items())),
                "code_regens": dict(sorted(self.code_used.items())),
                "design_rollbacks": self.design_rollbacks,
            },
            "routes": list(self.routes),
            "alternatives": list(self.alternatives),
            "http_retries": self.http_retries,
        }


# -------------------------------------------------------------- classifier


def classify_error(
    stage: str,
    kind: str,
    message: str,
    part: str | None = None,
    evidence: Mapping[str, Any] | None = None,
    classifier: Agent | None = None,
) -> ErrorRecord:
    """Rule-table class for a failure; a bound classifier agent may override it."""
    rule = RULES.get(kind, CODE if stage in ("GENERATE", "VALIDATE_PART") else DESIGN)
    cls, why = rule, None
    if classifier is not None:
        ctx = {"stage": stage, "kind": kind, "message": message, "part_id": part or "", "rule_class": rule}
        try:
            verdict, _ = ask_agent(classifier, "classifier", ctx, _json)
            if verdict.get("class") in (CODE, DESIGN, EXEC) and verdict["class"] != rule:
                cls, why = verdict["class"], str(verdict.get("justification", ""))
        except AgentProtocolError as exc:
            log.warning("classifier agent ignored: %s", exc)
    return ErrorRecord(stage, cls, message, part, kind, dict(evidence or {}), why)


# ------------------------------------------------------------------ router


def part_fingerprint(spec: PartSpec) -> str:
    """Hash of everything in a part's plan entry that shapes its geometry."""
    body = {
        "description": spec.description,
        "parameters": dict(sorted(spec.parameters.items())),
        "connectors": sorted((c.to_json() for c in spec.connectors), key=lambda c: c["name"]),
        "derive": spec.derive.to_json() if spec.derive is not None else None,
    }
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class Route:
    keep: frozenset[str]
    regenerate: frozenset[str]
    new: frozenset[str]
    removed: frozenset[str] = frozenset()
    next_state: str = "GENERATE"

    def to_json(self) -> dict:
        return {
            "keep": sorted(self.keep),
            "regenerate": sorted(self.regenerate),
            "new": sorted(self.new),
            "removed": sorted(self.removed),
            "next_state": self.next_state,
        }


def route_rollback(old: AssemblyPlan, update: AssemblyPlan | str | Sequence[str], cls: str) -> Route:
    """CODE: regenerate the failing part(s).  DESIGN: diff the revised plan."""
    if cls in (CODE, EXEC):
        failing = {update} if isinstance(update, str) else set(update)  # type: ignore[arg-type]
        return Route(frozenset(set(old.part_ids) - failing), frozenset(failing), frozenset())
    if not isinstance(update, AssemblyPlan):
        raise TypeError("a DESIGN rollback needs the revised plan")
    before = {p.id: part_fingerprint(p) for p in old.parts}
    keep, regen, new = set(), set(), set()
    for p in update.parts:
        if p.id not in before:
            new.add(p.id)
        elif before[p.id] == part_fingerprint(p):
            keep.add(p.id)
        else:
            regen.add(p.id)
    removed = set(before) - set(update.part_ids)
    return Route(frozenset(keep), frozenset(regen), frozenset(new), frozenset(removed))


# ---------------------------------------------------------------- pipeline


@dataclass
class PipelineResult:
    trace: RunTrace
    plan: AssemblyPlan | None = None
    geometries: dict[str, PartProgram] = field(default_factory=dict)
    model: AssembledModel | None = None

    @property
    def ok(self) -> bool:
        return self.trace.status == "DONE"


class BudgetExhausted(ArtikitError):
    pass


Chooser = Callable[[Sequence[str]], int]


def brainstorm_summaries(data: Any) -> list[str]:
    """One-line summaries when the design output offers alternatives, else []."""
    if not (isinstance(data, dict) and "alternatives" in data):
        return []
    alts = data["alternatives"]
    if not isinstance(alts, list) or not alts:
        raise SchemaError("$.alternatives", "expected a non-empty list")
    out = []
    for i, a in enumerate(alts):
        if not isinstance(a, dict) or "plan" not in a:
            raise SchemaError(f"$.alternatives[{i}]", "expected {summary, plan}")
        out.append(str(a.get("summary", f"alternative {i}")))
    return out


class Pipeline:
    def __init__(
        self,
        task: Mapping[str, Any],
        agents: AgentBinding,
        budgets: Budgets | None = None,
        seed: int = 0,
        store: ExperienceStore | None = None,
        choose: int | Chooser = 0,
        workers: int = 1,
        verify_samples: int = 2048,
        frames_per_dof: int = 5,
    ) -> None:
        agents.check()
        self.task = task
        self.requirement = str(task.get("requirement", ""))
        self.agents = agents
        self.budgets = budgets or Budgets()
        self.seed = seed
        self.store = store
        self.choose = choose
        self.workers = max(1, workers)
        self.verify_samples = verify_samples
        self.frames_per_dof = frames_per_dof
        self.trace = RunTrace(self.budgets)
        self.geometries: dict[str, PartProgram] = {}
        self.plan: AssemblyPlan | None = None

    # -- helpers

    def _classify(self, stage: str, kind: str, message: str, part: str | None = None, evidence=None) -> ErrorRecord:
        err = classify_error(stage, kind, message, part, evidence, self.agents.classifier)
        self.trace.record(err)
        return err

    def _ask(self, role: str, context: Mapping[str, Any], parse: Callable[[str], Any]) -> Any:
        agent = getattr(self.agents, role)
        try:
            value, n = ask_agent(agent, role, context, parse)
        except AgentProtocolError:
            self.trace.count(role, 2)
            raise
        self.trace.count(role, n)
        return value

    def _pick(self, summaries: list[str]) -> int:
        i = self.choose(summaries) if callable(self.choose) else int(self.choose)
        if not 0 <= i < len(summaries):
            raise AgentProtocolError(f"alternative {i} out of range (0..{len(summaries) - 1})")
        return i

    def _design(self, feedback: list[str]) -> AssemblyPlan:
        self.trace.enter("DESIGN")
        hits = self.store.query(self.requirement, "design") if self.store is not None and self.requirement.strip() else []
        ctx = {
            "requirement": self.requirement,
            "feedback": feedback,
            "cases": cases_for_prompt(hits),
            "previous_plan": self.plan.to_json() if self.plan is not None else None,
        }

        def parse(text: str) -> AssemblyPlan:
            data = _json(text)
            summaries = brainstorm_summaries(data)
            if not summaries:
                return plan_from_dict(data)
            self.trace.alternatives = summaries
            return plan_from_dict(data["alternatives"][self._pick(summaries)]["plan"])

        return self._ask("design", ctx, parse)

    def _validate_plan(self, plan: AssemblyPlan) -> list[str]:
        self.trace.enter("VALIDATE_PLAN")
        report = validate_plan(plan)
        msgs = []
        for v in report.violations:
            self._classify("DESIGN", "plan_violation", v.message, evidence={"code": v.code})
            msgs.append(v.message)
        return msgs

    def _generate_part(self, plan: AssemblyPlan, pid: str, feedback: list[str], log_: list[str]) -> PartProgram:
        """Generate-execute-validate loop for one part; raises BudgetExhausted."""
        spec = plan.part(pid)
        reference = plan.reference_connectors(pid)
        hits = (
            self.store.query(f"{self.requirement}\n{spec.description}", "generation")
            if self.store is not None and (self.requirement + spec.description).strip()
            else []
        )
        notes = list(feedback)
        while True:
            log_.append(f"GENERATE:{pid}")
            ctx = {
                "requirement": self.requirement,
                "part_id": pid,
                "part": spec.to_json(),
                "connectors": [c.to_json() for c in reference],
                "feedback": notes,
                "cases": cases_for_prompt(hits),
            }
            text = self.agents.generation("generation", ctx)
            self.trace.count("generation")
            try:
                prog = parse_program(text)
                if prog.part_id != pid:
                    raise SchemaError("$.part_id", f"expected {pid!r}, got {prog.part_id!r}")
            except (ParseError, SchemaError, ArityMismatch) as exc:
                kind = "parse" if isinstance(exc, ParseError) else "schema"
                err = self._classify("GENERATE", kind, str(exc), pid)
                self._spend(err, pid)
                notes = [*feedback, f"execution failed: {exc}"]
                continue
            log_.append(f"VALIDATE_PART:{pid}")
            failures = self._validate_part(prog, spec, reference)
            if not failures:
                return prog
            errs = [self._classify("VALIDATE_PART", kind, msg, pid, ev) for kind, msg, ev in failures]
            # one regeneration per failed round, however many checks failed
            self._spend(errs[0], pid)
            notes = [*feedback, *(m for _, m, _ in failures)]

    def _validate_part(self, prog: PartProgram, spec: PartSpec, reference) -> list[tuple[str, str, dict]]:
        report = check_realization(prog, spec, reference)
        out = [("realization", c.evidence, {"check": c.name, **c.payload}) for c in report.failures]
        ctx = {"part_id": spec.id, "part": spec.to_json(), "program": prog.to_json(), "checks": report.to_json()}
        verdict = self._ask("part_validator", ctx, _verdict)
        if not verdict["pass"]:
            out.append(("validator_agent", str(verdict.get("evidence", "part rejected by validator")), {}))
        return out

    def _spend(self, err: ErrorRecord, pid: str) -> None:
        if err.cls == EXEC:
            used = self.trace.exec_used[pid] = self.trace.exec_used.get(pid, 0) + 1
            if used > self.budgets.exec_retries:
                raise BudgetExhausted(f"part {pid!r}: exec retries exhausted ({self.budgets.exec_retries})")
        elif err.cls == CODE:
            used = self.trace.code_used[pid] = self.trace.code_used.get(pid, 0) + 1
            if used > self.budgets.code_regens:
                raise BudgetExhausted(f"part {pid!r}: code regenerations exhausted ({self.budgets.code_regens})")
        else:
            raise _DesignEscalation(err)

    def _generate(self, plan: AssemblyPlan, pids: Sequence[str], feedback: Mapping[str, list[str]]) -> None:
        pids = [p for p in plan.part_ids if p in set(pids) and plan.part(p).derive is None]
        logs: dict[str, list[str]] = {p: [] for p in pids}

        def work(pid: str) -> tuple[str, PartProgram | None, BaseException | None]:
            try:
                return pid, self._generate_part(plan, pid, feedback.get(pid, []), logs[pid]), None
            except (BudgetExhausted, _DesignEscalation) as exc:
                return pid, None, exc

        if self.workers > 1 and len(pids) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(work, pids))
        else:
            results = [work(p) for p in pids]
        # merge in plan order so the trace is independent of scheduling
        for pid in pids:
            for state in logs[pid]:
                self.trace.enter(state)
        problem = None
        for pid, prog, exc in results:
            if prog is not None:
                self.geometries[pid] = prog
            elif problem is None:
                problem = exc
        if problem is not None:
            raise problem

    def _assemble(self, plan: AssemblyPlan) -> AssembledModel:
        self.trace.enter("ASSEMBLE")
        geoms = expand_derived(plan, self.geometries)
        return assemble_at_rest(plan, {pid: geoms[pid] for pid in plan.part_ids})

    def _verify(self, model: AssembledModel) -> list[ErrorRecord]:
        self.trace.enter("VERIFY")
        report = verify(model, samples=self.verify_samples, frames_per_dof=self.frames_per_dof, seed=self.seed)
        errs = []
        for c in report.failures:
            kind = c.name.split(":", 1)[0]
            errs.append(self._classify("VERIFY", kind, c.evidence, c.part, {"check": c.name, **c.payload}))
        ctx = {"plan": model.plan.to_json(), "assembly": model.to_json(), "checks": report.to_json()}
        verdict = self._ask("assembly_verifier", ctx, _verdict)
        if not verdict["pass"]:
            errs.append(
                self._classify(
                    "VERIFY", "verifier_agent", str(verdict.get("evidence", "assembly rejected by verifier")), verdict.get("part")
                )
            )
        return errs

    def _review(self) -> None:
        self.trace.enter("REVIEW")
        ctx = {
            "requirement": self.requirement,
            "status": self.trace.status,
            "plan": self.plan.to_json() if self.plan is not None else {},
            "errors": [e.to_json() for e in self.trace.errors],
        }
        try:
            summary = self._ask("review", ctx, _review_summary)
        except AgentProtocolError as exc:
            log.warning("review skipped: %s", exc)
            return
        if self.store is None or not self.requirement.strip():
            return
        self.trace.enter("STORE")
        plan_text = json.dumps(ctx["plan"], sort_keys=True)
        self.store.add_case(
            ExperienceCase(
                summary["partition"],
                self.requirement,
                digest(plan_text),
                tuple(summary.get("issues", [])),
                tuple(summary.get("heuristics", [])),
            )
        )

    # -- main loop

    def run(self) -> PipelineResult:
        start_retries = [getattr(a, "retries", 0) for a in self.agents.agents()]
        try:
            model = self._run()
            self.trace.finish("DONE")
        except (BudgetExhausted, AgentProtocolError, HttpError) as exc:
            model = None
            self.trace.finish("FAILED", f"{type(exc).__name__}: {exc}")
            if not self.trace.errors or isinstance(exc, (AgentProtocolError, HttpError)):
                self.trace.record(ErrorRecord("DESIGN" if self.plan is None else "GENERATE", EXEC, str(exc), kind="agent"))
        end_retries = [getattr(a, "retries", 0) for a in self.agents.agents()]
        # an agent bound to several roles is counted once
        seen: set[int] = set()
        for a, s, e in zip(self.agents.agents(), start_retries, end_retries):
            if id(a) not in seen:
                seen.add(id(a))
                self.trace.http_retries += e - s
        # review failures never change the outcome of the run
        self._review()
        self.trace.enter(self.trace.status or "FAILED")
        return PipelineResult(self.trace, self.plan, dict(self.geometries), model)

    def _design_round(self, feedback: list[str]) -> tuple[AssemblyPlan, Route | None]:
        old = self.plan
        plan = self._design(feedback)
        route = route_rollback(old, plan, DESIGN) if old is not None else None
        return plan, route

    def _rollback_design(self, reasons: list[str]) -> Route | None:
        self.trace.design_rollbacks += 1
        if self.trace.design_rollbacks > self.budgets.design_rollbacks:
            raise BudgetExhausted(f"design rollbacks exhausted ({self.budgets.design_rollbacks})")
        plan, route = self._design_round(reasons)
        self.plan = plan
        if route is not None:
            self.trace.routes.append({"class": DESIGN, **route.to_json()})
            for pid in route.removed | route.regenerate:
                self.geometries.pop(pid, None)
            for pid in route.regenerate | route.new:
                self.trace.exec_used.pop(pid, None)
                self.trace.code_used.pop(pid, None)
        return route

    def _run(self) -> AssembledModel:
        override = self.task.get("plan")
        if override is not None:
            self.trace.enter("DESIGN")
            try:
                self.plan = plan_from_dict(override)
            except SchemaError as exc:
                raise AgentProtocolError(f"task plan override is malformed: {exc}") from None
        else:
            self.plan = self._design([])
        todo: set[str] | None = None  # None means every part
        feedback: dict[str, list[str]] = {}
        while True:
            plan = self.plan
            assert plan is not None
            violations = self._validate_plan(plan)
            if violations:
                self._rollback_design(violations)
                continue
            missing = [p for p in plan.part_ids if p not in self.geometries and plan.part(p).derive is None]
            pending = set(missing) if todo is None else (todo | set(missing))
            try:
                self._generate(plan, sorted(pending), feedback)
            except _DesignEscalation as esc:
                self._rollback_design([esc.err.message])
                todo, feedback = None, {}
                continue
            todo, feedback = set(), {}
            try:
                model = self._assemble(plan)
            except (MissingGeometry, MissingSource, MirrorUnsupportedPrimitive, ArityMismatch) as exc:
                err = self._classify("ASSEMBLE", "assembly", str(exc), getattr(exc, "part_id", None))
                if err.cls == DESIGN:
                    self._rollback_design([err.message])
                    continue
                raise BudgetExhausted(f"assembly failed: {exc}") from None
            errs = self._verify(model)
            if not errs:
                return model
            design = [e for e in errs if e.cls == DESIGN]
            if design:
                self._rollback_design([e.message for e in design])
                continue
            failing = sorted({e.part for e in errs if e.part is not None})
            if not failing:
                raise BudgetExhausted("verification failed without a part to regenerate")
            for e in errs:
                if e.part is not None:
                    self._spend(e, e.part)
            route = route_rollback(plan, failing, CODE)
            self.trace.routes.append({"class": CODE, **route.to_json()})
            for pid in failing:
                self.geometries.pop(pid, None)
                feedback[pid] = [e.message for e in errs if e.part == pid]


class _DesignEscalation(Exception):
    def __init__(self, err: ErrorRecord) -> None:
        super().__init__(err.message)
        self.err = err


def _review_summary(text: str) -> dict:
    d = _json(text)
    if not isinstance(d, dict) or d.get("partition") not in ("Good", "Issue"):
        raise SchemaError("$.partition", "expected Good or Issue")
    for k in ("issues", "heuristics"):
        if not isinstance(d.get(k, []), list):
            raise SchemaError(f"$.{k}", "expected a list of strings")
    return d


def run_pipeline(
    task: Mapping[str, Any],
    agents: AgentBinding,
    budgets: Budgets | None = None,
    seed: int = 0,
    store: ExperienceStore | None = None,
    choose: int | Chooser = 0,
    workers: int = 1,
    **kw: Any,
) -> PipelineResult:
    return Pipeline(task, agents, budgets, seed, store, choose, workers, **kw).run()


def load_task(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    if not isinstance(data, dict) or not isinstance(data.get("requirement"), str):
        raise SchemaError("$.requirement", "task needs a requirement string")
    return data


