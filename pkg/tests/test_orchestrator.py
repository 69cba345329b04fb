import copy
import json

import pytest

from artikit.errors import AgentProtocolError, HttpError
from artikit.orchestrator import (
    RULES,
    AgentBinding,
    Budgets,
    Pipeline,
    RemoteChat,
    StubScript,
    ask_agent,
    classify_error,
    extract_json,
    route_rollback,
    run_pipeline,
)
from artikit.plan import plan_from_dict
from artikit.store import ExperienceStore

from helpers import FIXTURES, chain_plan_dict, chain_program, connector, load_json

AGENTS = FIXTURES / "agents"
CABINET_TASK = load_json("cabinet_task.json")
DOOR_TASK = load_json("task.json")


def stub_binding(name: str, **overrides) -> AgentBinding:
    binding = AgentBinding.from_fixtures(AGENTS / name)
    for role, agent in overrides.items():
        setattr(binding, role, agent)
    return binding


def generation_scripts(name: str) -> dict:
    root = AGENTS / name / "generation"
    return {d.name: [json.loads(f.read_text()) for f in sorted(d.iterdir())] for d in sorted(root.iterdir())}


def program_bytes(geoms) -> dict:
    return {pid: json.dumps(p.to_json(), sort_keys=True) for pid, p in geoms.items()}


# ------------------------------------------------------------ happy paths


def test_cabinet_stub_run_completes():
    res = run_pipeline(CABINET_TASK, stub_binding("cabinet"), seed=7, verify_samples=512)
    assert res.ok
    calls = res.trace.calls
    assert calls["design"] == 1 and calls["generation"] == 3
    t = res.trace.transitions
    assert t[0] == "DESIGN" and t[-1] == "DONE" and "VERIFY" in t and "REVIEW" in t


def test_invalid_json_costs_one_exec_retry():
    scripts = generation_scripts("cabinet")
    scripts["door"] = ["{not json", *scripts["door"]]
    res = run_pipeline(CABINET_TASK, stub_binding("cabinet", generation=StubScript(scripts)), verify_samples=512)
    assert res.ok and res.trace.calls["generation"] == 4
    (err,) = res.trace.errors
    assert err.cls == "EXEC" and err.part == "door" and err.kind == "parse"
    assert res.trace.exec_used == {"door": 1}


def test_exec_budget_exhaustion():
    scripts = generation_scripts("door")
    scripts["door"] = ["{not json"]
    binding = stub_binding("door", generation=StubScript(scripts))
    res = run_pipeline(DOOR_TASK, binding, verify_samples=512)
    assert res.trace.status == "FAILED" and "exec retries" in res.trace.failure
    assert binding.generation.calls["door"] == 6


def test_dof_mismatch_exhausts_design_budget():
    plan = load_json("agents/door/design/000.json")
    plan["declared_dof"] = 3
    binding = stub_binding("door", design=StubScript({"": [plan]}))
    res = run_pipeline(DOOR_TASK, binding)
    assert res.trace.status == "FAILED"
    assert res.trace.calls["design"] == 3
    assert res.trace.calls["generation"] == 0
    assert any(e.cls == "DESIGN" and e.kind == "plan_violation" for e in res.trace.errors)


def test_persistent_malformed_output_is_protocol_error():
    agent = StubScript({"": ["not json at all"]})
    with pytest.raises(AgentProtocolError):
        ask_agent(agent, "design", {}, json.loads)
    assert agent.calls[""] == 2
    res = run_pipeline(DOOR_TASK, stub_binding("door", design=StubScript({"": ["```\nnope\n```"]})))
    assert res.trace.status == "FAILED" and res.trace.calls["design"] == 2
    assert res.trace.errors[-1].cls == "EXEC"


def test_reask_recovers_once():
    agent = StubScript({"": ["oops", {"ok": 1}]})
    value, n = ask_agent(agent, "design", {"feedback": []}, lambda t: json.loads(t))
    assert value == {"ok": 1} and n == 2


# --------------------------------------------------------------- rollback


def four_part_plan():
    d = chain_plan_dict(4)
    for p, new in zip(d["parts"], ("base", "door", "drawer", "shelf")):
        p["id"] = new
    for j, (a, b) in zip(d["joints"], (("base", "door"), ("door", "drawer"), ("drawer", "shelf"))):
        j["parent"]["part"], j["child"]["part"] = a, b
    d["ground"] = "base"
    return d


def test_code_route_keeps_everything_else():
    plan = plan_from_dict(four_part_plan())
    r = route_rollback(plan, "drawer", "CODE")
    assert r.keep == {"base", "door", "shelf"} and r.regenerate == {"drawer"} and not r.new


def test_design_route_diffs_fingerprints():
    d = four_part_plan()
    old = plan_from_dict(d)
    moved = copy.deepcopy(d)
    moved["parts"][0]["connectors"][0]["origin"] = [0, 0, 51]
    r = route_rollback(old, plan_from_dict(moved), "DESIGN")
    assert r.regenerate == {"base"} and r.keep == {"door", "drawer", "shelf"}
    added = copy.deepcopy(d)
    added["parts"].append({"id": "handle", "connectors": [connector("m", (0, 0, 0))]})
    added["parts"][3]["connectors"].append(connector("grip", (50, 0, 0)))
    r = route_rollback(old, plan_from_dict(added), "DESIGN")
    assert r.new == {"handle"} and r.regenerate == {"shelf"} and r.keep == {"base", "door", "drawer"}
    # relabelling a joint does not touch any part
    relimit = copy.deepcopy(d)
    relimit["joints"][0]["limits"] = [{"min": 0, "max": 45, "unit": "deg"}]
    assert route_rollback(old, plan_from_dict(relimit), "DESIGN").keep == set(old.part_ids)


def chain_run(n: int, **kw):
    plan = chain_plan_dict(n)
    gen = StubScript({f"c{i}": [chain_program(f"c{i}", False), chain_program(f"c{i}")] for i in range(n)})
    binding = AgentBinding(StubScript({"": [plan]}), gen)
    return run_pipeline({"requirement": f"a column of {n} cubes"}, binding, verify_samples=256, **kw), gen


@pytest.mark.parametrize("n", [2, 4, 8])
def test_rollback_cost_is_linear(n):
    res, gen = chain_run(n)
    assert res.ok
    assert res.trace.calls["generation"] == 2 * n
    assert all(v == 2 for v in gen.calls.values())
    assert all(e.cls == "CODE" for e in res.trace.errors) and len(res.trace.errors) == n


class Recording(Pipeline):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.snapshots = []

    def _assemble(self, plan):
        self.snapshots.append(program_bytes(self.geometries))
        return super()._assemble(plan)


def test_verify_code_failure_keeps_other_parts_byte_identical():
    verifier = StubScript({"": [{"pass": False, "part": "drawer", "evidence": "drawer front warped"}, {"pass": True}]})
    classifier = StubScript({"*": [{"class": "CODE", "justification": "drawer geometry, not the plan"}]})
    binding = stub_binding("cabinet", assembly_verifier=verifier, classifier=classifier)
    pipe = Recording(CABINET_TASK, binding, verify_samples=512)
    res = pipe.run()
    assert res.ok
    first, second = pipe.snapshots
    assert first["cabinet"] == second["cabinet"] and first["door"] == second["door"]
    assert binding.generation.calls == {"cabinet": 1, "door": 1, "drawer": 2}
    assert res.trace.calls["design"] == 1
    (err,) = res.trace.errors
    assert err.cls == "CODE" and err.justification == "drawer geometry, not the plan"
    assert res.trace.routes == [
        {"class": "CODE", "keep": ["cabinet", "door"], "regenerate": ["drawer"], "new": [], "removed": [], "next_state": "GENERATE"}
    ]


def test_design_failure_regenerates_only_changed_parts():
    binding = stub_binding("cabinet_clip")
    pipe = Recording(CABINET_TASK, binding, verify_samples=512)
    res = pipe.run()
    assert res.ok
    assert res.trace.calls["design"] == 2
    assert binding.design.calls[""] == 2
    route = res.trace.routes[0]
    assert route["class"] == "DESIGN" and route["regenerate"] == ["door"]
    assert route["keep"] == ["cabinet", "drawer"] and route["new"] == []
    assert binding.generation.calls == {"cabinet": 1, "door": 2, "drawer": 1}
    first, second = pipe.snapshots
    assert first["cabinet"] == second["cabinet"] and first["drawer"] == second["drawer"]
    assert first["door"] != second["door"]
    assert any(e.kind == "sweep" and e.cls == "DESIGN" for e in res.trace.errors)


# ------------------------------------------------------------ determinism


def test_runs_are_deterministic_and_worker_independent():
    runs = [run_pipeline(CABINET_TASK, stub_binding("cabinet"), seed=7, workers=w, verify_samples=512) for w in (1, 1, 2)]
    traces = [r.trace.to_json() for r in runs]
    assert traces[0] == traces[1] == traces[2]
    poses = [{k: p.to_pair() for k, p in r.model.poses.items()} for r in runs]
    assert poses[0] == poses[1] == poses[2]


def test_review_writes_store(tmp_path):
    store = ExperienceStore(tmp_path)
    res = run_pipeline(DOOR_TASK, stub_binding("door"), store=store, verify_samples=512)
    assert res.ok and store.stats()["good"] == 1
    assert res.trace.transitions[-3:] == ["REVIEW", "STORE", "DONE"]


# ------------------------------------------------------------ classifier


@pytest.mark.parametrize(
    "stage,kind,cls",
    [
        ("DESIGN", "plan_violation", "DESIGN"),
        ("GENERATE", "parse", "EXEC"),
        ("GENERATE", "schema", "EXEC"),
        ("VALIDATE_PART", "realization", "CODE"),
        ("VERIFY", "coincidence", "CODE"),
        ("VERIFY", "interference", "DESIGN"),
        ("VERIFY", "sweep", "DESIGN"),
        ("VERIFY", "verifier_agent", "DESIGN"),
        ("GENERATE", "unheard_of", "CODE"),
        ("VERIFY", "unheard_of", "DESIGN"),
    ],
)
def test_classification_table(stage, kind, cls):
    err = classify_error(stage, kind, "msg")
    assert err.cls == cls and err.justification is None
    if kind in RULES:
        assert RULES[kind] == cls


def test_classifier_override_needs_valid_class():
    bogus = StubScript({"*": [{"class": "MAYBE"}]})
    assert classify_error("VERIFY", "sweep", "m", classifier=bogus).cls == "DESIGN"
    broken = StubScript({"*": ["garbage"]})
    assert classify_error("VERIFY", "sweep", "m", classifier=broken).cls == "DESIGN"


# ------------------------------------------------------------------ remote


def test_extract_json_handles_fences():
    assert extract_json('Sure:\n```json\n{"a": 1}\n```\nthanks') == '{"a": 1}'
    assert extract_json('{"a": 1}') == '{"a": 1}'


def chat_body(obj) -> dict:
    return {"choices": [{"message": {"content": "```json\n" + json.dumps(obj) + "\n```"}}]}


def test_remote_chat_retries_with_backoff(monkeypatch):
    monkeypatch.setenv("ARTIKIT_API_KEY", "k")
    responses = [(500, None), (500, None), (200, chat_body({"x": 1}))]
    sent, slept = [], []

    def transport(url, payload, headers, timeout):
        sent.append((url, payload, headers))
        return responses.pop(0)

    chat = RemoteChat("http://chat.invalid/v1", "m", transport=transport, sleep=slept.append)
    assert json.loads(chat("design", {"requirement": "door"})) == {"x": 1}
    assert chat.retries == 2 and slept == [1.0, 4.0]
    assert sent[0][2]["Authorization"] == "Bearer k"
    assert sent[0][1]["messages"][0]["role"] == "system"


def test_remote_chat_gives_up_and_needs_key(monkeypatch):
    monkeypatch.setenv("ARTIKIT_API_KEY", "k")
    chat = RemoteChat("u", "m", transport=lambda *a: (503, None), sleep=lambda s: None)
    with pytest.raises(HttpError):
        chat("design", {})
    assert chat.retries == 2
    monkeypatch.delenv("ARTIKIT_API_KEY")
    with pytest.raises(HttpError):
        chat("design", {})


def test_pipeline_reports_http_retries(monkeypatch):
    monkeypatch.setenv("ARTIKIT_API_KEY", "k")
    plan = load_json("agents/door/design/000.json")
    responses = [(500, None), (500, None), (200, chat_body(plan))]
    chat = RemoteChat("u", "m", transport=lambda *a: responses.pop(0), sleep=lambda s: None)
    res = run_pipeline(DOOR_TASK, stub_binding("door", design=chat), verify_samples=512)
    assert res.ok and res.trace.http_retries == 2
    assert res.trace.to_json()["http_retries"] == 2


def test_budgets_in_trace():
    res = run_pipeline(DOOR_TASK, stub_binding("door"), Budgets(1, 1, 1), verify_samples=512)
    limits = res.trace.to_json()["budgets"]["limits"]
    assert limits == {"exec_retries": 1, "code_regens": 1, "design_rollbacks": 1}
