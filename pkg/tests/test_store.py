import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artikit.errors import EmptyText
from artikit.store import DIM, ExperienceCase, ExperienceStore, cases_for_prompt, embed

WORDS = "hinged cabinet door drawer slide lid box handle knob wheel axle piston arm leg table lamp".split()


def random_case(rng: np.random.Generator, i: int) -> ExperienceCase:
    part = "Good" if rng.random() < 0.5 else "Issue"
    req = " ".join(rng.choice(WORDS, int(rng.integers(2, 7))))
    issues = (f"issue {i}",) if part == "Issue" else ()
    return ExperienceCase(part, f"{req} #{i}", f"d{i}", issues, (f"heuristic {i % 7}",))


def brute_top(cases, text, k):
    q = embed(text)

    def cos(c):
        e = np.asarray(c.embedding)
        return float(e @ q / (np.linalg.norm(e) * np.linalg.norm(q)))

    ranked = sorted(cases, key=lambda c: (-round(cos(c), 12), c.id))
    return [c.id for c in ranked[:k]]


def test_embedding_is_deterministic_and_unit():
    a = embed("Hinged cabinet door")
    assert np.array_equal(a, embed("hinged  CABINET door"))
    assert a.shape == (DIM,) and np.linalg.norm(a) == pytest.approx(1.0)


def test_embedding_rejects_empty_text():
    with pytest.raises(EmptyText):
        embed("  ")
    with pytest.raises(EmptyText):
        embed("-- !!")


def test_similar_requirement_ranks_first():
    store = ExperienceStore()
    for req in ("hinged cabinet door", "sliding drawer with handle", "ball joint lamp arm"):
        store.add_case(ExperienceCase("Good", req, "x"))
    hits = store.query("cabinet with a hinged door", "generation")
    assert hits[0].case.requirement == "hinged cabinet door"
    assert [h.score for h in hits] == sorted((h.score for h in hits), reverse=True)


def test_add_is_idempotent(tmp_path):
    store = ExperienceStore(tmp_path)
    case = ExperienceCase("Good", "door", "d")
    assert store.add_case(case) == store.add_case(case)
    assert len(store) == 1
    assert len((tmp_path / "good.jsonl").read_text().splitlines()) == 1


def test_corrupted_line_is_skipped(tmp_path):
    store = ExperienceStore(tmp_path)
    store.add_case(ExperienceCase("Issue", "door hits frame", "d", ("collision",)))
    with open(tmp_path / "issue.jsonl", "a") as fh:
        fh.write("{not json\n")
        bad = ExperienceCase("Issue", "short", "d").to_json()
        bad["embedding"] = bad["embedding"][:10]
        fh.write(json.dumps(bad) + "\n")
    again = ExperienceStore(tmp_path)
    assert again.stats() == {"good": 0, "issue": 1, "skipped_lines": 2}


def test_empty_store_returns_nothing(tmp_path):
    assert ExperienceStore(tmp_path).query("anything") == []


def test_bad_context_and_partition():
    with pytest.raises(ValueError):
        ExperienceCase("Maybe", "x", "d")
    store = ExperienceStore()
    store.add_case(ExperienceCase("Good", "x", "d"))
    with pytest.raises(ValueError):
        store.query("x", "review")


def test_prompt_payload_shape():
    store = ExperienceStore()
    store.add_case(ExperienceCase("Issue", "lid clips hinge", "d", ("overlap at 90 deg",), ("add clearance",)))
    (row,) = cases_for_prompt(store.query("lid hinge"))
    assert row["partition"] == "Issue" and row["issues"] == ["overlap at 90 deg"]
    assert set(row) == {"partition", "requirement", "issues", "heuristics", "score"}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.sampled_from(WORDS), min_size=1, max_size=5))
def test_generation_context_never_returns_issues(seed, words):
    rng = np.random.default_rng(seed)
    store = ExperienceStore()
    for i in range(60):
        store.add_case(random_case(rng, i))
    hits = store.query(" ".join(words), "generation", k_good=10, k_issue=10)
    assert all(h.case.partition == "Good" for h in hits)


def test_ranking_matches_brute_force_and_persists(tmp_path):
    rng = np.random.default_rng(3)
    store = ExperienceStore(tmp_path)
    for i in range(500):
        store.add_case(random_case(rng, i))
    reloaded = ExperienceStore(tmp_path)
    assert reloaded.skipped == 0 and len(reloaded) == 500
    for text in ("hinged cabinet door", "piston axle", "lamp arm knob"):
        hits = store.query(text, "design", 5, 4)
        good = [h.case.id for h in hits if h.case.partition == "Good"]
        issue = [h.case.id for h in hits if h.case.partition == "Issue"]
        assert good == brute_top(store.cases["Good"], text, 5)
        assert issue == brute_top(store.cases["Issue"], text, 4)
        again = reloaded.query(text, "design", 5, 4)
        assert [(h.case.id, h.score) for h in again] == [(h.case.id, h.score) for h in hits]


def test_ties_break_by_id():
    store = ExperienceStore()
    a = ExperienceCase("Good", "door", "d1")
    b = ExperienceCase("Good", "door", "d2")
    store.add_case(a)
    store.add_case(b)
    hits = store.query("door", "generation")
    assert hits[0].score == hits[1].score
    assert [h.case.id for h in hits] == sorted([a.id, b.id])
