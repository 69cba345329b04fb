"""Experience store: Good/Issue case memory with asymmetric retrieval.

Cases live in ``good.jsonl`` and ``issue.jsonl`` (append-only).  The design
context reads both partitions; the generation context reads only Good cases.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyText, StoreIoError

log = logging.getLogger(__name__)

DIM = 256
PARTITIONS = ("Good", "Issue")
_FILES = {"Good": "good.jsonl", "Issue": "issue.jsonl"}
_WORD = re.compile(r"[a-z0-9]+")


def _hash64(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")


def embed(text: str, dim: int = DIM) -> np.ndarray:
    """Signed feature hashing of lowercase word 1- and 2-grams, L2-normalized."""
    words = _WORD.findall(text.strip().lower())
    if not words:
        raise EmptyText("cannot embed empty text")
    grams = words + [f"{a} {b}" for a, b in zip(words, words[1:])]
    vec = np.zeros(dim)
    for g in grams:
        h = _hash64(g)
        vec[h % dim] += 1.0 if (h >> 63) & 1 else -1.0
    n = np.linalg.norm(vec)
    if n == 0.0:
        # every feature cancelled out; fall back to the first gram's bucket
        vec[_hash64(grams[0]) % dim] = 1.0
        n = 1.0
    return vec / n


def digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ExperienceCase:
    partition: str
    requirement: str
    plan_digest: str
    issues: tuple[str, ...] = ()
    heuristics: tuple[str, ...] = ()
    embedding: tuple[float, ...] = field(default=(), compare=False)
    id: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.partition not in PARTITIONS:
            raise ValueError(f"partition must be Good or Issue, got {self.partition!r}")
        if not self.embedding:
            object.__setattr__(self, "embedding", tuple(embed(self.text()).tolist()))
        if not self.id:
            object.__setattr__(self, "id", self.content_hash())

    @property
    def requirement_digest(self) -> str:
        return digest(self.requirement)

    def text(self) -> str:
        return "\n".join([self.requirement, *self.issues, *self.heuristics])

    def content_hash(self) -> str:
        body = json.dumps(
            [self.partition, self.requirement, self.plan_digest, list(self.issues), list(self.heuristics)],
            separators=(",", ":"),
        )
        return hashlib.sha256(body.encode()).hexdigest()[:20]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "partition": self.partition,
            "requirement": self.requirement,
            "requirement_digest": self.requirement_digest,
            "plan_digest": self.plan_digest,
            "issues": list(self.issues),
            "heuristics": list(self.heuristics),
            "embedding": list(self.embedding),
        }

    @classmethod
    def from_json(cls, d: dict) -> ExperienceCase:
        emb = d["embedding"]
        if len(emb) != DIM:
            raise ValueError("embedding has the wrong dimension")
        case = cls(
            d["partition"],
            d["requirement"],
            d["plan_digest"],
            tuple(d.get("issues", [])),
            tuple(d.get("heuristics", [])),
            tuple(float(v) for v in emb),
            d["id"],
        )
        if abs(float(np.linalg.norm(case.embedding)) - 1.0) > 1e-9:
            raise ValueError("embedding is not unit length")
        return case


@dataclass(frozen=True)
class Hit:
    case: ExperienceCase
    score: float


class ExperienceStore:
    """Single-writer store; ``root=None`` keeps everything in memory."""

    def __init__(self, root: str | Path | None = None) -> None:
        self.root = Path(root) if root is not None else None
        self.cases: dict[str, list[ExperienceCase]] = {p: [] for p in PARTITIONS}
        self._ids: set[str] = set()
        self.skipped = 0
        if self.root is not None:
            self._load()

    def _load(self) -> None:
        assert self.root is not None
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreIoError(str(exc)) from exc
        for part, fname in _FILES.items():
            path = self.root / fname
            if not path.exists():
                continue
            for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    case = ExperienceCase.from_json(json.loads(line))
                    if case.partition != part:
                        raise ValueError("partition does not match file")
                except (ValueError, KeyError, TypeError) as exc:
                    self.skipped += 1
                    log.warning("%s:%d: skipping corrupted case (%s)", path, ln, exc)
                    continue
                if case.id not in self._ids:
                    self._ids.add(case.id)
                    self.cases[part].append(case)

    def __len__(self) -> int:
        return sum(len(v) for v in self.cases.values())

    def add_case(self, case: ExperienceCase) -> str:
        if case.id in self._ids:
            return case.id
        if self.root is not None:
            try:
                with open(self.root / _FILES[case.partition], "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(case.to_json(), separators=(",", ":")) + "\n")
            except OSError as exc:
                raise StoreIoError(str(exc)) from exc
        self._ids.add(case.id)
        self.cases[case.partition].append(case)
        return case.id

    def _top(self, partition: str, q: np.ndarray, k: int) -> list[Hit]:
        cases = self.cases[partition]
        if not cases or k <= 0:
            return []
        mat = np.asarray([c.embedding for c in cases])
        scores = mat @ q
        order = sorted(range(len(cases)), key=lambda i: (-scores[i], cases[i].id))
        return [Hit(cases[i], float(scores[i])) for i in order[:k]]

    def query(self, text: str, context: str = "design", k_good: int = 3, k_issue: int = 2) -> list[Hit]:
        """Top Good cases, followed by top Issue cases in the design context."""
        if context not in ("design", "generation"):
            raise ValueError("context must be design or generation")
        if len(self) == 0:
            return []
        q = embed(text)
        hits = self._top("Good", q, k_good)
        if context == "design":
            hits += self._top("Issue", q, k_issue)
        return hits

    def stats(self) -> dict:
        return {
            "good": len(self.cases["Good"]),
            "issue": len(self.cases["Issue"]),
            "skipped_lines": self.skipped,
        }


def cases_for_prompt(hits: Sequence[Hit]) -> list[dict]:
    return [
        {
            "partition": h.case.partition,
            "requirement": h.case.requirement,
            "issues": list(h.case.issues),
            "heuristics": list(h.case.heuristics),
            "score": round(h.score, 6),
        }
        for h in hits
    ]
