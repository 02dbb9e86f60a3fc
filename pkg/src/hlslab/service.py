"""Experiment store and the HTTP service the listening-test client talks to.

Participant state is never stored: it is derived by replaying the
append-only JSONL response log against the session plans, so a crashed or
restarted service reconstructs exactly the same state.  Responses are
fsynced before the request is acknowledged.

Served session plans are blinded: trials carry opaque audio tokens only;
condition labels, item ids and training answers stay server-side.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import shutil
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from hlslab.experiment import (
    ResponseRecord,
    SessionPlan,
    TrainingGrade,
    build_session,
    build_training_session,
    grade_training,
)

__all__ = [
    "ExperimentStore",
    "ParticipantState",
    "StoreError",
    "NotFoundError",
    "ConflictError",
    "BadRequestError",
    "build_store",
    "serve",
]


class StoreError(RuntimeError):
    status = 500


class NotFoundError(StoreError):
    status = 404


class ConflictError(StoreError):
    status = 409


class BadRequestError(StoreError):
    status = 400


@dataclass(frozen=True)
class ParticipantState:
    participant_id: str
    phase: str  # training | practice | main | done
    attempt: int
    session: SessionPlan | None
    completed: int
    total: int
    training_correct: int | None = None
    training_grade: TrainingGrade | None = None


def _audio_token(seed: int, item: str, label: str) -> str:
    digest = hashlib.sha1(f"{seed}:{item}:{label}".encode()).hexdigest()
    return digest[:16]


class ExperimentStore:
    """Directory-backed store of sessions, stimulus audio and response logs."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not (self.root / "store.json").exists():
            raise NotFoundError(f"{root} is not an experiment store")
        self.meta = json.loads((self.root / "store.json").read_text())
        self.registry = json.loads((self.root / "participants.json").read_text())
        self._lock = threading.RLock()
        self._seen: set[tuple[str, str, int]] = set()
        for pid in self.registry:
            for rec in self._responses(pid):
                self._seen.add((rec.session_id, pid, rec.trial_index))

    # -- session plans ----------------------------------------------------

    def _stored_plan(self, session_id: str) -> SessionPlan | None:
        path = self.root / "sessions" / f"{session_id}.json"
        if not path.exists():
            return None
        return SessionPlan.from_json(json.loads(path.read_text()))

    def _training_plan(self, pid: str, attempt: int) -> SessionPlan:
        base = self._stored_plan(self.registry[pid]["training"])
        if attempt == 1:
            return base
        # repeated training: same trials, reshuffled per participant/attempt
        derived_seed = (base.seed * 1000003 + hash_stable(f"{pid}:{attempt}")) % (2**31)
        order = list(range(len(base.trials)))
        random.Random(derived_seed).shuffle(order)
        return SessionPlan(
            session_id=f"{base.session_id}--{pid}--r{attempt}",
            phase="training",
            trials=tuple(base.trials[i] for i in order),
            seed=derived_seed,
            feedback=True,
            pass_threshold=base.pass_threshold,
            answer_key={new: base.answer_key[old] for new, old in enumerate(order)},
        )

    def session_plan(self, session_id: str) -> SessionPlan:
        """Resolve a stored or derived (repeat-training) session id."""
        plan = self._stored_plan(session_id)
        if plan is not None:
            return plan
        if "--" in session_id:
            base_id, pid, rev = (session_id.split("--") + [None])[:3]
            if (
                pid in self.registry
                and rev
                and rev.startswith("r")
                and rev[1:].isdigit()
                and self.registry[pid].get("training") == base_id
            ):
                return self._training_plan(pid, int(rev[1:]))
        raise NotFoundError(f"unknown session {session_id!r}")

    # -- response log -----------------------------------------------------

    def _log_path(self, pid: str) -> Path:
        return self.root / "responses" / f"{pid}.jsonl"

    def _responses(self, pid: str) -> list[ResponseRecord]:
        path = self._log_path(pid)
        if not path.exists():
            return []
        records = []
        for line in path.read_text().splitlines():
            if line.strip():
                records.append(ResponseRecord.from_json(json.loads(line)))
        return records

    def _append(self, rec: ResponseRecord) -> None:
        path = self._log_path(rec.participant_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec.to_json()) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- derived participant state ----------------------------------------

    def state(self, pid: str) -> ParticipantState:
        if pid not in self.registry:
            raise NotFoundError(f"unknown participant {pid!r}")
        by_session: dict[str, list[ResponseRecord]] = {}
        for rec in self._responses(pid):
            by_session.setdefault(rec.session_id, []).append(rec)

        attempt = 1
        while True:
            plan = self._training_plan(pid, attempt)
            recs = by_session.get(plan.session_id, [])
            if len(recs) < len(plan.trials):
                answered = {r.trial_index: r.choice for r in recs}
                correct = sum(
                    1
                    for idx, ans in answered.items()
                    if plan.answer_key.get(idx) == ans
                )
                return ParticipantState(
                    participant_id=pid,
                    phase="training",
                    attempt=attempt,
                    session=plan,
                    completed=len(recs),
                    total=len(plan.trials),
                    training_correct=correct,
                )
            grade = grade_training(recs, plan.answer_key, plan.pass_threshold)
            if grade.passed:
                last_grade = grade
                break
            attempt += 1

        for phase in ("practice", "main"):
            plan = self._stored_plan(self.registry[pid][phase])
            recs = by_session.get(plan.session_id, [])
            if len(recs) < len(plan.trials):
                return ParticipantState(
                    participant_id=pid,
                    phase=phase,
                    attempt=attempt,
                    session=plan,
                    completed=len(recs),
                    total=len(plan.trials),
                    training_grade=last_grade,
                )
        return ParticipantState(
            participant_id=pid,
            phase="done",
            attempt=attempt,
            session=None,
            completed=0,
            total=0,
            training_grade=last_grade,
        )

    def advance_phase(self, pid: str) -> str:
        """Phase after a completed session; 409-conflict while the active
        session still has unanswered trials."""
        st = self.state(pid)
        if st.phase == "done":
            return "done"
        if st.completed != 0:
            raise ConflictError(
                f"phase {st.phase} incomplete: {st.completed}/{st.total} answered"
            )
        return st.phase

    def progress(self, pid: str) -> dict:
        st = self.state(pid)
        out = {
            "participant_id": pid,
            "phase": st.phase,
            "attempt": st.attempt,
            "completed": st.completed,
            "total": st.total,
            "session_id": st.session.session_id if st.session else None,
        }
        if st.training_correct is not None:
            out["training_score"] = {
                "correct": st.training_correct,
                "answered": st.completed,
            }
        if st.training_grade is not None:
            out["training_passed"] = {
                "correct": st.training_grade.n_correct,
                "total": st.training_grade.n_total,
            }
        return out

    # -- responses ---------------------------------------------------------

    def submit_response(self, payload: dict) -> dict:
        """Validate, enrich and append one response; returns the
        acknowledgement body (with feedback during training)."""
        if not isinstance(payload, dict):
            raise BadRequestError("body must be a JSON object")
        try:
            pid = payload["participant_id"]
            session_id = payload["session_id"]
            trial_index = int(payload["trial_index"])
            choice = payload["choice"]
        except (KeyError, TypeError, ValueError) as exc:
            raise BadRequestError(f"malformed response record: {exc}") from exc
        if choice not in ("first", "second"):
            raise BadRequestError(f"malformed choice {choice!r}")

        with self._lock:
            st = self.state(pid)
            if st.phase == "done":
                raise ConflictError("participant has completed the experiment")
            plan = st.session
            if session_id != plan.session_id:
                # distinguish unknown ids (404) from stale ones (409)
                self.session_plan(session_id)
                raise ConflictError(
                    f"session {session_id!r} is not the active session"
                )
            if not 0 <= trial_index < len(plan.trials):
                raise BadRequestError(f"trial index {trial_index} out of range")
            key = (session_id, pid, trial_index)
            if key in self._seen:
                raise ConflictError(f"trial {trial_index} already answered")
            item, first, second = plan.trials[trial_index]
            rec = ResponseRecord(
                session_id=session_id,
                participant_id=pid,
                trial_index=trial_index,
                item=item,
                pair=(first, second),
                choice=choice,
                timestamp=time.time(),
                phase=plan.phase,
            )
            self._append(rec)
            self._seen.add(key)
            body = {"status": "recorded", "trial_index": trial_index}
            if plan.phase == "training" and plan.feedback:
                body["feedback"] = {
                    "correct": plan.answer_key[trial_index] == choice
                }
            return body

    # -- audio ---------------------------------------------------------------

    def audio_path(self, token: str) -> Path:
        path = self.root / "audio" / f"{token}.wav"
        if not path.exists() or not path.is_file():
            raise NotFoundError(f"unknown audio token {token!r}")
        return path

    def blinded_session(self, session_id: str) -> dict:
        """The served view of a plan: opaque audio URLs, no labels, no
        items, no answers."""
        plan = self.session_plan(session_id)
        tokens = self.meta["tokens"]
        trials = []
        for idx, (item, first, second) in enumerate(plan.trials):
            trials.append(
                {
                    "index": idx,
                    "audio": [
                        f"/audio/{tokens[f'{item}::{first}']}.wav",
                        f"/audio/{tokens[f'{item}::{second}']}.wav",
                    ],
                }
            )
        return {
            "session_id": plan.session_id,
            "phase": plan.phase,
            "feedback": plan.feedback,
            "trial_count": len(plan.trials),
            "trials": trials,
        }


def hash_stable(text: str) -> int:
    """Process-independent string hash (builtin hash() is salted)."""
    return int.from_bytes(hashlib.sha1(text.encode()).digest()[:4], "big")


def build_store(
    root: str | Path,
    manifest: dict[str, dict[str, str]],
    participants: list[str],
    seed: int,
    reference: str,
    distorted: list[str],
    training_items: list[str],
    practice_items: list[str],
    main_items: list[str],
    conditions: list[str] | None = None,
    pass_threshold: float | None = None,
) -> ExperimentStore:
    """Lay out a store directory: session plans, participant registry and
    tokenized copies of the prepared stimulus audio.

    ``manifest`` maps item id -> condition label -> WAV path.
    """
    root = Path(root)
    if conditions is None:
        conditions = sorted({label for per in manifest.values() for label in per})
    if pass_threshold is None:
        pass_threshold = 10 / 12
    (root / "sessions").mkdir(parents=True, exist_ok=True)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    (root / "responses").mkdir(parents=True, exist_ok=True)

    training = build_training_session(
        training_items, reference, distorted, seed=seed,
        pass_threshold=pass_threshold, session_id=f"training-{seed}",
    )
    practice = build_session(
        practice_items, conditions, "practice", seed=seed + 1,
        session_id=f"practice-{seed}",
    )
    main = build_session(
        main_items, conditions, "main", seed=seed + 2, session_id=f"main-{seed}"
    )
    for plan in (training, practice, main):
        path = root / "sessions" / f"{plan.session_id}.json"
        path.write_text(json.dumps(plan.to_json(), indent=1))

    tokens: dict[str, str] = {}
    used = set()
    for plan in (training, practice, main):
        for item, first, second in plan.trials:
            for label in (first, second):
                used.add((item, label))
    for item, label in sorted(used):
        src = manifest.get(item, {}).get(label)
        if src is None:
            raise ValueError(f"manifest missing audio for item {item!r} / {label!r}")
        token = _audio_token(seed, item, label)
        tokens[f"{item}::{label}"] = token
        shutil.copyfile(src, root / "audio" / f"{token}.wav")

    registry = {
        pid: {
            "training": training.session_id,
            "practice": practice.session_id,
            "main": main.session_id,
        }
        for pid in participants
    }
    (root / "participants.json").write_text(json.dumps(registry, indent=1))
    (root / "store.json").write_text(
        json.dumps(
            {
                "seed": seed,
                "conditions": conditions,
                "reference": reference,
                "tokens": tokens,
                "created": time.time(),
            },
            indent=1,
        )
    )
    return ExperimentStore(root)


class _Handler(BaseHTTPRequestHandler):
    """Routes: GET /api/session/{id}, /api/progress/{pid}, /audio/{token};
    POST /api/response, /api/advance/{pid}; optional static files."""

    store: ExperimentStore = None
    static_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _guarded(self, fn):
        try:
            return fn()
        except StoreError as exc:
            self._send_json(exc.status, {"error": str(exc)})
        except Exception as exc:  # noqa: BLE001
            self._send_json(500, {"error": str(exc)})
        return None

    def do_GET(self):
        parts = self.path.strip("/").split("/")
        if self.path.startswith("/api/session/"):
            self._guarded(
                lambda: self._send_json(
                    200, self.store.blinded_session(parts[-1])
                )
            )
        elif self.path.startswith("/api/progress/"):
            self._guarded(
                lambda: self._send_json(200, self.store.progress(parts[-1]))
            )
        elif self.path.startswith("/audio/"):
            self._guarded(lambda: self._send_audio(parts[-1]))
        else:
            self._serve_static()

    def _send_audio(self, name: str):
        token = name.removesuffix(".wav")
        data = self.store.audio_path(token).read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", "audio/wav")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _serve_static(self):
        if self.static_dir is None:
            self._send_json(404, {"error": "not found"})
            return
        rel = self.path.lstrip("/") or "index.html"
        path = (self.static_dir / rel).resolve()
        if not str(path).startswith(str(self.static_dir.resolve())) or not path.is_file():
            self._send_json(404, {"error": "not found"})
            return
        ctype = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
        }.get(path.suffix, "application/octet-stream")
        data = path.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        if self.path == "/api/response":
            def run():
                try:
                    payload = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise BadRequestError(f"invalid JSON: {exc}") from exc
                body = self.store.submit_response(payload)
                self._send_json(201, body)

            self._guarded(run)
        elif self.path.startswith("/api/advance/"):
            pid = self.path.strip("/").split("/")[-1]
            self._guarded(
                lambda: self._send_json(200, {"phase": self.store.advance_phase(pid)})
            )
        else:
            self._send_json(404, {"error": "not found"})


def serve(
    store: ExperimentStore,
    host: str = "127.0.0.1",
    port: int = 8770,
    static_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Create the HTTP server (not yet serving; call ``serve_forever``)."""
    handler = type(
        "BoundHandler",
        (_Handler,),
        {
            "store": store,
            "static_dir": Path(static_dir) if static_dir else None,
        },
    )
    return ThreadingHTTPServer((host, port), handler)
