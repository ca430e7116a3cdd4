"""HTTP session service for human-in-the-loop labeling.

One session drives one active-learning run: the client fetches the
current batch of uncertain pairs, submits match/non-match labels,
triggers the retrain, and polls status until the next batch (or the end
of the run).  Every state change is journaled to an append-only JSONL
file before the response is sent, and a restarted server replays the
journals to reconstruct its sessions exactly (the loop is deterministic,
so re-running an iteration with the journaled labels reproduces the
original weights).

The process runs at most one retrain at a time; ``advance`` returns 202
immediately and the client polls ``status``.
"""

from __future__ import annotations

import json
import os
import random
import secrets
import threading
from dataclasses import asdict
from typing import Literal

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict

from .active import (ALConfig, CallbackAnnotator, IterationLog, LabeledSet,
                     SelectionResult, UnlabeledPool, al_iteration,
                     compute_selection, gold_map)
from .checkpoint import CheckpointError, load_model, read_manifest
from .data import ConfigError
from .model import DeepERModel, ModelConfig, encode_pairs
from .prepared import PreparedDataset, load_prepared
from .text import EmbeddingStore
from .training import TrainConfig

LABEL_NAMES = {"match": 1, "non_match": 0}
LABEL_INTS = {1: "match", 0: "non_match"}


# --------------------------------------------------------------------------
# request/response bodies


class TrainSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    batch_size: int = 16
    learning_rate: float = 0.001
    seed: int = 1
    threshold: float = 0.5

    def to_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size,
                           learning_rate=self.learning_rate,
                           seed=self.seed, threshold=self.threshold)


class LoopSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    k_per_iteration: int = 20
    iterations: int = 10
    inner_epochs: int = 20
    strategy: str = "partition-high-confidence"
    remove_high_confidence: bool = True
    inner_eval: Literal["labeled", "dev"] = "labeled"
    train: TrainSettings = TrainSettings()

    def to_config(self) -> ALConfig:
        return ALConfig(k_per_iteration=self.k_per_iteration,
                        iterations=self.iterations,
                        inner_epochs=self.inner_epochs,
                        strategy=self.strategy,
                        remove_high_confidence=self.remove_high_confidence,
                        inner_eval=self.inner_eval,
                        train=self.train.to_config())


class ModelSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    embedding_dim: int = 300
    hidden_size: int = 150
    seed: int = 1


class CreateSessionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())
    dataset: str
    config: LoopSettings = LoopSettings()
    model: ModelSettings = ModelSettings()
    init: Literal["random", "checkpoint"] = "random"
    checkpoint: str | None = None
    embeddings: str | None = None
    use_gold: bool = True


class LabelEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    pair_id: str
    label: Literal["match", "non_match"]


class LabelSubmission(BaseModel):
    model_config = ConfigDict(extra="forbid")
    labels: list[LabelEntry]


class CreateSessionResponse(BaseModel):
    session_id: str


class PairPayload(BaseModel):
    pair_id: str
    left: dict[str, str]
    right: dict[str, str]
    probability: float
    bucket: Literal["likely_fp", "likely_fn"]
    label: Literal["match", "non_match"] | None = None


class BatchResponse(BaseModel):
    iteration: int
    pairs: list[PairPayload]


class LabelsResponse(BaseModel):
    accepted: int
    remaining: int


class AdvanceResponse(BaseModel):
    state: str


class StatusResponse(BaseModel):
    session_id: str
    dataset: str
    state: Literal["awaiting-labels", "training", "idle", "finished"]
    iteration: int
    iterations_total: int
    pending: int
    submitted: int
    remaining: int
    pool_size: int
    labeled_size: int
    error: str | None = None


class IterationRow(BaseModel):
    iteration: int
    human_labels: int
    proxy_labels: int
    fp: int | None
    tp: int | None
    fn: int | None
    tn: int | None
    f1_on_labeled: float
    pool_size: int
    labeled_size: int
    f1_trajectory: list[float]
    shortfalls: dict[str, int]
    test_f1: float | None


class MetricsResponse(BaseModel):
    history: list[IterationRow]


SCHEMA_MODELS = {
    "session-create-request": CreateSessionRequest,
    "session-create-response": CreateSessionResponse,
    "label-submission": LabelSubmission,
    "labels-response": LabelsResponse,
    "batch-response": BatchResponse,
    "advance-response": AdvanceResponse,
    "status-response": StatusResponse,
    "metrics-response": MetricsResponse,
}


def export_schemas(out_dir) -> list[str]:
    """Write one JSON schema file per request/response body."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, model in SCHEMA_MODELS.items():
        path = os.path.join(out_dir, f"{name}.schema.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(model.model_json_schema(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    return written


# --------------------------------------------------------------------------
# journal


class Journal:
    """Append-only JSONL event log, flushed to disk per event."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    @staticmethod
    def read_events(path) -> list[dict]:
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    break   # torn final line from a crash mid-write
        return events


# --------------------------------------------------------------------------
# session


class Session:
    """One active-learning run plus its labeling state machine.

    States move awaiting-labels -> training -> (awaiting-labels |
    finished); a failed retrain parks in idle with the error recorded,
    and advance may be retried from there.
    """

    def __init__(self, sid: str, request: CreateSessionRequest,
                 prepared: PreparedDataset, journal: Journal | None):
        self.id = sid
        self.request = request
        self.dataset = request.dataset
        self.cfg = request.config.to_config()
        self.journal = journal
        self.lock = threading.RLock()
        self.state = "idle"
        self.error: str | None = None
        self.iteration = 1
        self.history: list[IterationLog] = []
        self.pending: SelectionResult | None = None
        self.submitted: dict[str, int] = {}
        self.finished_event = threading.Event()

        store = self._build_store(request)
        self.model = self._build_model(request, prepared, store)
        schema = self.model.schema
        train_enc = encode_pairs(store, schema, prepared.train,
                                 self.model.tokenizer)
        # an unlabeled corpus yields an empty gold map; treat that as no gold
        self.gold = (gold_map(train_enc) or None) if request.use_gold else None
        self.pool = UnlabeledPool([p.relabeled(None) for p in train_enc])
        self.labeled = LabeledSet()
        self.dev_pairs = encode_pairs(store, schema, prepared.dev,
                                      self.model.tokenizer)
        test = [p for p in prepared.test if p.label is not None]
        self.test_pairs = encode_pairs(store, schema, test,
                                       self.model.tokenizer) if test else None
        self.rng = random.Random(self.cfg.train.seed)

    @staticmethod
    def _build_store(request: CreateSessionRequest) -> EmbeddingStore:
        if request.init == "checkpoint" and not request.checkpoint:
            raise ConfigError("init='checkpoint' needs a checkpoint path")
        if request.embeddings is not None:
            return EmbeddingStore.load(request.embeddings)
        dim = request.model.embedding_dim
        if request.init == "checkpoint":
            manifest = read_manifest(request.checkpoint)
            dim = manifest["config"]["embedding_dim"]
        return EmbeddingStore.hash_only(dim)

    @staticmethod
    def _build_model(request: CreateSessionRequest, prepared: PreparedDataset,
                     store: EmbeddingStore) -> DeepERModel:
        if request.init == "checkpoint":
            return load_model(request.checkpoint, store)
        cfg = ModelConfig(embedding_dim=store.dim,
                          hidden_size=request.model.hidden_size,
                          seed=request.model.seed)
        return DeepERModel(prepared.schema, store, cfg)

    # ----- selection ------------------------------------------------------

    def start(self) -> None:
        """Compute the first selection and open for labels."""
        self.pool.refresh(self.model, self.cfg.train.batch_size * 4)
        self.pending = compute_selection(self.pool, self.cfg)
        self.state = "awaiting-labels"
        self._journal_selection()

    def _journal_selection(self) -> None:
        if self.journal is None or self.pending is None:
            return
        sel = self.pending
        self.journal.append({
            "event": "selection", "iteration": self.iteration,
            "likely_fp": sel.likely_fp, "likely_fn": sel.likely_fn,
            "high_conf_pos": sel.high_conf_pos,
            "high_conf_neg": sel.high_conf_neg,
            "shortfalls": sel.shortfalls,
        })

    # ----- labels ---------------------------------------------------------

    def batch_payload(self) -> BatchResponse:
        with self.lock:
            if self.state != "awaiting-labels":
                raise HTTPException(409, f"session is {self.state}, "
                                    "not awaiting-labels")
            pairs = []
            for bucket, ids in (("likely_fp", self.pending.likely_fp),
                                ("likely_fn", self.pending.likely_fn)):
                for pid in ids:
                    raw = self.pool.pairs[pid].pair
                    label = self.submitted.get(pid)
                    pairs.append(PairPayload(
                        pair_id=pid, left=dict(raw.left), right=dict(raw.right),
                        probability=self.pending.probabilities[pid],
                        bucket=bucket,
                        label=None if label is None else LABEL_INTS[label]))
            return BatchResponse(iteration=self.iteration, pairs=pairs)

    def apply_labels(self, submission: LabelSubmission,
                     journal: bool = True) -> LabelsResponse:
        with self.lock:
            if self.state != "awaiting-labels":
                raise HTTPException(409, f"session is {self.state}, "
                                    "not awaiting-labels")
            human = set(self.pending.human_ids)
            seen: set[str] = set()
            for entry in submission.labels:
                if entry.pair_id not in human:
                    raise HTTPException(404, f"pair {entry.pair_id!r} is not "
                                        "in the pending uncertain set")
                if entry.pair_id in seen:
                    raise HTTPException(409, f"pair {entry.pair_id!r} appears "
                                        "twice in one submission")
                if entry.pair_id in self.submitted:
                    raise HTTPException(409, f"pair {entry.pair_id!r} already "
                                        "has a label")
                seen.add(entry.pair_id)
            if journal and self.journal is not None and submission.labels:
                self.journal.append({
                    "event": "labels", "iteration": self.iteration,
                    "labels": [{"pair_id": e.pair_id, "label": e.label}
                               for e in submission.labels]})
            for entry in submission.labels:
                self.submitted[entry.pair_id] = LABEL_NAMES[entry.label]
            remaining = len(human) - len(self.submitted)
            return LabelsResponse(accepted=len(submission.labels),
                                  remaining=remaining)

    def missing_labels(self) -> list[str]:
        return [pid for pid in self.pending.human_ids
                if pid not in self.submitted]

    # ----- iteration ------------------------------------------------------

    def begin_training(self) -> None:
        with self.lock:
            if self.state != "awaiting-labels" and self.state != "idle":
                raise HTTPException(409, f"session is {self.state}; advance "
                                    "needs awaiting-labels")
            missing = self.missing_labels()
            if missing:
                raise HTTPException(409, "unlabeled pending pairs: "
                                    f"{sorted(missing)}")
            self.state = "training"
            self.error = None

    def run_iteration(self, journal: bool = True) -> None:
        """The retrain step; runs on the training thread (or inline during
        journal replay)."""
        try:
            submitted = dict(self.submitted)
            annotator = CallbackAnnotator(
                lambda pairs: {p.pair_id: submitted[p.pair_id] for p in pairs})
            log = al_iteration(self.pool, self.labeled, self.model, annotator,
                               self.cfg, self.iteration, self.rng,
                               gold=self.gold, test_pairs=self.test_pairs,
                               dev_pairs=self.dev_pairs,
                               selection=self.pending)
        except Exception as exc:                    # park, don't crash the app
            with self.lock:
                self.state = "idle"
                self.error = f"{type(exc).__name__}: {exc}"
            return
        with self.lock:
            self.history.append(log)
            if journal and self.journal is not None:
                self.journal.append({"event": "iteration_complete",
                                     "iteration": self.iteration,
                                     "log": asdict(log)})
            self.submitted = {}
            self.iteration += 1
            if self.iteration > self.cfg.iterations or not len(self.pool):
                self.pending = None
                self.state = "finished"
                if journal and self.journal is not None:
                    self.journal.append({"event": "finished"})
                self.finished_event.set()
            else:
                self.pool.refresh(self.model, self.cfg.train.batch_size * 4)
                self.pending = compute_selection(self.pool, self.cfg)
                self.state = "awaiting-labels"
                if journal:
                    self._journal_selection()

    # ----- views ----------------------------------------------------------

    def status(self) -> StatusResponse:
        with self.lock:
            pending = len(self.pending.human_ids) if self.pending else 0
            return StatusResponse(
                session_id=self.id, dataset=self.dataset, state=self.state,
                iteration=self.iteration,
                iterations_total=self.cfg.iterations,
                pending=pending, submitted=len(self.submitted),
                remaining=max(0, pending - len(self.submitted)),
                pool_size=len(self.pool), labeled_size=len(self.labeled),
                error=self.error)

    def metrics(self) -> MetricsResponse:
        with self.lock:
            return MetricsResponse(
                history=[IterationRow(**asdict(log)) for log in self.history])


# --------------------------------------------------------------------------
# session store


class SessionStore:
    """All live sessions plus the one-at-a-time training slot."""

    def __init__(self, datasets: dict[str, str], journal_dir=None):
        self.datasets = {name: str(path) for name, path in datasets.items()}
        self.journal_dir = str(journal_dir) if journal_dir is not None else None
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._train_slot = threading.Semaphore(1)
        if self.journal_dir is not None:
            os.makedirs(self.journal_dir, exist_ok=True)
            self._recover()

    # ----- creation -------------------------------------------------------

    def create(self, request: CreateSessionRequest) -> Session:
        if request.dataset not in self.datasets:
            raise HTTPException(409, f"unknown dataset {request.dataset!r}; "
                                f"registered: {sorted(self.datasets)}")
        prepared = load_prepared(self.datasets[request.dataset])
        sid = secrets.token_hex(8)
        # constructing first validates the config, so a rejected request
        # never leaves a journal behind
        session = Session(sid, request, prepared, None)
        if self.journal_dir is not None:
            journal = Journal(os.path.join(self.journal_dir, f"{sid}.jsonl"))
            journal.append({"event": "created", "session_id": sid,
                            "request": request.model_dump()})
            session.journal = journal
        session.start()
        with self._lock:
            self.sessions[sid] = session
        return session

    def get(self, sid: str) -> Session:
        with self._lock:
            session = self.sessions.get(sid)
        if session is None:
            raise HTTPException(404, f"unknown session {sid!r}")
        return session

    def train_in_background(self, session: Session) -> None:
        def work():
            with self._train_slot:
                session.run_iteration()
        threading.Thread(target=work, name=f"retrain-{session.id}",
                         daemon=True).start()

    # ----- crash recovery -------------------------------------------------

    def _recover(self) -> None:
        for fname in sorted(os.listdir(self.journal_dir)):
            if not fname.endswith(".jsonl"):
                continue
            path = os.path.join(self.journal_dir, fname)
            events = Journal.read_events(path)
            if not events or events[0].get("event") != "created":
                continue
            session = self._replay(path, events)
            if session is not None:
                self.sessions[session.id] = session

    def _replay(self, path: str, events: list[dict]) -> Session | None:
        head = events[0]
        request = CreateSessionRequest.model_validate(head["request"])
        if request.dataset not in self.datasets:
            return None
        prepared = load_prepared(self.datasets[request.dataset])
        session = Session(head["session_id"], request, prepared, None)
        session.start()
        for event in events[1:]:
            kind = event.get("event")
            if kind == "labels":
                entries = [LabelEntry(**e) for e in event["labels"]]
                session.apply_labels(LabelSubmission(labels=entries),
                                     journal=False)
            elif kind == "iteration_complete":
                # deterministic re-run reproduces the original weights
                session.state = "training"
                session.run_iteration(journal=False)
        session.journal = Journal(path)
        return session


# --------------------------------------------------------------------------
# app


def create_app(datasets: dict[str, str], journal_dir=None,
               token: str | None = None,
               static_dir: str | None = None) -> FastAPI:
    """Build the service over a {name: prepared-directory} registry."""
    app = FastAPI(title="entmatch labeling service", version="1.0")
    store = SessionStore(datasets, journal_dir)
    app.state.store = store

    async def check_auth(request: Request):
        if token is None:
            return
        got = request.headers.get("authorization", "")
        if got != f"Bearer {token}":
            raise HTTPException(401, "missing or wrong bearer token")

    auth = [Depends(check_auth)]

    @app.exception_handler(RequestValidationError)
    async def bad_request(request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(ConfigError)
    async def config_error(request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(CheckpointError)
    async def checkpoint_error(request, exc: CheckpointError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.post("/sessions", status_code=201, dependencies=auth,
              response_model=CreateSessionResponse)
    def create_session(request: CreateSessionRequest):
        session = store.create(request)
        return CreateSessionResponse(session_id=session.id)

    @app.get("/sessions/{sid}/batch", dependencies=auth,
             response_model=BatchResponse)
    def get_batch(sid: str):
        return store.get(sid).batch_payload()

    @app.post("/sessions/{sid}/labels", dependencies=auth,
              response_model=LabelsResponse)
    def post_labels(sid: str, submission: LabelSubmission):
        return store.get(sid).apply_labels(submission)

    @app.post("/sessions/{sid}/advance", status_code=202, dependencies=auth,
              response_model=AdvanceResponse)
    def advance(sid: str):
        session = store.get(sid)
        session.begin_training()
        store.train_in_background(session)
        return AdvanceResponse(state="training")

    @app.get("/sessions/{sid}/status", dependencies=auth,
             response_model=StatusResponse)
    def get_status(sid: str):
        return store.get(sid).status()

    @app.get("/sessions/{sid}/metrics", dependencies=auth,
             response_model=MetricsResponse)
    def get_metrics(sid: str):
        return store.get(sid).metrics()

    if static_dir is None:
        bundled = os.path.join(os.path.dirname(__file__), "static")
        static_dir = bundled if os.path.isdir(bundled) else None
    if static_dir is not None and os.path.isdir(static_dir):
        app.mount("/ui", StaticFiles(directory=static_dir, html=True),
                  name="ui")

    return app
