"""HTTP session API for live preference elicitation.

One session owns one exploration log, at most one trained feature space,
and one reward posterior. Mutations within a session are serialized by a
per-session lock; training runs on a background thread with a status
endpoint, one job at a time per session.
"""

from __future__ import annotations

import io
import json
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .behaviors import BehaviorDatabase, render_summary
from .evaluation import generate_eval_queries
from .exploration import ExplorationPage
from .features import (DEFAULT_ALPHA, DEFAULT_BETA, OBJECTIVES, FeatureSpace,
                       Hyper, train_feature_space)
from .reward import (LinearRewardPosterior, RankingRecord, SamplerConfig,
                     decompose_ranking)

DEFAULT_PAGE_SIZE = 60
DEFAULT_TOP_K = 5


class ExploreRequest(BaseModel):
    behavior_id: int


class TrainRequest(BaseModel):
    objective: str = "clea"
    dim: int = 4
    alpha: float | None = None
    beta: float | None = None
    epochs: int | None = None
    pool_population: bool = True


class RankRequest(BaseModel):
    sigma: list[int]


class Session:
    def __init__(self, session_id: str, db: BehaviorDatabase, seed: int):
        self.id = session_id
        self.db = db
        self.rng = np.random.default_rng([seed, 424243])
        self.lock = threading.Lock()
        self.pages: list[ExplorationPage] = []
        self.open_page: dict | None = None  # {"presented": [...], "explored": [...]}
        self.space: FeatureSpace | None = None
        self.posterior: LinearRewardPosterior | None = None
        self.pending_query: list[int] | None = None
        self.train_state = "idle"  # idle | running | done | error
        self.train_result: dict | None = None
        self.rank_rounds = 0


def _behavior_payload(db: BehaviorDatabase, behavior_id: int, explored: bool) -> dict:
    b = db[behavior_id]
    return {
        "id": b.id,
        "modality": b.modality,
        "summary": render_summary(b).tolist(),
        "explored": explored,
    }


def create_app(db: BehaviorDatabase, config: dict | None = None,
               population_pages: list[ExplorationPage] | None = None,
               seed: int = 0) -> FastAPI:
    config = config or {}
    sampler_cfg = dict(config.get("sampler") or {})
    app = FastAPI(title="prefspace session API")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions
    app.state.population_pages = population_pages

    def get_session(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return s

    @app.post("/sessions")
    def create_session() -> dict:
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(sid, db, seed=seed + len(sessions))
        return {"session_id": sid, "db_size": db.config.n,
                "modality": db.modality}

    @app.get("/sessions/{session_id}/page")
    def get_page(session_id: str, size: int = DEFAULT_PAGE_SIZE) -> dict:
        s = get_session(session_id)
        with s.lock:
            if s.open_page is None:
                size = min(size, db.config.n)
                presented = sorted(int(i) for i in
                                   s.rng.choice(db.config.n, size=size, replace=False))
                s.open_page = {"presented": presented, "explored": []}
            page = s.open_page
            explored = set(page["explored"])
            return {
                "page_index": len(s.pages),
                "behaviors": [_behavior_payload(db, i, i in explored)
                              for i in page["presented"]],
            }

    @app.post("/sessions/{session_id}/explore")
    def explore(session_id: str, req: ExploreRequest) -> dict:
        s = get_session(session_id)
        with s.lock:
            if s.open_page is None or req.behavior_id not in s.open_page["presented"]:
                raise HTTPException(status_code=404,
                                    detail=f"behavior {req.behavior_id} is not on the open page")
            if req.behavior_id not in s.open_page["explored"]:
                s.open_page["explored"].append(req.behavior_id)
            return {"behavior_id": req.behavior_id, "explored": True,
                    "order": s.open_page["explored"].index(req.behavior_id)}

    @app.post("/sessions/{session_id}/page/close")
    def close_page(session_id: str) -> dict:
        s = get_session(session_id)
        with s.lock:
            if s.open_page is None:
                raise HTTPException(status_code=404, detail="no open page")
            presented = s.open_page["presented"]
            explored = s.open_page["explored"]
            page = ExplorationPage(
                page_id=len(s.pages),
                presented=list(presented),
                explored=sorted(explored),
                ignored=sorted(set(presented) - set(explored)),
                explore_order=list(explored),
            )
            page.check_partition()
            s.pages.append(page)
            s.open_page = None
            return {"page_id": page.page_id, "explored": len(page.explored),
                    "ignored": len(page.ignored),
                    "contrastive": page.contrastive}

    @app.post("/sessions/{session_id}/train", status_code=202)
    def train(session_id: str, req: TrainRequest) -> dict:
        s = get_session(session_id)
        with s.lock:
            if s.train_state == "running":
                raise HTTPException(status_code=409, detail="training already running")
            if req.objective not in OBJECTIVES:
                raise HTTPException(status_code=422,
                                    detail=f"unknown objective {req.objective!r}")
            pages = list(s.pages)
            if req.pool_population and app.state.population_pages:
                offset = len(pages)
                for p in app.state.population_pages:
                    pages.append(ExplorationPage(
                        page_id=offset + p.page_id, presented=p.presented,
                        explored=p.explored, ignored=p.ignored,
                        explore_order=p.explore_order))
            if not any(p.contrastive for p in pages):
                raise HTTPException(status_code=409,
                                    detail="training needs at least one page with both explored and ignored items")
            modality = db.modality
            hyper = Hyper(alpha=req.alpha if req.alpha is not None else DEFAULT_ALPHA[modality],
                          beta=req.beta if req.beta is not None else DEFAULT_BETA[modality],
                          epochs=req.epochs or 20)
            s.train_state = "running"
            s.train_result = None

        def job():
            try:
                space, report = train_feature_space(
                    req.objective, db.payload_view(), pages, hyper, req.dim,
                    seed=seed, provenance={"session": s.id})
                with s.lock:
                    s.space = space
                    s.posterior = LinearRewardPosterior(
                        feature_dim=req.dim,
                        sampler=SamplerConfig(**sampler_cfg, seed=seed))
                    s.pending_query = None
                    s.train_state = "done"
                    s.train_result = {
                        "objective": req.objective, "dim": req.dim,
                        "final_loss": report.epochs[-1]["total"] if report.epochs else None,
                        "margin_violation_rate": report.margin_violation_rate,
                    }
            except Exception as e:  # surfaced via the status endpoint
                with s.lock:
                    s.train_state = "error"
                    s.train_result = {"error": type(e).__name__, "message": str(e)}

        threading.Thread(target=job, daemon=True).start()
        return {"status": "running"}

    @app.get("/sessions/{session_id}/train/status")
    def train_status(session_id: str) -> dict:
        s = get_session(session_id)
        with s.lock:
            return {"status": s.train_state, "result": s.train_result}

    def _recommendations(s: Session, k: int = DEFAULT_TOP_K) -> list[dict]:
        feats = s.space.embed(db.payload_matrix())
        omega = s.posterior.mean()
        rewards = feats @ omega
        order = np.argsort(-rewards, kind="stable")[:k]
        return [{"id": int(i), "posterior_mean_reward": float(rewards[i])}
                for i in order]

    @app.get("/sessions/{session_id}/rank-query")
    def rank_query(session_id: str, size: int = 5) -> dict:
        s = get_session(session_id)
        with s.lock:
            if s.space is None:
                raise HTTPException(status_code=409, detail="train a feature space first")
            exemplars = sorted({i for p in s.pages for i in p.explored})
            if not exemplars:
                exemplars = list(range(min(10, db.config.n)))
            query = generate_eval_queries(exemplars, [s.space], db, s.rng,
                                          query_size=size)
            s.pending_query = query
            explored = {i for p in s.pages for i in p.explored}
            return {"query": [_behavior_payload(db, i, i in explored) for i in query]}

    @app.post("/sessions/{session_id}/rank")
    def rank(session_id: str, req: RankRequest) -> dict:
        s = get_session(session_id)
        with s.lock:
            if s.space is None or s.posterior is None:
                raise HTTPException(status_code=409, detail="train a feature space first")
            if s.pending_query is None:
                raise HTTPException(status_code=409, detail="request a rank-query first")
            if sorted(req.sigma) != list(range(len(s.pending_query))):
                raise HTTPException(status_code=422,
                                    detail=f"sigma must be a permutation of 0..{len(s.pending_query) - 1}")
            record = RankingRecord(query=s.pending_query, sigma=req.sigma)
            feats = s.space.embed(db.payload_matrix())
            for c in decompose_ranking(record):
                s.posterior.update(c, feats[c.loser_id], feats[c.winner_id])
            s.pending_query = None
            s.rank_rounds += 1
            mean = s.posterior.mean()
            spread = float(np.mean(np.std(s.posterior.samples, axis=0)))
            return {
                "round": s.rank_rounds,
                "posterior": {"mean": mean.tolist(), "sample_spread": spread,
                              "comparisons": len(s.posterior.comparisons)},
                "recommendations": _recommendations(s),
            }

    @app.get("/sessions/{session_id}/export", response_class=PlainTextResponse)
    def export(session_id: str) -> str:
        s = get_session(session_id)
        with s.lock:
            buf = io.StringIO()
            for p in s.pages:
                buf.write(json.dumps({
                    "page_id": p.page_id, "presented": p.presented,
                    "explored": p.explored, "explore_order": p.explore_order,
                }) + "\n")
            return buf.getvalue()

    return app
