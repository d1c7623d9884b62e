"""Feedback-session HTTP service.

Runs batches of simulated episodes, queues them for human rating, and closes
each round through the same refinement path as the batch oracle runner, so a
session rated with oracle rewards produces a bit-identical primitive file.
Session state is persisted (write-ahead, atomic rename) before any rating is
acknowledged, so a restarted service resumes with the same pending queue.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import promp, sim
from .refine import REWARD_VALUES, format_reward

REPLAY_RATE = 50.0  # Hz for replay payload downsampling


def _downsample(path: np.ndarray, tick_rate: float) -> list[list[float]]:
    step = max(1, int(round(tick_rate / REPLAY_RATE)))
    rows = path[::step]
    return [[float(v) for v in row] for row in rows]


def _projections(points: list[list[float]]) -> dict:
    # fixed projections: top = (x, y), side = (x, z)
    return {
        "top": [[p[0], p[1], p[2]] for p in points],
        "side": [[p[0], p[1], p[3]] for p in points],
    }


@dataclass
class FeedbackService:
    """Single-session feedback loop state."""

    out_dir: Path
    scenario: sim.ScenarioConfig
    base_params: promp.PrimitiveParams
    batch_n: int
    rounds: int
    seed: int
    session_id: str = "session-1"
    round_index: int = 0
    state: str = "collecting"  # collecting | done
    ratings: dict = field(default_factory=dict)  # episode_id -> reward
    metrics_rows: list = field(default_factory=list)
    _outcomes: list = field(default_factory=list)
    _params: promp.PrimitiveParams = None  # type: ignore[assignment]

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if self._state_path().exists():
            self._resume()
        else:
            self._params = self.base_params
            base_metrics, _ = sim.run_experiment(
                self._params, 10, self.scenario, self.seed, seed_key=(0, 0))
            self.metrics_rows = [{"round": "base", **base_metrics.as_dict()}]
            self._persist()
        self._generate_batch()

    # -- persistence -------------------------------------------------------

    def _state_path(self) -> Path:
        return self.out_dir / "session.json"

    def _params_path(self, round_index: int) -> Path:
        return self.out_dir / f"params_round_{round_index}.json"

    def _persist(self) -> None:
        doc = {
            "session_id": self.session_id,
            "batch_n": self.batch_n,
            "rounds": self.rounds,
            "seed": self.seed,
            "round_index": self.round_index,
            "state": self.state,
            "ratings": self.ratings,
            "metrics_rows": self.metrics_rows,
        }
        tmp = self._state_path().with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._state_path())

    def _resume(self) -> None:
        with open(self._state_path()) as fh:
            doc = json.load(fh)
        if doc["batch_n"] != self.batch_n or doc["seed"] != self.seed:
            raise ValueError("persisted session does not match requested configuration")
        self.session_id = doc["session_id"]
        self.round_index = doc["round_index"]
        self.state = doc["state"]
        self.ratings = doc["ratings"]
        self.metrics_rows = doc["metrics_rows"]
        if self.round_index == 0:
            self._params = self.base_params
        else:
            self._params = promp.load_params(self._params_path(self.round_index - 1))

    # -- episode queue -----------------------------------------------------

    def _episode_id(self, index: int) -> str:
        return f"r{self.round_index}-e{index}"

    def _generate_batch(self) -> None:
        if self.state == "done":
            self._outcomes = []
            return
        self._outcomes = sim.run_refinement_batch(
            self._params, self.scenario, self.batch_n, self.seed, self.round_index)

    def pending_ids(self) -> list[str]:
        if self.state == "done":
            return []
        return [
            self._episode_id(i)
            for i in range(len(self._outcomes))
            if self._episode_id(i) not in self.ratings
        ]

    def session_summary(self) -> dict:
        return {
            "id": self.session_id,
            "state": self.state,
            "round": self.round_index,
            "rounds": self.rounds,
            "batch_n": self.batch_n,
            "rated": len([k for k in self.ratings if k.startswith(f"r{self.round_index}-")]),
            "pending": len(self.pending_ids()),
        }

    def next_episode(self) -> dict:
        pending = self.pending_ids()
        if not pending:
            raise HTTPException(status_code=404, detail="no pending episodes")
        episode_id = pending[0]
        index = int(episode_id.split("-e")[1])
        outcome = self._outcomes[index]
        ball = _downsample(outcome.ball_path, self.scenario.tick_rate)
        ee = _downsample(outcome.ee_path, self.scenario.tick_rate)
        return {
            "episode_id": episode_id,
            "ball_path": ball,
            "ee_path": ee,
            "ball_projections": _projections(ball),
            "ee_projections": _projections(ee),
            "outcome_geometry": {
                "hit": outcome.hit,
                "min_racket_ball_distance": outcome.min_racket_ball_distance,
                "swung": outcome.swung,
                "duration": float(outcome.executed.timestamps[-1]),
            },
        }

    def submit_rating(self, episode_id: str, reward: float) -> dict:
        if self.state == "done":
            raise HTTPException(status_code=409, detail="session finished")
        if not any(abs(float(reward) - v) < 1e-12 for v in REWARD_VALUES):
            raise HTTPException(
                status_code=422,
                detail=f"reward must be one of {[format_reward(v) for v in REWARD_VALUES]}",
            )
        valid_ids = {self._episode_id(i) for i in range(len(self._outcomes))}
        if episode_id not in valid_ids:
            raise HTTPException(status_code=404, detail="unknown episode id")
        if episode_id in self.ratings:
            raise HTTPException(status_code=409, detail="episode already rated")
        self.ratings[episode_id] = float(reward)
        self._persist()  # write-ahead before acknowledging
        if not self.pending_ids():
            self._close_round()
        return {"episode_id": episode_id, "accepted": True,
                "session": self.session_summary()}

    def _close_round(self, force: bool = False) -> None:
        rated = [
            (i, self.ratings.get(self._episode_id(i)))
            for i in range(len(self._outcomes))
        ]
        pairs = [(self._outcomes[i], r) for i, r in rated if r is not None]
        if not pairs:
            raise HTTPException(status_code=409, detail="no ratings to close the round")
        outcomes = [o for o, _ in pairs]
        rewards = [r for _, r in pairs]
        refined, n_used = sim.apply_feedback_round(
            self._params, outcomes, rewards, self.scenario)
        self._params = refined
        promp.save_params(refined, self._params_path(self.round_index))
        # same held-out ball set as the base evaluation: paired comparison
        eval_metrics, _ = sim.run_experiment(
            refined, 10, self.scenario, self.seed, seed_key=(0, 0))
        self.metrics_rows.append({
            "round": self.round_index,
            "batch_n": self.batch_n,
            "n_used": n_used,
            "forced": force,
            **eval_metrics.as_dict(),
        })
        self.round_index += 1
        if self.round_index >= self.rounds:
            self.state = "done"
        self._persist()
        self._generate_batch()

    def advance(self) -> dict:
        """Admin: force-close the current round with the ratings so far."""
        if self.state == "done":
            raise HTTPException(status_code=409, detail="session finished")
        self._close_round(force=True)
        return self.session_summary()


class RatingBody(BaseModel):
    reward: float


def create_app(service: FeedbackService) -> FastAPI:
    app = FastAPI(title="strokelab feedback service")

    @app.get("/api/session")
    def get_session():
        return service.session_summary()

    @app.get("/api/episodes/next")
    def get_next_episode():
        return service.next_episode()

    @app.post("/api/episodes/{episode_id}/rating")
    def post_rating(episode_id: str, body: RatingBody):
        return service.submit_rating(episode_id, body.reward)

    @app.post("/api/session/advance")
    def post_advance():
        return service.advance()

    @app.get("/api/metrics")
    def get_metrics():
        return {"rows": service.metrics_rows}

    return app
