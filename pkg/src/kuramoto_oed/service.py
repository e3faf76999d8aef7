"""HTTP service for human-in-the-loop experiment campaigns.

Each campaign persists as an append-only JSON-lines event log (created +
outcomes); every derived quantity (bounds, MOCU trajectory, rankings) is
recomputed deterministically from the log, which makes restart recovery
a pure replay.  Long computations run on a worker pool; endpoints return
202 with progress rather than blocking.
"""

from __future__ import annotations

import argparse
import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .control import SearchConfig, make_ml_predicate, make_ode_predicate
from .errors import InconsistentObservationError
from .mocu import estimate_mocu, expected_remaining_mocu
from .model import SimConfig, pair_list, pair_to_flat
from .nn import load_classifier
from .uncertainty import (
    ExperimentOutcome,
    UncertaintyClass,
    build_paper_class,
    class_from_dict,
    outcome_probability,
    pairwise_sync_threshold,
    update_class,
)

DATA_DIR_ENV = "KURAMOTO_OED_DATA_DIR"
DASHBOARD_DIR_ENV = "KURAMOTO_OED_DASHBOARD"
SERVICE_STRATEGIES = ("mocu_static", "mocu_iterative", "entropy", "random")

_SEL = 0
_GT = 1
_RND = 2


def _step_seed(seed: int, step: int, purpose: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(step, purpose))
               .generate_state(1)[0])


class Campaign:
    """In-memory state of one campaign, always reproducible from its log."""

    def __init__(self, cid: str, spec: dict, log_path: Path):
        self.id = cid
        self.spec = spec
        self.log_path = log_path
        self.lock = threading.Lock()
        self.initial_class = class_from_dict(spec["class"])
        self.uclass = self.initial_class
        self.strategy = spec["strategy"]
        self.backend = spec.get("backend", "ode")
        self.K = int(spec.get("K", 256))
        self.seed = int(spec.get("seed", 0))
        self.created = spec.get("created", time.time())
        self.updated = self.created
        self.status = "active"
        self.history: list[dict] = []
        self.trajectory: list[dict] = [{"step": 0, "mocu": None, "stderr": None,
                                        "status": "computing"}]
        self.performed: set[tuple[int, int]] = set()
        self.ranking: dict = {"status": "computing", "progress": 0.0,
                              "scores": [], "for_step": 0}
        self.version = 0
        sim = spec.get("sim", {})
        self.sim = SimConfig(
            sample_rate_hz=float(sim.get("sample_rate_hz", 160.0)),
            duration_s=float(sim.get("duration_s", 5.0)),
            sync_window=tuple(sim.get("sync_window",
                                      (sim.get("duration_s", 5.0) / 2.0,
                                       sim.get("duration_s", 5.0)))),
        )
        self.search = SearchConfig(
            tolerance=float(spec.get("search", {}).get("tolerance", 2.5e-4)))
        self._ode = make_ode_predicate(self.initial_class.omega, self.sim)
        self._ml = None
        if spec.get("model"):
            self._ml = make_ml_predicate(load_classifier(spec["model"]),
                                         self.initial_class.omega)

    # -- selection ---------------------------------------------------------

    def _selector(self):
        if self.backend == "ml" and self._ml is not None:
            return self._ml
        return self._ode

    def recommend(self) -> dict | None:
        """Next pair under the strategy, from already-computed state.
        Returns None while a required ranking is still computing."""
        remaining = [p for p in pair_list(self.uclass.n)
                     if p not in self.performed]
        if not remaining:
            return None
        if self.strategy in ("mocu_static", "mocu_iterative"):
            if self.ranking["status"] != "ready":
                return {"pending": True}
            for entry in self.ranking["scores"]:
                pair = tuple(entry["pair"])
                if pair not in self.performed:
                    return {"pair": pair,
                            "remaining_mocu": entry["remaining_mocu"],
                            "p_sync": entry["p_sync"]}
            return None
        if self.strategy == "entropy":
            pair = min(remaining, key=lambda p: (-self.uclass.width(p), p))
        else:  # random
            rng = np.random.default_rng(np.random.SeedSequence(
                self.seed, spawn_key=(len(self.performed), _RND)))
            pair = remaining[int(rng.integers(len(remaining)))]
        return {"pair": pair,
                "remaining_mocu": None,
                "p_sync": outcome_probability(self.uclass, pair)}

    # -- serialization -----------------------------------------------------

    def snapshot(self) -> dict:
        pairs = pair_list(self.uclass.n)
        return {
            "id": self.id,
            "status": self.status,
            "strategy": self.strategy,
            "backend": self.backend,
            "K": self.K,
            "seed": self.seed,
            "created": self.created,
            "updated": self.updated,
            "omega": self.uclass.omega.tolist(),
            "pairs": [list(p) for p in pairs],
            "thresholds": [pairwise_sync_threshold(self.uclass, p)
                           for p in pairs],
            "initial_lower": self.initial_class.lower.tolist(),
            "initial_upper": self.initial_class.upper.tolist(),
            "lower": self.uclass.lower.tolist(),
            "upper": self.uclass.upper.tolist(),
            "performed": sorted(list(p) for p in self.performed),
            "history": self.history,
            "mocu_trajectory": self.trajectory,
            "ranking": self.ranking,
            "version": self.version,
        }


class CampaignManager:
    def __init__(self, data_dir: Path, workers: int = 2):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.executor = ThreadPoolExecutor(max_workers=workers)
        self.campaigns: dict[str, Campaign] = {}
        self.load_all()

    # -- persistence -------------------------------------------------------

    def _append_event(self, campaign: Campaign, event: dict) -> None:
        with open(campaign.log_path, "a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def load_all(self) -> None:
        for path in sorted(self.data_dir.glob("*.jsonl")):
            with open(path) as fh:
                events = [json.loads(line) for line in fh if line.strip()]
            if not events or events[0].get("type") != "created":
                continue
            cid = path.stem
            campaign = Campaign(cid, events[0]["spec"], path)
            self.campaigns[cid] = campaign
            for event in events[1:]:
                if event["type"] == "outcome":
                    self._apply_outcome(campaign, tuple(event["pair"]),
                                        bool(event["synchronized"]),
                                        persist=False)
                elif event["type"] == "rejected_outcome":
                    campaign.status = "inconsistent"
            self._schedule_mocu(campaign)
            self._schedule_ranking(campaign)

    # -- campaign lifecycle -------------------------------------------------

    def create(self, spec: dict) -> Campaign:
        cid = spec.get("id") or uuid.uuid4().hex[:12]
        path = self.data_dir / f"{cid}.jsonl"
        spec = dict(spec, created=time.time())
        campaign = Campaign(cid, spec, path)
        self.campaigns[cid] = campaign
        self._append_event(campaign, {"type": "created", "spec": spec})
        self._schedule_mocu(campaign)
        self._schedule_ranking(campaign)
        return campaign

    def _schedule_ranking(self, campaign: Campaign) -> None:
        if campaign.strategy not in ("mocu_static", "mocu_iterative"):
            campaign.ranking = {"status": "ready", "progress": 1.0,
                                "scores": [], "for_step": len(campaign.performed)}
            return
        if campaign.strategy == "mocu_static" and \
                campaign.ranking["status"] == "ready" and campaign.ranking["scores"]:
            return  # static ranking never recomputes
        step = 0 if campaign.strategy == "mocu_static" else len(campaign.performed)
        base = campaign.initial_class if campaign.strategy == "mocu_static" \
            else campaign.uclass
        campaign.ranking = {"status": "computing", "progress": 0.0,
                            "scores": [], "for_step": step}
        version_at = campaign.version

        def job():
            predicate = campaign._selector()
            seed = _step_seed(campaign.seed, step, _SEL)
            pairs = pair_list(base.n)
            scores = []
            for idx, pair in enumerate(pairs):
                s = expected_remaining_mocu(base, pair, predicate, campaign.K,
                                            seed, campaign.search,
                                            campaign.backend)
                scores.append({"pair": list(pair),
                               "remaining_mocu": s.remaining_mocu,
                               "p_sync": s.p_sync,
                               "mocu_sync": s.mocu_sync,
                               "mocu_nosync": s.mocu_nosync,
                               "informative": s.informative})
                with campaign.lock:
                    if campaign.strategy == "mocu_iterative" and \
                            campaign.version != version_at:
                        return  # superseded by a newer outcome
                    campaign.ranking["progress"] = (idx + 1) / len(pairs)
            scores.sort(key=lambda s: (s["remaining_mocu"], s["pair"]))
            with campaign.lock:
                campaign.ranking = {"status": "ready", "progress": 1.0,
                                    "scores": scores, "for_step": step}
                campaign.version += 1
                campaign.updated = time.time()

        self.executor.submit(job)

    def _schedule_mocu(self, campaign: Campaign) -> None:
        step = len(campaign.performed)
        uclass = campaign.uclass
        entry = campaign.trajectory[step]
        if entry["status"] == "ready":
            return

        def job():
            est = estimate_mocu(uclass, campaign._ode, campaign.K,
                                _step_seed(campaign.seed, step, _GT),
                                campaign.search, "ode")
            with campaign.lock:
                campaign.trajectory[step] = {"step": step, "mocu": est.value,
                                             "stderr": est.stderr,
                                             "status": "ready"}
                campaign.version += 1
                campaign.updated = time.time()

        self.executor.submit(job)

    def _apply_outcome(self, campaign: Campaign, pair: tuple[int, int],
                       synchronized: bool, persist: bool = True) -> dict:
        """Caller holds the campaign lock (or is single-threaded replay)."""
        old_lower = campaign.uclass.lower.copy()
        old_upper = campaign.uclass.upper.copy()
        campaign.uclass = update_class(campaign.uclass,
                                       ExperimentOutcome(pair, synchronized))
        campaign.performed.add(pair)
        k = pair_to_flat(campaign.uclass.n, *pair)
        record = {
            "step": len(campaign.performed),
            "pair": list(pair),
            "synchronized": synchronized,
            "interval_before": [float(old_lower[k]), float(old_upper[k])],
            "interval_after": [float(campaign.uclass.lower[k]),
                               float(campaign.uclass.upper[k])],
        }
        campaign.history.append(record)
        campaign.trajectory.append({"step": len(campaign.performed),
                                    "mocu": None, "stderr": None,
                                    "status": "computing"})
        if len(campaign.performed) == len(pair_list(campaign.uclass.n)):
            campaign.status = "exhausted"
        campaign.version += 1
        campaign.updated = time.time()
        if persist:
            self._append_event(campaign, {"type": "outcome",
                                          "pair": list(pair),
                                          "synchronized": synchronized})
        return record


def _error(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse({"error": message, **extra}, status_code=status)


def create_app(data_dir: str | os.PathLike | None = None,
               workers: int = 2) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get(DATA_DIR_ENV, "./campaign-data"))
    manager = CampaignManager(data_dir, workers)
    app = FastAPI(title="kuramoto-oed campaign service", version="1")
    app.state.manager = manager

    @app.post("/v1/campaigns", status_code=201)
    def create_campaign(body: dict):
        if "preset" in body:
            try:
                uclass = build_paper_class(body["preset"])
            except ValueError as exc:
                return _error(400, str(exc))
            class_dict = {"omega": uclass.omega.tolist(),
                          "lower": uclass.lower.tolist(),
                          "upper": uclass.upper.tolist()}
        elif "class" in body:
            try:
                uclass = class_from_dict(body["class"])
            except (KeyError, TypeError) as exc:
                return _error(400, f"malformed class: {exc}")
            except ValueError as exc:
                return _error(422, f"invalid bounds: {exc}")
            class_dict = body["class"]
        else:
            return _error(400, "body must provide 'preset' or 'class'")
        strategy = body.get("strategy", "mocu_static")
        if strategy not in SERVICE_STRATEGIES:
            return _error(422, f"strategy must be one of {SERVICE_STRATEGIES}")
        backend = body.get("backend", "ode")
        if backend not in ("ode", "ml"):
            return _error(422, "backend must be 'ode' or 'ml'")
        if backend == "ml" and not body.get("model"):
            return _error(422, "ml backend requires 'model' (classifier path)")
        spec = {
            "class": class_dict,
            "strategy": strategy,
            "backend": backend,
            "K": int(body.get("K", 256)),
            "seed": int(body.get("seed", 0)),
            "sim": body.get("sim", {}),
            "search": body.get("search", {}),
            "model": body.get("model"),
            "preset": body.get("preset"),
        }
        campaign = manager.create(spec)
        return {"id": campaign.id, "status": campaign.status,
                "ranking_status": campaign.ranking["status"]}

    @app.get("/v1/campaigns")
    def list_campaigns():
        return {"campaigns": [{"id": c.id, "status": c.status,
                               "strategy": c.strategy,
                               "steps": len(c.performed)}
                              for c in manager.campaigns.values()]}

    @app.get("/v1/campaigns/{cid}/recommendation")
    def recommendation(cid: str):
        campaign = manager.campaigns.get(cid)
        if campaign is None:
            return _error(404, "unknown campaign id")
        with campaign.lock:
            rec = campaign.recommend()
            if rec is None:
                return _error(409, "design space exhausted")
            if rec.get("pending"):
                return JSONResponse(
                    {"status": "computing",
                     "progress": campaign.ranking["progress"]},
                    status_code=202)
            return {"pair": list(rec["pair"]),
                    "remaining_mocu": rec["remaining_mocu"],
                    "p_sync": rec["p_sync"],
                    "status": campaign.status}

    @app.post("/v1/campaigns/{cid}/outcomes")
    def post_outcome(cid: str, body: dict):
        campaign = manager.campaigns.get(cid)
        if campaign is None:
            return _error(404, "unknown campaign id")
        try:
            pair = tuple(int(v) for v in body["pair"])
            synchronized = bool(body["synchronized"])
        except (KeyError, TypeError, ValueError) as exc:
            return _error(400, f"malformed outcome: {exc}")
        with campaign.lock:
            if pair not in pair_list(campaign.uclass.n):
                return _error(400, f"pair {list(pair)} outside the design space")
            if pair in campaign.performed:
                return _error(409, f"pair {list(pair)} already performed")
            try:
                record = manager._apply_outcome(campaign, pair, synchronized)
            except InconsistentObservationError as exc:
                campaign.status = "inconsistent"
                campaign.version += 1
                campaign.updated = time.time()
                manager._append_event(campaign, {
                    "type": "rejected_outcome", "pair": list(pair),
                    "synchronized": synchronized, "reason": str(exc)})
                return _error(422, str(exc), status="inconsistent")
        manager._schedule_mocu(campaign)
        manager._schedule_ranking(campaign)
        deadline = time.time() + 0.08
        while time.time() < deadline:
            entry = campaign.trajectory[record["step"]]
            if entry["status"] == "ready":
                break
            time.sleep(0.005)
        entry = campaign.trajectory[record["step"]]
        return {
            "id": campaign.id,
            "status": campaign.status,
            "step": record["step"],
            "pair": record["pair"],
            "synchronized": record["synchronized"],
            "interval_before": record["interval_before"],
            "interval_after": record["interval_after"],
            "mocu": entry["mocu"],
            "mocu_status": entry["status"],
        }

    @app.get("/v1/campaigns/{cid}/state")
    def get_state(cid: str, request: Request):
        campaign = manager.campaigns.get(cid)
        if campaign is None:
            return _error(404, "unknown campaign id")
        with campaign.lock:
            etag = f'W/"{campaign.version}"'
            if request.headers.get("if-none-match") == etag:
                return Response(status_code=304)
            payload = campaign.snapshot()
        return JSONResponse(payload, headers={"ETag": etag})

    dashboard = os.environ.get(DASHBOARD_DIR_ENV)
    if dashboard is None:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        dashboard = str(bundled) if bundled.is_dir() else None
    if dashboard and Path(dashboard).is_dir():
        app.mount("/", StaticFiles(directory=dashboard, html=True),
                  name="dashboard")
    return app


def main(argv=None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="kuramoto-oed-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--data-dir", default=None)
    parser.add_argument("--workers", type=int, default=2)
    args = parser.parse_args(argv)
    app = create_app(args.data_dir, args.workers)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
