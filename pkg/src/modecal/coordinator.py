"""Single-authority coordinator: worker registry, dispatch, early stopping, journaling.

All public methods take one lock, so in-process pools and the TCP server
threads can share a coordinator safely. Every state change is written to the
journal before the call returns.
"""
import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .hyperband import Job, should_stop
from .journal import JournalCorruption
from .space import MODES, InterceptConfig

logger = logging.getLogger(__name__)


class ProtocolError(Exception):
    pass


class VirtualClock:
    """Minutes since run start, advanced explicitly by the in-process pool."""

    def __init__(self, start=0.0):
        self.t = float(start)

    def now(self):
        return self.t

    def advance_to(self, t):
        if t < self.t:
            raise ValueError("virtual time cannot go backwards")
        self.t = float(t)


class WallClock:
    """Minutes since construction plus ``offset`` (the resumed run's elapsed time)."""

    def __init__(self, offset=0.0):
        self.offset = float(offset)
        self._t0 = time.monotonic()

    def now(self):
        return self.offset + (time.monotonic() - self._t0) / 60.0


@dataclass
class WorkerRecord:
    id: str
    address: str
    state: str = "idle"  # idle | busy | lost
    last_heartbeat: float = 0.0
    trial: int | None = None


@dataclass
class Trial:
    id: int
    job: Job
    seed: int
    status: str = "pending"  # pending | running | completed | pruned | failed
    loss: float | None = None
    iterations_run: int = 0
    t_submit: float = 0.0
    t_start: float | None = None
    t_finish: float | None = None
    worker: str | None = None
    intermediate: list = field(default_factory=list)
    diagnostic: str | None = None

    @property
    def config(self):
        return self.job.config

    @property
    def budget(self):
        return self.job.budget

    def payload(self):
        return {
            "trial": self.id,
            "config": self.config.id,
            "values": self.config.as_dict(),
            "budget": self.budget,
            "seed": self.seed,
        }

    def record(self):
        b, s, k = self.job.key
        return {
            "trial": self.id, "config": self.config.id, "budget": self.budget,
            "status": self.status, "loss": self.loss, "iterations_run": self.iterations_run,
            "t_submit": self.t_submit, "t_start": self.t_start, "t_finish": self.t_finish,
            "worker": self.worker, "bracket": b, "stage": s, "slot": k,
            "intermediate": self.intermediate[0] if self.intermediate else None,
            "seed": self.seed, "diagnostic": self.diagnostic,
        }


def trial_seed(run_seed, config_id):
    """Simulation seed for a config; shared by all of its budgets so trajectories nest."""
    bracket, slot = (int(x) for x in config_id.split("-"))
    return int(np.random.SeedSequence([int(run_seed), bracket, slot]).generate_state(1)[0])


class Coordinator:
    def __init__(self, scheduler, journal, rule, clock=None, heartbeat_timeout=15.0,
                 heartbeat_clock=time.monotonic):
        self.scheduler = scheduler
        self.journal = journal
        self.rule = rule
        self.clock = clock or VirtualClock()
        self.heartbeat_timeout = heartbeat_timeout
        self.heartbeat_clock = heartbeat_clock
        self.workers = {}
        self.trials = {}
        self.retry = []
        self.next_trial_id = 1
        self.logged_configs = set()
        self.ingested = 0
        self.discarded = 0
        self._lock = threading.RLock()
        self._n_workers_seen = 0

    # -- resume -----------------------------------------------------------
    def replay(self):
        """Rebuild scheduler state from the journal; returns the number of results replayed."""
        with self._lock:
            configs, results = self.journal.load()
            sch = self.scheduler
            for cid, rec in configs.items():
                try:
                    values = np.array([float(rec["values"][m]) for m in MODES])
                except (KeyError, TypeError, ValueError):
                    raise JournalCorruption(f"config {cid}: values must name every mode") from None
                sch.known_configs[cid] = (values, rec.get("origin", "random"))
                self.logged_configs.add(cid)
            last_t = 0.0
            for rec in results:
                key = (rec.get("bracket"), rec.get("stage"), rec.get("slot"))
                if None in key:
                    raise JournalCorruption(f"result for trial {rec['trial']} lacks its job key")
                values = sch.known_configs[rec["config"]][0]
                try:
                    sch.ingest(key, rec["config"], values, rec["budget"], rec["loss"], rec["status"])
                except ValueError as exc:
                    raise JournalCorruption(f"result for trial {rec['trial']}: {exc}") from None
                self.next_trial_id = max(self.next_trial_id, int(rec["trial"]) + 1)
                last_t = max(last_t, float(rec["t_finish"] or 0.0))
            self.ingested = len(results)
            if isinstance(self.clock, VirtualClock):
                self.clock.advance_to(max(self.clock.now(), last_t))
            elif isinstance(self.clock, WallClock):
                self.clock.offset = max(self.clock.offset, last_t)
            return len(results)

    # -- registry ---------------------------------------------------------
    def register_worker(self, address="in-process", worker_id=None):
        with self._lock:
            if worker_id is None:
                worker_id = f"w{self._n_workers_seen}"
                while worker_id in self.workers and self.workers[worker_id].state != "lost":
                    self._n_workers_seen += 1
                    worker_id = f"w{self._n_workers_seen}"
            existing = self.workers.get(worker_id)
            if existing is not None and existing.state != "lost":
                raise ProtocolError(f"worker {worker_id} is already registered")
            self._n_workers_seen += 1
            self.workers[worker_id] = WorkerRecord(worker_id, address, "idle", self.heartbeat_clock())
            logger.info("worker %s registered from %s", worker_id, address)
            return worker_id

    def _worker(self, worker_id):
        w = self.workers.get(worker_id)
        if w is None:
            raise ProtocolError(f"unknown worker {worker_id}")
        return w

    def heartbeat(self, worker_id):
        with self._lock:
            w = self._worker(worker_id)
            if w.state == "lost":
                raise ProtocolError(f"worker {worker_id} was declared lost; register again")
            w.last_heartbeat = self.heartbeat_clock()

    def deregister(self, worker_id):
        with self._lock:
            w = self._worker(worker_id)
            if w.trial is not None:
                self._requeue(w.trial)
            del self.workers[worker_id]

    def check_heartbeats(self):
        """Mark silent workers lost and return their running trials to pending."""
        with self._lock:
            now = self.heartbeat_clock()
            lost = []
            for w in self.workers.values():
                if w.state != "lost" and now - w.last_heartbeat > self.heartbeat_timeout:
                    w.state = "lost"
                    lost.append(w.id)
                    logger.warning("worker %s lost (silent %.1fs)", w.id, now - w.last_heartbeat)
                    if w.trial is not None:
                        self._requeue(w.trial)
                        w.trial = None
            return lost

    def _requeue(self, trial_id):
        t = self.trials[trial_id]
        if t.status == "running":
            t.status = "pending"
            t.worker = None
            t.t_start = None
            t.intermediate = []
            self.retry.append(trial_id)

    # -- dispatch ---------------------------------------------------------
    @property
    def running(self):
        return [t for t in self.trials.values() if t.status in ("running", "pending")]

    @property
    def finished(self):
        with self._lock:
            return self.scheduler.exhausted and not self.running

    def request_job(self, worker_id):
        """Assign work to an idle worker; ``None`` when nothing is ready."""
        with self._lock:
            w = self._worker(worker_id)
            if w.state == "lost":
                raise ProtocolError(f"worker {worker_id} was declared lost; register again")
            if w.trial is not None:
                return self.trials[w.trial]
            now = self.clock.now()
            trial = None
            while self.retry:
                tid = self.retry.pop(0)
                if self.trials[tid].status == "pending":
                    trial = self.trials[tid]
                    break
            if trial is None:
                job = self.scheduler.next_job()
                if job is None:
                    return None
                trial = Trial(self.next_trial_id, job, trial_seed(self.scheduler.seed, job.config.id),
                              t_submit=now)
                self.next_trial_id += 1
                self.trials[trial.id] = trial
                if job.config.id not in self.logged_configs:
                    self.journal.append_config({
                        "config": job.config.id, "values": job.config.as_dict(), "origin": job.origin,
                        "bracket": job.bracket, "slot": job.slot, "t": now,
                    })
                    self.logged_configs.add(job.config.id)
            trial.status = "running"
            trial.worker = worker_id
            trial.t_start = now
            w.state = "busy"
            w.trial = trial.id
            return trial

    def _owned(self, worker_id, trial_id):
        t = self.trials.get(trial_id)
        w = self.workers.get(worker_id)
        return t is not None and w is not None and w.trial == trial_id and t.worker == worker_id \
            and t.status == "running"

    def report_intermediate(self, worker_id, trial_id, iteration, loss):
        """Early-stop check; returns ``"continue"``, ``"prune"`` or ``"abandon"`` (not the owner)."""
        with self._lock:
            if not self._owned(worker_id, trial_id):
                logger.warning("discarding intermediate from %s for trial %s it does not own", worker_id, trial_id)
                self.discarded += 1
                return "abandon"
            t = self.trials[trial_id]
            t.intermediate.append([int(iteration), float(loss)])
            if iteration != self.rule.check_iteration or t.budget <= iteration:
                return "continue"
            decision = should_stop(float(loss), self.rule, self.clock.now())
            if decision == "prune":
                self._finish(t, "pruned", float(loss), int(iteration))
            return decision

    def report_result(self, worker_id, trial_id, status, loss, iterations_run, diagnostic=None):
        """Ingest a final outcome; returns False for duplicates or foreign results."""
        with self._lock:
            t = self.trials.get(trial_id)
            if t is not None and t.status in ("completed", "pruned", "failed"):
                return False
            if not self._owned(worker_id, trial_id):
                logger.warning("discarding result from %s for trial %s it does not own", worker_id, trial_id)
                self.discarded += 1
                return False
            if status not in ("completed", "failed"):
                raise ProtocolError(f"bad status {status!r}")
            if status == "completed" and (loss is None or not loss >= 0):
                raise ProtocolError("completed trial needs a non-negative loss")
            t.diagnostic = diagnostic
            self._finish(t, status, None if loss is None else float(loss), int(iterations_run))
            return True

    def _finish(self, t, status, loss, iterations_run):
        t.status = status
        t.loss = loss
        t.iterations_run = iterations_run
        t.t_finish = self.clock.now()
        self.journal.append_result(t.record())
        self.scheduler.ingest(t.job.key, t.config.id, t.config.values, t.budget, loss, status)
        self.ingested += 1
        w = self.workers.get(t.worker)
        if w is not None and w.trial == t.id:
            w.trial = None
            if w.state == "busy":
                w.state = "idle"

    def config_from_payload(self, payload):
        return InterceptConfig.from_dict(payload["values"], id=payload["config"])
