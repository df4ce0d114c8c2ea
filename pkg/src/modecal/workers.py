"""Trial evaluation and the in-process worker pool.

The pool simulates ``n`` workers under a virtual clock: each simulator
iteration costs ``minutes_per_iteration`` virtual minutes and completions are
processed in virtual-time order, so a run is reproducible bit for bit while
the early-stop rule still sees realistic elapsed times.
"""
import heapq
import logging
from dataclasses import dataclass

from .sim import Simulator
from .space import InterceptConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Outcome:
    status: str  # completed | pruned | failed | abandoned
    loss: float | None
    iterations_run: int
    diagnostic: str | None = None


def evaluation(scenario, payload, check_iteration):
    """Generator driving one trial.

    Yields ``(iteration, loss)`` once, after ``min(check_iteration, budget)``
    iterations, and expects the coordinator's decision via ``send``. Returns an
    :class:`Outcome` through ``StopIteration.value``.
    """
    budget = int(payload["budget"])
    try:
        config = InterceptConfig.from_dict(payload["values"], id=payload["config"])
        sim = Simulator(scenario, config, payload["seed"])
        first = min(check_iteration, budget)
        sim.run(first)
    except Exception as exc:  # simulator panic -> failed trial
        return Outcome("failed", None, 0, f"{type(exc).__name__}: {exc}")
    action = yield first, sim.losses[-1]
    if action == "prune":
        return Outcome("pruned", sim.losses[-1], first)
    if action != "continue":
        return Outcome("abandoned", None, first)
    try:
        sim.run(budget - first)
    except Exception as exc:
        return Outcome("failed", None, sim.iteration, f"{type(exc).__name__}: {exc}")
    return Outcome("completed", sim.losses[-1], sim.iteration)


def evaluate(scenario, payload, check_iteration, on_intermediate):
    """Run a trial synchronously; ``on_intermediate(iteration, loss)`` returns the decision."""
    gen = evaluation(scenario, payload, check_iteration)
    try:
        it, loss = next(gen)
        gen.send(on_intermediate(it, loss))
    except StopIteration as stop:
        return stop.value
    raise RuntimeError("evaluation yielded more than once")


class InProcessPool:
    """Deterministic discrete-event pool of ``n_workers`` in-process workers."""

    def __init__(self, coordinator, scenario, n_workers, minutes_per_iteration=12.0):
        self.coord = coordinator
        self.scenario = scenario
        self.dt = float(minutes_per_iteration)
        self.worker_ids = [coordinator.register_worker("in-process") for _ in range(n_workers)]
        self.max_running = 0

    def run(self, stop_after_results=None, stop_after_dispatches=None):
        """Process events until the coordinator is finished.

        ``stop_after_*`` abandon the run mid-flight (crash simulation); work in
        progress is dropped without being reported.
        """
        coord = self.coord
        clock = coord.clock
        check = coord.rule.check_iteration
        events = []
        seq = 0
        active = {}
        dispatched = 0
        start_results = coord.ingested
        while True:
            for wid in self.worker_ids:
                if wid in active:
                    continue
                if stop_after_dispatches is not None and dispatched >= stop_after_dispatches:
                    return False
                trial = coord.request_job(wid)
                if trial is None:
                    continue
                dispatched += 1
                gen = evaluation(self.scenario, trial.payload(), check)
                try:
                    it, loss = next(gen)
                except StopIteration as stop:
                    active[wid] = (trial, None, stop.value, None)
                    heapq.heappush(events, (clock.now(), seq, wid, "final"))
                else:
                    active[wid] = (trial, gen, None, (it, loss))
                    heapq.heappush(events, (trial.t_start + it * self.dt, seq, wid, "intermediate"))
                seq += 1
            self.max_running = max(self.max_running, len(active))
            if not events:
                if not coord.finished:
                    logger.warning("no work in flight but the scheduler is not exhausted")
                return True
            t, _, wid, kind = heapq.heappop(events)
            clock.advance_to(t)
            trial, gen, outcome, pending = active[wid]
            if kind == "intermediate":
                it, loss = pending
                action = coord.report_intermediate(wid, trial.id, it, loss)
                try:
                    gen.send(action)
                except StopIteration as stop:
                    outcome = stop.value
                if outcome.status in ("pruned", "abandoned"):
                    del active[wid]
                    if stop_after_results is not None and coord.ingested - start_results >= stop_after_results:
                        return False
                    continue
                active[wid] = (trial, None, outcome, None)
                finish = trial.t_start + outcome.iterations_run * self.dt
                heapq.heappush(events, (max(finish, t), seq, wid, "final"))
                seq += 1
                continue
            del active[wid]
            coord.report_result(wid, trial.id, outcome.status, outcome.loss, outcome.iterations_run,
                                outcome.diagnostic)
            if stop_after_results is not None and coord.ingested - start_results >= stop_after_results:
                return False
