import filecmp
import json

import numpy as np
import pytest

from modecal.config import ConfigError, RunConfig
from modecal.coordinator import Coordinator, ProtocolError, VirtualClock
from modecal.hyperband import BohbScheduler, EarlyStopRule, build_ladder
from modecal.journal import Journal, JournalCorruption
from modecal.report import best_so_far, report, summarize
from modecal.runner import calibrate, open_run
from modecal.space import centered_space
from modecal.workers import InProcessPool, evaluate

SMALL = {"space": {"center": "truth", "pct": 20, "floor": 0}, "b_min": 3, "b_max": 9, "eta": 3,
         "n_iterations": 4, "n_initial": 9}


def coordinator(tmp_path, scenario, rule=None, seed=0, **kw):
    space = centered_space(scenario.ground_truth, 0.2)
    sched = BohbScheduler(space, build_ladder(3, 9, 3), seed, None, 1.0, **kw)
    return Coordinator(sched, Journal(tmp_path, fsync=False), rule or EarlyStopRule(), VirtualClock())


# -- worker-side evaluation -------------------------------------------------

def payload(scenario, budget, trial=1):
    return {"trial": trial, "config": "0-0", "values": scenario.ground_truth.as_dict(), "budget": budget,
            "seed": 5}


def test_budget_3_reports_once(scenario):
    calls = []
    out = evaluate(scenario, payload(scenario, 3), 3, lambda it, l: calls.append(it) or "continue")
    assert calls == [3]
    assert out.status == "completed" and out.iterations_run == 3


def test_full_budget_reports_at_3_and_21(scenario):
    calls = []
    out = evaluate(scenario, payload(scenario, 21), 3, lambda it, l: calls.append(it) or "continue")
    assert calls == [3] and out.iterations_run == 21


def test_prune_stops_early(scenario):
    out = evaluate(scenario, payload(scenario, 21), 3, lambda it, l: "prune")
    assert out.status == "pruned" and out.iterations_run == 3


def test_simulator_error_is_failed(scenario):
    bad = payload(scenario, 21)
    bad["values"] = {"car": 1.0}
    out = evaluate(scenario, bad, 3, lambda it, l: "continue")
    assert out.status == "failed" and "KeyError" in out.diagnostic


# -- coordinator --------------------------------------------------------------

def test_capacity_respected(tmp_path, scenario):
    coord = coordinator(tmp_path, scenario, n_iterations=3)
    pool = InProcessPool(coord, scenario, 4)
    pool.run()
    assert pool.max_running == 4
    assert coord.finished
    running = {}
    for t in coord.trials.values():
        running[t.worker] = running.get(t.worker, 0) + 1
    assert len(running) <= 4


def test_eight_workers(tmp_path, scenario):
    coord = coordinator(tmp_path, scenario, n_iterations=2)
    pool = InProcessPool(coord, scenario, 8)
    pool.run()
    assert pool.max_running <= 8


def test_lost_worker_trial_returns_to_pending(tmp_path, scenario):
    now = [0.0]
    coord = coordinator(tmp_path, scenario)
    coord.heartbeat_clock = lambda: now[0]
    w1 = coord.register_worker("a")
    w2 = coord.register_worker("b")
    t = coord.request_job(w1)
    now[0] = 100.0
    coord.heartbeat(w2)
    assert coord.check_heartbeats() == [w1]
    assert t.status == "pending"
    again = coord.request_job(w2)
    assert again.id == t.id
    # late result from the lost worker is discarded
    assert coord.report_result(w1, t.id, "completed", 1.0, 9) is False
    assert coord.discarded == 1
    with pytest.raises(ProtocolError):
        coord.request_job(w1)


def test_deregister_idle(tmp_path, scenario):
    coord = coordinator(tmp_path, scenario)
    w = coord.register_worker("a")
    coord.deregister(w)
    assert w not in coord.workers and not coord.trials


def test_prune_journaled_with_censored_loss(tmp_path, scenario):
    coord = coordinator(tmp_path, scenario, rule=EarlyStopRule(t_start=0, t_end=1, threshold_start=0.5,
                                                               threshold_end=0.5))
    w = coord.register_worker()
    t = coord.request_job(w)
    assert t.budget == 9
    coord.clock.advance_to(10)
    assert coord.report_intermediate(w, t.id, 3, 42.0) == "prune"
    _, results = coord.journal.load()
    assert results[0]["status"] == "pruned" and results[0]["loss"] == 42.0 and results[0]["iterations_run"] == 3


def test_duplicate_result_ignored(tmp_path, scenario):
    coord = coordinator(tmp_path, scenario)
    w = coord.register_worker()
    t = coord.request_job(w)
    assert coord.report_result(w, t.id, "completed", 3.0, 9)
    assert not coord.report_result(w, t.id, "completed", 3.0, 9)
    assert len(coord.journal.load()[1]) == 1


def test_simultaneous_finish_order_independent(tmp_path, scenario):
    finals = []
    for order in ((0, 1), (1, 0)):
        d = tmp_path / str(order)
        coord = coordinator(d, scenario)
        ws = [coord.register_worker() for _ in range(2)]
        ts = [coord.request_job(w) for w in ws]
        before = coord.scheduler._version
        for i in order:
            coord.report_result(ws[i], ts[i].id, "completed", float(ts[i].id), 9)
        assert coord.scheduler._version == before + 2
        finals.append(sorted((o.config_id, o.loss) for o in coord.scheduler.dataset))
    assert finals[0] == finals[1]


def test_result_for_missing_config_is_startup_error(tmp_path, scenario):
    j = Journal(tmp_path, fsync=False)
    j.append_result({"trial": 1, "config": "0-0", "budget": 9, "status": "completed", "loss": 1.0,
                     "iterations_run": 9, "t_submit": 0, "t_start": 0, "t_finish": 1, "worker": "w0",
                     "bracket": 0, "stage": 0, "slot": 0})
    j.close()
    coord = coordinator(tmp_path, scenario)
    with pytest.raises(JournalCorruption):
        coord.replay()


# -- runs, resume, report -----------------------------------------------------

def test_fresh_run_starts_at_trial_one(tmp_path):
    coord = calibrate(RunConfig.from_dict(SMALL), tmp_path, seed=1, workers=2, fsync=False)
    _, results = coord.journal.load()
    assert min(r["trial"] for r in results) == 1
    assert all(r["status"] in ("completed", "pruned") for r in results)


def test_refuses_to_overwrite(tmp_path):
    calibrate(RunConfig.from_dict(SMALL), tmp_path, seed=1, workers=2, fsync=False)
    with pytest.raises(JournalCorruption):
        calibrate(RunConfig.from_dict(SMALL), tmp_path, seed=1, workers=2, fsync=False)


def _interrupted(cfg, run_dir, seed, **stop):
    coord, scenario = open_run(cfg, run_dir, seed, fsync=False)
    InProcessPool(coord, scenario, 1, cfg.minutes_per_iteration).run(**stop)
    coord.journal.close()


@pytest.mark.parametrize("stop", [{"stop_after_results": 9}, {"stop_after_results": 14},
                                  {"stop_after_dispatches": 12}])
def test_resume_reproduces_uninterrupted_journal(tmp_path, stop):
    cfg = RunConfig.from_dict({**SMALL, "backend": "bohb", "min_points": 4})
    calibrate(cfg, tmp_path / "full", seed=3, workers=1, fsync=False)
    _interrupted(cfg, tmp_path / "cut", 3, **stop)
    calibrate(cfg, tmp_path / "cut", seed=3, workers=1, resume=True, fsync=False)
    for name in ("configs.jsonl", "results.jsonl"):
        assert filecmp.cmp(tmp_path / "full" / name, tmp_path / "cut" / name, shallow=False)


def test_resume_after_nine_sees_all_nine(tmp_path):
    cfg = RunConfig.from_dict({**SMALL, "backend": "bohb", "min_points": 4})
    _interrupted(cfg, tmp_path, 2, stop_after_results=9)
    coord, _ = open_run(cfg, tmp_path, 2, resume=True, fsync=False)
    assert len(coord.scheduler.dataset) == 9
    w = coord.register_worker()
    assert coord.request_job(w).id == 10


def test_report_numbers(tmp_path):
    j = Journal(tmp_path, fsync=False)
    j.append_config({"config": "0-0", "values": {"car": 0.0}})
    for i, loss in enumerate((183.0, 90.0, 60.0), start=1):
        j.append_result({"trial": i, "config": "0-0", "budget": 21, "status": "completed", "loss": loss,
                         "iterations_run": 21, "t_submit": 0, "t_start": 0, "t_finish": float(i), "worker": "w"})
    j.close()
    s = report(tmp_path)
    assert s["high_l1"] == 183.0 and s["low_l1"] == 60.0
    curve = (tmp_path / "best_curve.csv").read_text().splitlines()
    assert [float(r.split(",")[3]) for r in curve[1:]] == [183.0, 90.0, 60.0]
    assert json.loads((tmp_path / "summary.json").read_text())["full_budget_trials"] == 3


def test_report_empty(tmp_path):
    s = report(tmp_path)
    assert s["high_l1"] == 0 and s["low_l1"] == 0 and s["trials"] == 0
    assert (tmp_path / "best_curve.csv").read_text().splitlines() == ["t_minutes,trial,loss,best_loss"]


def test_best_so_far_monotone():
    rows = [{"t_finish": i, "trial": i, "loss": l} for i, l in enumerate(np.random.default_rng(0).random(50))]
    best = [b for *_, b in best_so_far(rows)]
    assert all(a >= b for a, b in zip(best, best[1:]))


def test_summary_ignores_lower_budgets():
    rows = [{"trial": 1, "config": "a", "budget": 7, "status": "completed", "loss": 1.0, "t_finish": 1.0},
            {"trial": 2, "config": "b", "budget": 21, "status": "completed", "loss": 5.0, "t_finish": 2.0}]
    assert summarize(rows, 21)["low_l1"] == 5.0


# -- configuration -------------------------------------------------------------

def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"backend": "sgd"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"ladder": {"b_min": 9, "b_max": 3}})
    bad = tmp_path / "c.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)


def test_config_ladder_section_and_backends():
    cfg = RunConfig.from_dict({"ladder": {"b_min": 1, "b_max": 9, "eta": 3}, "backend": "random"})
    assert (cfg.b_min, cfg.b_max) == (1, 9)
    _, _, sched = cfg.build(0)
    assert sched.rho == 1.0 and sched.proposer is None
    _, _, sched = RunConfig.from_dict({"backend": "gp-qei"}).build(0)
    assert sched.proposer is not None
