"""High-level calibration entry points."""
import logging

from .config import RunConfig
from .coordinator import Coordinator, VirtualClock, WallClock
from .journal import Journal, JournalCorruption
from .workers import InProcessPool

logger = logging.getLogger(__name__)


def open_run(config, run_dir, seed, resume=False, clock=None, fsync=True):
    """Create (or resume) the coordinator for a run directory."""
    journal = Journal(run_dir, fsync=fsync)
    if not resume and (journal.results_path.exists() or journal.configs_path.exists()):
        raise JournalCorruption(f"{run_dir} already holds a journal; pass resume=True to continue it")
    scenario, space, scheduler = config.build(seed)
    coord = Coordinator(scheduler, journal, config.rule(), clock or VirtualClock(),
                        heartbeat_timeout=config.heartbeat_interval * config.heartbeat_misses)
    if resume:
        n = coord.replay()
        logger.info("resumed %s: %d results replayed", run_dir, n)
    journal.write_meta({"config": config.to_dict(), "seed": int(seed), "space": space.to_dict(),
                        "scenario": scenario.to_dict()})
    return coord, scenario


def calibrate(config, run_dir, seed=0, workers=1, resume=False, fsync=True):
    """Run a full calibration with ``workers`` in-process workers on a virtual clock."""
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    coord, scenario = open_run(config, run_dir, seed, resume=resume, fsync=fsync)
    pool = InProcessPool(coord, scenario, workers, config.minutes_per_iteration)
    pool.run()
    coord.journal.close()
    return coord


def resume_config(run_dir):
    """Configuration and seed stored alongside an existing journal."""
    meta = Journal(run_dir, fsync=False).read_meta()
    if meta is None:
        raise JournalCorruption(f"{run_dir}: no run.json; cannot resume")
    return RunConfig.from_dict(meta["config"]), int(meta["seed"])


__all__ = ["calibrate", "open_run", "resume_config", "WallClock", "VirtualClock"]
