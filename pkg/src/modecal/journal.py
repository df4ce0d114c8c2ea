"""Append-only run journal: ``configs.jsonl`` and ``results.jsonl``.

Each line is one JSON record, flushed (and fsynced) before the write returns.
"""
import json
import logging
import os
from pathlib import Path

logger = logging.getLogger(__name__)

CONFIGS = "configs.jsonl"
RESULTS = "results.jsonl"
RUN_META = "run.json"

RESULT_FIELDS = ("trial", "config", "budget", "status", "loss", "iterations_run",
                 "t_submit", "t_start", "t_finish", "worker")
CONFIG_FIELDS = ("config", "values")


class JournalCorruption(Exception):
    pass


def _read_jsonl(path, required):
    records = []
    if not path.exists():
        return records
    data = path.read_bytes()
    lines = data.split(b"\n")
    torn = not data.endswith(b"\n") and data != b""
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        last = lineno == len(lines)
        try:
            rec = json.loads(raw)
        except ValueError:
            if last and torn:
                logger.warning("%s:%d: dropping torn final record", path.name, lineno)
                with open(path, "r+b") as fh:
                    fh.truncate(len(data) - len(raw))
                break
            raise JournalCorruption(f"{path.name}:{lineno}: not valid JSON") from None
        if not isinstance(rec, dict):
            raise JournalCorruption(f"{path.name}:{lineno}: record is not an object")
        missing = [k for k in required if k not in rec]
        if missing:
            raise JournalCorruption(f"{path.name}:{lineno}: missing fields {missing}")
        rec["_line"] = lineno
        records.append(rec)
        if last and torn:
            with open(path, "ab") as fh:
                fh.write(b"\n")
    return records


class Journal:
    """Two append-only logs inside ``directory``."""

    def __init__(self, directory, fsync=True):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._fh = {}

    @property
    def configs_path(self):
        return self.dir / CONFIGS

    @property
    def results_path(self):
        return self.dir / RESULTS

    def load(self):
        """Read and cross-check both logs; returns ``(configs_by_id, results)``.

        Raises :class:`JournalCorruption` naming the first bad record.
        """
        configs = {}
        for rec in _read_jsonl(self.configs_path, CONFIG_FIELDS):
            cid = rec["config"]
            if cid in configs and configs[cid]["values"] != rec["values"]:
                raise JournalCorruption(f"{CONFIGS}:{rec['_line']}: config {cid} redefined with different values")
            configs.setdefault(cid, rec)
        results = _read_jsonl(self.results_path, RESULT_FIELDS)
        seen = set()
        for rec in results:
            where = f"{RESULTS}:{rec['_line']}"
            if rec["config"] not in configs:
                raise JournalCorruption(f"{where}: references unknown config {rec['config']!r}")
            if rec["trial"] in seen:
                raise JournalCorruption(f"{where}: duplicate result for trial {rec['trial']}")
            seen.add(rec["trial"])
            if rec["status"] not in ("completed", "pruned", "failed"):
                raise JournalCorruption(f"{where}: bad status {rec['status']!r}")
            if rec["status"] in ("completed", "pruned") and (rec["loss"] is None or rec["loss"] < 0):
                raise JournalCorruption(f"{where}: {rec['status']} trial without a valid loss")
        for rec in list(configs.values()) + results:
            rec.pop("_line", None)
        return configs, results

    def _append(self, name, record):
        fh = self._fh.get(name)
        if fh is None:
            fh = self._fh[name] = open(self.dir / name, "a", encoding="utf-8")
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()
        if self.fsync:
            os.fsync(fh.fileno())

    def append_config(self, record):
        self._append(CONFIGS, record)

    def append_result(self, record):
        self._append(RESULTS, record)

    def write_meta(self, meta):
        path = self.dir / RUN_META
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(meta, indent=2, sort_keys=True))
        os.replace(tmp, path)

    def read_meta(self):
        path = self.dir / RUN_META
        return json.loads(path.read_text()) if path.exists() else None

    def close(self):
        for fh in self._fh.values():
            fh.close()
        self._fh.clear()
