"""TCP transport between the coordinator and remote workers.

Messages are JSON objects framed by a 4-byte big-endian length. Every request
gets exactly one reply; errors come back as ``{"ok": false, "error": ...}``.
"""
import json
import logging
import socket
import socketserver
import struct
import threading
import time

from .coordinator import ProtocolError
from .sim import Scenario
from .workers import evaluation

logger = logging.getLogger(__name__)

MAX_MESSAGE = 16 * 1024 * 1024


def send_message(sock, obj):
    data = json.dumps(obj).encode()
    sock.sendall(struct.pack(">I", len(data)) + data)


def _recv_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed")
        buf.extend(chunk)
    return bytes(buf)


def recv_message(sock):
    (n,) = struct.unpack(">I", _recv_exact(sock, 4))
    if n > MAX_MESSAGE:
        raise ProtocolError(f"message of {n} bytes exceeds the limit")
    try:
        obj = json.loads(_recv_exact(sock, n))
    except ValueError:
        raise ProtocolError("malformed message") from None
    if not isinstance(obj, dict) or "op" not in obj and "ok" not in obj:
        raise ProtocolError("message must be an object with an op")
    return obj


def parse_address(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        master = self.server.master
        peer = "%s:%s" % self.client_address[:2]
        while True:
            try:
                msg = recv_message(self.request)
            except (ConnectionError, OSError):
                return
            except ProtocolError as exc:
                send_message(self.request, {"ok": False, "error": str(exc)})
                return
            try:
                reply = master.dispatch(msg, peer)
            except ProtocolError as exc:
                reply = {"ok": False, "error": str(exc)}
            try:
                send_message(self.request, reply)
            except OSError:
                return


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class Master:
    """Serves a :class:`Coordinator` over TCP until the run is finished."""

    def __init__(self, coordinator, scenario, host="127.0.0.1", port=0, heartbeat_interval=5.0,
                 retry_after=1.0):
        self.coord = coordinator
        self.scenario = scenario
        self.heartbeat_interval = heartbeat_interval
        self.retry_after = retry_after
        self.server = _Server((host, port), _Handler)
        self.server.master = self
        self.done = threading.Event()

    @property
    def address(self):
        host, port = self.server.server_address[:2]
        return f"{host}:{port}"

    def dispatch(self, msg, peer):
        coord = self.coord
        op = msg.get("op")
        if op == "register":
            wid = coord.register_worker(peer, msg.get("worker_id"))
            return {"ok": True, "worker_id": wid, "scenario": self.scenario.to_dict(),
                    "check_iteration": coord.rule.check_iteration,
                    "heartbeat_interval": self.heartbeat_interval}
        wid = msg.get("worker_id")
        if op == "heartbeat":
            coord.heartbeat(wid)
            return {"ok": True}
        if op == "request_job":
            coord.heartbeat(wid)
            if coord.finished:
                self.done.set()
                return {"ok": True, "shutdown": True}
            trial = coord.request_job(wid)
            if trial is None:
                return {"ok": True, "job": None, "retry_after": self.retry_after}
            return {"ok": True, "job": trial.payload()}
        if op == "intermediate":
            action = coord.report_intermediate(wid, msg["trial"], msg["iteration"], msg["loss"])
            return {"ok": True, "action": action}
        if op == "result":
            accepted = coord.report_result(wid, msg["trial"], msg["status"], msg.get("loss"),
                                           msg.get("iterations_run", 0), msg.get("diagnostic"))
            if coord.finished:
                self.done.set()
            return {"ok": True, "accepted": accepted}
        if op == "deregister":
            coord.deregister(wid)
            return {"ok": True}
        raise ProtocolError(f"unknown op {op!r}")

    def _monitor(self):
        while not self.done.wait(self.heartbeat_interval):
            self.coord.check_heartbeats()
            if self.coord.finished:
                self.done.set()

    def serve(self, linger=None):
        """Block until the coordinator is finished, then shut the server down."""
        t = threading.Thread(target=self.server.serve_forever, daemon=True)
        t.start()
        mon = threading.Thread(target=self._monitor, daemon=True)
        mon.start()
        try:
            self.done.wait()
            # give idle workers one poll to learn about the shutdown
            time.sleep(self.retry_after if linger is None else linger)
        finally:
            self.server.shutdown()
            self.server.server_close()


class RemoteWorker:
    """Worker process: registers, pulls jobs, reports results, heartbeats in the background."""

    def __init__(self, master_address, connect_timeout=30.0):
        self.address = parse_address(master_address)
        self.connect_timeout = connect_timeout
        self.sock = None
        self.worker_id = None
        self._lock = threading.Lock()
        self._stop = threading.Event()

    def _connect(self):
        deadline = time.monotonic() + self.connect_timeout
        while True:
            try:
                return socket.create_connection(self.address, timeout=60)
            except OSError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.5)

    def call(self, msg):
        with self._lock:
            send_message(self.sock, msg)
            reply = recv_message(self.sock)
        if not reply.get("ok"):
            raise ProtocolError(reply.get("error", "request refused"))
        return reply

    def _heartbeats(self, interval):
        while not self._stop.wait(interval):
            try:
                self.call({"op": "heartbeat", "worker_id": self.worker_id})
            except (OSError, ConnectionError, ProtocolError) as exc:
                logger.warning("heartbeat failed: %s", exc)
                return

    def run(self, max_trials=None):
        """Work until the master says shutdown; returns the number of trials run."""
        self.sock = self._connect()
        hello = self.call({"op": "register"})
        self.worker_id = hello["worker_id"]
        scenario = Scenario.from_dict(hello["scenario"])
        check = hello["check_iteration"]
        hb = threading.Thread(target=self._heartbeats, args=(hello["heartbeat_interval"],), daemon=True)
        hb.start()
        done = 0
        try:
            while max_trials is None or done < max_trials:
                try:
                    reply = self.call({"op": "request_job", "worker_id": self.worker_id})
                except (ConnectionError, OSError):
                    break  # master has gone away after finishing
                if reply.get("shutdown"):
                    break
                job = reply.get("job")
                if job is None:
                    time.sleep(reply.get("retry_after", 1.0))
                    continue
                self._run_trial(scenario, job, check)
                done += 1
        finally:
            self._stop.set()
            self.sock.close()
        return done

    def _run_trial(self, scenario, job, check):
        base = {"worker_id": self.worker_id, "trial": job["trial"]}
        gen = evaluation(scenario, job, check)
        try:
            it, loss = next(gen)
            reply = self.call({**base, "op": "intermediate", "iteration": it, "loss": loss})
            gen.send(reply["action"])
        except StopIteration as stop:
            outcome = stop.value
        else:
            raise ProtocolError("evaluation yielded more than once")
        if outcome.status in ("pruned", "abandoned"):
            return
        self.call({**base, "op": "result", "status": outcome.status, "loss": outcome.loss,
                   "iterations_run": outcome.iterations_run, "diagnostic": outcome.diagnostic})
