"""The chip as a black box: weights and input spikes in, output firing rates out.

Trainers only ever see a :class:`ChipHandle`. The simulated backend runs the
network in-process. The external backend speaks newline-delimited JSON to a
separate process, either over TCP (``host:port``) or over the stdio of a
child process (``cmd:<command line>``)::

    request  {"id": 7, "weights": [...], "spikes": [[0, 1, ...], ...], "T": 10}
    reply    {"id": 7, "rates": [0.3, 0.0]}
    error    {"id": 7, "error": "..."}      ("id": null when the line is not JSON)
"""

import json
import logging
import shlex
import socket
import socketserver
import subprocess
import sys

import numpy as np

from . import network
from .errors import ConfigError, DimensionError, TransportError
from .neuron import LifConfig
from .weights import Topology, WeightSet

log = logging.getLogger(__name__)


class SimulatedBackend:
    def __init__(self, cfg=LifConfig(), topology=Topology()):
        self.cfg = cfg
        self.topology = topology

    def rates(self, w, spikes, on_sample=None):
        out = network.batch_rates(w, spikes, self.cfg)
        if on_sample is not None:
            on_sample(len(out))
        return out

    def close(self):
        pass

    def describe(self):
        return "simulated"


class _LineChannel:
    """Line-oriented duplex over a socket or a child process's stdio."""

    def __init__(self, endpoint, timeout):
        self.endpoint = endpoint
        self.proc = None
        self.sock = None
        if endpoint.startswith("cmd:"):
            self.proc = subprocess.Popen(
                shlex.split(endpoint[4:]),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
            self._w, self._r = self.proc.stdin, self.proc.stdout
        else:
            host, _, port = endpoint.rpartition(":")
            try:
                self.sock = socket.create_connection((host, int(port)), timeout=timeout)
            except OSError as exc:
                raise TransportError(f"cannot connect to chip at {endpoint}: {exc}") from exc
            self._r = self.sock.makefile("r", encoding="utf-8", newline="\n")
            self._w = self.sock.makefile("w", encoding="utf-8", newline="\n")

    def roundtrip(self, line):
        self._w.write(line + "\n")
        self._w.flush()
        reply = self._r.readline()
        if not reply:
            raise EOFError("chip closed the connection")
        return reply

    def close(self):
        for f in (self._w, self._r):
            try:
                f.close()
            except OSError:
                pass
        if self.sock is not None:
            self.sock.close()
        if self.proc is not None:
            self.proc.wait(timeout=5)


class ExternalBackend:
    def __init__(self, endpoint, topology=Topology(), timeout=30.0):
        if not endpoint.startswith("cmd:"):
            host, _, port = endpoint.rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError(f"external chip endpoint must be host:port or cmd:<command>, got {endpoint!r}")
        self.endpoint = endpoint
        self.topology = topology
        self.timeout = timeout
        self._chan = None
        self._next_id = 0

    def _channel(self):
        if self._chan is None:
            self._chan = _LineChannel(self.endpoint, self.timeout)
        return self._chan

    def rates(self, w, spikes, on_sample=None):
        spikes = spikes.spikes if hasattr(spikes, "spikes") else np.asarray(spikes)
        if spikes.ndim != 3 or spikes.shape[1] != w.topology.n_in:
            raise DimensionError(f"spike batch shape {spikes.shape} does not match {w.topology}")
        weights = w.flat.tolist()
        out = np.empty((len(spikes), w.topology.n_out))
        for i, sample in enumerate(spikes):
            req_id = self._next_id
            self._next_id += 1
            line = json.dumps({
                "id": req_id,
                "weights": weights,
                "spikes": sample.astype(np.int64).tolist(),
                "T": int(sample.shape[1]),
            })
            try:
                reply = json.loads(self._channel().roundtrip(line))
            except (OSError, EOFError, ValueError) as exc:
                self.close()
                raise TransportError(f"chip at {self.endpoint}: {exc}", i) from exc
            if isinstance(reply, dict) and "error" in reply:
                raise TransportError(f"chip rejected request {req_id}: {reply['error']}", i)
            if not isinstance(reply, dict) or reply.get("id") != req_id or "rates" not in reply:
                raise TransportError(f"malformed reply from chip: {reply!r}", i)
            rates = reply["rates"]
            if not isinstance(rates, list) or len(rates) != w.topology.n_out:
                raise TransportError(f"malformed rates in reply: {rates!r}", i)
            out[i] = rates
            if on_sample is not None:
                on_sample(1)
        return out

    def close(self):
        if self._chan is not None:
            self._chan.close()
            self._chan = None

    def describe(self):
        return f"external:{self.endpoint}"


class ChipHandle:
    """Forward-only evaluation device with a monotone count of evaluated samples."""

    def __init__(self, backend):
        self.backend = backend
        self.eval_counter = 0

    def _count(self, n):
        self.eval_counter += n

    def eval(self, w, batch):
        return self.backend.rates(w, batch, on_sample=self._count)

    def close(self):
        self.backend.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self):
        return f"ChipHandle({self.backend.describe()}, evals={self.eval_counter})"


def chip_eval(h, w, batch):
    return h.eval(w, batch)


def open_chip(spec, cfg=LifConfig(), topology=Topology()):
    """Build a handle from ``simulated`` or ``external:<endpoint>``."""
    if spec == "simulated":
        return ChipHandle(SimulatedBackend(cfg, topology))
    if spec.startswith("external:"):
        return ChipHandle(ExternalBackend(spec[len("external:"):], topology))
    raise ConfigError(f"unknown chip spec {spec!r}")


# -- reference server -------------------------------------------------------

def handle_request(line, cfg, topology):
    """Answer one protocol line. Never raises; errors become error replies."""
    try:
        req = json.loads(line)
    except ValueError:
        return {"id": None, "error": "parse"}
    if not isinstance(req, dict):
        return {"id": None, "error": "parse"}
    req_id = req.get("id")
    try:
        w = WeightSet(np.asarray(req["weights"], dtype=np.float64), topology)
        spikes = np.asarray(req["spikes"], dtype=np.float64)
        T = int(req.get("T", spikes.shape[-1]))
        if spikes.shape != (topology.n_in, T) or not np.all((spikes == 0) | (spikes == 1)):
            raise DimensionError(f"spikes must be a binary {topology.n_in}x{T} array")
        _, rates = network.forward(w, spikes, cfg)
    except (KeyError, TypeError, ValueError) as exc:
        return {"id": req_id, "error": str(exc) or type(exc).__name__}
    return {"id": req_id, "rates": rates.tolist()}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            reply = handle_request(line, self.server.lif_cfg, self.server.topology)
            self.server.request_count += 1
            self.wfile.write((json.dumps(reply) + "\n").encode())
            self.wfile.flush()
        log.info("client disconnected after %d requests total", self.server.request_count)


class ChipServer(socketserver.TCPServer):
    """Sequential single-client TCP server wrapping the simulated chip."""

    allow_reuse_address = True

    def __init__(self, address, cfg=LifConfig(), topology=Topology()):
        self.lif_cfg = cfg
        self.topology = topology
        self.request_count = 0
        super().__init__(address, _Handler)


def serve_stdio(cfg=LifConfig(), topology=Topology(), stdin=None, stdout=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    count = 0
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(handle_request(line, cfg, topology)) + "\n")
        stdout.flush()
        count += 1
    log.info("stdin closed after %d requests", count)
    return count
