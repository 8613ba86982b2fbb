"""Client for the JSON-lines model-serving protocol.

One JSON document per line, UTF-8, no embedded newlines.  The handshake
``{"op":"hello"}`` returns ``{"V":..., "model":...}``; each subsequent
request ``{"id":N, "history":[...], "prefix":[...]}`` is answered by
``{"id":N, "logp":[...]}`` with log-probability -inf encoded as the
sentinel -1e9 (JSON has no infinities).  Request ids are strictly
increasing per connection.  Requests are stateless: the full history and
prefix travel on every call.
"""

from __future__ import annotations

import json
import socket
import subprocess
from pathlib import Path

import numpy as np

from .models import Distribution, SequenceModel
from .queries import Vocab

NEG_INF = float("-inf")
NEG_INF_SENTINEL = -1e9


def encode_logp(logp) -> list:
    """Wire encoding: -inf becomes the integer sentinel -1000000000, and
    integral values drop their decimal point (JSON-number formatting then
    agrees byte-for-byte across host languages)."""
    out = []
    for x in logp:
        x = float(x)
        if x == NEG_INF or x <= NEG_INF_SENTINEL:
            out.append(int(NEG_INF_SENTINEL))
        elif x.is_integer():
            out.append(int(x))
        else:
            out.append(x)
    return out


def decode_logp(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr[arr <= NEG_INF_SENTINEL / 2] = NEG_INF
    return arr


class RemoteModelUnavailable(RuntimeError):
    """The server went away or answered garbage; no estimate was produced."""


class _LineTransport:
    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


class TcpTransport(_LineTransport):
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise RemoteModelUnavailable(f"cannot connect to {host}:{port}: {e}") from e
        self.reader = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as e:
            raise RemoteModelUnavailable(f"send failed: {e}") from e

    def recv_line(self) -> str:
        try:
            line = self.reader.readline()
        except OSError as e:
            raise RemoteModelUnavailable(f"receive failed: {e}") from e
        if not line:
            raise RemoteModelUnavailable("server closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class StdioTransport(_LineTransport):
    def __init__(self, cmd: list[str], cwd: str | None = None):
        try:
            self.proc = subprocess.Popen(
                cmd,
                cwd=cwd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise RemoteModelUnavailable(f"cannot start server {cmd!r}: {e}") from e

    def send_line(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise RemoteModelUnavailable(f"server exited with code {self.proc.returncode}")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (OSError, ValueError) as e:
            raise RemoteModelUnavailable(f"send failed: {e}") from e

    def recv_line(self) -> str:
        line = self.proc.stdout.readline()
        if not line:
            raise RemoteModelUnavailable(
                f"server produced no response (exit code {self.proc.poll()})"
            )
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self.proc.stdin.close()
            self.proc.terminate()
            self.proc.wait(timeout=5)
        except (OSError, ValueError, subprocess.TimeoutExpired):
            pass


class RemoteModel(SequenceModel):
    """Sequence model served over the wire protocol."""

    def __init__(self, transport: _LineTransport, spec: dict | None = None):
        self.transport = transport
        self._spec = spec
        self._next_id = 0
        hello = self._roundtrip({"op": "hello"})
        if "V" not in hello:
            raise RemoteModelUnavailable(f"bad handshake response: {hello}")
        super().__init__(Vocab(hello["V"]))
        self.remote_name = hello.get("model", "remote")

    @classmethod
    def from_spec(cls, spec: dict, base_dir: str = ".") -> "RemoteModel":
        if "tcp" in spec:
            host, port = spec["tcp"].rsplit(":", 1)
            return cls(TcpTransport(host, int(port)), spec)
        if "cmd" in spec:
            cwd = spec.get("cwd")
            if cwd is not None and not Path(cwd).is_absolute():
                cwd = str(Path(base_dir) / cwd)
            return cls(StdioTransport(list(spec["cmd"]), cwd), spec)
        raise RemoteModelUnavailable("remote spec needs 'tcp' or 'cmd'")

    def _roundtrip(self, doc: dict) -> dict:
        self.transport.send_line(json.dumps(doc, separators=(",", ":")))
        line = self.transport.recv_line()
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as e:
            raise RemoteModelUnavailable(f"unparseable response {line!r}") from e
        if "error" in resp:
            raise RemoteModelUnavailable(f"server error: {resp['error']}")
        return resp

    def _next_logp(self, context):
        raise NotImplementedError  # next() is overridden

    def next(self, history, prefix) -> Distribution:
        context = self._check_context(history, prefix)
        del context
        req_id = self._next_id
        self._next_id += 1
        resp = self._roundtrip({"id": req_id, "history": list(history), "prefix": list(prefix)})
        if resp.get("id") != req_id:
            raise RemoteModelUnavailable(f"response id {resp.get('id')} != request id {req_id}")
        self.calls += 1
        return Distribution(decode_logp(resp["logp"]))

    def batch(self, pairs: list[tuple[list[int], list[int]]]) -> list[Distribution]:
        """Batched evaluation; semantics identical to sequential calls."""
        reqs = []
        for history, prefix in pairs:
            reqs.append({"id": self._next_id, "history": list(history), "prefix": list(prefix)})
            self._next_id += 1
        resp = self._roundtrip({"op": "batch", "requests": reqs})
        out = []
        for r, req in zip(resp.get("responses", []), reqs):
            if "error" in r:
                raise RemoteModelUnavailable(f"server error: {r['error']}")
            if r.get("id") != req["id"]:
                raise RemoteModelUnavailable(f"batch response id mismatch: {r.get('id')}")
            self.calls += 1
            out.append(Distribution(decode_logp(r["logp"])))
        if len(out) != len(reqs):
            raise RemoteModelUnavailable(f"batch returned {len(out)} of {len(reqs)} responses")
        return out

    def name(self):
        return f"remote({self.remote_name})"

    def spawn(self):
        if self._spec is None:
            raise RemoteModelUnavailable("cannot respawn a hand-constructed remote model")
        return RemoteModel.from_spec(self._spec)

    def close(self):
        self.transport.close()
