"""Gym-style environment backed by the fwmav wire protocol.

The adapter is a pure socket client: length-prefixed JSON frames, one
environment session per connection, synchronous request/reply. It adds no
semantics of its own; observations, rewards and termination flags pass
through from the server unmodified.
"""

import json
import socket
import struct

import numpy as np

from .spaces import Box

MAX_FRAME = 1 << 20


class AdapterError(RuntimeError):
    """Server-side error or transport failure; the episode is aborted."""


def _send_frame(sock, obj):
    data = json.dumps(obj).encode("utf-8")
    sock.sendall(struct.pack(">I", len(data)) + data)


def _recv_exact(sock, n):
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _recv_frame(sock):
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    n = struct.unpack(">I", head)[0]
    if n > MAX_FRAME:
        raise AdapterError(f"frame of {n} bytes exceeds the {MAX_FRAME} limit")
    body = _recv_exact(sock, n)
    if body is None:
        raise AdapterError("connection closed mid-frame")
    return json.loads(body.decode("utf-8"))


class RemoteEnv:
    """Remote episodic environment with the split-termination step API:
    ``step`` returns (obs, reward, terminated, truncated, info).

    ``terminated`` covers goal success and crash failure; ``truncated``
    is the horizon timeout. One connection per instance; instances are
    independent."""

    metadata = {"render_modes": []}

    def __init__(self, address, task="maneuver", seed=None, timeout=30.0,
                 **spec_fields):
        self._address = tuple(address)
        self._timeout = timeout
        self._spec = dict(spec_fields, task=task)
        if seed is not None:
            self._spec["seed"] = int(seed)
        self._sock = None
        self._needs_reset = True
        self._connect_and_handshake()

    # -- transport ---------------------------------------------------------

    def _connect_and_handshake(self):
        if self._sock is not None:
            self._sock.close()
        try:
            self._sock = socket.create_connection(self._address,
                                                  timeout=self._timeout)
        except OSError as e:
            raise AdapterError(f"cannot reach server at "
                               f"{self._address}: {e}") from e
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        reply = self._request({"op": "handshake", "spec": self._spec})
        self.observation_dim = int(reply["observation_dim"])
        self.action_dim = int(reply["action_dim"])
        self.task = reply["task"]
        self.observation_space = Box(-np.inf, np.inf,
                                     shape=(self.observation_dim,))
        self.action_space = Box(np.asarray(reply["action_low"], dtype=float),
                                np.asarray(reply["action_high"], dtype=float))
        self._needs_reset = True

    def _request(self, msg):
        if self._sock is None:
            raise AdapterError("environment is closed")
        try:
            _send_frame(self._sock, msg)
            reply = _recv_frame(self._sock)
        except OSError as e:
            self._abort()
            raise AdapterError(f"transport failure mid-episode: {e}") from e
        if reply is None:
            self._abort()
            raise AdapterError("server closed the connection mid-episode")
        if not reply.get("ok", False):
            self._abort()
            raise AdapterError(reply.get("error", "unknown server error"))
        return reply

    def _abort(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None
        self._needs_reset = True

    # -- environment API ---------------------------------------------------

    def reset(self, seed=None, options=None):
        if seed is not None:
            self._spec["seed"] = int(seed)
            self._connect_and_handshake()
        elif self._sock is None:
            self._connect_and_handshake()
        reply = self._request({"op": "reset"})
        self._needs_reset = False
        obs = np.asarray(reply["observation"], dtype=float)
        return obs, {}

    def step(self, action):
        if self._needs_reset:
            raise AdapterError("call reset() before step()")
        action = np.asarray(action, dtype=float)
        reply = self._request({"op": "step",
                               "action": [float(v) for v in action]})
        obs = np.asarray(reply["observation"], dtype=float)
        info = reply["info"]
        done = bool(reply["done"])
        truncated = done and bool(info.get("timeout", False))
        terminated = done and not truncated
        if done:
            self._needs_reset = True
        return obs, float(reply["reward"]), terminated, truncated, info

    def close(self):
        if self._sock is not None:
            try:
                _send_frame(self._sock, {"op": "close"})
                _recv_frame(self._sock)
            except OSError:
                pass
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_env(address, task="maneuver", seed=None, **spec_fields):
    """Connect to a wire-protocol server and return a Gym-style env.

    ``address`` is a (host, port) pair; extra keyword arguments become
    episode-spec fields (horizon, p_0, p_f, randomize, ...)."""
    return RemoteEnv(address, task=task, seed=seed, **spec_fields)
