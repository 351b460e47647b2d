"""PPGSTREAM server: posteriors over stdio or TCP, one session at a time.

Protocol (all little-endian): mutual ``HELLO PPGSTREAM 1 <set>`` lines, then
``CHUNK <n_samples>\\n`` + float32 samples answered by
``ROWS <n_rows> <n_dims>\\n`` + float32 posteriors for every newly completed
frame; ``FLUSH\\n`` returns the remaining frames; EOF ends the session.  A
set-name mismatch is answered with the server's own set and the connection
closes.
"""
from __future__ import annotations

import socket
import sys

import numpy as np

from .infer import StreamingInference
from .model import PhonemeCrnn

HELLO = "HELLO PPGSTREAM 1"


def serve_stream(model: PhonemeCrnn, set_name: str, rfile, wfile, log=None) -> None:
    def say(text: str):
        wfile.write(text.encode())
        wfile.flush()

    hello = rfile.readline().decode().strip()
    if hello != f"{HELLO} {set_name}":
        say(f"{HELLO} {set_name}\n")
        if log:
            log(f"handshake refused: {hello!r}")
        return
    say(f"{HELLO} {set_name}\n")
    engine = StreamingInference(model)

    def respond(rows: np.ndarray):
        wfile.write(f"ROWS {rows.shape[0]} {model.cfg.n_phone}\n".encode())
        if rows.shape[0]:
            wfile.write(rows.astype("<f4").tobytes())
        wfile.flush()

    while True:
        line = rfile.readline()
        if not line:
            return
        parts = line.decode().split()
        if not parts:
            continue
        if parts[0] == "CHUNK":
            n = int(parts[1])
            payload = rfile.read(n * 4)
            if len(payload) != n * 4:
                return
            samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
            respond(engine.feed(samples))
        elif parts[0] == "FLUSH":
            respond(engine.flush())
        else:
            say(f"ERROR unknown request {parts[0]}\n")
            return


def serve_stdio(model: PhonemeCrnn, set_name: str) -> None:
    serve_stream(model, set_name, sys.stdin.buffer, sys.stdout.buffer,
                 log=lambda m: print(m, file=sys.stderr))


def serve_tcp(model: PhonemeCrnn, set_name: str, host: str, port: int) -> int:
    """Accept one session; returns the bound port (0 picks a free one)."""
    srv = socket.create_server((host, port))
    bound = srv.getsockname()[1]
    print(f"ppgnet serving PPGSTREAM on {host}:{bound}", file=sys.stderr, flush=True)
    conn, _ = srv.accept()
    with conn:
        serve_stream(
            model, set_name, conn.makefile("rb"), conn.makefile("wb"),
            log=lambda m: print(m, file=sys.stderr),
        )
    srv.close()
    return bound
