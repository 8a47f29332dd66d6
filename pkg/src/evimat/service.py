"""Single-session HTTP service for the interaction loop.

JSON over HTTP, one image per server process:
  GET  /session  -> session wire state (idempotent)
  POST /label    {"proposal_id": ..., "label": "fg"|"bg"|"transition"}
  POST /step     -> run a round with the accumulated labels
  GET  /metrics  -> metric report against ground truth, when present
A background mutation log (GET /requestlog) lets tests verify clients
only ever mutate through /label and /step.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .interaction import (
    InteractionConfig,
    InteractionSession,
    PatchProposal,
    Predictor,
    run_round,
    session_proposals,
    start_session,
)
from .metrics import full_report, trimap_from_alpha
from .nig import map_moments
from .raster import Raster, minmax_normalize, png8_bytes


class SessionState:
    """Mutations serialize through one lock; reads snapshot under it."""

    def __init__(
        self,
        image: Raster,
        predictor: Predictor,
        gt_alpha: np.ndarray | None = None,
        config: InteractionConfig | None = None,
        expose_oracle: bool = False,
        session_id: str = "session-0",
    ):
        self.lock = threading.Lock()
        self.predictor = predictor
        self.session = start_session(image, predictor, gt_alpha, config)
        self.proposals = session_proposals(self.session)
        self.pending: dict[str, str] = {}
        self.expose_oracle = expose_oracle and gt_alpha is not None
        self.session_id = session_id
        self.request_log: list[tuple[str, str]] = []

    # proposal ids carry the round so stale labels are detectable
    def _proposal_id(self, idx: int) -> str:
        return f"r{self.session.round}-p{idx}"

    def wire(self) -> dict:
        with self.lock:
            return self._wire_locked()

    def _wire_locked(self) -> dict:
        s = self.session
        aleatoric, epistemic, _ = map_moments(s.fused)
        proposals = []
        for i, p in enumerate(self.proposals):
            entry = {
                "id": self._proposal_id(i),
                "x0": p.x0,
                "y0": p.y0,
                "x1": p.x1,
                "y1": p.y1,
                "grid_row": p.grid_row,
                "grid_col": p.grid_col,
                "mean_uncertainty": p.mean_uncertainty,
            }
            if self.expose_oracle:
                from .interaction import oracle_label

                entry["oracle_label"] = oracle_label(s.gt_alpha, p)
            proposals.append(entry)
        wire = {
            "session_id": self.session_id,
            "round": s.round,
            "width": s.image.width,
            "height": s.image.height,
            "image_png": _b64(s.image.plane(0)),
            "matte_png": _b64(np.clip(s.fused.gamma, 0.0, 1.0)),
            "epistemic_png": _b64(minmax_normalize(epistemic)),
            "aleatoric_png": _b64(minmax_normalize(aleatoric)),
            "proposals": proposals,
        }
        if s.gt_alpha is not None:
            wire["metrics"] = self._metrics_locked()
        return wire

    def _metrics_locked(self) -> dict:
        s = self.session
        trimap = trimap_from_alpha(s.gt_alpha)
        report = full_report(s.fused.gamma, s.gt_alpha, trimap)
        return report.to_json_dict()

    def metrics(self) -> dict | None:
        with self.lock:
            if self.session.gt_alpha is None:
                return None
            return self._metrics_locked()

    def label(self, proposal_id: str, label: str) -> tuple[int, dict]:
        with self.lock:
            if label not in ("fg", "bg", "transition"):
                return 400, {"error": f"bad label {label!r}"}
            prefix = f"r{self.session.round}-p"
            if not proposal_id.startswith(prefix):
                if proposal_id.startswith("r") and "-p" in proposal_id:
                    return 409, {"error": "proposal from a finished round"}
                return 404, {"error": "unknown proposal id"}
            try:
                idx = int(proposal_id[len(prefix):])
            except ValueError:
                return 404, {"error": "unknown proposal id"}
            if not (0 <= idx < len(self.proposals)):
                return 404, {"error": "unknown proposal id"}
            self.pending[proposal_id] = label
            return 200, {"ok": True, "pending": len(self.pending)}

    def step(self) -> tuple[int, dict]:
        with self.lock:
            prefix = f"r{self.session.round}-p"
            labels = [
                (self.proposals[int(pid[len(prefix):])], lab)
                for pid, lab in sorted(self.pending.items())
            ]
            self.session = run_round(self.session, self.predictor, labels)
            self.proposals = session_proposals(self.session)
            self.pending = {}
            return 200, self._wire_locked()


def _b64(plane: np.ndarray) -> str:
    return base64.b64encode(png8_bytes(np.asarray(plane, dtype=np.float64))).decode()


class _Handler(BaseHTTPRequestHandler):
    state: SessionState = None
    static_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet server
        pass

    def _send_json(self, code: int, payload: dict) -> None:
        blob = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(blob)

    def _record(self):
        self.state.request_log.append((self.command, self.path))

    def do_GET(self):
        self._record()
        if self.path == "/session":
            self._send_json(200, self.state.wire())
        elif self.path == "/metrics":
            m = self.state.metrics()
            if m is None:
                self._send_json(404, {"error": "no ground truth loaded"})
            else:
                self._send_json(200, m)
        elif self.path == "/requestlog":
            self._send_json(200, {"requests": self.state.request_log})
        elif self.static_dir is not None:
            self._serve_static()
        else:
            self._send_json(404, {"error": "not found"})

    def _serve_static(self):
        rel = self.path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        types = {".html": "text/html", ".js": "text/javascript", ".css": "text/css"}
        blob = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", types.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def do_POST(self):
        self._record()
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length) if length else b"{}"
        try:
            payload = json.loads(body.decode() or "{}")
        except json.JSONDecodeError:
            self._send_json(400, {"error": "bad json"})
            return
        if self.path == "/label":
            code, resp = self.state.label(
                str(payload.get("proposal_id", "")), str(payload.get("label", ""))
            )
            self._send_json(code, resp)
        elif self.path == "/step":
            code, resp = self.state.step()
            self._send_json(code, resp)
        else:
            self._send_json(404, {"error": "not found"})


def make_server(
    state: SessionState, port: int, static_dir: str | Path | None = None
) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {
        "state": state,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve_forever(state: SessionState, port: int, static_dir=None) -> None:
    server = make_server(state, port, static_dir)
    print(f"serving session on http://127.0.0.1:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
