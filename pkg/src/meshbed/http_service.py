"""HTTP surface for the operator console.

Endpoints:
  GET  /state     latest snapshot as JSON
  GET  /events    server-sent event stream, one record per reading
  POST /waypoint  {"x": .., "y": ..} -> dispatch a robot command
  GET  /log       the CSV log so far

Handlers never touch gateway internals: reads go through snapshot copies,
waypoints go through a command queue drained by the simulation loop.
"""

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .gateway import Gateway

SSE_HEARTBEAT_S = 1.0


class GatewayService:
    def __init__(self, gateway: Gateway, bind: str = "127.0.0.1:8760"):
        self.gateway = gateway
        host, _, port = bind.partition(":")
        self.commands: queue.Queue = queue.Queue()
        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):  # keep test output quiet
                pass

            def _headers(self, status, content_type, extra=None):
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Access-Control-Allow-Origin", "*")
                for key, value in (extra or {}).items():
                    self.send_header(key, value)
                self.end_headers()

            def _body(self, status, content_type, body: bytes):
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_OPTIONS(self):
                self._headers(
                    204,
                    "text/plain",
                    {
                        "Access-Control-Allow-Methods": "GET, POST, OPTIONS",
                        "Access-Control-Allow-Headers": "Content-Type",
                        "Content-Length": "0",
                    },
                )

            def do_GET(self):
                if self.path == "/state":
                    body = json.dumps(service.gateway.snapshot()).encode()
                    self._body(200, "application/json", body)
                elif self.path == "/events":
                    self._stream_events()
                elif self.path == "/log":
                    self._body(200, "text/csv", service.gateway.csv.text().encode())
                else:
                    self._body(404, "text/plain", b"not found")

            def _stream_events(self):
                events: queue.Queue = queue.Queue()
                service.gateway.subscribe(events)
                self._headers(
                    200, "text/event-stream", {"Cache-Control": "no-cache"}
                )
                try:
                    while not service.closed.is_set():
                        try:
                            record = events.get(timeout=SSE_HEARTBEAT_S)
                            self.wfile.write(f"data: {record}\n\n".encode())
                        except queue.Empty:
                            self.wfile.write(b": heartbeat\n\n")
                        self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    service.gateway.unsubscribe(events)

            def do_POST(self):
                if self.path != "/waypoint":
                    self._body(404, "text/plain", b"not found")
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    x, y = payload["x"], payload["y"]
                    if not (isinstance(x, int) and isinstance(y, int)):
                        raise ValueError("coordinates must be integers")
                    if not (0 <= x <= 255 and 0 <= y <= 255):
                        raise ValueError(f"({x},{y}) outside 0..255")
                except (ValueError, KeyError, TypeError) as exc:
                    self._body(400, "application/json", json.dumps({"error": str(exc)}).encode())
                    return
                service.commands.put((x, y))
                self._body(202, "application/json", json.dumps({"status": "accepted", "x": x, "y": y}).encode())

        self.closed = threading.Event()
        self.server = ThreadingHTTPServer((host, int(port)), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self.server.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self._thread.start()

    def pop_commands(self) -> list[tuple[int, int]]:
        """Drained by the simulation loop, which owns all dispatching."""
        popped = []
        while True:
            try:
                popped.append(self.commands.get_nowait())
            except queue.Empty:
                return popped

    def stop(self) -> None:
        self.closed.set()
        self.server.shutdown()
        self.server.server_close()
