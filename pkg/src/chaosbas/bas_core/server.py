"""HTTP+JSON API over the C2 core state.

Routes mirror a minimal Caldera-style surface. Errors come back as
``{"error": <code>, "detail": <text>}`` with a 4xx status.
"""

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..errors import (
    BindError,
    ChaosBasError,
    DuplicateName,
    IntegrityError,
    InvalidConfig,
    NoExecutorForPlatform,
    OperationFinished,
    ParseError,
    RealTimeMode,
    UncoveredRule,
    UnknownAbility,
    UnknownAgent,
    UnknownLink,
    UnknownName,
    UnknownOperation,
)
from ..scenario import Scenario
from ..ttp_catalog import Catalog
from .state import ClockMode, CoreState, ServerConfig

logger = logging.getLogger(__name__)

_STATUS_FOR = {
    ParseError.code: 400,
    InvalidConfig.code: 400,
    IntegrityError.code: 400,
    UncoveredRule.code: 400,
    NoExecutorForPlatform.code: 400,
    UnknownOperation.code: 404,
    UnknownAgent.code: 404,
    UnknownAbility.code: 404,
    UnknownLink.code: 404,
    UnknownName.code: 404,
    DuplicateName.code: 409,
    OperationFinished.code: 409,
    RealTimeMode.code: 409,
}

_OP_LINKS = re.compile(r"^/api/operations/([^/]+)/links$")
_LINK_RESULT = re.compile(r"^/api/operations/([^/]+)/links/([^/]+)/result$")
_OP_TEARDOWN = re.compile(r"^/api/operations/([^/]+)/teardown$")
_AGENT = re.compile(r"^/api/agents/([^/]+)$")


def _make_handler(core: CoreState):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # Without TCP_NODELAY every small response eats a ~40ms
        # delayed-ACK stall, which adds up over a polling client.
        disable_nagle_algorithm = True

        def log_message(self, fmt, *args):  # quiet by default
            logger.debug("http %s", fmt % args)

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _fail(self, exc: ChaosBasError) -> None:
            status = _STATUS_FOR.get(exc.code, 400)
            self._reply(status, {"error": exc.code, "detail": exc.detail})

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"request body is not valid JSON: {exc}") from None
            if not isinstance(doc, dict):
                raise ParseError("request body must be a JSON object")
            return doc

        def _dispatch(self, method: str) -> None:
            path = self.path.split("?", 1)[0]
            try:
                handled = self._route(method, path)
            except ChaosBasError as exc:
                self._fail(exc)
                return
            except Exception:
                logger.exception("unhandled error for %s %s", method, path)
                self._reply(500, {"error": "InternalError", "detail": "unhandled server error"})
                return
            if not handled:
                self._reply(404, {"error": "UnknownRoute", "detail": f"no route {method} {path}"})

        def _route(self, method: str, path: str) -> bool:
            if method == "GET" and path == "/api/agents":
                self._reply(200, {"agents": core.list_agents(), "now": core.now})
                return True
            if method == "GET" and path == "/api/abilities":
                self._reply(200, {"abilities": core.list_abilities(), "now": core.now})
                return True
            if method == "GET" and path == "/api/adversaries":
                self._reply(200, {"adversaries": core.list_adversaries(), "now": core.now})
                return True
            if method == "POST" and path == "/api/operations":
                body = self._body()
                name = body.get("name")
                if not isinstance(name, str):
                    raise InvalidConfig("operation name must be a string")
                self._reply(200, core.create_operation(name))
                return True
            match = _OP_LINKS.match(path)
            if method == "POST" and match:
                body = self._body()
                facts = body.get("facts") or {}
                if not isinstance(facts, dict):
                    raise InvalidConfig("facts must be an object")
                link = core.add_potential_link(
                    match.group(1),
                    str(body.get("paw", "")),
                    str(body.get("ability_id", "")),
                    facts,
                )
                self._reply(200, link)
                return True
            match = _LINK_RESULT.match(path)
            if method == "GET" and match:
                self._reply(200, core.get_link_result(match.group(1), match.group(2)))
                return True
            match = _OP_TEARDOWN.match(path)
            if method == "POST" and match:
                self._reply(200, core.teardown_operation(match.group(1)))
                return True
            match = _AGENT.match(path)
            if method == "PATCH" and match:
                body = self._body()
                self._reply(200, core.configure_agent(match.group(1), body.get("beacon_period")))
                return True
            if method == "POST" and path == "/api/clock/advance":
                body = self._body()
                now = core.advance_clock(body.get("delta"))
                self._reply(200, {"now": now})
                return True
            return False

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_PATCH(self):
            self._dispatch("PATCH")

    return Handler


class BasServer:
    """A running simulated C2 server bound to a local port."""

    def __init__(self, scenario: Scenario, catalog: Catalog, config: ServerConfig | None = None):
        self.config = config or ServerConfig()
        self.core = CoreState(scenario, catalog, self.config)
        try:
            self._httpd = ThreadingHTTPServer(
                (self.config.host, self.config.port), _make_handler(self.core)
            )
        except OSError as exc:
            raise BindError(
                f"cannot bind {self.config.host}:{self.config.port}: {exc}"
            ) from None
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        # A short poll keeps shutdown() snappy; the default half second adds
        # up when many short-lived engines start and stop in one process.
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name="bas-http",
            daemon=True,
        )
        self._ticker_stop = threading.Event()
        self._ticker: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def start(self) -> "BasServer":
        self._thread.start()
        if self.config.clock_mode == ClockMode.REAL_TIME:
            interval = 1.0 / max(self.config.realtime_factor, 1e-6)

            def tick():
                while not self._ticker_stop.wait(interval):
                    self.core._advance_to(self.core.now + 1)

            self._ticker = threading.Thread(target=tick, name="bas-clock", daemon=True)
            self._ticker.start()
        logger.info("bas server listening on %s", self.url)
        return self

    def stop(self) -> None:
        self._ticker_stop.set()
        if self._ticker is not None:
            self._ticker.join(timeout=2)
        self._httpd.shutdown()
        self._httpd.server_close()


def start_server(
    scenario: Scenario, catalog: Catalog, config: ServerConfig | None = None
) -> BasServer:
    """Build and start a server; caller owns stop()."""
    return BasServer(scenario, catalog, config).start()
