"""HTTP client for the C2 API.

The client holds nothing but the endpoint and a connection pool: every call
stands alone, so any sequence of calls can be replayed against a reset server.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import requests

from .errors import (
    ConnectionError,
    InvalidConfig,
    PollTimeout,
    ProtocolError,
    error_for_code,
)

logger = logging.getLogger(__name__)

TERMINAL_LINK_STATUSES = {"success", "failed", "timeout", "discarded"}


class ClockDriver(str, Enum):
    """How await_result passes time between polls."""

    ADVANCE_VIRTUAL = "advance_virtual"
    WALL_CLOCK = "wall_clock"


@dataclass(frozen=True)
class PollPolicy:
    interval: int = 5
    timeout: int = 60
    driver: ClockDriver = ClockDriver.ADVANCE_VIRTUAL

    def __post_init__(self):
        if self.interval < 1 or self.timeout < 1:
            raise InvalidConfig("poll interval and timeout must be positive")
        if self.interval > self.timeout:
            raise InvalidConfig("poll interval must not exceed the timeout")


@dataclass
class BasState:
    """Snapshot of the server: agents, abilities, adversaries."""

    agents: list[dict]
    abilities: list[dict]
    adversaries: list[dict]
    fetched_at: int

    @property
    def agent_paws(self) -> list[str]:
        return [a["paw"] for a in self.agents]


@dataclass
class PollOutcome:
    status: str
    result: dict | None
    polls: int
    link: dict = field(default_factory=dict)


class BasClient:
    def __init__(self, endpoint: str):
        if not endpoint.startswith(("http://", "https://")):
            endpoint = "http://" + endpoint
        self.endpoint = endpoint.rstrip("/")
        self._session = requests.Session()

    def close(self) -> None:
        self._session.close()

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.endpoint + path
        try:
            resp = self._session.request(method, url, json=body, timeout=30)
        except requests.RequestException as exc:
            raise ConnectionError(f"{method} {url}: {exc}") from None
        try:
            doc = resp.json()
        except ValueError:
            raise ProtocolError(
                f"{method} {path}: server sent non-JSON ({resp.status_code})"
            ) from None
        if not isinstance(doc, dict):
            raise ProtocolError(f"{method} {path}: expected a JSON object")
        if resp.status_code >= 400 or "error" in doc:
            code = doc.get("error", f"HTTP{resp.status_code}")
            raise error_for_code(str(code), str(doc.get("detail", "")))
        return doc

    # -- state --------------------------------------------------------------

    def list_agents(self) -> tuple[list[dict], int]:
        """Current agents plus the engine's clock, in one round trip."""
        doc = self._request("GET", "/api/agents")
        agents = doc.get("agents")
        if not isinstance(agents, list):
            raise ProtocolError("malformed agents snapshot")
        return agents, int(doc.get("now", 0))

    def fetch_state(self) -> BasState:
        agents = self._request("GET", "/api/agents")
        abilities = self._request("GET", "/api/abilities")
        adversaries = self._request("GET", "/api/adversaries")
        for key, doc in (("agents", agents), ("abilities", abilities), ("adversaries", adversaries)):
            if key not in doc or not isinstance(doc[key], list):
                raise ProtocolError(f"malformed {key} snapshot")
        ability_ids = {a.get("id") for a in abilities["abilities"]}
        for adversary in adversaries["adversaries"]:
            for aid in adversary.get("abilities", []):
                if aid not in ability_ids:
                    raise ProtocolError(
                        f"adversary {adversary.get('id')} references unknown ability {aid}"
                    )
        return BasState(
            agents=agents["agents"],
            abilities=abilities["abilities"],
            adversaries=adversaries["adversaries"],
            fetched_at=int(adversaries.get("now", 0)),
        )

    # -- operations and links -------------------------------------------------

    def create_blank_operation(self, name: str) -> str:
        doc = self._request("POST", "/api/operations", {"name": name})
        op_id = doc.get("id")
        if not op_id or doc.get("links"):
            raise ProtocolError("operation came back missing an id or not blank")
        return str(op_id)

    def execute_ability(
        self, operation_id: str, paw: str, ability_id: str, facts: dict[str, str] | None = None
    ) -> dict:
        return self._request(
            "POST",
            f"/api/operations/{operation_id}/links",
            {"paw": paw, "ability_id": ability_id, "facts": facts or {}},
        )

    def get_link_result(self, operation_id: str, link_id: str) -> dict:
        return self._request("GET", f"/api/operations/{operation_id}/links/{link_id}/result")

    def await_result(
        self, operation_id: str, link_id: str, policy: PollPolicy | None = None
    ) -> PollOutcome:
        """Poll until the link reaches a terminal status.

        Polls every ``interval``; in virtual mode each wait advances the
        server clock by ``interval`` instead of sleeping. Raises PollTimeout
        once ``timeout`` has elapsed without a terminal status, after at most
        ceil(timeout / interval) + 1 polls.
        """
        policy = policy or PollPolicy()
        virtual = policy.driver == ClockDriver.ADVANCE_VIRTUAL
        started_virtual: int | None = None
        started_wall = time.monotonic()
        polls = 0
        while True:
            link = self.get_link_result(operation_id, link_id)
            polls += 1
            if started_virtual is None:
                started_virtual = int(link.get("now", 0))
            if link.get("status") in TERMINAL_LINK_STATUSES:
                return PollOutcome(
                    status=str(link["status"]),
                    result=link.get("result"),
                    polls=polls,
                    link=link,
                )
            if virtual:
                elapsed = int(link.get("now", 0)) - started_virtual
            else:
                elapsed = time.monotonic() - started_wall
            if elapsed >= policy.timeout:
                raise PollTimeout(
                    f"link {link_id} still {link.get('status')} after {elapsed} of "
                    f"{policy.timeout} (polls={polls})"
                )
            if virtual:
                self.advance_clock(policy.interval)
            else:
                time.sleep(policy.interval)

    def teardown_operation(self, operation_id: str) -> dict:
        return self._request("POST", f"/api/operations/{operation_id}/teardown")

    # -- agents and the clock -------------------------------------------------

    def configure_agent(self, paw: str, beacon_period: int) -> dict:
        return self._request("PATCH", f"/api/agents/{paw}", {"beacon_period": beacon_period})

    def advance_clock(self, delta: int) -> int:
        doc = self._request("POST", "/api/clock/advance", {"delta": delta})
        return int(doc["now"])
