"""Shared fixtures: loaded fixtures, live servers, and fuzz input builders."""

import json
import random

import pytest

from chaosbas.bas_core import ServerConfig, start_server
from chaosbas.connector import BasClient
from chaosbas.data import resolve_input_path
from chaosbas.scenario import load_scenario
from chaosbas.ttp_catalog import catalog_to_document, load_catalog

WORMS_CATALOG = resolve_input_path("catalog/worms.json")
FIGURE3_SCENARIO = resolve_input_path("scenarios/figure3.json")
HARDENED_SCENARIO = resolve_input_path("scenarios/figure3-hardened.json")


@pytest.fixture(scope="session")
def worms_catalog():
    return load_catalog(WORMS_CATALOG)


@pytest.fixture(scope="session")
def figure3_scenario():
    return load_scenario(FIGURE3_SCENARIO)


@pytest.fixture(scope="session")
def hardened_scenario():
    return load_scenario(HARDENED_SCENARIO)


@pytest.fixture
def make_server(figure3_scenario, worms_catalog):
    """Start engines bound to free ports; stops them all afterwards."""
    servers = []

    def _make(scenario=None, catalog=None, config=None):
        server = start_server(
            scenario if scenario is not None else figure3_scenario,
            catalog if catalog is not None else worms_catalog,
            config or ServerConfig(),
        )
        servers.append(server)
        return server

    yield _make
    for server in servers:
        server.stop()


@pytest.fixture
def make_client():
    clients = []

    def _make(server_or_url):
        url = server_or_url if isinstance(server_or_url, str) else server_or_url.url
        client = BasClient(url)
        clients.append(client)
        return client

    yield _make
    for client in clients:
        client.close()


# ---------------------------------------------------------------------------
# Fuzz input builders (plain seeded random; every caller passes its own rng)
# ---------------------------------------------------------------------------


def fuzz_scenario_doc(rng: random.Random) -> dict:
    """A small random network: one C2, one seed box, 1 to 4 target hosts."""
    n_targets = rng.randint(1, 4)
    names = ["c2-box", "seed-box"] + [f"host-{i}" for i in range(n_targets)]
    hosts = {}
    for i, name in enumerate(names):
        hosts[name] = {
            "fqdn": f"{name}.fuzz.local",
            "ip": f"10.9.0.{i + 1}",
            "platform": "linux" if name == "c2-box" else "windows",
            "services": {
                "smb_share": rng.choice(["absent", "hardened", "world_writable"]),
                "winrm": rng.choice(["absent", "hardened", "misconfigured"]),
                "wmi_remote": rng.choice(["disabled", "enabled"]),
                "scp": rng.choice(["absent", "key_only", "password_enabled"]),
            },
            "credentials": {
                "password_strength": rng.choice(["none", "weak", "strong"]),
                "ssh_keys_known_to_attacker": rng.random() < 0.3,
            },
        }
    dns = {h["fqdn"]: h["ip"] for h in hosts.values()}
    return {
        "hosts": hosts,
        "dns": dns,
        "c2_address": "c2-box",
        "seed_agent_host": "seed-box",
    }


def patient_catalog_doc(catalog) -> dict:
    """The same catalog with executor timeouts long enough for deep waves.

    Queued links wait behind every other in-flight branch of a wave, so fuzz
    runs with parallelism use a variant that does not time out in the queue.
    """
    doc = catalog_to_document(catalog)
    for ability in doc["abilities"]:
        for executor in ability["executors"]:
            executor["timeout"] = 600
    return doc


def write_json(path, doc) -> str:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return str(path)
