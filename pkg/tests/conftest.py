import asyncio

import pytest

from agentloop.gateway import GatewayApp, GatewayServer

TEST_TOKEN = "test-token-123"


def run(coro):
    """asyncio entry point for tests (no asyncio plugin in this suite)."""
    return asyncio.run(coro)


@pytest.fixture
def gateway(tmp_path):
    """A live gateway on an ephemeral port with a fresh state dir."""
    app = GatewayApp(tmp_path / "state", token=TEST_TOKEN)
    with GatewayServer(app, port=0) as server:
        yield server


@pytest.fixture(autouse=True)
def _no_token_env(monkeypatch):
    # RouterConfig reads AGENTLOOP_TOKEN; keep tests hermetic.
    monkeypatch.delenv("AGENTLOOP_TOKEN", raising=False)
