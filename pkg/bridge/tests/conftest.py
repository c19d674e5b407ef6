import threading
import time

import pytest
import uvicorn

from guidance_bridge.app import BridgeConfig, create_app


@pytest.fixture
def mock_client():
    from fastapi.testclient import TestClient

    return TestClient(create_app(BridgeConfig(mode="mock", seed=7, latent=(8, 8, 4))))


class LoopbackServer:
    """uvicorn in a daemon thread on an ephemeral port."""

    def __init__(self, app):
        self.server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
        )
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self):
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("bridge failed to start")
            time.sleep(0.01)
        port = self.server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def serve():
    servers = []

    def start(config: BridgeConfig):
        server = LoopbackServer(create_app(config))
        url = server.__enter__()
        servers.append(server)
        return url

    yield start
    for server in servers:
        server.__exit__()
