"""The built dashboard bundle: served by the gateway, and its compiled
client drives a real gateway end-to-end (SSE + HTTP fallback path)."""

import json
import shutil
import subprocess
from pathlib import Path

import pytest

from conftest import LiveServer, fast_config
from rcp.gateway import Gateway

DIST = Path(__file__).resolve().parents[1] / "dashboard" / "dist"

needs_bundle = pytest.mark.skipif(
    not (DIST / "js" / "client.js").is_file() or shutil.which("node") is None,
    reason="dashboard bundle not built or node unavailable",
)


@needs_bundle
def test_gateway_serves_dashboard(client):
    page = client.get("/dashboard/")
    assert page.status_code == 200
    assert "RCP operator console" in page.text
    assert client.get("/dashboard/js/app.js").status_code == 200
    assert client.get("/dashboard/styles.css").status_code == 200


NODE_DRIVER = """
import { GatewayClient } from '%(dist)s/js/client.js';
import { UiSessionModel } from '%(dist)s/js/model.js';
import { BrowserTransport } from '%(dist)s/js/browser.js';

const base = new BrowserTransport();
const transport = {
  // this runtime has no WebSocket: force the documented SSE+HTTP fallback
  openSocket(url, protocols, handlers) {
    queueMicrotask(() => handlers.onError('no websocket in this runtime'));
    return { send() {}, close() {} };
  },
  openStream: base.openStream.bind(base),
  http: base.http.bind(base),
};

const model = new UiSessionModel();
const client = new GatewayClient(model, transport, () => {}, 50);
const sleep = (ms) => new Promise((r) => setTimeout(r, ms));

await client.connect('%(endpoint)s', null);
for (let i = 0; i < 100 && model.poseTrail.length < 3; i++) await sleep(50);

const moveId = await client.sendMove({ x: 2, y: 0, z: 0 });
for (let i = 0; i < 200 && !model.isTerminal(moveId); i++) await sleep(25);

const badId = await client.setParam(7.5);
const resetId = await client.reset();
for (let i = 0; i < 200 && !model.isTerminal(resetId); i++) await sleep(25);
for (let i = 0; i < 100 && model.health === null; i++) await sleep(50);

console.log(JSON.stringify({
  connection: model.connection,
  trailLength: model.poseTrail.length,
  health: model.health !== null,
  move: model.card(moveId),
  badWrite: model.card(badId),
  reset: model.card(resetId),
  traffic: client.traffic,
}));
process.exit(0);
"""


@needs_bundle
def test_compiled_client_against_live_gateway():
    config = fast_config(status_publish_period_s=0.1)
    server = LiveServer(Gateway(config)).start()
    try:
        script = NODE_DRIVER % {"dist": DIST.as_posix(), "endpoint": server.base_url}
        proc = subprocess.run(["node", "--input-type=module", "-e", script],
                              capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0, proc.stderr
        result = json.loads(proc.stdout.strip().splitlines()[-1])
    finally:
        server.stop()

    assert result["connection"] == "sse"
    assert result["trailLength"] >= 3
    assert result["health"] is True
    assert result["move"]["state"] == "completed"
    assert result["move"]["message"] == "Command /action/move_to executed successfully."
    assert result["badWrite"]["state"] == "failed"
    assert result["badWrite"]["message"] == (
        "Failed to apply configuration: parameter 'speed_limit' exceeds allowed range."
    )
    assert result["reset"]["state"] == "completed"
    assert result["reset"]["message"] == "Command /service/reset_system executed successfully."
    # only documented surface, straight from the recorded traffic
    for record in result["traffic"]:
        if record["channel"] == "http":
            assert record["detail"] == "POST /rcp" or record["detail"].startswith("GET /rcp/commands/")
        elif record["channel"] == "sse":
            assert record["detail"] == "GET /rcp/stream"
        else:
            raise AssertionError(f"unexpected channel {record}")
