#!/usr/bin/env python3
"""End-to-end demo against a live gateway: discover, watch telemetry,
drive a move, trip the parameter guard, reset.

Starts its own gateway on a free port unless --endpoint is given.
"""

import argparse
import json
import socket
import threading
import time

import httpx
import uvicorn

from rcp.config import GatewayConfig
from rcp.gateway import Gateway
from rcp.wire import decode_envelope


def self_hosted() -> str:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    gateway = Gateway(GatewayConfig(listen=f"127.0.0.1:{port}"))
    server = uvicorn.Server(uvicorn.Config(gateway.app, host="127.0.0.1",
                                           port=port, log_level="warning"))
    threading.Thread(target=server.run, daemon=True).start()
    while not server.started:
        time.sleep(0.02)
    return f"http://127.0.0.1:{port}"


def rcp(client: httpx.Client, **payload):
    response = client.post("/rcp", content=json.dumps(payload))
    return decode_envelope(response.content)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--endpoint", default=None)
    args = parser.parse_args()
    endpoint = args.endpoint or self_hosted()
    print(f"gateway: {endpoint}\n")

    with httpx.Client(base_url=endpoint, timeout=10.0) as client:
        catalog = client.get("/rcp/discovery").json()
        print("discovered paths:")
        for resource in catalog["resources"]:
            print(f"  {resource['path']:32s} {','.join(resource['supported_ops'])}")

        pose = rcp(client, type="read", path="/sensor/pose").body
        print(f"\nstart pose: {pose['position']}")

        print("\nwrite /param/speed_limit 7.5 (out of range):")
        bad = rcp(client, type="write", path="/param/speed_limit", body=7.5)
        print(f"  {bad.status.value}: {bad.error.message}")

        print("\nexecute /action/move_to (3, 4, 0):")
        accepted = rcp(client, type="execute", path="/action/move_to", id="demo-move",
                       body={"target": {"x": 3.0, "y": 4.0, "z": 0.0}})
        print(f"  {accepted.status.value} command_id={accepted.body['command_id']}")
        while True:
            record = client.get("/rcp/commands/demo-move").json()
            print(f"  [{record['state']}] progress={record.get('progress')}")
            if record["state"] in ("completed", "failed", "rejected"):
                if record.get("message"):
                    print(f"  {record['message']}")
                break
            time.sleep(0.3)

        pose = rcp(client, type="read", path="/sensor/pose").body
        print(f"\npose after move: {pose['position']}")

        print("\nexecute /service/reset_system:")
        rcp(client, type="execute", path="/service/reset_system", id="demo-reset")
        time.sleep(0.3)
        record = client.get("/rcp/commands/demo-reset").json()
        print(f"  [{record['state']}] {record.get('message', '')}")
        pose = rcp(client, type="read", path="/sensor/pose").body
        print(f"pose after reset: {pose['position']}")

        snap = client.get("/rcp/status").json()
        print(f"\nhealth: uptime={snap['uptime_s']:.1f}s commands={snap['commands']}")


if __name__ == "__main__":
    main()
