"""Command-line client for a running gateway.

Every operation the protocol defines is reachable from here, over either
transport: plain HTTP (with command polling and SSE subscriptions) or a
WebSocket session (with streamed feedback).

Exit codes: 0 for ok/completed, 1 for failed/rejected/error responses,
2 for usage or transport problems.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass
from urllib.parse import urlsplit

import click
import httpx

from .transport import Reassembler
from .wire import (
    Envelope,
    Kind,
    Op,
    ProtocolError,
    Segment,
    Status,
    decode_envelope,
    decode_frame,
    encode_envelope,
    envelope_to_wire,
    new_id,
)

POLL_INTERVAL_S = 0.2

TERMINAL = {"completed", "failed", "rejected"}


@dataclass
class CliConfig:
    endpoint: str
    token: str | None
    transport: str  # http | ws
    output: str     # pretty | raw

    @property
    def ws_url(self) -> str:
        parts = urlsplit(self.endpoint)
        scheme = "wss" if parts.scheme == "https" else "ws"
        return f"{scheme}://{parts.netloc}/rcp/ws"


class TransportFailure(click.ClickException):
    exit_code = 2


def _render(cfg: CliConfig, env: Envelope) -> None:
    if cfg.output == "raw":
        click.echo(json.dumps(envelope_to_wire(env), separators=(",", ":")))
        return
    if env.error is not None:
        click.echo(f"{env.status.value}: [{env.error.code.value}] {env.error.message}", err=True)
        if env.error.remediation:
            click.echo(f"  remediation: {env.error.remediation}", err=True)
        return
    if env.kind is Kind.EVENT:
        prefix = f"seq={env.seq} " if env.seq is not None else ""
        click.echo(f"{prefix}{json.dumps(env.body, separators=(',', ':'))}")
        return
    if env.body is not None:
        click.echo(json.dumps(env.body, indent=2, sort_keys=True))
    else:
        click.echo(env.status.value)


def _render_state(cfg: CliConfig, state: str, progress, message) -> None:
    if cfg.output == "raw":
        click.echo(json.dumps({"state": state, "progress": progress, "message": message},
                              separators=(",", ":")))
        return
    line = f"[{state}]"
    if progress is not None:
        line += f" progress={progress:.2f}"
    if message:
        line += f" {message}"
    click.echo(line)


def _exit_for(status: Status) -> int:
    return 0 if status in (Status.OK, Status.ACCEPTED, Status.COMPLETED) else 1


class HttpTransport:
    def __init__(self, cfg: CliConfig):
        self.cfg = cfg
        headers = {"Authorization": f"Bearer {cfg.token}"} if cfg.token else {}
        self.client = httpx.Client(base_url=cfg.endpoint, headers=headers, timeout=30.0)

    def request(self, env: Envelope) -> Envelope:
        try:
            response = self.client.post("/rcp", content=encode_envelope(env),
                                        headers={"Content-Type": "application/json"})
        except httpx.HTTPError as exc:
            raise TransportFailure(f"cannot reach gateway: {exc}") from exc
        return decode_envelope(response.content)

    def watch_command(self, command_id: str):
        """Poll the command record until it reaches a terminal state."""
        last_state = None
        while True:
            response = self.client.get(f"/rcp/commands/{command_id}")
            if response.status_code != 200:
                raise TransportFailure(f"command poll failed: HTTP {response.status_code}")
            record = response.json()
            if record["state"] != last_state:
                last_state = record["state"]
                yield record
            if record["state"] in TERMINAL:
                return
            time.sleep(POLL_INTERVAL_S)

    def events(self, path: str, count: int):
        params = [("path", path)]
        if self.cfg.token:
            params.append(("token", self.cfg.token))
        seen = 0
        try:
            with self.client.stream("GET", "/rcp/stream", params=params) as response:
                if response.status_code != 200:
                    response.read()
                    detail = response.json().get("error", {})
                    raise TransportFailure(
                        f"stream refused: [{detail.get('code')}] {detail.get('message')}")
                data_lines = (line for line in response.iter_lines()
                              if line.startswith("data:"))
                for line in data_lines:
                    yield decode_envelope(line[5:].strip())
                    seen += 1
                    if seen >= count:
                        return
        except httpx.HTTPError as exc:
            raise TransportFailure(f"stream failed: {exc}") from exc

    def close(self):
        self.client.close()


class WsTransport:
    def __init__(self, cfg: CliConfig):
        from websockets.sync.client import connect
        self.cfg = cfg
        try:
            self.ws = connect(cfg.ws_url, subprotocols=["rcp.v1"], open_timeout=10)
        except Exception as exc:
            raise TransportFailure(f"cannot open websocket: {exc}") from exc
        self._reassembler = Reassembler()
        self._sent_auth = False

    def _send(self, env: Envelope) -> None:
        if self.cfg.token and not self._sent_auth:
            env.auth = self.cfg.token
            self._sent_auth = True
        self.ws.send(encode_envelope(env).decode("utf-8"))

    def _recv(self) -> Envelope:
        while True:
            frame = decode_frame(self.ws.recv(timeout=30))
            if isinstance(frame, Segment):
                complete = self._reassembler.feed(frame)
                if complete is None:
                    continue
                return complete
            return frame

    def request(self, env: Envelope) -> Envelope:
        self._send(env)
        while True:
            got = self._recv()
            if got.kind is Kind.RESPONSE and got.id == env.id:
                return got

    def watch_command(self, command_id: str):
        last_state = None
        while True:
            got = self._recv()
            if got.kind is not Kind.EVENT or got.id != command_id:
                continue
            state = got.status.value
            record = {
                "state": state,
                "progress": (got.body or {}).get("progress"),
                "message": (got.body or {}).get("message"),
            }
            if state != last_state:
                last_state = state
                yield record
            if state in TERMINAL:
                return

    def events(self, path: str, count: int):
        response = self.request(Envelope.request(Op.SUBSCRIBE, path, id=new_id()))
        if response.error is not None:
            yield response
            return
        for _ in range(count):
            while True:
                got = self._recv()
                if got.kind is Kind.EVENT:
                    yield got
                    break

    def close(self):
        self.ws.close()


def _transport(cfg: CliConfig):
    return WsTransport(cfg) if cfg.transport == "ws" else HttpTransport(cfg)


def _run_request(cfg: CliConfig, env: Envelope) -> int:
    transport = _transport(cfg)
    try:
        response = transport.request(env)
        _render(cfg, response)
        return _exit_for(response.status)
    except ProtocolError as exc:
        raise TransportFailure(f"bad server frame: {exc}") from exc
    finally:
        transport.close()


@click.group()
@click.option("--endpoint", envvar="RCP_ENDPOINT", default="http://127.0.0.1:8420",
              show_default=True, help="Gateway base URL.")
@click.option("--token", envvar="RCP_TOKEN", default=None, help="Bearer token.")
@click.option("--transport", type=click.Choice(["http", "ws"]), default="http",
              show_default=True)
@click.option("--output", type=click.Choice(["pretty", "raw"]), default="pretty",
              show_default=True)
@click.pass_context
def main(ctx, endpoint, token, transport, output):
    """Talk to an RCP gateway."""
    ctx.obj = CliConfig(endpoint=endpoint, token=token, transport=transport, output=output)


@main.command()
@click.argument("path")
@click.pass_obj
def read(cfg: CliConfig, path: str):
    """Read the current value of PATH."""
    sys.exit(_run_request(cfg, Envelope.request(Op.READ, path, id=new_id())))


@main.command()
@click.argument("path")
@click.argument("value")
@click.pass_obj
def write(cfg: CliConfig, path: str, value: str):
    """Write VALUE (JSON; bare words become strings) to PATH."""
    sys.exit(_run_request(cfg, Envelope.request(Op.WRITE, path, id=new_id(),
                                                body=_parse_value(value))))


@main.command()
@click.argument("path")
@click.option("--arg", "args", multiple=True, metavar="KEY=JSON",
              help="One argument; repeatable.")
@click.option("--args", "args_json", default=None, metavar="JSON",
              help="Whole argument object as JSON.")
@click.pass_obj
def execute(cfg: CliConfig, path: str, args, args_json):
    """Execute PATH and stream its feedback until a terminal state."""
    body = json.loads(args_json) if args_json else {}
    for pair in args:
        key, _, value = pair.partition("=")
        if not _:
            raise click.UsageError(f"--arg wants KEY=JSON, got {pair!r}")
        body[key] = _parse_value(value)
    command_id = new_id()
    transport = _transport(cfg)
    try:
        response = transport.request(Envelope.request(Op.EXECUTE, path, id=command_id,
                                                      body=body or {}))
        if response.error is not None or response.status is not Status.ACCEPTED:
            _render(cfg, response)
            sys.exit(_exit_for(response.status))
        _render_state(cfg, "accepted", None, None)
        final = "failed"
        for record in transport.watch_command(command_id):
            _render_state(cfg, record["state"], record.get("progress"),
                          record.get("message"))
            final = record["state"]
        sys.exit(0 if final == "completed" else 1)
    finally:
        transport.close()


@main.command()
@click.argument("path")
@click.option("--count", default=5, show_default=True,
              help="How many events to print before exiting.")
@click.pass_obj
def subscribe(cfg: CliConfig, path: str, count: int):
    """Print COUNT events from PATH (WS subscription or SSE stream)."""
    transport = _transport(cfg)
    code = 0
    try:
        for env in transport.events(path, count):
            _render(cfg, env)
            if env.error is not None:
                code = 1
    finally:
        transport.close()
    sys.exit(code)


@main.command()
@click.option("--tenant", default=None, help="Limit the catalog to one tenant.")
@click.pass_obj
def discover(cfg: CliConfig, tenant):
    """Fetch the resource catalog."""
    path = f"/tenant/{tenant}" if tenant else None
    sys.exit(_run_request(cfg, Envelope.request(Op.DISCOVER, path, id=new_id())))


@main.command()
@click.pass_obj
def status(cfg: CliConfig):
    """Fetch the gateway health snapshot."""
    sys.exit(_run_request(cfg, Envelope.request(Op.STATUS, id=new_id())))


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


if __name__ == "__main__":
    main()
