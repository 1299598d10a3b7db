/** Recorded operator session: the dashboard touches only the documented
 * surface, and terminal card text equals the server's strings exactly. */

import { describe, expect, it } from "vitest";

import { GatewayClient } from "../src/client.js";
import { UiSessionModel } from "../src/model.js";
import {
  DUP_MSG,
  FakeGateway,
  MOVE_DONE,
  RANGE_MSG,
  RESET_DONE,
  settle,
} from "./fake_gateway.js";

const DOCUMENTED_WS_OPS = /^(read|write|execute|subscribe|unsubscribe|discover|status)( \/[a-z0-9_/]+)?$/;
const DOCUMENTED_HTTP = /^(POST \/rcp|GET \/rcp\/(commands\/[\w-]+|discovery|status|stream.*))$/;

describe("a full operator session", () => {
  it("uses only documented routes/ops and renders server text verbatim", async () => {
    const gateway = new FakeGateway();
    const model = new UiSessionModel();
    const client = new GatewayClient(model, gateway, () => undefined, 1);

    // connect, move, bad parameter write, reset
    await client.connect("http://gw:8420", null);
    const moveId = await client.sendMove({ x: 3, y: 4, z: 0 });
    await settle();
    const badWriteId = await client.setParam(7.5);
    const resetId = await client.reset();
    await settle();

    // every request the client made is part of the documented surface
    expect(client.traffic.length).toBeGreaterThan(0);
    for (const record of client.traffic) {
      if (record.channel === "ws") {
        expect(record.detail).toMatch(DOCUMENTED_WS_OPS);
      } else {
        expect(record.detail).toMatch(DOCUMENTED_HTTP);
      }
    }
    // and the server saw exactly ws upgrade + envelope ops (no stray routes)
    for (const line of gateway.serverLog) {
      expect(line).toMatch(/^(WS \/rcp\/ws|GET \/rcp\/.*|POST \/rcp|read |write |execute |subscribe )/);
    }

    // terminal messages byte-for-byte
    const move = model.card(moveId)!;
    expect(move.state).toBe("completed");
    expect(move.progress).toBe(1.0);
    expect(move.message).toBe(MOVE_DONE);

    const badWrite = model.card(badWriteId)!;
    expect(badWrite.state).toBe("failed");
    expect(badWrite.message).toBe(RANGE_MSG);
    expect(badWrite.error!.code).toBe("OUT_OF_RANGE");

    const reset = model.card(resetId)!;
    expect(reset.state).toBe("completed");
    expect(reset.message).toBe(RESET_DONE);
  });

  it("shows a rejected card for a duplicate move", async () => {
    const gateway = new FakeGateway();
    gateway.moveTicks = 50; // keep the first move in flight
    const model = new UiSessionModel();
    const client = new GatewayClient(model, gateway, () => undefined, 1);
    await client.connect("http://gw:8420", null);

    const first = client.sendMove({ x: 9, y: 9, z: 0 });
    const second = client.sendMove({ x: 1, y: 1, z: 0 });
    const [firstId, dupId] = await Promise.all([first, second]);
    await settle(64);

    expect(model.card(dupId)!.state).toBe("rejected");
    expect(model.card(dupId)!.message).toBe(DUP_MSG);
    expect(model.card(firstId)!.state).toBe("completed");
  });
});
