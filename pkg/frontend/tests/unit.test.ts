import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it, vi } from "vitest";

import { encodeEnvelope, parseEnvelope } from "../src/protocol.js";
import {
  buildPlacardPayload,
  parsePlacardPayload,
  placardMatrix,
  renderPlacard,
} from "../src/qrPlacard.js";
import {
  addPredicate,
  addRectangle,
  builderProblems,
  emptyBuilder,
  fromVisualJson,
  toVisualJson,
} from "../src/queryBuilder.js";
import { DisplaySession, type WebSocketLike } from "../src/session.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const PROTOCOL_DOC = join(HERE, "..", "..", "docs", "protocol.md");

describe("documented frames are shared test vectors", () => {
  const doc = readFileSync(PROTOCOL_DOC, "utf-8");
  const frames = [...doc.matchAll(/```json frame\n(.*?)\n```/gs)].map((m) => m[1]!);

  it("found the vector set", () => {
    expect(frames.length).toBeGreaterThanOrEqual(12);
  });

  it("every vector parses and re-encodes structurally identical", () => {
    for (const raw of frames) {
      const env = parseEnvelope(raw);
      expect(JSON.parse(encodeEnvelope(env))).toEqual(JSON.parse(raw));
    }
  });

  it("rejects unknown types and malformed frames", () => {
    expect(() => parseEnvelope("{nope")).toThrow();
    expect(() =>
      parseEnvelope('{"type":"NOPE","session":"s","sender":"c","seq":1,"ts":0,"payload":{}}'),
    ).toThrow(/unknown type/);
  });
});

describe("query builder model", () => {
  it("builds the documented rectangle query", () => {
    const state = addRectangle(emptyBuilder(), { lat: 10, lon: 20 }, { lat: -10, lon: 40 });
    expect(JSON.parse(toVisualJson(state))).toEqual({
      v: 1,
      regions: [{ nw: [10, 20], se: [-10, 40] }],
      preds: [],
      proj: ["*"],
    });
  });

  it("normalizes rectangle corners drawn in any direction", () => {
    const a = addRectangle(emptyBuilder(), { lat: -10, lon: 40 }, { lat: 10, lon: 20 });
    const b = addRectangle(emptyBuilder(), { lat: 10, lon: 20 }, { lat: -10, lon: 40 });
    expect(toVisualJson(a)).toEqual(toVisualJson(b));
  });

  it("blocks empty queries with a hint", () => {
    expect(builderProblems(emptyBuilder())).toHaveLength(1);
  });

  it("validates predicate typing like the server", () => {
    let state = addPredicate(emptyBuilder(), { attr: "speed_kn", op: ">", val: "fast" });
    expect(builderProblems(state).join(" ")).toMatch(/numeric/);
    state = addPredicate(emptyBuilder(), { attr: "name", op: "CONTAINS", val: 7 });
    expect(builderProblems(state).join(" ")).toMatch(/text/);
  });

  it("round-trips through VISUAL-JSON", () => {
    let state = addRectangle(emptyBuilder(), { lat: 5, lon: -5 }, { lat: -5, lon: 5 });
    state = addPredicate(state, { attr: "type", op: "=", val: "cargo" });
    state = { ...state, limit: 9 };
    expect(fromVisualJson(toVisualJson(state))).toEqual(state);
  });
});

describe("QR placard", () => {
  const meta = { qr_screen_px: [40, 472] as [number, number], qr_rendered_side_px: 120, qr_physical_side_m: 0.12 };

  it("payload round-trips and carries the calibration values", () => {
    const payload = buildPlacardPayload("s1", meta);
    const parsed = parsePlacardPayload(payload);
    expect(parsed.session).toBe("s1");
    expect(parsed.qr_screen_px).toEqual(meta.qr_screen_px);
    expect(parsed.qr_rendered_side_px).toBe(meta.qr_rendered_side_px);
    expect(parsed.qr_physical_side_m).toBe(meta.qr_physical_side_m);
  });

  it("refuses a degenerate side", () => {
    expect(() => buildPlacardPayload("s1", { ...meta, qr_rendered_side_px: 0 })).toThrow();
    const fake = { fillRect() {} } as unknown as CanvasRenderingContext2D;
    expect(() => renderPlacard(fake, "x", [0, 0], 0)).toThrow();
  });

  it("pattern is deterministic and payload-sensitive", () => {
    const a = placardMatrix("payload-a");
    const b = placardMatrix("payload-a");
    const c = placardMatrix("payload-b");
    expect(a).toEqual(b);
    expect(a).not.toEqual(c);
  });
});

class FakeSocket implements WebSocketLike {
  sent: string[] = [];
  listeners = new Map<string, ((ev: any) => void)[]>();
  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.emit("close", {});
  }
  addEventListener(type: string, fn: (ev: any) => void): void {
    const list = this.listeners.get(type) ?? [];
    list.push(fn);
    this.listeners.set(type, list);
  }
  emit(type: string, ev: unknown): void {
    for (const fn of this.listeners.get(type) ?? []) fn(ev);
  }
}

function fakeFetch(): typeof fetch {
  return (async () =>
    new Response(JSON.stringify({ dialect: "SPARQL", text: "SELECT ..." }), {
      status: 200,
      headers: { "content-type": "application/json" },
    })) as typeof fetch;
}

describe("display session offline behaviour", () => {
  it("queues only the latest view while disconnected and flushes on welcome", () => {
    const socket = new FakeSocket();
    const session = new DisplaySession({
      baseUrl: "http://example.test",
      webSocketFactory: () => socket,
      fetchFn: fakeFetch(),
      debounceMs: 1,
    });
    // pans before the connection opens: nothing goes out, latest wins
    session.pan(64, 0);
    session.pan(64, 0);
    expect(socket.sent).toHaveLength(0);
    session.connect();
    socket.emit("open", {});
    expect(socket.sent).toHaveLength(1); // just HELLO
    const welcome = {
      type: "WELCOME",
      session: "s1",
      sender: "server",
      seq: 1,
      ts: 0,
      payload: {
        client_id: "c1",
        view: session.view,
        snapshot: [],
        calibration: { qr_screen_px: [40, 472], qr_rendered_side_px: 120, qr_physical_side_m: 0.12 },
      },
    };
    socket.emit("message", { data: JSON.stringify(welcome) });
    const types = socket.sent.map((s) => JSON.parse(s).type);
    expect(types).toEqual(["HELLO", "VIEW_UPDATE"]); // one flush, latest only
  });

  it("debounces builder edits into one QUERY_SUBMIT", async () => {
    const socket = new FakeSocket();
    const session = new DisplaySession({
      baseUrl: "http://example.test",
      webSocketFactory: () => socket,
      fetchFn: fakeFetch(),
      debounceMs: 5,
    });
    session.connect();
    socket.emit("open", {});
    session.clientId = "c1";
    session.editBuilder((s) => addRectangle(s, { lat: 10, lon: 20 }, { lat: -10, lon: 40 }));
    session.editBuilder((s) => addPredicate(s, { attr: "type", op: "=", val: "cargo" }));
    await new Promise((r) => setTimeout(r, 30));
    const submits = socket.sent.filter((s) => JSON.parse(s).type === "QUERY_SUBMIT");
    expect(submits).toHaveLength(1);
    const payload = JSON.parse(submits[0]!).payload;
    expect(payload.dialect).toBe("VISUAL-JSON");
    expect(JSON.parse(payload.text).regions).toHaveLength(1);
  });

  it("clearing the query is blocked client-side with a hint", () => {
    const socket = new FakeSocket();
    const session = new DisplaySession({
      baseUrl: "http://example.test",
      webSocketFactory: () => socket,
      fetchFn: fakeFetch(),
      debounceMs: 1,
    });
    session.connect();
    socket.emit("open", {});
    session.editBuilder(() => emptyBuilder());
    expect(session.builderHint).toMatch(/region or a predicate/);
    const submits = socket.sent.filter((s) => JSON.parse(s).type === "QUERY_SUBMIT");
    expect(submits).toHaveLength(0);
  });

  it("answers server pings", () => {
    const socket = new FakeSocket();
    const session = new DisplaySession({
      baseUrl: "http://example.test",
      webSocketFactory: () => socket,
      fetchFn: fakeFetch(),
    });
    session.connect();
    socket.emit("open", {});
    session.clientId = "c1";
    socket.emit("message", {
      data: JSON.stringify({ type: "PING", session: "s1", sender: "server", seq: 5, ts: 0, payload: {} }),
    });
    expect(socket.sent.map((s) => JSON.parse(s).type)).toContain("PONG");
  });
});
