/**
 * Wire contract (surface-sync.v1): envelope construction and parsing for
 * the message types the shared display sends and receives. Schemas follow
 * docs/protocol.md; every outgoing frame must decode strictly server-side.
 */

import type { GeoPoint, ViewState } from "./geo.js";

export const SUBPROTOCOL = "surface-sync.v1";
export const WS_PATH = "/ws";

export type Dialect = "SPARQL" | "SQL" | "VISUAL-JSON";
export type Scope = "SHARED" | "PRIVATE";
export type ObjectKind = "VESSEL_MARKER" | "ARC_CONNECTOR" | "DETAIL_PANEL" | "MENU";

export interface Envelope<P = unknown> {
  type: string;
  session: string;
  sender: string;
  seq: number;
  ts: number;
  payload: P;
}

export interface HelloPayload {
  role: "SHARED_DISPLAY" | "AR_CLIENT" | "EXTERNAL_DEVICE";
  name: string;
  subscribe_view: boolean;
}

export interface CalibrationMeta {
  qr_screen_px: [number, number];
  qr_rendered_side_px: number;
  qr_physical_side_m: number;
}

export interface ARObjectMsg {
  object_id: string;
  kind: ObjectKind;
  geo: GeoPoint | null;
  screen_px: [number, number] | null;
  altitude_m: number;
  scope: Scope;
  owner: string | null;
  version: number;
  attrs: Record<string, unknown>;
}

export interface WelcomePayload {
  client_id: string;
  view: ViewState;
  snapshot: ARObjectMsg[];
  calibration: CalibrationMeta;
}

export interface QuerySubmitPayload {
  request_id: string;
  dialect: Dialect;
  text: string;
  spawn: boolean;
}

export interface WireRecord {
  id: string;
  lat: number;
  lon: number;
  ts: string;
  attrs: Record<string, string | number>;
}

export interface QueryResultPayload {
  request_id: string;
  total: number;
  records: WireRecord[];
}

export interface ObjectSpawnPayload {
  object: ARObjectMsg;
}

export interface ObjectUpdatePayload {
  object_id: string;
  version: number;
  fields: Record<string, unknown>;
}

export interface ObjectDespawnPayload {
  object_id: string;
}

export interface InteractionPayload {
  kind: "GRAB" | "RELEASE" | "MENU_OPEN" | "SELECT_REGION";
  target: string | null;
  data: Record<string, unknown>;
}

export interface ErrorPayload {
  code: string;
  detail: string;
  request_id: string | null;
}

const KNOWN_TYPES = new Set([
  "HELLO", "WELCOME", "VIEW_UPDATE", "QUERY_SUBMIT", "QUERY_RESULT",
  "OBJECT_SPAWN", "OBJECT_UPDATE", "OBJECT_DESPAWN", "INTERACTION",
  "ERROR", "PING", "PONG",
]);

export function makeEnvelope<P>(type: string, session: string, sender: string, seq: number, payload: P): Envelope<P> {
  return { type, session, sender, seq, ts: Date.now(), payload };
}

export function encodeEnvelope(env: Envelope): string {
  // field order matters for canonical form; JSON.stringify preserves
  // object-literal insertion order
  return JSON.stringify({
    type: env.type,
    session: env.session,
    sender: env.sender,
    seq: env.seq,
    ts: env.ts,
    payload: env.payload,
  });
}

export class ProtocolError extends Error {}

export function parseEnvelope(data: string): Envelope {
  let doc: unknown;
  try {
    doc = JSON.parse(data);
  } catch (e) {
    throw new ProtocolError(`malformed frame: ${(e as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ProtocolError("frame must be an object");
  }
  const env = doc as Record<string, unknown>;
  if (typeof env.type !== "string" || !KNOWN_TYPES.has(env.type)) {
    throw new ProtocolError(`unknown type ${String(env.type)}`);
  }
  for (const key of ["session", "sender"]) {
    if (typeof env[key] !== "string") throw new ProtocolError(`${key} must be a string`);
  }
  for (const key of ["seq", "ts"]) {
    if (typeof env[key] !== "number") throw new ProtocolError(`${key} must be a number`);
  }
  if (typeof env.payload !== "object" || env.payload === null) {
    throw new ProtocolError("payload must be an object");
  }
  return env as unknown as Envelope;
}
