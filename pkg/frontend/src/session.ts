/**
 * Shared-display session state: one websocket to the server, the local
 * view (this client is the authority), the query builder model, the text
 * editor and the marker layer.
 *
 * Sync rules:
 *  - every finished pan/pinch sends a full consistent VIEW_UPDATE; while
 *    disconnected only the latest view is queued and flushed on reconnect;
 *  - builder edits debounce (150 ms) into a VISUAL-JSON QUERY_SUBMIT and
 *    markers redraw from each QUERY_RESULT;
 *  - editing the text editor regenerates the builder through the server's
 *    /translate endpoint and vice versa (the server owns the grammar);
 *  - server ERRORs are kept with their request id so the UI can surface
 *    them at the offending widget.
 */

import {
  type GeoPoint,
  type ViewState,
  geoToScreen,
  panned,
  pinched,
  viewFromCamera,
} from "./geo.js";
import {
  type BuilderState,
  builderProblems,
  emptyBuilder,
  fromVisualJson,
  toVisualJson,
} from "./queryBuilder.js";
import {
  type ARObjectMsg,
  type CalibrationMeta,
  type Envelope,
  type ErrorPayload,
  type HelloPayload,
  type QueryResultPayload,
  type WelcomePayload,
  SUBPROTOCOL,
  WS_PATH,
  encodeEnvelope,
  makeEnvelope,
  parseEnvelope,
} from "./protocol.js";

/** Minimal websocket surface so tests can inject the `ws` package. */
export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open" | "message" | "close" | "error", fn: (ev: any) => void): void;
}

export type WebSocketFactory = (url: string, protocols: string[]) => WebSocketLike;

export interface Marker {
  id: string;
  geo: GeoPoint;
  px: [number, number];
  attrs: Record<string, string | number>;
}

export interface InlineError {
  code: string;
  detail: string;
  requestId: string | null;
  position: number | null;
}

export interface SessionOptions {
  baseUrl: string; // http(s)://host:port
  session?: string;
  name?: string;
  screenW?: number;
  screenH?: number;
  debounceMs?: number;
  webSocketFactory?: WebSocketFactory;
  fetchFn?: typeof fetch;
  onChange?: () => void;
}

const DEFAULT_VIEW_ZOOM = 1.0;

export class DisplaySession {
  readonly session: string;
  readonly name: string;
  status: "idle" | "connecting" | "connected" | "closed" = "idle";
  clientId = "";
  view: ViewState;
  builder: BuilderState = emptyBuilder();
  editorText = "";
  markers: Marker[] = [];
  lastTotal = 0;
  objects = new Map<string, ARObjectMsg>();
  calibration: CalibrationMeta | null = null;
  errors: InlineError[] = [];
  builderHint: string | null = null;
  warningBanner: string | null = null;

  private readonly baseUrl: string;
  private readonly debounceMs: number;
  private readonly makeWs: WebSocketFactory;
  private readonly fetchFn: typeof fetch;
  private readonly onChange: () => void;
  private ws: WebSocketLike | null = null;
  private seq = 0;
  private requestN = 0;
  private pendingView: ViewState | null = null; // latest-only offline queue
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private resultWaiters: ((payload: QueryResultPayload | ErrorPayload) => void)[] = [];
  private welcomeWaiters: (() => void)[] = [];

  constructor(opts: SessionOptions) {
    this.baseUrl = opts.baseUrl.replace(/\/$/, "");
    this.session = opts.session ?? "s1";
    this.name = opts.name ?? "shared-display";
    this.debounceMs = opts.debounceMs ?? 150;
    this.makeWs =
      opts.webSocketFactory ??
      ((url, protocols) => new WebSocket(url, protocols) as unknown as WebSocketLike);
    this.fetchFn = opts.fetchFn ?? fetch.bind(globalThis);
    this.onChange = opts.onChange ?? (() => undefined);
    this.view = viewFromCamera(
      { lat: 0, lon: 0 },
      DEFAULT_VIEW_ZOOM,
      opts.screenW ?? 512,
      opts.screenH ?? 512,
    );
  }

  // -- connection -----------------------------------------------------------

  connect(): void {
    this.status = "connecting";
    const wsUrl = this.baseUrl.replace(/^http/, "ws") + WS_PATH;
    const ws = this.makeWs(wsUrl, [SUBPROTOCOL]);
    this.ws = ws;
    ws.addEventListener("open", () => {
      this.status = "connected";
      const hello: HelloPayload = { role: "SHARED_DISPLAY", name: this.name, subscribe_view: true };
      this.send("HELLO", hello);
      this.onChange();
    });
    ws.addEventListener("message", (ev: { data: unknown }) => {
      this.handleFrame(String(ev.data));
    });
    ws.addEventListener("close", () => {
      this.status = "closed";
      this.clientId = "";
      this.onChange();
    });
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
    this.status = "closed";
  }

  whenWelcomed(): Promise<void> {
    if (this.clientId) return Promise.resolve();
    return new Promise((resolve) => this.welcomeWaiters.push(resolve));
  }

  private send(type: string, payload: unknown): void {
    if (this.status !== "connected" || this.ws === null) return;
    this.seq += 1;
    this.ws.send(encodeEnvelope(makeEnvelope(type, this.session, this.clientId, this.seq, payload)));
  }

  // -- inbound ---------------------------------------------------------------

  private handleFrame(data: string): void {
    let env: Envelope;
    try {
      env = parseEnvelope(data);
    } catch {
      return;
    }
    switch (env.type) {
      case "WELCOME": {
        const welcome = env.payload as WelcomePayload;
        this.clientId = welcome.client_id;
        this.calibration = welcome.calibration;
        this.objects = new Map(welcome.snapshot.map((o) => [o.object_id, o]));
        // the SD is authoritative for the view, but adopt the server's on join
        this.view = viewFromCamera(
          welcome.view.center,
          welcome.view.zoom,
          this.view.screen_w,
          this.view.screen_h,
          welcome.view.orientation_deg,
        );
        this.flushPendingView();
        for (const waiter of this.welcomeWaiters.splice(0)) waiter();
        break;
      }
      case "VIEW_UPDATE": {
        // not expected (we are the authority) but applied if received
        const view = env.payload as ViewState;
        this.view = view;
        this.reprojectMarkers();
        break;
      }
      case "QUERY_RESULT": {
        const result = env.payload as QueryResultPayload;
        this.lastTotal = result.total;
        this.markers = result.records.map((r) => ({
          id: r.id,
          geo: { lat: r.lat, lon: r.lon },
          px: geoToScreen(this.view, { lat: r.lat, lon: r.lon }),
          attrs: r.attrs,
        }));
        for (const waiter of this.resultWaiters.splice(0)) waiter(result);
        break;
      }
      case "OBJECT_SPAWN": {
        const obj = (env.payload as { object: ARObjectMsg }).object;
        const existing = this.objects.get(obj.object_id);
        if (!existing || existing.version < obj.version) this.objects.set(obj.object_id, obj);
        break;
      }
      case "OBJECT_UPDATE": {
        const update = env.payload as { object_id: string; version: number; fields: Record<string, unknown> };
        const existing = this.objects.get(update.object_id);
        if (existing && update.version > existing.version) {
          const merged: ARObjectMsg = { ...existing, version: update.version };
          const fields = update.fields;
          if (fields.geo !== undefined && fields.geo !== null) {
            merged.geo = fields.geo as GeoPoint;
            merged.screen_px = null;
          }
          if (fields.screen_px !== undefined && fields.screen_px !== null) {
            merged.screen_px = fields.screen_px as [number, number];
            merged.geo = null;
          }
          if (fields.altitude_m !== undefined) merged.altitude_m = fields.altitude_m as number;
          if (fields.attrs !== undefined) {
            merged.attrs = { ...existing.attrs, ...(fields.attrs as Record<string, unknown>) };
          }
          this.objects.set(update.object_id, merged);
        }
        break;
      }
      case "OBJECT_DESPAWN": {
        this.objects.delete((env.payload as { object_id: string }).object_id);
        break;
      }
      case "INTERACTION": {
        // SELECT_REGION forwarded from an AR client or the table: add it
        const inter = env.payload as { kind: string; data: { region?: { nw: [number, number]; se: [number, number] } } };
        if (inter.kind === "SELECT_REGION" && inter.data.region) {
          this.builder = {
            ...this.builder,
            regions: [...this.builder.regions, { nw: inter.data.region.nw, se: inter.data.region.se }],
          };
          this.queueSubmit();
        }
        break;
      }
      case "ERROR": {
        const err = env.payload as ErrorPayload;
        const position = /offset (\d+)/.exec(err.detail);
        this.errors.push({
          code: err.code,
          detail: err.detail,
          requestId: err.request_id,
          position: position ? Number(position[1]) : null,
        });
        for (const waiter of this.resultWaiters.splice(0)) waiter(err);
        break;
      }
      case "PING": {
        this.send("PONG", {});
        break;
      }
      default:
        break;
    }
    this.onChange();
  }

  // -- view gestures -----------------------------------------------------------

  /** Drag by (dx, dy) px; ends by broadcasting the full consistent view. */
  pan(dxPx: number, dyPx: number): void {
    this.view = panned(this.view, dxPx, dyPx);
    this.reprojectMarkers();
    this.sendView();
  }

  /** Pinch by a scale ratio about a screen midpoint (ratio 2 = zoom +1). */
  pinch(scaleRatio: number, midPx: [number, number]): void {
    this.view = pinched(this.view, scaleRatio, midPx);
    this.reprojectMarkers();
    this.sendView();
  }

  setCamera(center: GeoPoint, zoom: number, orientationDeg = 0): void {
    this.view = viewFromCamera(center, zoom, this.view.screen_w, this.view.screen_h, orientationDeg);
    this.reprojectMarkers();
    this.sendView();
  }

  private sendView(): void {
    if (this.status !== "connected") {
      this.pendingView = this.view; // latest-only while offline
      return;
    }
    this.send("VIEW_UPDATE", this.view);
  }

  private flushPendingView(): void {
    if (this.pendingView !== null && this.status === "connected") {
      this.send("VIEW_UPDATE", this.pendingView);
      this.pendingView = null;
    }
  }

  private reprojectMarkers(): void {
    for (const marker of this.markers) {
      marker.px = geoToScreen(this.view, marker.geo);
    }
  }

  // -- query building -------------------------------------------------------------

  /** Apply a builder mutation; schedules a debounced submit when runnable. */
  editBuilder(mutate: (state: BuilderState) => BuilderState): void {
    this.builder = mutate(this.builder);
    this.builderHint = null;
    const problems = builderProblems(this.builder);
    if (problems.length > 0) {
      this.builderHint = problems.join("; ");
      if (this.builder.regions.length === 0 && this.builder.preds.length === 0) {
        this.markers = [];
        this.lastTotal = 0;
      }
      this.onChange();
      return; // blocked client-side, nothing sent
    }
    void this.syncEditorFromBuilder();
    this.queueSubmit();
  }

  private queueSubmit(): void {
    if (this.debounceTimer !== null) clearTimeout(this.debounceTimer);
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      this.submitBuilder();
    }, this.debounceMs);
  }

  /** Immediate submit (the debounce calls this; tests may too). */
  submitBuilder(): string | null {
    const problems = builderProblems(this.builder);
    if (problems.length > 0) {
      this.builderHint = problems.join("; ");
      this.onChange();
      return null;
    }
    this.requestN += 1;
    const requestId = `ui-${this.requestN}`;
    this.send("QUERY_SUBMIT", {
      request_id: requestId,
      dialect: "VISUAL-JSON",
      text: toVisualJson(this.builder),
      spawn: true,
    });
    return requestId;
  }

  awaitResult(): Promise<QueryResultPayload | ErrorPayload> {
    return new Promise((resolve) => this.resultWaiters.push(resolve));
  }

  // -- text editor sync --------------------------------------------------------------

  /** The text editor edge: translate SPARQL to the builder model. */
  async editText(sparql: string): Promise<void> {
    this.editorText = sparql;
    const response = await this.translate("SPARQL", sparql, "VISUAL-JSON");
    if ("error" in response) {
      this.errors.push({
        code: response.error.code,
        detail: response.error.detail,
        requestId: null,
        position: response.error.position ?? null,
      });
      this.onChange();
      return;
    }
    this.builder = fromVisualJson(response.text);
    this.builderHint = null;
    this.queueSubmit();
    this.onChange();
  }

  private async syncEditorFromBuilder(): Promise<void> {
    const response = await this.translate("VISUAL-JSON", toVisualJson(this.builder), "SPARQL");
    if (!("error" in response)) {
      this.editorText = response.text;
      this.onChange();
    }
  }

  async translate(
    dialect: string,
    text: string,
    target: string,
  ): Promise<{ dialect: string; text: string } | { error: { code: string; detail: string; position?: number } }> {
    const resp = await this.fetchFn(`${this.baseUrl}/translate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ dialect, text, target }),
    });
    return (await resp.json()) as
      | { dialect: string; text: string }
      | { error: { code: string; detail: string; position?: number } };
  }
}
