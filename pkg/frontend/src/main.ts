/**
 * Browser entry: canvas map pane with marker layer and QR placard, a
 * minimal rectangle/chip query builder and the SPARQL text editor.
 * Server address and session come from URL query params:
 *   index.html?server=http://127.0.0.1:8787&session=s1
 */

import { geoToScreen, screenToGeo } from "./geo.js";
import { buildPlacardPayload, renderPlacard } from "./qrPlacard.js";
import { addPredicate, addRectangle, emptyBuilder } from "./queryBuilder.js";
import { DisplaySession } from "./session.js";

const params = new URLSearchParams(location.search);
const server = params.get("server") ?? `http://${location.hostname}:8787`;
const sessionId = params.get("session") ?? "s1";

const canvas = document.getElementById("map") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const editorEl = document.getElementById("editor") as HTMLTextAreaElement;
const hintEl = document.getElementById("hint")!;
const chipsEl = document.getElementById("chips")!;
const bannerEl = document.getElementById("banner")!;

const session = new DisplaySession({
  baseUrl: server,
  session: sessionId,
  screenW: canvas.width,
  screenH: canvas.height,
  onChange: render,
});

const TILE_URL = params.get("tiles"); // e.g. https://tile.example/{z}/{x}/{y}.png
const tileCache = new Map<string, HTMLImageElement>();

function drawTilesOrGrid(): void {
  ctx.fillStyle = "#0b2239";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (TILE_URL) {
    const z = Math.round(session.view.zoom);
    const n = 2 ** z;
    for (let x = 0; x < n; x++) {
      for (let y = 0; y < n; y++) {
        const key = `${z}/${x}/${y}`;
        let img = tileCache.get(key);
        if (!img) {
          img = new Image();
          img.src = TILE_URL.replace("{z}", String(z)).replace("{x}", String(x)).replace("{y}", String(y));
          img.onload = render;
          tileCache.set(key, img);
        }
        if (img.complete && img.naturalWidth > 0) {
          const nw = screenCornerOfTile(x, y, z);
          const se = screenCornerOfTile(x + 1, y + 1, z);
          ctx.drawImage(img, nw[0], nw[1], se[0] - nw[0], se[1] - nw[1]);
        }
      }
    }
  }
  // graticule
  ctx.strokeStyle = "rgba(255,255,255,0.25)";
  ctx.beginPath();
  for (let lon = -180; lon <= 180; lon += 30) {
    const top = geoToScreen(session.view, { lat: 80, lon });
    const bottom = geoToScreen(session.view, { lat: -80, lon });
    ctx.moveTo(top[0], top[1]);
    ctx.lineTo(bottom[0], bottom[1]);
  }
  for (let lat = -80; lat <= 80; lat += 20) {
    const left = geoToScreen(session.view, { lat, lon: -180 });
    const right = geoToScreen(session.view, { lat, lon: 180 });
    ctx.moveTo(left[0], left[1]);
    ctx.lineTo(right[0], right[1]);
  }
  ctx.stroke();
}

function screenCornerOfTile(x: number, y: number, z: number): [number, number] {
  const world = 256 * 2 ** session.view.zoom;
  const scale = world / (256 * 2 ** z);
  const [cx, cy] = geoToScreen(session.view, { lat: 0, lon: 0 });
  const worldOrigin: [number, number] = [cx - world / 2, cy - world / 2];
  return [worldOrigin[0] + x * 256 * scale, worldOrigin[1] + y * 256 * scale];
}

function render(): void {
  drawTilesOrGrid();
  // selected regions
  ctx.strokeStyle = "#53d2fa";
  ctx.lineWidth = 1.5;
  for (const region of session.builder.regions) {
    const a = geoToScreen(session.view, { lat: region.nw[0], lon: region.nw[1] });
    const b = geoToScreen(session.view, { lat: region.se[0], lon: region.se[1] });
    ctx.strokeRect(a[0], a[1], b[0] - a[0], b[1] - a[1]);
  }
  // markers from the last result
  ctx.fillStyle = "#ffd166";
  for (const marker of session.markers) {
    ctx.beginPath();
    ctx.arc(marker.px[0], marker.px[1], 4, 0, Math.PI * 2);
    ctx.fill();
  }
  // QR placard, bottom-left by default (server tells us where)
  if (session.calibration) {
    try {
      renderPlacard(
        ctx,
        buildPlacardPayload(session.session, session.calibration),
        session.calibration.qr_screen_px,
        session.calibration.qr_rendered_side_px,
      );
      bannerEl.textContent = "";
    } catch (e) {
      bannerEl.textContent = `QR placard refused: ${(e as Error).message}`;
    }
  }
  statusEl.textContent =
    `${session.status} ${session.clientId} | zoom ${session.view.zoom.toFixed(2)} | ` +
    `${session.markers.length}/${session.lastTotal} markers`;
  hintEl.textContent = session.builderHint ?? "";
  const lastError = session.errors[session.errors.length - 1];
  if (lastError) {
    hintEl.textContent = `${lastError.code}: ${lastError.detail}`;
  }
  chipsEl.textContent = session.builder.preds.map((p) => `${p.attr} ${p.op} ${p.val}`).join("  ");
}

// pan, rectangle selection (shift-drag) and wheel zoom
let dragStart: [number, number] | null = null;
let shiftDrag = false;
canvas.addEventListener("pointerdown", (ev) => {
  dragStart = [ev.offsetX, ev.offsetY];
  shiftDrag = ev.shiftKey;
});
canvas.addEventListener("pointerup", (ev) => {
  if (!dragStart) return;
  const end: [number, number] = [ev.offsetX, ev.offsetY];
  if (shiftDrag) {
    const a = screenToGeo(session.view, dragStart);
    const b = screenToGeo(session.view, end);
    session.editBuilder((state) => addRectangle(state, a, b));
  } else {
    session.pan(end[0] - dragStart[0], end[1] - dragStart[1]);
  }
  dragStart = null;
});
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const ratio = ev.deltaY < 0 ? 2 : 0.5;
  session.pinch(ratio, [ev.offsetX, ev.offsetY]);
});

editorEl.addEventListener("change", () => {
  void session.editText(editorEl.value);
});

document.getElementById("add-chip")!.addEventListener("click", () => {
  const attr = (document.getElementById("chip-attr") as HTMLInputElement).value;
  const op = (document.getElementById("chip-op") as HTMLSelectElement).value;
  const raw = (document.getElementById("chip-val") as HTMLInputElement).value;
  const val = raw !== "" && !Number.isNaN(Number(raw)) ? Number(raw) : raw;
  session.editBuilder((state) => addPredicate(state, { attr, op: op as never, val }));
});

document.getElementById("clear")!.addEventListener("click", () => {
  session.editBuilder(() => emptyBuilder());
});

session.connect();
render();
