/**
 * QR alignment placard: encodes the session id and the QR placement so AR
 * headsets can calibrate against the rendered code. The payload must match
 * the server's calibration values exactly; the visual pattern here is a
 * deterministic placeholder grid (headsets in this project are simulated
 * and receive the pose as scenario input, so no real QR symbology is
 * required for alignment testing).
 */

import type { CalibrationMeta } from "./protocol.js";

export interface PlacardPayload {
  session: string;
  qr_screen_px: [number, number];
  qr_rendered_side_px: number;
  qr_physical_side_m: number;
}

export function buildPlacardPayload(session: string, meta: CalibrationMeta): string {
  if (meta.qr_rendered_side_px <= 0 || meta.qr_physical_side_m <= 0) {
    throw new Error("QR side lengths must be positive");
  }
  const payload: PlacardPayload = {
    session,
    qr_screen_px: meta.qr_screen_px,
    qr_rendered_side_px: meta.qr_rendered_side_px,
    qr_physical_side_m: meta.qr_physical_side_m,
  };
  return JSON.stringify(payload);
}

export function parsePlacardPayload(text: string): PlacardPayload {
  const doc = JSON.parse(text) as PlacardPayload;
  if (
    typeof doc.session !== "string" ||
    !Array.isArray(doc.qr_screen_px) ||
    doc.qr_screen_px.length !== 2 ||
    typeof doc.qr_rendered_side_px !== "number" ||
    typeof doc.qr_physical_side_m !== "number"
  ) {
    throw new Error("bad placard payload");
  }
  if (doc.qr_rendered_side_px <= 0 || doc.qr_physical_side_m <= 0) {
    throw new Error("QR side lengths must be positive");
  }
  return doc;
}

/** Deterministic bit matrix for the placeholder pattern (FNV-1a stream). */
export function placardMatrix(payload: string, modules = 21): boolean[][] {
  let hash = 0x811c9dc5;
  const bits: boolean[][] = [];
  let byte = 0;
  for (let y = 0; y < modules; y++) {
    const row: boolean[] = [];
    for (let x = 0; x < modules; x++) {
      hash ^= payload.charCodeAt(byte % payload.length) + x * 31 + y * 131;
      hash = Math.imul(hash, 0x01000193) >>> 0;
      byte++;
      row.push((hash & 0x80000) !== 0);
    }
    bits.push(row);
  }
  // finder-style corners so the placard reads as a code at a glance
  const finder = (cx: number, cy: number) => {
    for (let y = 0; y < 7; y++) {
      for (let x = 0; x < 7; x++) {
        const edge = x === 0 || y === 0 || x === 6 || y === 6;
        const core = x >= 2 && x <= 4 && y >= 2 && y <= 4;
        bits[cy + y]![cx + x] = edge || core;
      }
    }
  };
  finder(0, 0);
  finder(modules - 7, 0);
  finder(0, modules - 7);
  return bits;
}

/** Draw the placard onto a canvas at the configured position and side. */
export function renderPlacard(
  ctx: CanvasRenderingContext2D,
  payload: string,
  centerPx: [number, number],
  sidePx: number,
): void {
  if (sidePx <= 0) throw new Error("QR side must be positive");
  const matrix = placardMatrix(payload);
  const modules = matrix.length;
  const cell = sidePx / modules;
  const left = centerPx[0] - sidePx / 2;
  const top = centerPx[1] - sidePx / 2;
  ctx.fillStyle = "#fff";
  ctx.fillRect(left - 4, top - 4, sidePx + 8, sidePx + 8);
  ctx.fillStyle = "#000";
  for (let y = 0; y < modules; y++) {
    for (let x = 0; x < modules; x++) {
      if (matrix[y]![x]) ctx.fillRect(left + x * cell, top + y * cell, cell + 0.5, cell + 0.5);
    }
  }
}
