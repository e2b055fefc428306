import { describe, expect, it } from "vitest";

import {
  deriveBounds,
  geoToScreen,
  panned,
  pinched,
  screenToGeo,
  viewFromCamera,
} from "../src/geo.js";

const VIEW = viewFromCamera({ lat: 0, lon: 0 }, 1, 512, 512, 0);

describe("pixel math mirrors the server", () => {
  it("maps the centre to the screen centre", () => {
    expect(geoToScreen(VIEW, { lat: 0, lon: 0 })).toEqual([256, 256]);
  });

  it("maps lon 90 a quarter world east (+128 px)", () => {
    const [x, y] = geoToScreen(VIEW, { lat: 0, lon: 90 });
    expect(x).toBeCloseTo(384, 9);
    expect(y).toBeCloseTo(256, 9);
  });

  it("rotates content clockwise with bearing 90", () => {
    const rotated = viewFromCamera({ lat: 0, lon: 0 }, 1, 512, 512, 90);
    const [x, y] = geoToScreen(rotated, { lat: 0, lon: 90 });
    expect(x).toBeCloseTo(256, 6);
    expect(y).toBeCloseTo(384, 6);
  });

  it("screenToGeo inverts geoToScreen", () => {
    const p = screenToGeo(VIEW, [384, 256]);
    expect(p.lat).toBeCloseTo(0, 7);
    expect(p.lon).toBeCloseTo(90, 7);
    for (const candidate of [
      { lat: 33.1, lon: -120.4 },
      { lat: -55.0, lon: 9.25 },
    ]) {
      const view = viewFromCamera({ lat: 12, lon: -30 }, 4, 800, 600, 37);
      const roundTrip = screenToGeo(view, geoToScreen(view, candidate));
      expect(roundTrip.lat).toBeCloseTo(candidate.lat, 9);
      expect(roundTrip.lon).toBeCloseTo(candidate.lon, 9);
    }
  });

  it("derives full-world bounds for the zoom-1 512px view", () => {
    const bounds = deriveBounds({ lat: 0, lon: 0 }, 1, 512, 512, 0);
    expect(bounds.north_west.lon).toBe(-180);
    expect(bounds.south_east.lon).toBe(180);
    expect(bounds.north_west.lat).toBeCloseTo(85.05112878, 5);
  });

  it("pan of +128 px moves the centre 90 degrees west", () => {
    const view = panned(VIEW, 128, 0);
    expect(view.center.lon).toBeCloseTo(-90, 9);
    expect(view.center.lat).toBeCloseTo(0, 9);
  });

  it("pinch doubling the scale adds exactly one zoom level", () => {
    const view = pinched(VIEW, 2, [256, 256]);
    expect(view.zoom).toBeCloseTo(2, 9);
    expect(view.center.lat).toBeCloseTo(0, 9);
    expect(view.center.lon).toBeCloseTo(0, 9);
  });

  it("pinch keeps the geography under the midpoint fixed", () => {
    const before = screenToGeo(VIEW, [384, 200]);
    const view = pinched(VIEW, 2, [384, 200]);
    const after = screenToGeo(view, [384, 200]);
    expect(after.lat).toBeCloseTo(before.lat, 9);
    expect(after.lon).toBeCloseTo(before.lon, 9);
  });
});
