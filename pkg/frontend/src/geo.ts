/**
 * Pixel math mirror of the server's coordinate conventions: spherical web
 * Mercator, 256 px tiles, screen y down, bearing rotates content clockwise.
 * The formulas must match the server exactly (the server re-derives bounds
 * and rejects VIEW_UPDATEs that disagree beyond 1e-9 degrees).
 */

export interface GeoPoint {
  lat: number;
  lon: number;
}

export interface GeoBounds {
  north_west: GeoPoint;
  south_east: GeoPoint;
}

export interface ViewState {
  bounds: GeoBounds;
  center: GeoPoint;
  zoom: number;
  orientation_deg: number;
  screen_w: number;
  screen_h: number;
}

export const MAX_MERCATOR_LAT = 85.05112878;
const DEG = Math.PI / 180;

export function normMercator(p: GeoPoint): [number, number] {
  let lat = p.lat;
  if (lat > MAX_MERCATOR_LAT) lat = MAX_MERCATOR_LAT;
  if (lat < -MAX_MERCATOR_LAT) lat = -MAX_MERCATOR_LAT;
  const nx = (p.lon + 180.0) / 360.0;
  const ny = (1.0 - Math.log(Math.tan(Math.PI / 4.0 + (lat * DEG) / 2.0)) / Math.PI) / 2.0;
  return [nx, ny];
}

export function unnormMercator(nx: number, ny: number): GeoPoint {
  const clamped = Math.min(Math.max(ny, 0.0), 1.0);
  const yM = (1.0 - 2.0 * clamped) * Math.PI;
  const lat = (2.0 * Math.atan(Math.exp(yM)) - Math.PI / 2.0) / DEG;
  let fx = nx % 1.0;
  if (fx < 0) fx += 1.0;
  // keep exact edges so a full-world view derives west=-180 / east=180
  if (nx === 0.0) fx = 0.0;
  else if (nx === 1.0) fx = 1.0;
  const lon = fx * 360.0 - 180.0;
  return { lat, lon };
}

export function worldSizePx(zoom: number): number {
  return 256.0 * Math.pow(2.0, zoom);
}

/** Axis-aligned geographic bbox of the four screen corners (server rule). */
export function deriveBounds(
  center: GeoPoint,
  zoom: number,
  screenW: number,
  screenH: number,
  orientationDeg: number,
): GeoBounds {
  const [n0x, n0y] = normMercator(center);
  const world = worldSizePx(zoom);
  const theta = (((orientationDeg % 360) + 360) % 360) * DEG;
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  const lats: number[] = [];
  const lons: number[] = [];
  for (const [px, py] of [
    [0, 0],
    [screenW, 0],
    [0, screenH],
    [screenW, screenH],
  ] as const) {
    const ox = px - screenW / 2.0;
    const oy = py - screenH / 2.0;
    const nx = Math.min(Math.max(n0x + (c * ox + s * oy) / world, 0.0), 1.0);
    const ny = Math.min(Math.max(n0y + (-s * ox + c * oy) / world, 0.0), 1.0);
    lats.push(unnormMercator(nx, ny).lat);
    lons.push(nx * 360.0 - 180.0);
  }
  return {
    north_west: { lat: Math.max(...lats), lon: Math.min(...lons) },
    south_east: { lat: Math.min(...lats), lon: Math.max(...lons) },
  };
}

export function viewFromCamera(
  center: GeoPoint,
  zoom: number,
  screenW: number,
  screenH: number,
  orientationDeg = 0.0,
): ViewState {
  const bearing = ((orientationDeg % 360) + 360) % 360;
  return {
    bounds: deriveBounds(center, zoom, screenW, screenH, bearing),
    center,
    zoom,
    orientation_deg: bearing,
    screen_w: screenW,
    screen_h: screenH,
  };
}

export function geoToScreen(view: ViewState, p: GeoPoint): [number, number] {
  const [nx, ny] = normMercator(p);
  const [n0x, n0y] = normMercator(view.center);
  const world = worldSizePx(view.zoom);
  const dx = (nx - n0x) * world;
  const dy = (ny - n0y) * world;
  const theta = view.orientation_deg * DEG;
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  return [view.screen_w / 2.0 + c * dx - s * dy, view.screen_h / 2.0 + s * dx + c * dy];
}

export function screenToGeo(view: ViewState, px: [number, number]): GeoPoint {
  const ox = px[0] - view.screen_w / 2.0;
  const oy = px[1] - view.screen_h / 2.0;
  const theta = view.orientation_deg * DEG;
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  const world = worldSizePx(view.zoom);
  const [n0x, n0y] = normMercator(view.center);
  return unnormMercator(n0x + (c * ox + s * oy) / world, n0y + (-s * ox + c * oy) / world);
}

/** Pan so the content follows a drag of (dxPx, dyPx); centre moves opposite. */
export function panned(view: ViewState, dxPx: number, dyPx: number): ViewState {
  const theta = view.orientation_deg * DEG;
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  const world = worldSizePx(view.zoom);
  const [n0x, n0y] = normMercator(view.center);
  const nx = n0x - (c * dxPx + s * dyPx) / world;
  const ny = n0y - (-s * dxPx + c * dyPx) / world;
  const center = unnormMercator(nx, Math.min(Math.max(ny, 0.0), 1.0));
  return viewFromCamera(center, view.zoom, view.screen_w, view.screen_h, view.orientation_deg);
}

/** Zoom by log2(scaleRatio), keeping the geography under midPx fixed. */
export function pinched(view: ViewState, scaleRatio: number, midPx: [number, number]): ViewState {
  const zoom = Math.max(view.zoom + Math.log2(scaleRatio), 0.0);
  const theta = view.orientation_deg * DEG;
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  const ox = midPx[0] - view.screen_w / 2.0;
  const oy = midPx[1] - view.screen_h / 2.0;
  const ux = c * ox + s * oy;
  const uy = -s * ox + c * oy;
  const [n0x, n0y] = normMercator(view.center);
  const anchorX = n0x + ux / worldSizePx(view.zoom);
  const anchorY = n0y + uy / worldSizePx(view.zoom);
  const nx = anchorX - ux / worldSizePx(zoom);
  const ny = anchorY - uy / worldSizePx(zoom);
  const center = unnormMercator(nx, Math.min(Math.max(ny, 0.0), 1.0));
  return viewFromCamera(center, zoom, view.screen_w, view.screen_h, view.orientation_deg);
}
