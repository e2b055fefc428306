/**
 * Visual query builder model: rectangle regions + predicate chips, emitted
 * as VISUAL-JSON (v1). The server canonicalizes; the builder only has to
 * produce a valid document and block unrunnable queries client-side.
 */

export type Op = "=" | "!=" | "<" | "<=" | ">" | ">=" | "CONTAINS";

export interface Region {
  nw: [number, number]; // [lat, lon]
  se: [number, number];
}

export interface PredicateChip {
  attr: string;
  op: Op;
  val: string | number;
}

export interface BuilderState {
  regions: Region[];
  preds: PredicateChip[];
  proj: string[];
  limit: number | null;
}

const ATTR_RE = /^[A-Za-z_][A-Za-z0-9_]*$/;
const NUMERIC_OPS: Op[] = ["<", "<=", ">", ">="];

export function emptyBuilder(): BuilderState {
  return { regions: [], preds: [], proj: ["*"], limit: null };
}

export function addRegion(state: BuilderState, nw: [number, number], se: [number, number]): BuilderState {
  if (nw[0] < se[0]) throw new Error("north edge below south edge");
  if (nw[1] > se[1]) throw new Error("west edge east of east edge");
  return { ...state, regions: [...state.regions, { nw, se }] };
}

/** Rectangle drawn on screen, converted by the caller to geo corners. */
export function addRectangle(
  state: BuilderState,
  cornerA: { lat: number; lon: number },
  cornerB: { lat: number; lon: number },
): BuilderState {
  const nw: [number, number] = [Math.max(cornerA.lat, cornerB.lat), Math.min(cornerA.lon, cornerB.lon)];
  const se: [number, number] = [Math.min(cornerA.lat, cornerB.lat), Math.max(cornerA.lon, cornerB.lon)];
  return addRegion(state, nw, se);
}

export function removeRegion(state: BuilderState, index: number): BuilderState {
  return { ...state, regions: state.regions.filter((_, i) => i !== index) };
}

export function addPredicate(state: BuilderState, chip: PredicateChip): BuilderState {
  return { ...state, preds: [...state.preds, chip] };
}

export function removePredicate(state: BuilderState, index: number): BuilderState {
  return { ...state, preds: state.preds.filter((_, i) => i !== index) };
}

/** Mirror of the server-side validation; empty result means runnable. */
export function builderProblems(state: BuilderState): string[] {
  const problems: string[] = [];
  if (state.regions.length === 0 && state.preds.length === 0) {
    problems.push("add a region or a predicate first");
  }
  for (const p of state.preds) {
    if (!ATTR_RE.test(p.attr)) problems.push(`bad attribute name '${p.attr}'`);
    if (p.op === "CONTAINS" && typeof p.val !== "string") {
      problems.push(`CONTAINS on '${p.attr}' needs a text value`);
    }
    if (NUMERIC_OPS.includes(p.op) && typeof p.val !== "number") {
      problems.push(`${p.op} on '${p.attr}' needs a numeric value`);
    }
  }
  if (state.limit !== null && (!Number.isInteger(state.limit) || state.limit < 1)) {
    problems.push("limit must be a positive integer");
  }
  return problems;
}

/** VISUAL-JSON v1 document for QUERY_SUBMIT / the translate endpoint. */
export function toVisualJson(state: BuilderState): string {
  const doc: Record<string, unknown> = {
    v: 1,
    regions: state.regions.map((r) => ({ nw: r.nw, se: r.se })),
    preds: state.preds.map((p) => ({ attr: p.attr, op: p.op, val: p.val })),
    proj: state.proj,
  };
  if (state.limit !== null) doc.limit = state.limit;
  return JSON.stringify(doc);
}

/** Rebuild the builder model from (canonical) VISUAL-JSON. */
export function fromVisualJson(text: string): BuilderState {
  const doc = JSON.parse(text) as {
    v: number;
    regions?: { nw: [number, number]; se: [number, number] }[];
    preds?: { attr: string; op: Op; val: string | number }[];
    proj?: string[];
    limit?: number;
  };
  if (doc.v !== 1) throw new Error(`unsupported visual query version ${doc.v}`);
  return {
    regions: (doc.regions ?? []).map((r) => ({ nw: r.nw, se: r.se })),
    preds: (doc.preds ?? []).map((p) => ({ attr: p.attr, op: p.op, val: p.val })),
    proj: doc.proj ?? ["*"],
    limit: doc.limit ?? null,
  };
}
