/** Catalog parsing: malformed entries are skipped with a console warning
 * so one bad checkpoint never blanks the whole panel. */

import type { CatalogEntry, SliderControl } from "./types.js";

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

export function parseCatalogEntry(raw: unknown): CatalogEntry | null {
  if (typeof raw !== "object" || raw === null) return null;
  const e = raw as Record<string, unknown>;
  if (typeof e.name !== "string" || e.name.length === 0) return null;
  if (!isFiniteNumber(e.alpha_min) || !isFiniteNumber(e.alpha_max)) return null;
  if (e.alpha_min >= e.alpha_max) return null;
  const alphaDefault = isFiniteNumber(e.alpha_default) ? e.alpha_default : 1.0;
  return {
    name: e.name,
    positive: typeof e.positive === "string" ? e.positive : "",
    negative: typeof e.negative === "string" ? e.negative : "",
    target: typeof e.target === "string" ? e.target : "",
    alpha_min: e.alpha_min,
    alpha_max: e.alpha_max,
    alpha_default: alphaDefault,
  };
}

export function parseCatalog(raw: unknown): CatalogEntry[] {
  if (!Array.isArray(raw)) {
    console.warn("slider catalog response is not a list; treating as empty");
    return [];
  }
  const entries: CatalogEntry[] = [];
  for (const item of raw) {
    const entry = parseCatalogEntry(item);
    if (entry === null) {
      console.warn("skipping malformed slider catalog entry", item);
      continue;
    }
    entries.push(entry);
  }
  return entries;
}

/** One control per catalog entry, initialized to scale 0 (no edit). */
export function buildControls(entries: CatalogEntry[]): SliderControl[] {
  return entries.map((entry) => ({ entry, scale: 0 }));
}

export function clampScale(entry: CatalogEntry, value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(entry.alpha_max, Math.max(entry.alpha_min, value));
}
