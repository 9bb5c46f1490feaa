/** Catalog parsing robustness. */

import { describe, expect, it, vi } from "vitest";

import { buildControls, parseCatalog } from "../src/catalog.js";
import { CATALOG } from "./helpers.js";

describe("parseCatalog", () => {
  it("accepts well-formed entries", () => {
    const entries = parseCatalog(CATALOG);
    expect(entries).toHaveLength(3);
    expect(entries[0].name).toBe("chubby");
  });

  it("skips malformed entries and warns", () => {
    const warn = vi.spyOn(console, "warn").mockImplementation(() => {});
    const entries = parseCatalog([
      CATALOG[0],
      null,
      42,
      { name: "", alpha_min: -1, alpha_max: 1 },
      { name: "inverted", alpha_min: 1, alpha_max: -1 },
      { name: "nonnumeric", alpha_min: "a", alpha_max: 1 },
    ]);
    expect(entries).toHaveLength(1);
    expect(warn).toHaveBeenCalledTimes(5);
    warn.mockRestore();
  });

  it("treats a non-list response as an empty catalog", () => {
    const warn = vi.spyOn(console, "warn").mockImplementation(() => {});
    expect(parseCatalog({ not: "a list" })).toEqual([]);
    warn.mockRestore();
  });

  it("defaults a missing alpha_default to one", () => {
    const [entry] = parseCatalog([
      { name: "plain", alpha_min: -1, alpha_max: 1 },
    ]);
    expect(entry.alpha_default).toBe(1);
  });
});

describe("buildControls", () => {
  it("initializes every control at scale zero", () => {
    const controls = buildControls(parseCatalog(CATALOG));
    expect(controls.every((c) => c.scale === 0)).toBe(true);
  });
});
