/** Contract tests for the playground controller against a mocked service. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ServiceError } from "../src/api.js";
import { PlaygroundController } from "../src/controller.js";
import { CATALOG, FakeView, MockService, fakeImage, flush } from "./helpers.js";

function setup() {
  const service = new MockService();
  const view = new FakeView();
  const controller = new PlaygroundController(service, view);
  return { service, view, controller };
}

describe("catalog loading", () => {
  it("renders one control per entry, initialized to scale zero", async () => {
    const { controller, view } = setup();
    await controller.loadCatalog();
    expect(view.catalogRenders).toHaveLength(1);
    const controls = view.catalogRenders[0];
    expect(controls.map((c) => c.entry.name)).toEqual(["chubby", "age", "smiling"]);
    expect(controls.every((c) => c.scale === 0)).toBe(true);
  });

  it("shows the empty state when the catalog is empty", async () => {
    const { controller, view, service } = setup();
    service.catalog = [];
    await controller.loadCatalog();
    expect(view.emptyNoticeShown).toBe(1);
  });

  it("skips malformed entries with a console warning and renders the rest", async () => {
    const { controller, view, service } = setup();
    const warn = vi.spyOn(console, "warn").mockImplementation(() => {});
    service.catalog = [
      CATALOG[0],
      { alpha_min: -1, alpha_max: 1 }, // missing name
      { name: "broken", alpha_min: 2, alpha_max: -2 }, // inverted range
      CATALOG[1],
    ];
    await controller.loadCatalog();
    expect(view.catalogRenders[0].map((c) => c.entry.name)).toEqual(["chubby", "age"]);
    expect(warn).toHaveBeenCalledTimes(2);
    warn.mockRestore();
  });

  it("shows a banner with a retry affordance when the service is unreachable", async () => {
    const { controller, view, service } = setup();
    service.catalogError = new Error("connection refused");
    await controller.loadCatalog();
    expect(view.banner).toContain("unreachable");
    expect(view.bannerRetry).toBeDefined();

    service.catalogError = null;
    view.bannerRetry!();
    await flush();
    expect(view.catalogRenders).toHaveLength(1);
    expect(view.banner).toBeNull();
  });
});

describe("scale clamping", () => {
  it("never sends a scale outside the advertised range", async () => {
    const { controller, service } = setup();
    await controller.loadCatalog();
    controller.setScale("chubby", 99, false);
    await flush();
    const sent = service.editCalls().at(-1)!;
    expect(sent.sliders).toEqual([{ name: "chubby", scale: 3 }]);
    controller.setScale("chubby", -99, false);
    await flush();
    expect(service.editCalls().at(-1)!.sliders).toEqual([{ name: "chubby", scale: -3 }]);
  });
});

describe("debounce coalescing", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("a rapid drag lands at most one request per debounce window", async () => {
    const { controller, service } = setup();
    await controller.loadCatalog();
    controller.regenerate(); // settle the base-image cache
    await vi.runAllTimersAsync();
    const before = service.generateCalls.length;

    for (let i = 1; i <= 5; i++) {
      controller.setScale("chubby", i * 0.4, true);
      await vi.advanceTimersByTimeAsync(30);
    }
    expect(service.generateCalls.length).toBe(before); // nothing during the drag
    await vi.advanceTimersByTimeAsync(250);
    await vi.runAllTimersAsync();
    const landed = service.generateCalls.slice(before);
    expect(landed).toHaveLength(1);
    expect(landed[0].sliders).toEqual([{ name: "chubby", scale: 2.0 }]);
  });

  it("release sends immediately without waiting for the window", async () => {
    const { controller, service } = setup();
    await controller.loadCatalog();
    controller.regenerate();
    await vi.runAllTimersAsync();
    const before = service.generateCalls.length;
    controller.setScale("chubby", 1.0, true);
    controller.setScale("chubby", 1.5, false); // release
    await vi.runAllTimersAsync();
    const landed = service.generateCalls.slice(before);
    expect(landed).toHaveLength(1);
    expect(landed[0].sliders).toEqual([{ name: "chubby", scale: 1.5 }]);
  });
});

describe("last-write-wins display", () => {
  it("discards a response that newer parameters superseded", async () => {
    const { controller, service, view } = setup();
    await controller.loadCatalog();
    controller.regenerate();
    await flush();

    service.manual = true;
    controller.setScale("chubby", 1.0, false);
    await flush();
    expect(service.pending).toHaveLength(1); // request A in flight

    controller.setScale("chubby", 2.0, false); // B coalesces as pending params
    service.resolveNext(); // A completes late
    await flush();
    expect(view.editedPane).not.toContain("chubby=1");

    service.resolveNext(); // B completes
    await flush();
    expect(view.editedPane).toBe(
      fakeImage({ prompt: "neutral", seed: 0, steps: null, sliders: [{ name: "chubby", scale: 2 }] }),
    );
  });

  it("displayed image always matches the most recent completed parameters", async () => {
    const { controller, view } = setup();
    await controller.loadCatalog();
    controller.setScale("age", 1.0, false);
    await flush();
    controller.setScale("age", -2.0, false);
    await flush();
    expect(view.editedPane).toBe(
      fakeImage({ prompt: "neutral", seed: 0, steps: null, sliders: [{ name: "age", scale: -2 }] }),
    );
    expect(view.appliedEcho).toEqual([{ name: "age", scale: -2 }]);
  });
});

describe("seed-locked base pane", () => {
  it("keeps the base image referentially stable across slider interactions", async () => {
    const { controller, service, view } = setup();
    await controller.loadCatalog();
    controller.regenerate();
    await flush();
    const base = view.basePane;
    expect(base).not.toBeNull();

    controller.setScale("chubby", 1.0, false);
    await flush();
    controller.setScale("chubby", 0.0, false);
    await flush();
    controller.setScale("smiling", 2.0, false);
    await flush();

    expect(service.baseCalls()).toHaveLength(1); // fetched once, cached after
    expect(view.basePaneSets.every((img) => img === base)).toBe(true);
    expect(view.basePane).toBe(base);
  });

  it("seed changes are ignored while the seed is locked", async () => {
    const { controller, service } = setup();
    await controller.loadCatalog();
    controller.regenerate();
    await flush();
    controller.setSeed(123);
    await flush();
    expect(controller.state.seed).toBe(0);
    expect(service.baseCalls()).toHaveLength(1);
  });
});

describe("progressive composition", () => {
  it("chubby then age then smiling yields a four-stage history strip", async () => {
    const { controller, view } = setup();
    await controller.loadCatalog();
    controller.composeAdd("chubby");
    await flush();
    controller.composeAdd("age");
    await flush();
    controller.composeAdd("smiling");
    await flush();

    expect(view.strip).toHaveLength(4);
    expect(view.strip.map((s) => s.label)).toEqual([
      "base",
      "+chubby",
      "+chubby +age",
      "+chubby +age +smiling",
    ]);
    expect(view.strip[0].stack).toEqual([]);
    expect(view.strip[3].stack.map((s) => s.name)).toEqual(["chubby", "age", "smiling"]);
    expect(view.editedPane).toBe(view.strip[3].image);
  });

  it("rejects a duplicate addition with an inline message", async () => {
    const { controller, view } = setup();
    await controller.loadCatalog();
    controller.composeAdd("chubby");
    await flush();
    controller.composeAdd("chubby");
    expect(view.inlineErrors["chubby"]).toContain("already in the stack");
  });

  it("removing the middle slider regenerates with the remaining stack", async () => {
    const { controller, view } = setup();
    await controller.loadCatalog();
    for (const name of ["chubby", "age", "smiling"]) {
      controller.composeAdd(name);
      await flush();
    }
    controller.composeRemove("age");
    await flush();
    expect(view.strip.map((s) => s.label)).toEqual(["base", "+chubby", "+chubby +smiling"]);
    expect(controller.state.stack.map((s) => s.name)).toEqual(["chubby", "smiling"]);
  });

  it("reordering the stack leaves the edited image unchanged", async () => {
    const { controller, view } = setup();
    await controller.loadCatalog();
    for (const name of ["chubby", "age", "smiling"]) {
      controller.composeAdd(name);
      await flush();
    }
    const before = view.editedPane;
    controller.composeReorder(["smiling", "chubby", "age"]);
    await flush();
    expect(view.editedPane).toBe(before);
    expect(controller.state.stack.map((s) => s.name)).toEqual(["smiling", "chubby", "age"]);
  });
});

describe("error surfacing", () => {
  it("client errors appear inline next to the offending field", async () => {
    const { controller, service, view } = setup();
    await controller.loadCatalog();
    service.failNext = new ServiceError(404, "unknown_slider", "no slider named age", "sliders");
    controller.setScale("age", 1.0, false);
    await flush();
    expect(view.inlineErrors["sliders"]).toContain("no slider named age");
    expect(view.banner).toBeNull();
  });

  it("server errors appear as a banner", async () => {
    const { controller, service, view } = setup();
    await controller.loadCatalog();
    service.failNext = new ServiceError(500, "internal_error", "sampler exploded");
    controller.setScale("age", 1.0, false);
    await flush();
    expect(view.banner).toContain("sampler exploded");
  });
});

describe("shareable session state", () => {
  it("encodes prompt, seed and stack into the share query", async () => {
    const { controller } = setup();
    await controller.loadCatalog();
    controller.composeAdd("chubby");
    await flush();
    controller.setScale("age", -1.0, false);
    await flush();
    const query = controller.shareQuery();
    expect(query).toContain("prompt=neutral");
    expect(query).toContain("seed=0");
    expect(decodeURIComponent(query)).toContain("chubby:1");
  });
});
