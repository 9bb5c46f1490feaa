/** Test doubles: an in-memory slider service and a recording view. */

import { ServiceError, SliderService } from "../src/api.js";
import type { PlaygroundView } from "../src/controller.js";
import type {
  GenerateRequest,
  GenerateResponse,
  HistoryStage,
  SliderControl,
  SliderRef,
} from "../src/types.js";

export const CATALOG = [
  {
    name: "chubby",
    positive: "chubby",
    negative: "slim",
    target: "person",
    alpha_min: -3,
    alpha_max: 3,
    alpha_default: 1,
  },
  {
    name: "age",
    positive: "old",
    negative: "young",
    target: "person",
    alpha_min: -3,
    alpha_max: 3,
    alpha_default: 1,
  },
  {
    name: "smiling",
    positive: "smiling",
    negative: "frowning",
    target: "person",
    alpha_min: -3,
    alpha_max: 3,
    alpha_default: 1,
  },
];

export function deferred<T>() {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

/** Deterministic fake image: order-independent in the slider stack, like
 * the real backend's merged weights. */
export function fakeImage(request: GenerateRequest): string {
  const sig = [...request.sliders]
    .filter((s) => s.scale !== 0)
    .sort((a, b) => a.name.localeCompare(b.name))
    .map((s) => `${s.name}=${s.scale}`)
    .join(",");
  return `img(${request.prompt}|${request.seed}|${request.steps ?? "d"}|${sig})`;
}

export class MockService implements SliderService {
  catalog: unknown = CATALOG;
  catalogError: Error | null = null;
  generateCalls: GenerateRequest[] = [];
  manual = false;
  pending: { request: GenerateRequest; resolve: (r: GenerateResponse) => void; reject: (e: unknown) => void }[] = [];
  failNext: ServiceError | null = null;

  async getSliders(): Promise<unknown> {
    if (this.catalogError !== null) throw this.catalogError;
    return this.catalog;
  }

  respond(request: GenerateRequest): GenerateResponse {
    const active = request.sliders.filter((s) => s.scale !== 0);
    return {
      image: fakeImage(request),
      applied: request.sliders,
      is_base: active.length === 0,
      prompt: request.prompt,
      seed: request.seed,
      steps: request.steps ?? 8,
      elapsed_ms: 1,
    };
  }

  generate(request: GenerateRequest): Promise<GenerateResponse> {
    this.generateCalls.push(request);
    if (this.failNext !== null) {
      const err = this.failNext;
      this.failNext = null;
      return Promise.reject(err);
    }
    if (this.manual) {
      const d = deferred<GenerateResponse>();
      this.pending.push({ request, resolve: d.resolve, reject: d.reject });
      return d.promise;
    }
    return Promise.resolve(this.respond(request));
  }

  resolveNext(): void {
    const item = this.pending.shift();
    if (item === undefined) throw new Error("no pending generate call");
    item.resolve(this.respond(item.request));
  }

  baseCalls(): GenerateRequest[] {
    return this.generateCalls.filter((c) => c.sliders.length === 0);
  }

  editCalls(): GenerateRequest[] {
    return this.generateCalls.filter((c) => c.sliders.length > 0);
  }
}

export class FakeView implements PlaygroundView {
  catalogRenders: SliderControl[][] = [];
  emptyNoticeShown = 0;
  basePane: string | null = null;
  basePaneSets: (string | null)[] = [];
  editedPane: string | null = null;
  appliedEcho: SliderRef[] = [];
  editedIsBase = true;
  strip: HistoryStage[] = [];
  banner: string | null = null;
  bannerRetry: (() => void) | undefined;
  inlineErrors: Record<string, string> = {};
  shareQuery = "";
  busy = false;

  renderCatalog(controls: SliderControl[]): void {
    this.catalogRenders.push(controls.map((c) => ({ ...c })));
  }

  showEmptyCatalogNotice(): void {
    this.emptyNoticeShown += 1;
  }

  setBasePane(image: string | null): void {
    this.basePane = image;
    this.basePaneSets.push(image);
  }

  setEditedPane(image: string | null, applied: SliderRef[], isBase: boolean): void {
    this.editedPane = image;
    this.appliedEcho = applied;
    this.editedIsBase = isBase;
  }

  setHistoryStrip(stages: HistoryStage[]): void {
    this.strip = stages;
  }

  setShareQuery(query: string): void {
    this.shareQuery = query;
  }

  showBanner(message: string, retry?: () => void): void {
    this.banner = message;
    this.bannerRetry = retry;
  }

  clearBanner(): void {
    this.banner = null;
    this.bannerRetry = undefined;
  }

  showInlineError(target: string, message: string): void {
    this.inlineErrors[target] = message;
  }

  clearInlineErrors(): void {
    this.inlineErrors = {};
  }

  setBusy(busy: boolean): void {
    this.busy = busy;
  }
}

export async function flush(): Promise<void> {
  for (let i = 0; i < 10; i++) {
    await Promise.resolve();
  }
}
