/** Playground orchestration: catalog loading, slider interaction, stack
 * composition with a progressive history strip, and error surfacing.
 *
 * The controller is headless; all rendering goes through the view
 * interface so the logic is testable without a DOM.
 */

import { ServiceError, SliderService } from "./api.js";
import { buildControls, clampScale, parseCatalog } from "./catalog.js";
import { RequestScheduler } from "./scheduler.js";
import {
  DEFAULT_SESSION,
  addToStack,
  encodeSession,
  removeFromStack,
  reorderStack,
  updateStackScale,
} from "./session.js";
import type {
  GenerateResponse,
  HistoryStage,
  SessionState,
  SliderControl,
  SliderRef,
} from "./types.js";

export const ORDER_INVARIANCE_NOTE =
  "Slider order does not change the result: stacked edits add up the same way in any order.";

export interface PlaygroundView {
  renderCatalog(controls: SliderControl[]): void;
  showEmptyCatalogNotice(): void;
  setBasePane(image: string | null): void;
  setEditedPane(image: string | null, applied: SliderRef[], isBase: boolean): void;
  setHistoryStrip(stages: HistoryStage[]): void;
  setShareQuery(query: string): void;
  showBanner(message: string, retry?: () => void): void;
  clearBanner(): void;
  showInlineError(target: string, message: string): void;
  clearInlineErrors(): void;
  setBusy(busy: boolean): void;
}

interface GenerationJob {
  prompt: string;
  seed: number;
  steps: number | null;
  stack: SliderRef[];
  withStrip: boolean;
}

interface GenerationOutcome {
  baseImage: string;
  edited: GenerateResponse;
  strip: HistoryStage[] | null;
}

function activeStack(stack: SliderRef[]): SliderRef[] {
  return stack.filter((s) => s.scale !== 0);
}

function stageLabel(stack: SliderRef[]): string {
  return stack.length === 0 ? "base" : stack.map((s) => `+${s.name}`).join(" ");
}

export class PlaygroundController {
  state: SessionState = { ...DEFAULT_SESSION, stack: [] };
  controls: SliderControl[] = [];

  private baseCache: { key: string; image: string } | null = null;
  private readonly scheduler: RequestScheduler<GenerationJob, GenerationOutcome>;

  constructor(
    private readonly client: SliderService,
    private readonly view: PlaygroundView,
    debounceMs?: number,
  ) {
    this.scheduler = new RequestScheduler(
      (job) => this.runJob(job),
      (outcome, job) => this.applyOutcome(outcome, job),
      (error) => this.handleError(error),
      debounceMs,
    );
  }

  async loadCatalog(): Promise<void> {
    try {
      const raw = await this.client.getSliders();
      const entries = parseCatalog(raw);
      this.controls = buildControls(entries);
      this.view.renderCatalog(this.controls);
      if (entries.length === 0) this.view.showEmptyCatalogNotice();
      this.view.clearBanner();
    } catch {
      this.view.showBanner("slider service unreachable", () => void this.loadCatalog());
    }
  }

  control(name: string): SliderControl | undefined {
    return this.controls.find((c) => c.entry.name === name);
  }

  /** Slider moved; `live` means mid-drag (debounced), otherwise send now. */
  setScale(name: string, rawValue: number, live: boolean): void {
    const control = this.control(name);
    if (control === undefined) return;
    control.scale = clampScale(control.entry, rawValue);
    if (this.state.stack.some((s) => s.name === name)) {
      this.state = updateStackScale(this.state, name, control.scale);
    } else {
      const added = addToStack(this.state, { name, scale: control.scale });
      if (added.ok) this.state = added.state;
    }
    this.requestGeneration(live);
  }

  setPrompt(prompt: string): void {
    this.state = { ...this.state, prompt };
    this.baseCache = null;
    this.requestGeneration(false);
  }

  setSeed(seed: number): void {
    if (this.state.seedLocked) return;
    this.state = { ...this.state, seed };
    this.baseCache = null;
    this.requestGeneration(false);
  }

  setSeedLocked(locked: boolean): void {
    this.state = { ...this.state, seedLocked: locked };
  }

  /** Add a catalog slider as the next composition stage. */
  composeAdd(name: string): void {
    const control = this.control(name);
    if (control === undefined) {
      this.view.showInlineError(name, `no slider named "${name}" in the catalog`);
      return;
    }
    const scale = control.scale !== 0 ? control.scale : control.entry.alpha_default;
    const added = addToStack(this.state, { name, scale });
    if (!added.ok) {
      this.view.showInlineError(name, added.error);
      return;
    }
    control.scale = scale;
    this.state = added.state;
    this.requestGeneration(false, true);
  }

  composeRemove(name: string): void {
    this.state = removeFromStack(this.state, name);
    const control = this.control(name);
    if (control !== undefined) control.scale = 0;
    this.requestGeneration(false, true);
  }

  composeReorder(order: string[]): void {
    this.state = reorderStack(this.state, order);
    this.requestGeneration(false, true);
  }

  regenerate(): void {
    this.requestGeneration(false, this.state.stack.length > 0);
  }

  shareQuery(): string {
    return encodeSession(this.state);
  }

  private requestGeneration(live: boolean, withStrip = false): void {
    this.view.clearInlineErrors();
    this.view.setBusy(true);
    const job: GenerationJob = {
      prompt: this.state.prompt,
      seed: this.state.seed,
      steps: this.state.steps,
      stack: activeStack(this.state.stack),
      withStrip,
    };
    if (live) this.scheduler.schedule(job);
    else this.scheduler.send(job);
  }

  private baseKey(job: GenerationJob): string {
    return `${job.prompt}|${job.seed}|${job.steps ?? "default"}`;
  }

  private async runJob(job: GenerationJob): Promise<GenerationOutcome> {
    const key = this.baseKey(job);
    let baseImage: string;
    if (this.baseCache !== null && this.baseCache.key === key) {
      baseImage = this.baseCache.image;
    } else {
      const baseResp = await this.client.generate({
        prompt: job.prompt,
        seed: job.seed,
        steps: job.steps,
        sliders: [],
      });
      baseImage = baseResp.image;
      this.baseCache = { key, image: baseImage };
    }

    let strip: HistoryStage[] | null = null;
    let edited: GenerateResponse | null = null;
    if (job.withStrip) {
      strip = [{ label: "base", image: baseImage, stack: [] }];
      for (let i = 1; i <= job.stack.length; i++) {
        const prefix = job.stack.slice(0, i);
        const resp = await this.client.generate({
          prompt: job.prompt,
          seed: job.seed,
          steps: job.steps,
          sliders: prefix,
        });
        strip.push({ label: stageLabel(prefix), image: resp.image, stack: prefix });
        if (i === job.stack.length) edited = resp;
      }
    }
    if (edited === null) {
      edited =
        job.stack.length === 0
          ? {
              image: baseImage,
              applied: [],
              is_base: true,
              prompt: job.prompt,
              seed: job.seed,
              steps: job.steps ?? 0,
              elapsed_ms: 0,
            }
          : await this.client.generate({
              prompt: job.prompt,
              seed: job.seed,
              steps: job.steps,
              sliders: job.stack,
            });
    }
    return { baseImage, edited, strip };
  }

  private applyOutcome(outcome: GenerationOutcome, job: GenerationJob): void {
    this.view.setBusy(this.scheduler.busy);
    this.view.setBasePane(outcome.baseImage);
    this.view.setEditedPane(outcome.edited.image, outcome.edited.applied, outcome.edited.is_base);
    if (outcome.strip !== null) this.view.setHistoryStrip(outcome.strip);
    else if (job.stack.length === 0) this.view.setHistoryStrip([]);
    this.view.setShareQuery(this.shareQuery());
    this.view.clearBanner();
  }

  private handleError(error: unknown): void {
    this.view.setBusy(this.scheduler.busy);
    if (error instanceof ServiceError && error.isClientError) {
      this.view.showInlineError(error.field ?? "request", error.message);
    } else {
      const message = error instanceof Error ? error.message : String(error);
      this.view.showBanner(`generation failed: ${message}`);
    }
  }
}
