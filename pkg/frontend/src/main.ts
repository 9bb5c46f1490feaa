/** Browser wiring: renders the playground and binds it to the controller. */

import { ServiceClient } from "./api.js";
import { ORDER_INVARIANCE_NOTE, PlaygroundController, PlaygroundView } from "./controller.js";
import { decodeSession } from "./session.js";
import type { HistoryStage, SliderControl, SliderRef } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pngSrc(image: string): string {
  return `data:image/png;base64,${image}`;
}

class DomView implements PlaygroundView {
  controller!: PlaygroundController;

  private readonly banner = el("div", "banner hidden");
  private readonly catalogPanel = el("div", "catalog");
  private readonly stackPanel = el("div", "stack");
  private readonly basePane = el("img", "pane") as HTMLImageElement;
  private readonly editedPane = el("img", "pane") as HTMLImageElement;
  private readonly appliedEcho = el("div", "applied");
  private readonly strip = el("div", "strip");
  private readonly shareBox = el("input", "share") as HTMLInputElement;
  private readonly busyDot = el("span", "busy hidden", "generating...");
  private readonly inlineErrors = new Map<string, HTMLElement>();

  mount(root: HTMLElement): void {
    const panes = el("div", "panes");
    const baseBox = el("figure", "pane-box");
    baseBox.append(this.basePane, el("figcaption", "", "base"));
    const editedBox = el("figure", "pane-box");
    editedBox.append(this.editedPane, el("figcaption", "", "edited"));
    panes.append(baseBox, editedBox);

    const stackHeader = el("h2", "", "composition stack");
    stackHeader.title = ORDER_INVARIANCE_NOTE;

    this.shareBox.readOnly = true;
    root.append(
      this.banner,
      this.buildSessionBar(),
      el("h2", "", "sliders"),
      this.catalogPanel,
      stackHeader,
      this.stackPanel,
      this.busyDot,
      panes,
      this.appliedEcho,
      el("h2", "", "history"),
      this.strip,
      this.shareBox,
    );
  }

  private buildSessionBar(): HTMLElement {
    const bar = el("div", "session-bar");
    const promptInput = el("input") as HTMLInputElement;
    promptInput.value = this.controller.state.prompt;
    promptInput.addEventListener("change", () => this.controller.setPrompt(promptInput.value));

    const seedInput = el("input") as HTMLInputElement;
    seedInput.type = "number";
    seedInput.value = String(this.controller.state.seed);

    const lock = el("input") as HTMLInputElement;
    lock.type = "checkbox";
    lock.checked = this.controller.state.seedLocked;
    lock.addEventListener("change", () => this.controller.setSeedLocked(lock.checked));
    seedInput.addEventListener("change", () => {
      this.controller.setSeedLocked(lock.checked);
      if (!lock.checked) this.controller.setSeed(Number(seedInput.value));
    });

    bar.append(
      el("label", "", "prompt"), promptInput,
      el("label", "", "seed"), seedInput,
      el("label", "", "lock seed"), lock,
    );
    return bar;
  }

  renderCatalog(controls: SliderControl[]): void {
    this.catalogPanel.replaceChildren();
    for (const control of controls) {
      const row = el("div", "slider-row");
      const label = el("label", "", control.entry.name);
      label.title = `${control.entry.negative} ↔ ${control.entry.positive}`;
      const range = el("input") as HTMLInputElement;
      range.type = "range";
      range.min = String(control.entry.alpha_min);
      range.max = String(control.entry.alpha_max);
      range.step = "0.1";
      range.value = String(control.scale);
      range.addEventListener("input", () =>
        this.controller.setScale(control.entry.name, Number(range.value), true),
      );
      range.addEventListener("change", () =>
        this.controller.setScale(control.entry.name, Number(range.value), false),
      );
      const add = el("button", "", "stack");
      add.addEventListener("click", () => this.controller.composeAdd(control.entry.name));
      const errorSlot = el("span", "inline-error");
      this.inlineErrors.set(control.entry.name, errorSlot);
      row.append(label, range, add, errorSlot);
      this.catalogPanel.append(row);
    }
    this.renderStack();
  }

  private renderStack(): void {
    this.stackPanel.replaceChildren();
    const stack = this.controller.state.stack;
    stack.forEach((ref, index) => {
      const row = el("div", "stack-row");
      row.append(el("span", "", `${index + 1}. ${ref.name} @ ${ref.scale}`));
      const up = el("button", "", "↑");
      up.disabled = index === 0;
      up.addEventListener("click", () => {
        const order = stack.map((s) => s.name);
        [order[index - 1], order[index]] = [order[index], order[index - 1]];
        this.controller.composeReorder(order);
        this.renderStack();
      });
      const remove = el("button", "", "remove");
      remove.addEventListener("click", () => {
        this.controller.composeRemove(ref.name);
        this.renderStack();
      });
      row.append(up, remove);
      this.stackPanel.append(row);
    });
  }

  showEmptyCatalogNotice(): void {
    this.catalogPanel.replaceChildren(
      el("p", "empty", "no trained sliders available; generation is base-only"),
    );
  }

  setBasePane(image: string | null): void {
    if (image !== null) this.basePane.src = pngSrc(image);
  }

  setEditedPane(image: string | null, applied: SliderRef[], isBase: boolean): void {
    if (image !== null) this.editedPane.src = pngSrc(image);
    this.appliedEcho.textContent = isBase
      ? "showing the base image (no active sliders)"
      : "applied: " + applied.map((s) => `${s.name}=${s.scale}`).join(", ");
    this.renderStack();
  }

  setHistoryStrip(stages: HistoryStage[]): void {
    this.strip.replaceChildren();
    for (const stage of stages) {
      const cell = el("figure", "strip-cell");
      const img = el("img") as HTMLImageElement;
      img.src = pngSrc(stage.image);
      cell.append(img, el("figcaption", "", stage.label));
      this.strip.append(cell);
    }
  }

  setShareQuery(query: string): void {
    this.shareBox.value = `${location.origin}${location.pathname}?${query}`;
    history.replaceState(null, "", `?${query}`);
  }

  showBanner(message: string, retry?: () => void): void {
    this.banner.className = "banner";
    this.banner.replaceChildren(el("span", "", message));
    if (retry) {
      const button = el("button", "", "retry");
      button.addEventListener("click", retry);
      this.banner.append(button);
    }
  }

  clearBanner(): void {
    this.banner.className = "banner hidden";
    this.banner.replaceChildren();
  }

  showInlineError(target: string, message: string): void {
    const slot = this.inlineErrors.get(target);
    if (slot) slot.textContent = message;
    else this.showBanner(message);
  }

  clearInlineErrors(): void {
    for (const slot of this.inlineErrors.values()) slot.textContent = "";
  }

  setBusy(busy: boolean): void {
    this.busyDot.className = busy ? "busy" : "busy hidden";
  }
}

export function boot(root: HTMLElement): PlaygroundController {
  const view = new DomView();
  const controller = new PlaygroundController(new ServiceClient(""), view);
  view.controller = controller;
  controller.state = { ...decodeSession(location.search), seedLocked: true };
  view.mount(root);
  void controller.loadCatalog().then(() => controller.regenerate());
  return controller;
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement !== null) {
  boot(rootElement);
}
