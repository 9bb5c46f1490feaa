/** Debounced single-flight request scheduling.
 *
 * At most one request is in flight; newer parameter sets coalesce into a
 * pending slot of depth one. A result is applied only if nothing newer
 * superseded it (last-write-wins), so the display always reflects the
 * most recent parameters that completed.
 */

export const DRAG_DEBOUNCE_MS = 250;

export class RequestScheduler<P, R> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private pending: P | null = null;
  private inFlight = false;
  private dispatched = 0;

  constructor(
    private readonly run: (params: P) => Promise<R>,
    private readonly apply: (result: R, params: P) => void,
    private readonly onError: (error: unknown, params: P) => void = () => {},
    readonly debounceMs: number = DRAG_DEBOUNCE_MS,
  ) {}

  /** Debounced submission; later calls within the window replace earlier
   * ones (used while a slider is being dragged). */
  schedule(params: P): void {
    this.pending = params;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.pump();
    }, this.debounceMs);
  }

  /** Immediate submission (slider release, button press). */
  send(params: P): void {
    this.pending = params;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.pump();
  }

  get busy(): boolean {
    return this.inFlight;
  }

  private pump(): void {
    if (this.inFlight || this.pending === null) return;
    const params = this.pending;
    this.pending = null;
    const id = ++this.dispatched;
    this.inFlight = true;
    void this.run(params)
      .then(
        (result) => {
          // superseded either by a newer dispatch or by newer pending params
          if (id === this.dispatched && this.pending === null) {
            this.apply(result, params);
          }
        },
        (error) => {
          if (id === this.dispatched && this.pending === null) {
            this.onError(error, params);
          }
        },
      )
      .finally(() => {
        this.inFlight = false;
        if (this.pending !== null && this.timer === null) this.pump();
      });
  }
}
