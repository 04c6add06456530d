// Debounced, single-in-flight request scheduler. Rapid slider drags
// collapse to at most one pending request; while one is in flight the
// latest payload waits and is sent on completion (last write wins).

export type Sender<T, R> = (payload: T, seq: number) => Promise<R>;

export class DebouncedScheduler<T, R> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private queued: T | null = null;
  private seq = 0;

  constructor(
    private send: Sender<T, R>,
    private onResult: (result: R, seq: number) => void,
    private onError: (error: unknown, seq: number) => void,
    private delayMs = 80,
  ) {}

  get inFlightCount(): number {
    return this.inFlight ? 1 : 0;
  }

  request(payload: T): void {
    this.queued = payload;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.flush();
    }, this.delayMs);
  }

  private flush(): void {
    if (this.inFlight || this.queued === null) return;
    const payload = this.queued;
    this.queued = null;
    const seq = this.seq++;
    this.inFlight = true;
    this.send(payload, seq)
      .then((result) => this.onResult(result, seq))
      .catch((error) => this.onError(error, seq))
      .finally(() => {
        this.inFlight = false;
        if (this.queued !== null && this.timer === null) this.flush();
      });
  }
}
