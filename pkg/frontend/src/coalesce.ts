/**
 * Latest-wins request coalescing: at most one request in flight; while it
 * runs, newer states overwrite each other and only the newest is sent next.
 * Stale responses (superseded by a newer issue) are dropped.
 */

export class Coalescer<S, R> {
  private inFlight = false;
  private pending: S | null = null;
  private seq = 0;

  constructor(
    private readonly send: (state: S) => Promise<R>,
    private readonly apply: (result: R, state: S) => void,
    private readonly onError: (err: unknown) => void = () => undefined,
  ) {}

  request(state: S): void {
    if (this.inFlight) {
      this.pending = state;
      return;
    }
    void this.fire(state);
  }

  get busy(): boolean {
    return this.inFlight;
  }

  private async fire(state: S): Promise<void> {
    this.inFlight = true;
    const mySeq = ++this.seq;
    try {
      const result = await this.send(state);
      if (mySeq === this.seq) {
        this.apply(result, state);
      }
    } catch (err) {
      if (mySeq === this.seq) {
        this.onError(err);
      }
    } finally {
      this.inFlight = false;
      if (this.pending !== null) {
        const next = this.pending;
        this.pending = null;
        void this.fire(next);
      }
    }
  }
}
