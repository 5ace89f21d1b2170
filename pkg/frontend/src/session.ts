// Session state machine. The server's vote log is the source of truth:
// on load we resume at the first unvoted pair, and the index only
// advances after the server acknowledges a vote.

import type { SessionData, Side } from "./api.js";

export type SubmitOutcome = "advanced" | "completed" | "rejected" | "failed";

export class SessionState {
  private viewedLeft = false;
  private viewedRight = false;
  private inFlight = false;
  current: number;

  constructor(readonly data: SessionData) {
    this.current = this.firstUnvoted();
  }

  private firstUnvoted(): number {
    const i = this.data.pairs.findIndex((p) => p.voted_side === null);
    return i === -1 ? this.data.pairs.length : i;
  }

  get total(): number {
    return this.data.pairs.length;
  }

  get votedCount(): number {
    return this.data.pairs.filter((p) => p.voted_side !== null).length;
  }

  get done(): boolean {
    return this.current >= this.data.pairs.length;
  }

  get currentPairId(): string | null {
    return this.done ? null : this.data.pairs[this.current].pair_id;
  }

  markViewed(side: Side): void {
    if (side === "left") this.viewedLeft = true;
    else this.viewedRight = true;
  }

  /** Voting requires both reconstructions to have been seen at least once. */
  canVote(): boolean {
    return !this.done && !this.inFlight && this.viewedLeft && this.viewedRight;
  }

  /**
   * Submit a forced-choice vote for the current pair. Duplicate calls
   * while a request is in flight are rejected, so rapid double clicks
   * produce exactly one vote record. On failure the session stays on
   * the same pair.
   */
  async submit(
    side: Side,
    post: (pairId: string, side: Side) => Promise<boolean>,
  ): Promise<SubmitOutcome> {
    if (!this.canVote()) {
      return "rejected";
    }
    const pair = this.data.pairs[this.current];
    this.inFlight = true;
    try {
      const ok = await post(pair.pair_id, side);
      if (!ok) {
        return "failed";
      }
      pair.voted_side = side;
      this.current = this.firstUnvoted();
      this.viewedLeft = false;
      this.viewedRight = false;
      return this.done ? "completed" : "advanced";
    } finally {
      this.inFlight = false;
    }
  }
}
