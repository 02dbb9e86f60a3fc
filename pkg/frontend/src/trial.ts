// Per-trial state machine. It owns the invariants the UI must not be
// able to break: choices stay disabled until both intervals have played
// to the end once, replays are allowed until the choice is submitted,
// and a trial can be submitted exactly once.

import type { AudioPlayer } from "./player.js";
import { sleep } from "./player.js";
import type { Choice } from "./api.js";

export type TrialState =
  | "unplayed"
  | "playing"
  | "awaiting-choice"
  | "submitting"
  | "submitted";

export class TrialMachine {
  /** Notified on every state transition (UI button enablement hooks in here). */
  onChange?: (state: TrialState) => void;

  private state_: TrialState = "unplayed";
  private playedOnce: [boolean, boolean] = [false, false];
  private choice: Choice | null = null;

  constructor(
    private player: AudioPlayer,
    private urls: [string, string],
    private gapMs = 500,
  ) {}

  get state(): TrialState {
    return this.state_;
  }

  get canChoose(): boolean {
    return (
      this.state_ === "awaiting-choice" &&
      this.playedOnce[0] &&
      this.playedOnce[1]
    );
  }

  get finalChoice(): Choice | null {
    return this.choice;
  }

  private setState(state: TrialState) {
    this.state_ = state;
    this.onChange?.(state);
  }

  /** Play first interval, the inter-stimulus gap, then the second. */
  async playBoth(): Promise<void> {
    if (this.state_ !== "unplayed") {
      throw new Error(`cannot start playback in state ${this.state_}`);
    }
    this.setState("playing");
    try {
      await this.player.play(this.urls[0]);
      this.playedOnce[0] = true;
      await sleep(this.gapMs);
      await this.player.play(this.urls[1]);
      this.playedOnce[1] = true;
    } catch (err) {
      this.setState("unplayed");
      throw err;
    }
    this.setState("awaiting-choice");
  }

  /** Replay one interval before choosing. */
  async replay(slot: 0 | 1): Promise<void> {
    if (this.state_ !== "awaiting-choice") {
      throw new Error(`cannot replay in state ${this.state_}`);
    }
    this.setState("playing");
    try {
      await this.player.play(this.urls[slot]);
    } finally {
      this.setState("awaiting-choice");
    }
  }

  /** Record (or change) the tentative choice; only the final one is submitted. */
  select(choice: Choice): void {
    if (!this.canChoose) {
      throw new Error(`cannot choose in state ${this.state_}`);
    }
    this.choice = choice;
  }

  beginSubmit(): Choice {
    if (this.state_ !== "awaiting-choice" || this.choice === null) {
      throw new Error("no choice to submit");
    }
    this.setState("submitting");
    return this.choice;
  }

  markSubmitted(): void {
    if (this.state_ !== "submitting") {
      throw new Error(`cannot acknowledge in state ${this.state_}`);
    }
    this.setState("submitted");
  }

  /** Server rejected the submission; allow the choice to be retried. */
  abortSubmit(): void {
    if (this.state_ === "submitting") {
      this.setState("awaiting-choice");
    }
  }
}
