// DOM presenter. Elements are typed by the narrow surface the presenter
// needs, so the logic is testable without a browser document.

import type { Choice, Progress } from "./api.js";
import type { TrialContext, TrialPresenter, RunSummary } from "./session.js";
import { TrialMachine } from "./trial.js";

export interface ButtonEl {
  disabled: boolean;
  addEventListener(type: "click", listener: () => void): void;
}

export interface TextEl {
  textContent: string | null;
}

export interface ViewElements {
  play: ButtonEl;
  replayFirst: ButtonEl;
  replaySecond: ButtonEl;
  chooseFirst: ButtonEl;
  chooseSecond: ButtonEl;
  status: TextEl;
  progress: TextEl;
  feedback: TextEl;
}

const FEEDBACK_MS = 900;

export class DomPresenter implements TrialPresenter {
  private machine: TrialMachine | null = null;
  private resolveChoice: ((c: Choice) => void) | null = null;
  private rejectTrial: ((err: unknown) => void) | null = null;

  constructor(
    private el: ViewElements,
    private feedbackMs = FEEDBACK_MS,
  ) {
    el.play.addEventListener("click", () => this.startPlayback());
    el.replayFirst.addEventListener("click", () => this.replay(0));
    el.replaySecond.addEventListener("click", () => this.replay(1));
    el.chooseFirst.addEventListener("click", () => this.choose("first"));
    el.chooseSecond.addEventListener("click", () => this.choose("second"));
    this.applyState();
  }

  private applyState() {
    const m = this.machine;
    this.el.play.disabled = !(m && m.state === "unplayed");
    const replayable = !!(m && m.state === "awaiting-choice");
    this.el.replayFirst.disabled = !replayable;
    this.el.replaySecond.disabled = !replayable;
    const choosable = !!(m && m.canChoose);
    this.el.chooseFirst.disabled = !choosable;
    this.el.chooseSecond.disabled = !choosable;
  }

  private startPlayback() {
    const m = this.machine;
    if (!m || m.state !== "unplayed") return;
    m.playBoth().catch((err) => {
      // audio would not load: fail the trial so the runner skips it
      const reject = this.rejectTrial;
      this.rejectTrial = null;
      this.resolveChoice = null;
      reject?.(err);
    });
  }

  private replay(slot: 0 | 1) {
    const m = this.machine;
    if (m && m.state === "awaiting-choice") {
      void m.replay(slot).catch(() => undefined);
    }
  }

  private choose(choice: Choice) {
    const m = this.machine;
    if (m && m.canChoose && this.resolveChoice) {
      m.select(choice);
      const resolve = this.resolveChoice;
      this.resolveChoice = null;
      this.rejectTrial = null;
      resolve(choice);
    }
  }

  present(machine: TrialMachine, ctx: TrialContext): Promise<Choice> {
    this.machine = machine;
    machine.onChange = () => this.applyState();
    this.el.status.textContent =
      `Trial ${ctx.index + 1} of ${ctx.total} — play both sounds, then pick ` +
      "the one with MORE distortion.";
    this.applyState();
    return new Promise<Choice>((resolve, reject) => {
      this.resolveChoice = resolve;
      this.rejectTrial = reject;
    });
  }

  async showFeedback(correct: boolean): Promise<void> {
    this.el.feedback.textContent = correct ? "Correct." : "Incorrect.";
    await new Promise((r) => setTimeout(r, this.feedbackMs));
    this.el.feedback.textContent = "";
  }

  phaseChanged(progress: Progress): void {
    if (progress.phase === "done") {
      this.el.progress.textContent = "All sessions complete — thank you!";
      this.el.status.textContent = "";
      return;
    }
    const attempt =
      progress.phase === "training" && progress.attempt > 1
        ? ` (attempt ${progress.attempt})`
        : "";
    this.el.progress.textContent =
      `${progress.phase}${attempt}: ${progress.completed}/${progress.total} answered`;
  }

  trialSkipped(index: number, reason: string): void {
    this.el.feedback.textContent = `Trial ${index + 1} skipped (${reason}).`;
  }

  finished(summary: RunSummary): void {
    const skipped = summary.skipped.length
      ? ` ${summary.skipped.length} trial(s) could not be played.`
      : "";
    this.el.status.textContent = `Finished: ${summary.answered} responses.${skipped}`;
  }
}
