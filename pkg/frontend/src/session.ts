// Session orchestration: follow the participant's progress through
// training, practice and main (the service decides the phase sequence),
// presenting one trial at a time.

import { ApiClient, type Choice, type Progress } from "./api.js";
import type { AudioPlayer } from "./player.js";
import { TrialMachine } from "./trial.js";

export interface TrialContext {
  index: number;
  total: number;
  phase: string;
}

export interface TrialPresenter {
  /**
   * Drive one trial: start playback on the machine, collect the
   * participant's choice, return it. Rejections mark the trial as failed
   * (e.g. audio would not load) and it is skipped.
   */
  present(machine: TrialMachine, ctx: TrialContext): Promise<Choice>;
  /** Training feedback, shown before the next trial. */
  showFeedback?(correct: boolean): void | Promise<void>;
  phaseChanged?(progress: Progress): void;
  trialSkipped?(index: number, reason: string): void;
  finished?(summary: RunSummary): void;
}

export interface RunSummary {
  phasesVisited: string[];
  answered: number;
  skipped: { phase: string; index: number; reason: string }[];
}

export class SessionRunner {
  constructor(
    private api: ApiClient,
    private player: AudioPlayer,
    private participantId: string,
    private presenter: TrialPresenter,
    private gapMs = 500,
  ) {}

  async run(): Promise<RunSummary> {
    const summary: RunSummary = { phasesVisited: [], answered: 0, skipped: [] };
    let stallKey = "";
    for (;;) {
      const progress = await this.api.progress(this.participantId);
      this.presenter.phaseChanged?.(progress);
      if (progress.phase === "done") {
        break;
      }
      const key = `${progress.phase}:${progress.session_id}:${progress.completed}`;
      if (key === stallKey) {
        throw new Error(
          `session stalled at ${key}; skipped trials: ${JSON.stringify(summary.skipped)}`,
        );
      }
      stallKey = key;
      if (!summary.phasesVisited.includes(progress.phase)) {
        summary.phasesVisited.push(progress.phase);
      }
      const session = await this.api.session(progress.session_id!);
      for (let idx = progress.completed; idx < session.trial_count; idx++) {
        const trial = session.trials[idx]!;
        const machine = new TrialMachine(this.player, trial.audio, this.gapMs);
        let choice: Choice;
        try {
          choice = await this.presenter.present(machine, {
            index: idx,
            total: session.trial_count,
            phase: session.phase,
          });
        } catch (err) {
          summary.skipped.push({
            phase: session.phase,
            index: idx,
            reason: String(err),
          });
          this.presenter.trialSkipped?.(idx, String(err));
          continue;
        }
        const final = machine.beginSubmit();
        if (final !== choice) {
          throw new Error("presenter returned a choice the machine does not hold");
        }
        const result = await this.api.submit(
          this.participantId,
          session.session_id,
          idx,
          final,
        );
        machine.markSubmitted();
        summary.answered++;
        if (session.phase === "training" && result.feedback) {
          await this.presenter.showFeedback?.(result.feedback.correct);
        }
      }
    }
    this.presenter.finished?.(summary);
    return summary;
  }
}
