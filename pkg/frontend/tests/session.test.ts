import { describe, expect, test } from "vitest";

import { ApiClient, type Choice } from "../src/api.js";
import type { AudioPlayer } from "../src/player.js";
import { SessionRunner, type TrialContext, type TrialPresenter } from "../src/session.js";
import type { TrialMachine } from "../src/trial.js";

// In-memory stand-in for the service: training with an answer key and a
// pass gate, then practice, then main, mirroring the server's derived
// phase progression.

interface FakeSession {
  id: string;
  phase: string;
  trials: number;
  key?: Choice[];
  passNeeded?: number;
}

class FakeService {
  answered = new Map<string, Map<number, Choice>>();
  trainingAttempt = 1;

  constructor(private sessions: { training: FakeSession[]; practice: FakeSession; main: FakeSession }) {}

  private got(id: string): Map<number, Choice> {
    let m = this.answered.get(id);
    if (!m) {
      m = new Map();
      this.answered.set(id, m);
    }
    return m;
  }

  private active(): FakeSession {
    const tr = this.sessions.training[this.trainingAttempt - 1];
    if (tr && this.got(tr.id).size < tr.trials) return tr;
    if (tr) {
      const correct = this.countCorrect(tr);
      if (correct < (tr.passNeeded ?? 0)) {
        this.trainingAttempt++;
        return this.active();
      }
    }
    const pr = this.sessions.practice;
    if (this.got(pr.id).size < pr.trials) return pr;
    return this.sessions.main;
  }

  private countCorrect(s: FakeSession): number {
    let n = 0;
    for (const [idx, choice] of this.got(s.id)) {
      if (s.key![idx] === choice) n++;
    }
    return n;
  }

  fetch = async (input: string | URL | Request, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), { status });
    if (url.includes("/api/progress/")) {
      const main = this.sessions.main;
      const mainDone = this.got(main.id).size >= main.trials;
      if (mainDone) {
        return json(200, { participant_id: "p", phase: "done", attempt: this.trainingAttempt, completed: 0, total: 0, session_id: null });
      }
      const s = this.active();
      return json(200, {
        participant_id: "p", phase: s.phase, attempt: this.trainingAttempt,
        completed: this.got(s.id).size, total: s.trials,
        session_id: s.id,
      });
    }
    if (url.includes("/api/session/")) {
      const id = url.split("/").pop()!;
      const all = [...this.sessions.training, this.sessions.practice, this.sessions.main];
      const s = all.find((x) => x.id === id);
      if (!s) return json(404, { error: "unknown session" });
      return json(200, {
        session_id: s.id, phase: s.phase, feedback: s.phase === "training",
        trial_count: s.trials,
        trials: Array.from({ length: s.trials }, (_, i) => ({
          index: i, audio: [`/audio/${s.id}-${i}-a.wav`, `/audio/${s.id}-${i}-b.wav`],
        })),
      });
    }
    if (url.endsWith("/api/response")) {
      const body = JSON.parse(String(init!.body)) as {
        session_id: string; trial_index: number; choice: Choice;
      };
      const got = this.got(body.session_id);
      if (got.has(body.trial_index)) return json(409, { error: "duplicate" });
      got.set(body.trial_index, body.choice);
      const s = [...this.sessions.training, this.sessions.practice, this.sessions.main]
        .find((x) => x.id === body.session_id)!;
      const payload: Record<string, unknown> = { status: "recorded" };
      if (s.phase === "training") {
        payload.feedback = { correct: s.key![body.trial_index] === body.choice };
      }
      return json(201, payload);
    }
    return json(404, { error: "unknown route" });
  };
}

class InstantPlayer implements AudioPlayer {
  failing = new Set<string>();
  async play(url: string) {
    if (this.failing.has(url)) throw new Error(`audio failed: ${url}`);
  }
}

class ScriptedPresenter implements TrialPresenter {
  feedback: boolean[] = [];
  phases: string[] = [];
  skips: number[] = [];
  attempt = 1;

  constructor(private pick: (ctx: TrialContext, attempt: number) => Choice) {}

  async present(machine: TrialMachine, ctx: TrialContext): Promise<Choice> {
    await machine.playBoth();
    const choice = this.pick(ctx, this.attempt);
    machine.select(choice);
    return choice;
  }

  showFeedback(correct: boolean) {
    this.feedback.push(correct);
  }

  phaseChanged(p: { phase: string; attempt: number }) {
    this.attempt = p.attempt;
    if (this.phases[this.phases.length - 1] !== p.phase) this.phases.push(p.phase);
  }

  trialSkipped(index: number) {
    this.skips.push(index);
  }
}

function makeService() {
  const key: Choice[] = ["first", "second", "first", "second"];
  return new FakeService({
    training: [
      { id: "tr1", phase: "training", trials: 4, key, passNeeded: 3 },
      { id: "tr2", phase: "training", trials: 4, key, passNeeded: 3 },
    ],
    practice: { id: "pr", phase: "practice", trials: 2 },
    main: { id: "mn", phase: "main", trials: 3 },
  });
}

describe("SessionRunner", () => {
  test("training feedback shown, held on fail, advances on pass", async () => {
    const svc = makeService();
    const key: Choice[] = ["first", "second", "first", "second"];
    const presenter = new ScriptedPresenter((ctx, attempt) => {
      if (ctx.phase !== "training") return "first";
      const correct = key[ctx.index]!;
      // attempt 1: two wrong (2/4 < 3); attempt 2: all correct
      if (attempt === 1 && ctx.index >= 2) {
        return correct === "first" ? "second" : "first";
      }
      return correct;
    });
    const api = new ApiClient("http://fake", svc.fetch, 1);
    const runner = new SessionRunner(api, new InstantPlayer(), "p", presenter, 0);
    const summary = await runner.run();
    expect(svc.trainingAttempt).toBe(2);
    expect(presenter.feedback.filter((c) => !c).length).toBe(2);
    expect(presenter.phases).toEqual(["training", "practice", "main", "done"]);
    expect(summary.answered).toBe(4 + 4 + 2 + 3);
    // feedback only arrived during training
    expect(presenter.feedback.length).toBe(8);
  });

  test("audio failure skips the trial and stalls out with a report", async () => {
    const svc = makeService();
    const player = new InstantPlayer();
    player.failing.add("/audio/tr1-1-a.wav");
    const presenter = new ScriptedPresenter((ctx) =>
      (["first", "second", "first", "second"] as Choice[])[ctx.index % 4]!,
    );
    const api = new ApiClient("http://fake", svc.fetch, 1);
    const runner = new SessionRunner(api, player, "p", presenter, 0);
    await expect(runner.run()).rejects.toThrow(/stalled/);
    expect(presenter.skips).toEqual([1]);
  });
});

describe("ApiClient", () => {
  test("retries the POST on network failure", async () => {
    const svc = makeService();
    let failures = 1;
    const flaky: typeof fetch = async (input, init) => {
      if (String(input).endsWith("/api/response") && failures-- > 0) {
        throw new TypeError("network down");
      }
      return svc.fetch(input, init);
    };
    const api = new ApiClient("http://fake", flaky, 1);
    const res = await api.submit("p", "tr1", 0, "first");
    expect(res.recorded).toBe(true);
    expect(res.duplicate).toBe(false);
  });

  test("409 counts as success without feedback", async () => {
    const svc = makeService();
    const api = new ApiClient("http://fake", svc.fetch, 1);
    await api.submit("p", "tr1", 0, "first");
    const res = await api.submit("p", "tr1", 0, "first");
    expect(res.recorded).toBe(true);
    expect(res.duplicate).toBe(true);
    expect(res.feedback).toBeUndefined();
  });

  test("other statuses raise", async () => {
    const svc = makeService();
    const api = new ApiClient("http://fake", svc.fetch, 1);
    await expect(api.session("ghost")).rejects.toThrow();
  });
});
