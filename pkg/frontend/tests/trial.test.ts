import { describe, expect, test } from "vitest";

import type { AudioPlayer } from "../src/player.js";
import { TrialMachine } from "../src/trial.js";

class RecordingPlayer implements AudioPlayer {
  played: string[] = [];
  failFor = new Set<string>();

  async play(url: string): Promise<void> {
    if (this.failFor.has(url)) {
      throw new Error(`audio failed to load: ${url}`);
    }
    this.played.push(url);
  }
}

const URLS: [string, string] = ["/audio/a.wav", "/audio/b.wav"];

function machine(player = new RecordingPlayer()) {
  return { player, m: new TrialMachine(player, URLS, 0) };
}

describe("TrialMachine", () => {
  test("choice stays disabled until both intervals played once", async () => {
    const { m } = machine();
    expect(m.canChoose).toBe(false);
    expect(() => m.select("first")).toThrow();
    await m.playBoth();
    expect(m.canChoose).toBe(true);
  });

  test("plays first interval, gap, then second in order", async () => {
    const { player, m } = machine();
    await m.playBoth();
    expect(player.played).toEqual(URLS);
  });

  test("replay allowed before choosing, final choice wins", async () => {
    const { player, m } = machine();
    await m.playBoth();
    await m.replay(0);
    expect(player.played).toEqual([...URLS, URLS[0]]);
    m.select("first");
    m.select("second"); // participant changes their mind pre-submit
    expect(m.beginSubmit()).toBe("second");
  });

  test("exactly one submission per trial", async () => {
    const { m } = machine();
    await m.playBoth();
    m.select("first");
    m.beginSubmit();
    expect(() => m.beginSubmit()).toThrow();
    m.markSubmitted();
    expect(() => m.select("first")).toThrow();
    expect(() => m.beginSubmit()).toThrow();
    await expect(m.playBoth()).rejects.toThrow();
  });

  test("load failure returns to unplayed and rejects", async () => {
    const player = new RecordingPlayer();
    player.failFor.add(URLS[1]);
    const m = new TrialMachine(player, URLS, 0);
    await expect(m.playBoth()).rejects.toThrow(/audio failed/);
    expect(m.state).toBe("unplayed");
    expect(m.canChoose).toBe(false);
  });

  test("abortSubmit reopens the choice after a failed POST", async () => {
    const { m } = machine();
    await m.playBoth();
    m.select("first");
    m.beginSubmit();
    m.abortSubmit();
    expect(m.canChoose).toBe(true);
    expect(m.beginSubmit()).toBe("first");
  });

  test("state transitions reach the change hook", async () => {
    const { m } = machine();
    const seen: string[] = [];
    m.onChange = (s) => seen.push(s);
    await m.playBoth();
    m.select("second");
    m.beginSubmit();
    m.markSubmitted();
    expect(seen).toEqual(["playing", "awaiting-choice", "submitting", "submitted"]);
  });
});
