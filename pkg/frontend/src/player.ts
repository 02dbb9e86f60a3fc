// Audio playback behind an interface so the session engine can run
// headless (tests, smoke drives) with a stub player.

export interface AudioPlayer {
  /** Resolves when the clip has played to its end; rejects on load failure. */
  play(url: string): Promise<void>;
}

export const sleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

/** Browser playback via HTMLAudioElement (diotic; system volume governs level). */
export class HtmlAudioPlayer implements AudioPlayer {
  play(url: string): Promise<void> {
    return new Promise((resolve, reject) => {
      const audio = new Audio(url);
      audio.preload = "auto";
      audio.addEventListener("ended", () => resolve());
      audio.addEventListener("error", () =>
        reject(new Error(`audio failed to load: ${url}`)),
      );
      audio.play().catch(reject);
    });
  }
}
