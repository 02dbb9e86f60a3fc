// Browser bootstrap: wire the DOM, read the participant token from the
// query string, run the session against the same-origin service.

import { ApiClient } from "./api.js";
import { HtmlAudioPlayer } from "./player.js";
import { SessionRunner } from "./session.js";
import { DomPresenter, type ViewElements } from "./ui.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function boot() {
  const params = new URLSearchParams(window.location.search);
  const participant = params.get("participant");
  const status = el<HTMLParagraphElement>("status");
  if (!participant) {
    status.textContent =
      "No participant token. Open this page as /?participant=YOUR_TOKEN";
    return;
  }
  const elements: ViewElements = {
    play: el<HTMLButtonElement>("play"),
    replayFirst: el<HTMLButtonElement>("replay-first"),
    replaySecond: el<HTMLButtonElement>("replay-second"),
    chooseFirst: el<HTMLButtonElement>("choose-first"),
    chooseSecond: el<HTMLButtonElement>("choose-second"),
    status,
    progress: el<HTMLParagraphElement>("progress"),
    feedback: el<HTMLParagraphElement>("feedback"),
  };
  const presenter = new DomPresenter(elements);
  const runner = new SessionRunner(
    new ApiClient(""),
    new HtmlAudioPlayer(),
    participant,
    presenter,
  );
  runner.run().catch((err) => {
    status.textContent = `Session error: ${err}`;
  });
}

window.addEventListener("DOMContentLoaded", boot);
