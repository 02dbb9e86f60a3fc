// Typed client for the four experiment-service endpoints. The served
// session is blinded: trials carry opaque audio URLs only; this client
// never sees condition labels.

export type Choice = "first" | "second";

export interface ServedTrial {
  index: number;
  audio: [string, string];
}

export interface ServedSession {
  session_id: string;
  phase: string;
  feedback: boolean;
  trial_count: number;
  trials: ServedTrial[];
}

export interface Progress {
  participant_id: string;
  phase: string;
  attempt: number;
  completed: number;
  total: number;
  session_id: string | null;
  training_score?: { correct: number; answered: number };
}

export interface SubmitResult {
  recorded: boolean;
  /** true when a 409 told us the trial was already stored */
  duplicate: boolean;
  feedback?: { correct: boolean };
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class ApiClient {
  constructor(
    private baseUrl = "",
    private fetchFn: typeof fetch = fetch,
    private retryDelayMs = 250,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      throw new ApiError(resp.status, `${path}: ${await resp.text()}`);
    }
    return (await resp.json()) as T;
  }

  progress(participantId: string): Promise<Progress> {
    return this.getJson(`/api/progress/${encodeURIComponent(participantId)}`);
  }

  session(sessionId: string): Promise<ServedSession> {
    return this.getJson(`/api/session/${encodeURIComponent(sessionId)}`);
  }

  /**
   * Submit one response. The POST is idempotent server-side, so network
   * failures are retried and a 409 (already stored) counts as success.
   */
  async submit(
    participantId: string,
    sessionId: string,
    trialIndex: number,
    choice: Choice,
    retries = 3,
  ): Promise<SubmitResult> {
    const body = JSON.stringify({
      participant_id: participantId,
      session_id: sessionId,
      trial_index: trialIndex,
      choice,
    });
    let lastError: unknown;
    for (let attempt = 0; attempt <= retries; attempt++) {
      let resp: Response;
      try {
        resp = await this.fetchFn(`${this.baseUrl}/api/response`, {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body,
        });
      } catch (err) {
        lastError = err; // network failure: retry the idempotent POST
        await sleep(this.retryDelayMs * (attempt + 1));
        continue;
      }
      if (resp.status === 201) {
        const data = (await resp.json()) as { feedback?: { correct: boolean } };
        return { recorded: true, duplicate: false, feedback: data.feedback };
      }
      if (resp.status === 409) {
        return { recorded: true, duplicate: true };
      }
      throw new ApiError(resp.status, await resp.text());
    }
    throw new Error(`response POST failed after ${retries + 1} attempts: ${lastError}`);
  }
}
