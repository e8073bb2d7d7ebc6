// Typed client over the tutoring service HTTP API. All state lives on the
// server; this module only shapes requests and decodes error envelopes.

export interface TurnMeta {
  evaluation: string;
  actions: number[];
  state: string;
  subproblem: string;
  thoughts: string;
  retrieved_locators: string[];
  repairs_used: number;
}

export interface Progress {
  subproblem_index: number;
  total_known: number | null;
  terminal: boolean;
}

export interface TutorReply {
  utterance: string;
  meta: TurnMeta;
  progress: Progress;
}

export interface TranscriptEntry {
  speaker: string;
  text: string;
  meta: TurnMeta | null;
  aborted: boolean;
}

export interface SessionTranscript {
  session_id: string;
  status: string;
  problem: string;
  problem_id: string;
  progress: Progress;
  transcript: TranscriptEntry[];
}

export interface ProblemSummary {
  id: string;
  problem: string;
  subproblem_count: number;
}

export interface SessionCreated {
  session_id: string;
  status: string;
  reply: TutorReply;
}

export interface RatingStored {
  rating_id: string;
  session_id: string;
  rater: string;
  item: string;
  score: number;
  comment: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function decode<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let code = `HTTP${response.status}`;
  let message = response.statusText;
  try {
    const body = await response.json();
    if (body && body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new ApiError(response.status, code, message);
}

export class TutorApi {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  listProblems(): Promise<ProblemSummary[]> {
    return fetch(this.url("/problems")).then((r) => decode<ProblemSummary[]>(r));
  }

  createSession(body: { problem_id?: string; problem_text?: string }): Promise<SessionCreated> {
    return fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => decode<SessionCreated>(r));
  }

  sendMessage(sessionId: string, text: string): Promise<TutorReply> {
    return fetch(this.url(`/sessions/${sessionId}/messages`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    }).then((r) => decode<TutorReply>(r));
  }

  getTranscript(sessionId: string): Promise<SessionTranscript> {
    return fetch(this.url(`/sessions/${sessionId}`)).then((r) => decode<SessionTranscript>(r));
  }

  postRating(record: {
    session_id: string;
    rater: string;
    item: string;
    score: number;
    comment: string;
  }): Promise<RatingStored> {
    return fetch(this.url("/ratings"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(record),
    }).then((r) => decode<RatingStored>(r));
  }
}
