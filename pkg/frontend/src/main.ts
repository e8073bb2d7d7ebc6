// Controller: owns the state, talks to the API, re-renders after every
// transition. One in-flight message per session; a 409 keeps the composer
// locked behind a retry affordance instead of double-sending.

import { ApiError, TutorApi } from "./api.js";
import type { RatingItem } from "./state.js";
import {
  RATING_ITEMS,
  appendExchange,
  initialState,
  sessionFromCreate,
  sessionFromTranscript,
  type AppState,
} from "./state.js";
import { render, type Handlers } from "./ui.js";

const OPENING_PREFIX = "Help me with Q. ";

export class App {
  state: AppState = initialState();
  private lastFailedText: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: TutorApi,
  ) {}

  private readonly handlers: Handlers = {
    onPickProblem: (problemId) => void this.startSession({ problem_id: problemId }),
    onFreeTextChange: (text) => {
      this.state.freeText = text;
      this.draw();
    },
    onStartFreeText: () => void this.startSession({ problem_text: this.state.freeText.trim() }),
    onSend: (text) => void this.send(text),
    onRetry: () => {
      if (this.lastFailedText && this.state.session) {
        // Busy kept the session locked; release it for the explicit retry.
        this.state.session.pending = false;
        void this.send(this.lastFailedText);
      }
    },
    onToggleRole: () => {
      this.state.role = this.state.role === "student" ? "evaluator" : "student";
      this.draw();
    },
    onOpenRating: () => {
      this.state.screen = "rating";
      this.draw();
    },
    onBackToChat: () => {
      this.state.screen = "chat";
      this.draw();
    },
    onScore: (item: RatingItem, score: number) => {
      this.state.rating.scores[item] = score;
      this.draw();
    },
    onComment: (item: RatingItem, comment: string) => {
      this.state.rating.comments[item] = comment;
    },
    onRaterChange: (rater) => {
      this.state.rating.rater = rater;
    },
    onSubmitRatings: () => void this.submitRatings(),
  };

  draw(): void {
    render(this.state, this.handlers, this.root);
  }

  async boot(sessionId: string | null = null): Promise<void> {
    if (sessionId) {
      await this.reload(sessionId);
      return;
    }
    try {
      this.state.problems = await this.api.listProblems();
    } catch (error) {
      this.toastError(error);
    }
    this.draw();
  }

  /** Rebuild the view purely from the server transcript (page reload path). */
  async reload(sessionId: string): Promise<void> {
    try {
      const transcript = await this.api.getTranscript(sessionId);
      this.state.session = sessionFromTranscript(transcript);
      this.state.screen = "chat";
    } catch (error) {
      this.toastError(error);
    }
    this.draw();
  }

  private async startSession(body: { problem_id?: string; problem_text?: string }): Promise<void> {
    try {
      const created = await this.api.createSession(body);
      const problem =
        body.problem_text ??
        this.state.problems.find((p) => p.id === body.problem_id)?.problem ??
        "";
      this.state.session = sessionFromCreate(
        created.session_id,
        problem,
        created.reply,
        `${OPENING_PREFIX}${problem}`,
      );
      this.state.screen = "chat";
      this.state.toast = null;
    } catch (error) {
      this.toastError(error);
    }
    this.draw();
  }

  private async send(text: string): Promise<void> {
    const view = this.state.session;
    if (!view || view.pending) {
      return; // never two in-flight messages for one session
    }
    view.pending = true;
    this.state.toast = null;
    this.draw();
    try {
      const reply = await this.api.sendMessage(view.sessionId, text);
      this.state.session = appendExchange(view, text, reply);
      this.lastFailedText = null;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409 && error.code === "Busy") {
        // Keep the composer locked; offer an explicit retry.
        this.lastFailedText = text;
        this.state.toast = { kind: "error", message: "Session is busy.", retryText: "Retry" };
      } else {
        view.pending = false;
        this.lastFailedText = null;
        this.toastError(error);
      }
    }
    this.draw();
  }

  private async submitRatings(): Promise<void> {
    const view = this.state.session;
    if (!view) return;
    this.state.rating.submitting = true;
    this.draw();
    const stored: string[] = [];
    try {
      for (const item of RATING_ITEMS) {
        const score = this.state.rating.scores[item];
        if (typeof score !== "number") continue;
        const result = await this.api.postRating({
          session_id: view.sessionId,
          rater: this.state.rating.rater || "anonymous",
          item,
          score,
          comment: this.state.rating.comments[item] ?? "",
        });
        stored.push(result.rating_id);
      }
      this.state.rating.storedIds = stored;
    } catch (error) {
      this.toastError(error);
    }
    this.state.rating.submitting = false;
    this.draw();
  }

  private toastError(error: unknown): void {
    const message =
      error instanceof ApiError
        ? `${error.code}: ${error.message}`
        : `unexpected error: ${String(error)}`;
    this.state.toast = { kind: "error", message, retryText: null };
  }
}

export function initApp(root: HTMLElement, api: TutorApi, sessionId: string | null = null): App {
  const app = new App(root, api);
  void app.boot(sessionId);
  return app;
}
