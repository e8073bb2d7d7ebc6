// View-model state and the pure helpers the screens render from.

import type { Progress, ProblemSummary, TranscriptEntry, TutorReply, SessionTranscript } from "./api.js";

export type Screen = "create" | "chat" | "rating";
export type Role = "student" | "evaluator";

export const RATING_ITEMS = ["F1", "F2", "F3", "R1", "R2", "R3", "C1", "C2", "M1", "M2"] as const;
export type RatingItem = (typeof RATING_ITEMS)[number];

export const RATING_PROMPTS: Record<RatingItem, string> = {
  F1: "Decision codes are accurate",
  F2: "Hints are factually valid",
  F3: "Final answers are factually valid",
  R1: "Subproblems are relevant to the question",
  R2: "Hints help when the student is stuck",
  R3: "Dialogue resembles an instructor's explanation",
  C1: "Each answer is completed before moving on",
  C2: "Off-topic conversation is handled well",
  M1: "The conversation is engaging",
  M2: "The conversation avoids frustrating the student",
};

export interface ViewSession {
  sessionId: string;
  problem: string;
  transcript: TranscriptEntry[];
  progress: Progress;
  status: string;
  pending: boolean;
}

export interface Toast {
  kind: "error" | "info";
  message: string;
  retryText: string | null;
}

export interface RatingFormState {
  scores: Partial<Record<RatingItem, number>>;
  comments: Partial<Record<RatingItem, string>>;
  rater: string;
  storedIds: string[];
  submitting: boolean;
}

export interface AppState {
  screen: Screen;
  role: Role;
  problems: ProblemSummary[];
  freeText: string;
  session: ViewSession | null;
  toast: Toast | null;
  rating: RatingFormState;
}

export function initialState(): AppState {
  return {
    screen: "create",
    role: "student",
    problems: [],
    freeText: "",
    session: null,
    toast: null,
    rating: { scores: {}, comments: {}, rater: "", storedIds: [], submitting: false },
  };
}

export function sessionFromCreate(sessionId: string, problem: string, reply: TutorReply, openingText: string): ViewSession {
  return {
    sessionId,
    problem,
    status: reply.progress.terminal ? "finished" : "active",
    pending: false,
    progress: reply.progress,
    transcript: [
      { speaker: "student", text: openingText, meta: null, aborted: false },
      { speaker: "tutor", text: reply.utterance, meta: reply.meta, aborted: false },
    ],
  };
}

export function sessionFromTranscript(transcript: SessionTranscript): ViewSession {
  return {
    sessionId: transcript.session_id,
    problem: transcript.problem,
    status: transcript.status,
    pending: false,
    progress: transcript.progress,
    transcript: transcript.transcript,
  };
}

export function appendExchange(view: ViewSession, studentText: string, reply: TutorReply): ViewSession {
  return {
    ...view,
    pending: false,
    progress: reply.progress,
    status: reply.progress.terminal ? "finished" : view.status,
    transcript: [
      ...view.transcript,
      { speaker: "student", text: studentText, meta: null, aborted: false },
      { speaker: "tutor", text: reply.utterance, meta: reply.meta, aborted: false },
    ],
  };
}

export function progressLabel(progress: Progress): string {
  if (progress.terminal) {
    return "finished";
  }
  if (progress.total_known) {
    return `subproblem ${progress.subproblem_index} of ${progress.total_known}`;
  }
  return `subproblem ${progress.subproblem_index}`;
}

export function canSubmitRatings(form: RatingFormState): boolean {
  return !form.submitting && RATING_ITEMS.every((item) => typeof form.scores[item] === "number");
}

export function tutorTurns(view: ViewSession): TranscriptEntry[] {
  return view.transcript.filter((entry) => entry.speaker === "tutor");
}

export function metaSummary(meta: { evaluation: string; actions: number[]; state: string; retrieved_locators: string[] }): string {
  const parts = [`eval ${meta.evaluation}`, `actions ${meta.actions.join(",")}`, `state ${meta.state}`];
  if (meta.retrieved_locators.length) {
    parts.push(`passages ${meta.retrieved_locators.join(", ")}`);
  }
  return parts.join(" · ");
}
