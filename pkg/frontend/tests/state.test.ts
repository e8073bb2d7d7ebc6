import { describe, expect, it } from "vitest";

import {
  RATING_ITEMS,
  appendExchange,
  canSubmitRatings,
  metaSummary,
  progressLabel,
  type RatingFormState,
  type ViewSession,
} from "../src/state.js";
import type { TutorReply } from "../src/api.js";

function reply(overrides: Partial<TutorReply["progress"]> = {}): TutorReply {
  return {
    utterance: "Correct!",
    meta: {
      evaluation: "b",
      actions: [3],
      state: "y",
      subproblem: "next part",
      thoughts: "",
      retrieved_locators: [],
      repairs_used: 0,
    },
    progress: { subproblem_index: 2, total_known: 3, terminal: false, ...overrides },
  };
}

function emptyForm(): RatingFormState {
  return { scores: {}, comments: {}, rater: "", storedIds: [], submitting: false };
}

describe("progressLabel", () => {
  it("shows m of n when the total is known", () => {
    expect(progressLabel({ subproblem_index: 2, total_known: 3, terminal: false })).toBe(
      "subproblem 2 of 3",
    );
  });

  it("omits the total when unknown", () => {
    expect(progressLabel({ subproblem_index: 1, total_known: null, terminal: false })).toBe(
      "subproblem 1",
    );
  });

  it("reports finished when terminal", () => {
    expect(progressLabel({ subproblem_index: 3, total_known: 3, terminal: true })).toBe("finished");
  });
});

describe("canSubmitRatings", () => {
  it("requires all ten items", () => {
    const form = emptyForm();
    for (const item of RATING_ITEMS.slice(0, 9)) {
      form.scores[item] = 4;
    }
    expect(canSubmitRatings(form)).toBe(false);
    form.scores[RATING_ITEMS[9]] = 5;
    expect(canSubmitRatings(form)).toBe(true);
  });

  it("locks while submitting", () => {
    const form = emptyForm();
    for (const item of RATING_ITEMS) form.scores[item] = 3;
    form.submitting = true;
    expect(canSubmitRatings(form)).toBe(false);
  });
});

describe("appendExchange", () => {
  const view: ViewSession = {
    sessionId: "s1",
    problem: "p",
    status: "active",
    pending: true,
    progress: { subproblem_index: 1, total_known: 3, terminal: false },
    transcript: [
      { speaker: "student", text: "opening", meta: null, aborted: false },
      {
        speaker: "tutor",
        text: "hello",
        meta: {
          evaluation: "g",
          actions: [12],
          state: "x",
          subproblem: "s",
          thoughts: "",
          retrieved_locators: [],
          repairs_used: 0,
        },
        aborted: false,
      },
    ],
  };

  it("appends both sides and clears pending", () => {
    const next = appendExchange(view, "my answer", reply());
    expect(next.pending).toBe(false);
    expect(next.transcript).toHaveLength(4);
    expect(next.transcript[2]).toMatchObject({ speaker: "student", text: "my answer" });
    expect(next.transcript[3]).toMatchObject({ speaker: "tutor", text: "Correct!" });
    expect(next.progress.subproblem_index).toBe(2);
    expect(view.transcript).toHaveLength(2); // input untouched
  });

  it("marks the session finished on terminal replies", () => {
    const next = appendExchange(view, "done", reply({ terminal: true, subproblem_index: 3 }));
    expect(next.status).toBe("finished");
  });
});

describe("metaSummary", () => {
  it("joins the decision fields", () => {
    const summary = metaSummary({
      evaluation: "c",
      actions: [4, 5],
      state: "x",
      retrieved_locators: ["bio/ch1/p1"],
    });
    expect(summary).toBe("eval c · actions 4,5 · state x · passages bio/ch1/p1");
  });
});
