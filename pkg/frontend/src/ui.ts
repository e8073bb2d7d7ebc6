// DOM rendering. Each render pass redraws the app root from the current
// state; handlers are injected so the module stays free of app wiring.

import type { AppState, RatingItem } from "./state.js";
import {
  RATING_ITEMS,
  RATING_PROMPTS,
  canSubmitRatings,
  metaSummary,
  progressLabel,
} from "./state.js";

export interface Handlers {
  onPickProblem(problemId: string): void;
  onFreeTextChange(text: string): void;
  onStartFreeText(): void;
  onSend(text: string): void;
  onRetry(): void;
  onToggleRole(): void;
  onOpenRating(): void;
  onBackToChat(): void;
  onScore(item: RatingItem, score: number): void;
  onComment(item: RatingItem, comment: string): void;
  onRaterChange(rater: string): void;
  onSubmitRatings(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderToast(state: AppState, handlers: Handlers, root: HTMLElement): void {
  if (!state.toast) return;
  const toast = el("div", `toast toast-${state.toast.kind}`);
  toast.setAttribute("data-testid", "toast");
  toast.append(el("span", "", state.toast.message));
  if (state.toast.retryText) {
    const retry = el("button", "retry", state.toast.retryText);
    retry.setAttribute("data-testid", "retry");
    retry.onclick = () => handlers.onRetry();
    toast.append(retry);
  }
  root.append(toast);
}

function renderHeader(state: AppState, handlers: Handlers, root: HTMLElement): void {
  const header = el("header", "topbar");
  header.append(el("h1", "", "Tutor"));
  const role = el("button", "role-toggle", `role: ${state.role}`);
  role.setAttribute("data-testid", "role-toggle");
  role.onclick = () => handlers.onToggleRole();
  header.append(role);
  root.append(header);
}

function renderCreate(state: AppState, handlers: Handlers, root: HTMLElement): void {
  const screen = el("section", "screen create-screen");
  screen.append(el("h2", "", "Start a session"));

  const list = el("ul", "problem-list");
  list.setAttribute("data-testid", "problem-list");
  for (const problem of state.problems) {
    const item = el("li", "problem-item");
    const button = el("button", "problem-pick", problem.problem);
    button.setAttribute("data-problem-id", problem.id);
    button.onclick = () => handlers.onPickProblem(problem.id);
    item.append(button, el("span", "subcount", `${problem.subproblem_count} subproblems`));
    list.append(item);
  }
  if (!state.problems.length) {
    list.append(el("li", "problem-empty", "no imported problems"));
  }
  screen.append(list);

  screen.append(el("p", "or", "or paste a problem:"));
  const textarea = el("textarea", "free-text");
  textarea.setAttribute("data-testid", "free-text");
  textarea.value = state.freeText;
  textarea.oninput = () => handlers.onFreeTextChange(textarea.value);
  const start = el("button", "start", "Start");
  start.setAttribute("data-testid", "start-free-text");
  start.disabled = !state.freeText.trim();
  start.onclick = () => handlers.onStartFreeText();
  screen.append(textarea, start);
  root.append(screen);
}

function renderChat(state: AppState, handlers: Handlers, root: HTMLElement): void {
  const view = state.session;
  if (!view) return;
  const screen = el("section", "screen chat-screen");

  const progress = el("div", "progress", progressLabel(view.progress));
  progress.setAttribute("data-testid", "progress");
  screen.append(progress);
  screen.append(el("p", "problem", view.problem));

  const log = el("div", "transcript");
  log.setAttribute("data-testid", "transcript");
  for (const entry of view.transcript) {
    const bubble = el("div", `bubble ${entry.speaker}${entry.aborted ? " aborted" : ""}`);
    bubble.setAttribute("data-speaker", entry.speaker);
    bubble.append(el("p", "text", entry.text));
    if (entry.meta && state.role === "evaluator") {
      const meta = el("div", "meta-panel", metaSummary(entry.meta));
      meta.setAttribute("data-testid", "meta-panel");
      meta.setAttribute("data-state", entry.meta.state);
      bubble.append(meta);
    }
    log.append(bubble);
  }
  if (view.pending) {
    const pendingBubble = el("div", "bubble tutor pending", "…");
    pendingBubble.setAttribute("data-testid", "pending");
    log.append(pendingBubble);
  }
  screen.append(log);

  if (view.progress.terminal) {
    const banner = el("div", "finished-banner", "Problem finished");
    banner.setAttribute("data-testid", "finished-banner");
    const rate = el("button", "rate-cta", "Rate this session");
    rate.setAttribute("data-testid", "open-rating");
    rate.onclick = () => handlers.onOpenRating();
    banner.append(rate);
    screen.append(banner);
  } else {
    const form = el("div", "composer");
    const input = el("input", "composer-input");
    input.setAttribute("data-testid", "composer");
    input.type = "text";
    input.placeholder = "your answer…";
    input.disabled = view.pending;
    const send = el("button", "send", "Send");
    send.setAttribute("data-testid", "send");
    send.disabled = view.pending;
    const submit = () => {
      const text = input.value.trim();
      if (text) handlers.onSend(text);
    };
    send.onclick = submit;
    input.onkeydown = (event) => {
      if (event.key === "Enter") submit();
    };
    form.append(input, send);
    screen.append(form);
  }
  root.append(screen);
}

function renderRating(state: AppState, handlers: Handlers, root: HTMLElement): void {
  const view = state.session;
  if (!view) return;
  const screen = el("section", "screen rating-screen");
  screen.append(el("h2", "", "Rate this session"));

  const rater = el("input", "rater");
  rater.setAttribute("data-testid", "rater");
  rater.type = "text";
  rater.placeholder = "your name";
  rater.value = state.rating.rater;
  rater.oninput = () => handlers.onRaterChange(rater.value);
  screen.append(rater);

  const table = el("div", "rating-items");
  for (const item of RATING_ITEMS) {
    const row = el("div", "rating-row");
    row.append(el("label", "rating-label", `${item}: ${RATING_PROMPTS[item]}`));
    const scores = el("div", "rating-scores");
    for (let score = 1; score <= 5; score += 1) {
      const pick = el("button", "score" + (state.rating.scores[item] === score ? " picked" : ""), String(score));
      pick.setAttribute("data-testid", `score-${item}-${score}`);
      pick.onclick = () => handlers.onScore(item, score);
      scores.append(pick);
    }
    row.append(scores);
    const comment = el("input", "rating-comment");
    comment.setAttribute("data-testid", `comment-${item}`);
    comment.type = "text";
    comment.placeholder = "comment (optional)";
    comment.value = state.rating.comments[item] ?? "";
    comment.oninput = () => handlers.onComment(item, comment.value);
    row.append(comment);
    table.append(row);
  }
  screen.append(table);

  const submit = el("button", "submit-ratings", state.rating.submitting ? "Submitting…" : "Submit ratings");
  submit.setAttribute("data-testid", "submit-ratings");
  submit.disabled = !canSubmitRatings(state.rating);
  submit.onclick = () => handlers.onSubmitRatings();
  screen.append(submit);

  if (state.rating.storedIds.length) {
    const stored = el("p", "stored-confirmation", `Stored ${state.rating.storedIds.length} ratings: ${state.rating.storedIds.join(", ")}`);
    stored.setAttribute("data-testid", "stored-confirmation");
    screen.append(stored);
  }

  const back = el("button", "back", "Back to transcript");
  back.setAttribute("data-testid", "back-to-chat");
  back.onclick = () => handlers.onBackToChat();
  screen.append(back);
  root.append(screen);
}

export function render(state: AppState, handlers: Handlers, root: HTMLElement): void {
  root.textContent = "";
  renderHeader(state, handlers, root);
  renderToast(state, handlers, root);
  if (state.screen === "create") {
    renderCreate(state, handlers, root);
  } else if (state.screen === "chat") {
    renderChat(state, handlers, root);
  } else {
    renderRating(state, handlers, root);
  }
}
