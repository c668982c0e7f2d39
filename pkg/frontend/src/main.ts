import { ApiClient } from "./api.js";
import { gapAnnotations } from "./diff.js";
import { SessionController, SessionState } from "./session.js";
import { despace } from "./textops.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://localhost:8080";

const input = document.getElementById("input") as HTMLTextAreaElement;
const edited = document.getElementById("edited") as HTMLTextAreaElement;
const suggestionView = document.getElementById("suggestion") as HTMLDivElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const status = document.getElementById("status") as HTMLSpanElement;
const modeToggle = document.getElementById("mode") as HTMLInputElement;
const confirmButton = document.getElementById("confirm") as HTMLButtonElement;
const violation = document.getElementById("violation") as HTMLDivElement;

/** Fixed score bands around the 0.5 decision threshold. */
function scoreClass(score: number): string {
  if (score > 0.8) return "gap-strong";
  if (score > 0.5) return "gap-medium";
  if (score > 0.3) return "gap-near";
  return "";
}

function renderSuggestion(state: SessionState): void {
  suggestionView.replaceChildren();
  if (!state.suggestion) return;
  const chars = despace(state.input).chars;
  const annotations = gapAnnotations(state.input, state.suggestion.segmented);
  const scores = state.suggestion.scores;
  chars.forEach((ch, i) => {
    const span = document.createElement("span");
    span.textContent = ch;
    suggestionView.appendChild(span);
    const annotation = annotations[i];
    if (!annotation) return;
    const gap = document.createElement("span");
    gap.className = `gap ${annotation.kind}`;
    if (annotation.kind !== "kept") {
      gap.textContent = " ";
      gap.title = annotation.kind;
    }
    if (scores && scores[i] !== undefined) {
      const extra = scoreClass(scores[i]);
      if (extra) gap.classList.add(extra);
      gap.title = `${gap.title ? gap.title + ", " : ""}score ${scores[i].toFixed(2)}`;
    }
    suggestionView.appendChild(gap);
  });
}

function render(state: SessionState): void {
  status.textContent = state.pending ? "…" : "";
  banner.textContent = state.banner ?? "";
  banner.hidden = !state.banner;
  if (document.activeElement !== edited) {
    edited.value = state.edited ?? "";
  }
  violation.hidden = state.violationAt === null;
  if (state.violationAt !== null) {
    violation.textContent = `character changed at position ${state.violationAt}; only spaces may move`;
  }
  confirmButton.disabled = !controller.canConfirm();
  if (state.lastFeedbackId) {
    status.textContent = `stored (${state.lastFeedbackId})`;
  }
  renderSuggestion(state);
}

const client = new ApiClient(baseUrl);
const controller = new SessionController(client, render);

input.addEventListener("input", () => controller.setInput(input.value));
edited.addEventListener("input", () => controller.editSegmentation(edited.value));
modeToggle.addEventListener("change", () =>
  controller.setMode(modeToggle.checked ? "recommend" : "immediate"),
);
confirmButton.addEventListener("click", () => void controller.confirm());

void client
  .health()
  .then((h) => (status.textContent = `model ${h.model_id} (${h.status})`))
  .catch(() => (status.textContent = "service offline"));
