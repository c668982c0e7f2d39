import { ApiClient, ApiError, Mode, SegmentResponse } from "./api.js";
import { Debounced, debounce } from "./debounce.js";
import { checkCharsPreserved } from "./textops.js";

export interface SessionState {
  input: string;
  mode: Mode;
  pending: boolean;
  suggestion: SegmentResponse | null;
  /** The user's working copy of the suggestion (spacing edits only). */
  edited: string | null;
  /** Code-point index of a character-preservation violation, if any. */
  violationAt: number | null;
  banner: string | null;
  lastFeedbackId: string | null;
}

type Listener = (state: SessionState) => void;

/**
 * Drives the assistive loop: debounced live suggestions with latest-wins
 * cancellation, spacing-only edits, and confirm-as-feedback. No state is
 * discarded on a failed request; errors surface as a banner only.
 */
export class SessionController {
  private state: SessionState = {
    input: "",
    mode: "recommend",
    pending: false,
    suggestion: null,
    edited: null,
    violationAt: null,
    banner: null,
    lastFeedbackId: null,
  };

  private inflight: AbortController | null = null;
  private requestSeq = 0;
  private readonly scheduleRequest: Debounced<[]>;

  constructor(
    private readonly client: ApiClient,
    private readonly listener: Listener,
    debounceMs = 300,
  ) {
    this.scheduleRequest = debounce(() => void this.requestNow(), debounceMs);
  }

  getState(): Readonly<SessionState> {
    return this.state;
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    this.listener(this.state);
  }

  setInput(text: string): void {
    this.update({ input: text, lastFeedbackId: null });
    this.scheduleRequest();
  }

  setMode(mode: Mode): void {
    if (mode === this.state.mode) return;
    this.update({ mode });
    if (this.state.input.length > 0) void this.requestNow();
  }

  /** Fire the pending request immediately (bypasses the debounce). */
  async requestNow(): Promise<void> {
    this.scheduleRequest.cancel();
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const seq = ++this.requestSeq;
    this.update({ pending: true });
    try {
      const suggestion = await this.client.segment(
        this.state.input,
        this.state.mode,
        controller.signal,
      );
      if (seq !== this.requestSeq) return; // a newer request superseded this one
      this.update({
        pending: false,
        suggestion,
        edited: suggestion.segmented,
        violationAt: null,
        banner: null,
      });
    } catch (err) {
      if (controller.signal.aborted) return; // cancelled by a newer request
      if (seq !== this.requestSeq) return;
      // Non-blocking: keep the raw input and any previous suggestion.
      this.update({ pending: false, banner: describeError(err) });
    }
  }

  /** Apply a spacing edit to the working copy; flags character changes. */
  editSegmentation(text: string): void {
    const check = checkCharsPreserved(this.state.input, text);
    this.update({ edited: text, violationAt: check.ok ? null : (check.position ?? 0) });
  }

  canConfirm(): boolean {
    return (
      this.state.suggestion !== null &&
      this.state.edited !== null &&
      this.state.violationAt === null &&
      !this.state.pending
    );
  }

  /** POST the edited segmentation as feedback; state only changes on 2xx. */
  async confirm(clientId = "webui"): Promise<boolean> {
    if (!this.canConfirm() || this.state.suggestion === null || this.state.edited === null) {
      return false;
    }
    try {
      const resp = await this.client.feedback({
        original: this.state.input,
        suggested: this.state.suggestion.segmented,
        accepted: this.state.edited,
        client_id: clientId,
      });
      this.update({ lastFeedbackId: resp.id, banner: null });
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.update({ banner: `characters were altered: ${err.detail}` });
      } else {
        this.update({ banner: describeError(err) });
      }
      return false;
    }
  }

  dispose(): void {
    this.scheduleRequest.cancel();
    this.inflight?.abort();
  }
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `service error (${err.status})`;
  return "service unreachable";
}
