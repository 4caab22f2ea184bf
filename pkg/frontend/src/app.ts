// Session wiring. One request may be in flight per session; the composer is
// disabled while awaiting, so acknowledgment order equals send order and the
// transcript stays serial. A turn joins the transcript only after the server
// acknowledges it: a failed request appends nothing and arms the retry
// banner with the exact action that failed.

import { MalformedPayload, NetworkFailure, SessionClient } from "./api";
import type { Message, UtteranceReply } from "./types";
import * as view from "./view";

function walkOf(reply: UtteranceReply): string[] {
  const walk: string[] = [];
  if (reply.start) walk.push(reply.start);
  if (reply.step1 && reply.step1 !== reply.start) walk.push(reply.step1);
  if (reply.step2) walk.push(reply.step2);
  return walk;
}

export class ChatApp {
  readonly client: SessionClient;
  readonly refs: view.Refs;
  readonly messages: Message[] = [];

  private sid: string | null = null;
  private inflight = false;
  private closed = false;
  private retryAction: (() => Promise<void>) | null = null;

  constructor(root: HTMLElement, base: string) {
    this.client = new SessionClient(base);
    this.refs = view.buildShell(root);
    this.refs.composer.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });
    this.refs.retry.addEventListener("click", () => void this.retry());
    this.refs.accept.addEventListener("click", () => void this.accept());
    view.setBusy(this.refs, true); // nothing to send until a session exists
  }

  get sessionId(): string | null {
    return this.sid;
  }

  async start(): Promise<void> {
    try {
      this.sid = await this.client.open();
    } catch (err) {
      this.fail(err, () => this.start());
      return;
    }
    view.hideBanner(this.refs);
    this.refs.sessionId.textContent = this.sid;
    view.setBusy(this.refs, false);
  }

  // form submit path: validate client-side, then run the turn
  private async submit(): Promise<void> {
    const text = this.refs.input.value.trim();
    if (!text || this.inflight || this.closed || this.sid === null) return;
    await this.sendTurn(text);
  }

  private async sendTurn(text: string): Promise<void> {
    if (this.inflight || this.closed || this.sid === null) return;
    this.inflight = true;
    view.setBusy(this.refs, true);
    try {
      const reply = await this.client.utterance(this.sid, text);
      this.ack(text, reply);
    } catch (err) {
      this.fail(err, () => this.sendTurn(text));
      return;
    } finally {
      this.inflight = false;
      if (!this.closed) view.setBusy(this.refs, false);
    }
    this.refs.input.value = "";
  }

  // both turn messages enter the transcript at acknowledgment time
  private ack(text: string, reply: UtteranceReply): void {
    view.hideBanner(this.refs);
    this.retryAction = null;
    const now = Date.now();
    this.push({ speaker: "seeker", text, timestamp: now });
    this.push({
      speaker: "wizard",
      text: reply.reply,
      timestamp: now,
      action: reply.action,
      walk: walkOf(reply),
      item: reply.item,
      explanation: reply.explanation,
    });
    view.renderTopK(this.refs, reply.top_k_items, reply.scores);
    if (reply.action === "recommend") this.refs.accept.disabled = false;
  }

  private push(msg: Message): void {
    this.messages.push(msg);
    view.appendMessage(this.refs, msg);
  }

  private async accept(): Promise<void> {
    if (this.inflight || this.closed || this.sid === null) return;
    this.inflight = true;
    view.setBusy(this.refs, true);
    try {
      await this.client.close(this.sid);
    } catch (err) {
      this.inflight = false;
      view.setBusy(this.refs, false);
      this.fail(err, () => this.accept());
      return;
    }
    this.inflight = false;
    this.closed = true;
    view.setClosed(this.refs);
  }

  private async retry(): Promise<void> {
    const action = this.retryAction;
    this.retryAction = null;
    view.hideBanner(this.refs);
    if (action) await action();
  }

  private fail(err: unknown, retryAction: () => Promise<void>): void {
    if (err instanceof NetworkFailure) {
      this.retryAction = retryAction;
      view.showBanner(this.refs, "could not reach the server");
    } else if (err instanceof MalformedPayload) {
      view.showToast(this.refs, err.message);
    } else {
      view.showToast(this.refs, err instanceof Error ? err.message : String(err));
    }
  }
}
