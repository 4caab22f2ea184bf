// Thin fetch wrapper around the session API. Failure modes are split into
// three classes because the UI reacts differently to each: network trouble
// gets a retry banner, a payload missing a required field gets a toast
// naming the field, and an explicit server rejection surfaces its message.

import type { SessionClosed, SessionOpened, UtteranceReply } from "./types";

export class NetworkFailure extends Error {
  constructor(detail: string) {
    super(`could not reach the server (${detail})`);
    this.name = "NetworkFailure";
  }
}

export class MalformedPayload extends Error {
  readonly field: string;
  constructor(field: string) {
    super(`server reply missing field: ${field}`);
    this.name = "MalformedPayload";
    this.field = field;
  }
}

export class ServerRejection extends Error {
  readonly status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ServerRejection";
    this.status = status;
  }
}

const REPLY_FIELDS = ["session_id", "reply", "action", "top_k_items", "scores"] as const;

function requireFields(payload: unknown, fields: readonly string[]): void {
  if (typeof payload !== "object" || payload === null) {
    throw new MalformedPayload(fields[0] ?? "body");
  }
  for (const field of fields) {
    if (!(field in payload)) throw new MalformedPayload(field);
  }
}

export class SessionClient {
  readonly base: string;

  constructor(base: string) {
    // tolerate a trailing slash in the configured address
    this.base = base.replace(/\/+$/, "");
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    let res: Response;
    try {
      res = await fetch(this.base + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkFailure(err instanceof Error ? err.message : String(err));
    }
    let payload: unknown;
    try {
      payload = await res.json();
    } catch {
      if (!res.ok) throw new ServerRejection(res.status, `server answered ${res.status}`);
      throw new MalformedPayload("body");
    }
    if (!res.ok) {
      const detail =
        typeof payload === "object" && payload !== null && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `server answered ${res.status}`;
      throw new ServerRejection(res.status, detail);
    }
    return payload;
  }

  async open(): Promise<string> {
    const payload = await this.request("POST", "/session");
    requireFields(payload, ["session_id"]);
    return (payload as SessionOpened).session_id;
  }

  async utterance(sid: string, text: string): Promise<UtteranceReply> {
    const payload = await this.request("POST", `/session/${sid}/utterance`, { text });
    requireFields(payload, REPLY_FIELDS);
    return payload as UtteranceReply;
  }

  async close(sid: string): Promise<SessionClosed> {
    const payload = await this.request("DELETE", `/session/${sid}`);
    requireFields(payload, ["session_id", "closed"]);
    return payload as SessionClosed;
  }
}
