// Wire types for the session API. The client consumes these verbatim and
// holds no model logic: everything it shows comes from the server's JSON.

export type Action = "chat" | "query" | "recommend";

export interface SessionOpened {
  session_id: string;
}

export interface UtteranceReply {
  session_id: string;
  reply: string;
  action: Action;
  top_k_items: string[];
  scores: number[];
  // present when the server reasoned over the graph for this turn
  start?: string;
  step1?: string;
  step2?: string;
  // present on recommendations once the item/explanation split is known
  item?: string;
  explanation?: string;
}

export interface SessionClosed {
  session_id: string;
  closed: boolean;
}

// One acknowledged transcript entry. The timestamp is stamped client-side
// at the moment the server's reply arrives, so transcript order and
// timestamp order agree by construction.
export interface Message {
  speaker: "seeker" | "wizard";
  text: string;
  timestamp: number;
  action?: Action;
  walk?: string[];
  item?: string;
  explanation?: string;
}
