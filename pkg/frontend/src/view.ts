// DOM layer. The transcript list is append-only by construction: the only
// write path is appendMessage, which pushes a node at the end and never
// touches earlier ones, so acknowledged messages cannot be reordered or
// dropped by a later render.

import type { Action, Message } from "./types";

export interface Refs {
  root: HTMLElement;
  sessionId: HTMLElement;
  banner: HTMLElement;
  bannerText: HTMLElement;
  retry: HTMLButtonElement;
  toast: HTMLElement;
  transcript: HTMLOListElement;
  topk: HTMLOListElement;
  accept: HTMLButtonElement;
  composer: HTMLFormElement;
  input: HTMLInputElement;
  send: HTMLButtonElement;
  status: HTMLElement;
}

export function buildShell(root: HTMLElement): Refs {
  root.innerHTML = `
    <div class="chat">
      <header>
        <h1>movie chat</h1>
        <span id="session-id" class="session-id"></span>
      </header>
      <div id="banner" class="banner" hidden>
        <span id="banner-text"></span>
        <button id="retry" type="button">retry</button>
      </div>
      <div id="toast" class="toast" hidden></div>
      <main>
        <ol id="transcript" class="transcript" aria-live="polite"></ol>
        <aside class="panel">
          <h2>top candidates</h2>
          <ol id="topk"></ol>
          <button id="accept" type="button" disabled>accept recommendation</button>
        </aside>
      </main>
      <form id="composer">
        <input id="input" autocomplete="off" placeholder="say something" aria-label="your message">
        <button id="send" type="submit">send</button>
      </form>
      <div id="status" class="status"></div>
    </div>`;
  const grab = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`) as T;
  return {
    root,
    sessionId: grab("session-id"),
    banner: grab("banner"),
    bannerText: grab("banner-text"),
    retry: grab<HTMLButtonElement>("retry"),
    toast: grab("toast"),
    transcript: grab<HTMLOListElement>("transcript"),
    topk: grab<HTMLOListElement>("topk"),
    accept: grab<HTMLButtonElement>("accept"),
    composer: grab<HTMLFormElement>("composer"),
    input: grab<HTMLInputElement>("input"),
    send: grab<HTMLButtonElement>("send"),
    status: grab("status"),
  };
}

function stamp(ms: number): string {
  const d = new Date(ms);
  const pad = (n: number) => String(n).padStart(2, "0");
  return `${pad(d.getHours())}:${pad(d.getMinutes())}:${pad(d.getSeconds())}`;
}

function breadcrumb(walk: string[]): HTMLElement {
  const nav = document.createElement("nav");
  nav.className = "breadcrumb";
  walk.forEach((name, i) => {
    if (i > 0) {
      const sep = document.createElement("span");
      sep.className = "sep";
      sep.textContent = "→";
      nav.appendChild(sep);
    }
    const crumb = document.createElement("span");
    crumb.className = "crumb";
    crumb.textContent = name;
    nav.appendChild(crumb);
  });
  return nav;
}

export function appendMessage(refs: Refs, msg: Message): void {
  const li = document.createElement("li");
  li.className = `message ${msg.speaker}`;

  const meta = document.createElement("div");
  meta.className = "meta";
  const speaker = document.createElement("span");
  speaker.className = "speaker";
  speaker.textContent = msg.speaker;
  meta.appendChild(speaker);
  if (msg.action) {
    const badge = document.createElement("span");
    badge.className = `badge action-${msg.action}`;
    badge.textContent = msg.action;
    meta.appendChild(badge);
  }
  const time = document.createElement("time");
  time.className = "timestamp";
  time.textContent = stamp(msg.timestamp);
  meta.appendChild(time);
  li.appendChild(meta);

  const text = document.createElement("p");
  text.className = "text";
  text.textContent = msg.text;
  li.appendChild(text);

  if (msg.walk && msg.walk.length > 0) li.appendChild(breadcrumb(msg.walk));

  // a recommendation always names its item, and the explanation when known
  if (msg.action === "recommend" && msg.item) {
    const verdict = document.createElement("p");
    verdict.className = "verdict";
    verdict.append("recommends ");
    const item = document.createElement("strong");
    item.className = "rec-item";
    item.textContent = msg.item;
    verdict.appendChild(item);
    if (msg.explanation) {
      verdict.append(" because of ");
      const why = document.createElement("strong");
      why.className = "rec-explanation";
      why.textContent = msg.explanation;
      verdict.appendChild(why);
    }
    li.appendChild(verdict);
  }

  refs.transcript.appendChild(li);
  li.scrollIntoView?.({ block: "end" });
}

export function renderTopK(refs: Refs, names: string[], scores: number[]): void {
  refs.topk.textContent = "";
  names.forEach((name, i) => {
    const li = document.createElement("li");
    li.className = "candidate";
    const label = document.createElement("span");
    label.className = "candidate-name";
    label.textContent = name;
    li.appendChild(label);
    const score = scores[i];
    if (score !== undefined) {
      const val = document.createElement("span");
      val.className = "candidate-score";
      val.textContent = score.toFixed(3);
      li.appendChild(val);
    }
    refs.topk.appendChild(li);
  });
}

export function showBanner(refs: Refs, text: string): void {
  refs.bannerText.textContent = text;
  refs.banner.hidden = false;
}

export function hideBanner(refs: Refs): void {
  refs.banner.hidden = true;
}

let toastTimer: ReturnType<typeof setTimeout> | undefined;

export function showToast(refs: Refs, text: string): void {
  refs.toast.textContent = text;
  refs.toast.hidden = false;
  clearTimeout(toastTimer);
  toastTimer = setTimeout(() => {
    refs.toast.hidden = true;
  }, 6000);
}

export function setBusy(refs: Refs, busy: boolean): void {
  refs.input.disabled = busy;
  refs.send.disabled = busy;
}

export function setClosed(refs: Refs): void {
  refs.input.disabled = true;
  refs.send.disabled = true;
  refs.accept.disabled = true;
  refs.status.textContent = "session closed";
}
