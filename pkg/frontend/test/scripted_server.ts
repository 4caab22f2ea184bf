// A real HTTP server driven by a fixed script: each incoming request must
// match the next step's method and path, and is answered with that step's
// canned JSON. Anything off-script answers 500 so the test fails loudly.
// Live sockets are tracked so stop() can model a hard outage.

import http from "node:http";
import type { AddressInfo } from "node:net";
import type { Socket } from "node:net";

export interface Step {
  method: string;
  path: string;
  status?: number;
  body: unknown;
  raw?: string; // overrides body with a verbatim payload (e.g. broken JSON)
  delayMs?: number;
}

export interface Seen {
  method: string;
  path: string;
  body: string;
}

export class ScriptedServer {
  readonly seen: Seen[] = [];
  private readonly steps: Step[];
  private readonly server: http.Server;
  private readonly sockets = new Set<Socket>();

  constructor(steps: Step[]) {
    this.steps = [...steps];
    this.server = http.createServer((req, res) => this.handle(req, res));
    this.server.on("connection", (socket) => {
      this.sockets.add(socket);
      socket.on("close", () => this.sockets.delete(socket));
    });
  }

  private handle(req: http.IncomingMessage, res: http.ServerResponse): void {
    const chunks: Buffer[] = [];
    req.on("data", (c: Buffer) => chunks.push(c));
    req.on("end", () => {
      this.seen.push({
        method: req.method ?? "",
        path: req.url ?? "",
        body: Buffer.concat(chunks).toString("utf-8"),
      });
      const step = this.steps.shift();
      const answer = (status: number, body: unknown) => {
        res.writeHead(status, { "Content-Type": "application/json" });
        res.end(JSON.stringify(body));
      };
      if (step === undefined) {
        answer(500, { error: `off-script request ${req.method} ${req.url}` });
        return;
      }
      if (step.method !== req.method || step.path !== req.url) {
        answer(500, {
          error: `expected ${step.method} ${step.path}, got ${req.method} ${req.url}`,
        });
        return;
      }
      const send = () => {
        if (step.raw !== undefined) {
          res.writeHead(step.status ?? 200, { "Content-Type": "application/json" });
          res.end(step.raw);
        } else {
          answer(step.status ?? 200, step.body);
        }
      };
      if (step.delayMs) setTimeout(send, step.delayMs);
      else send();
    });
  }

  start(port = 0): Promise<number> {
    return new Promise((resolve, reject) => {
      this.server.once("error", reject);
      this.server.listen(port, "127.0.0.1", () => {
        resolve((this.server.address() as AddressInfo).port);
      });
    });
  }

  get port(): number {
    return (this.server.address() as AddressInfo).port;
  }

  get base(): string {
    return `http://127.0.0.1:${this.port}`;
  }

  // hard stop: refuse the listener and sever any kept-alive connections
  stop(): Promise<void> {
    for (const socket of this.sockets) socket.destroy();
    this.sockets.clear();
    return new Promise((resolve) => this.server.close(() => resolve()));
  }
}
