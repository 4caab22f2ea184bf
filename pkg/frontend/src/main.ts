// Entry point: resolve the server address, mount the app, open a session.
// The address can be set per visit (?server=http://host:port) or persisted
// in localStorage under "kecr-server"; the default matches `kecr serve`.

import { ChatApp } from "./app";

const DEFAULT_SERVER = "http://127.0.0.1:8040";

function serverBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("server");
  if (fromQuery) {
    localStorage.setItem("kecr-server", fromQuery);
    return fromQuery;
  }
  return localStorage.getItem("kecr-server") ?? DEFAULT_SERVER;
}

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");
const app = new ChatApp(root, serverBase());
void app.start();
