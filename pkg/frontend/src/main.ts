// Browser entry point: mount the console with query-string configuration.

import { WorkerConsole } from "./console.js";

function mount(): void {
  const params = new URLSearchParams(window.location.search);
  const tier = params.get("tier") === "macro" ? "macro" : "micro";
  const root = document.getElementById("app");
  if (!root) return;
  const ui = new WorkerConsole(root, {
    apiBase: params.get("api") ?? "",
    workerId: params.get("worker") ?? "worker-1",
    tier,
    pollMs: Number(params.get("poll") ?? "2000"),
  });
  void ui.start();
}

if (typeof document !== "undefined" && typeof window !== "undefined") {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", mount);
  } else {
    mount();
  }
}
