// Thin client for the taskboard HTTP/JSON API.

import type { ApiResult, MacroActionBody, TaskView } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly worker: string,
    private readonly fetchFn: FetchLike = (...args) => globalThis.fetch(...args),
  ) {}

  get workerId(): string {
    return this.worker;
  }

  private async decode(res: Response): Promise<ApiResult> {
    if (res.status === 204) return { kind: "idle" };
    let body: Record<string, unknown> = {};
    try {
      body = (await res.json()) as Record<string, unknown>;
    } catch {
      body = {};
    }
    if (res.ok) {
      return { kind: "task", task: body.task as TaskView, now: String(body.now ?? "") };
    }
    return {
      kind: "failure",
      failure: {
        status: res.status,
        error: String(body.error ?? `http_${res.status}`),
        message: String(body.message ?? res.statusText ?? "request failed"),
      },
    };
  }

  private post(path: string, payload: Record<string, unknown>): Promise<ApiResult> {
    return this.fetchFn(`${this.base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    }).then((res) => this.decode(res));
  }

  claimNext(tier: "micro" | "macro"): Promise<ApiResult> {
    const query = `tier=${encodeURIComponent(tier)}&worker=${encodeURIComponent(this.worker)}`;
    return this.fetchFn(`${this.base}/api/tasks/next?${query}`).then((res) => this.decode(res));
  }

  submit(taskId: string, output: Record<string, unknown>): Promise<ApiResult> {
    return this.post(`/api/tasks/${taskId}/submit`, { worker: this.worker, output });
  }

  cantAnswer(taskId: string): Promise<ApiResult> {
    return this.post(`/api/tasks/${taskId}/cant-answer`, { worker: this.worker });
  }

  macroAction(taskId: string, action: MacroActionBody): Promise<ApiResult> {
    return this.post(`/api/tasks/${taskId}/macro-action`, { worker: this.worker, action });
  }
}
