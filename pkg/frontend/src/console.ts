// Controller: claims tasks, wires the rendered forms to the API, and keeps
// polling while idle. Stateless beyond the current claim — reload and the
// server's lease bookkeeping decide who owns what.

import { ApiClient, type FetchLike } from "./api.js";
import {
  renderIdle,
  renderTask,
  showError,
  showFlash,
} from "./render.js";
import type { ApiResult, MacroActionBody, TaskView } from "./types.js";

export interface ConsoleConfig {
  apiBase: string;
  workerId: string;
  tier: "micro" | "macro";
  pollMs?: number;
}

// ----- form readers (live DOM is the single source of form state) -----

function readMicroOutput(view: HTMLElement, task: TaskView): Record<string, unknown> {
  if (task.kind === "ClassifyIntent") {
    const checked = view.querySelector<HTMLInputElement>("input[name=verdict]:checked");
    const requestId = view.querySelector<HTMLInputElement>("input[name=request_id]");
    const output: Record<string, unknown> = { verdict: checked ? checked.value : "" };
    if (requestId && requestId.value.trim()) output.request_id = requestId.value.trim();
    return output;
  }
  if (task.kind === "ExtractField") {
    const fieldName = task.field ?? String(task.payload.field ?? "");
    if (fieldName === "duration") {
      const input = view.querySelector<HTMLInputElement>("input[name=value]");
      return { field: fieldName, value: input ? parseInt(input.value, 10) : 0 };
    }
    if (fieldName === "window") {
      const start = view.querySelector<HTMLInputElement>("input[name=start]");
      const end = view.querySelector<HTMLInputElement>("input[name=end]");
      return {
        field: fieldName,
        value: { start: start?.value.trim() ?? "", end: end?.value.trim() ?? "" },
      };
    }
    const area = view.querySelector<HTMLTextAreaElement>("textarea[name=attendees]");
    const lines = (area?.value ?? "").split("\n").map((s) => s.trim()).filter(Boolean);
    return { field: fieldName, value: lines };
  }
  const boxes = Array.from(
    view.querySelectorAll<HTMLInputElement>("input[name=selection]"),
  ).sort((a, b) => Number(a.dataset.index) - Number(b.dataset.index));
  return { selections: boxes.map((b) => b.checked) };
}

function readMacroAction(form: HTMLElement): MacroActionBody {
  const type = form.dataset.action ?? "";
  const action: MacroActionBody = { type };
  const value = (name: string) =>
    form.querySelector<HTMLInputElement | HTMLTextAreaElement | HTMLSelectElement>(
      `[name=${name}]`,
    )?.value ?? "";
  if (type === "SendMessage") {
    const to = value("to").trim();
    if (to) action.to = to;
    action.body = value("body");
  } else if (type === "SendInvitation" || type === "UpdateInvitation") {
    const pick = value("option_index").trim();
    if (pick !== "") {
      action.option_index = parseInt(pick, 10);
    } else {
      action.start = value("start").trim();
      action.end = value("end").trim();
    }
  } else if (type === "Cancel") {
    const note = value("note").trim();
    if (note) action.note = note;
  } else if (type === "PushBack") {
    action.delay_minutes = parseFloat(value("delay_minutes"));
  }
  return action;
}

// ----- controller -----

export class WorkerConsole {
  readonly api: ApiClient;
  current: TaskView | null = null;
  pending: Promise<void> | null = null;
  private readonly pollMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly config: ConsoleConfig,
    fetchFn?: FetchLike,
  ) {
    this.api = new ApiClient(config.apiBase, config.workerId, fetchFn);
    this.pollMs = config.pollMs ?? 2000;
  }

  start(): Promise<void> {
    this.stopped = false;
    return this.claimNow();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private schedulePoll(): void {
    if (this.stopped || this.timer !== null) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.claimNow();
    }, this.pollMs);
  }

  async claimNow(): Promise<void> {
    let result: ApiResult;
    try {
      result = await this.api.claimNext(this.config.tier);
    } catch (exc) {
      this.current = null;
      renderIdle(this.root);
      showError(this.root, `network error: ${String(exc)}`);
      this.schedulePoll();
      return;
    }
    if (result.kind === "task") {
      this.current = result.task;
      renderTask(this.root, result.task, this.config.workerId);
      this.wire();
      return;
    }
    this.current = null;
    renderIdle(this.root);
    if (result.kind === "failure") {
      showError(this.root, `${result.failure.error}: ${result.failure.message}`);
    }
    this.schedulePoll();
  }

  private wire(): void {
    const view = this.root.querySelector<HTMLElement>(".task-view");
    if (!view || !this.current) return;
    const task = this.current;

    const answerForm = view.querySelector<HTMLFormElement>(".answer-form");
    if (answerForm) {
      answerForm.addEventListener("submit", (event) => {
        event.preventDefault();
        this.pending = this.submitAnswer(readMicroOutput(view, task));
      });
    }

    const cant = view.querySelector<HTMLButtonElement>(".cant-answer");
    if (cant) {
      cant.addEventListener("click", () => {
        this.pending = this.escalate();
      });
    }

    for (const button of view.querySelectorAll<HTMLButtonElement>(".macro-btn")) {
      button.addEventListener("click", () => {
        for (const form of view.querySelectorAll<HTMLFormElement>(".macro-form")) {
          form.hidden = form.dataset.action !== button.dataset.action;
        }
      });
    }
    for (const form of view.querySelectorAll<HTMLFormElement>(".macro-form")) {
      form.addEventListener("submit", (event) => {
        event.preventDefault();
        this.pending = this.executeMacro(readMacroAction(form));
      });
    }
  }

  private async afterAction(result: ApiResult, staysClaimed: boolean): Promise<void> {
    if (result.kind === "failure") {
      // Leave the rendered form untouched so nothing typed is lost.
      showError(this.root, `${result.failure.error}: ${result.failure.message}`);
      return;
    }
    if (staysClaimed && result.kind === "task" && result.task.status === "Claimed") {
      this.current = result.task;
      showFlash(this.root, "Message sent — the task is still yours.");
      showError(this.root, "");
      return;
    }
    this.current = null;
    await this.claimNow();
  }

  submitAnswer(output: Record<string, unknown>): Promise<void> {
    if (!this.current) return Promise.resolve();
    return this.api
      .submit(this.current.task_id, output)
      .then((result) => this.afterAction(result, false));
  }

  escalate(): Promise<void> {
    if (!this.current) return Promise.resolve();
    return this.api
      .cantAnswer(this.current.task_id)
      .then((result) => this.afterAction(result, false));
  }

  executeMacro(action: MacroActionBody): Promise<void> {
    if (!this.current) return Promise.resolve();
    return this.api
      .macroAction(this.current.task_id, action)
      .then((result) => this.afterAction(result, action.type === "SendMessage"));
  }
}
