// Pure DOM construction for the worker console. Renders only fields the
// payload actually carries, so the console can never display data the
// taskboard's payload policy excluded.

import type {
  BallotOptionAttrs,
  EmailView,
  TaskView,
  TimeOptionView,
} from "./types.js";

export const CANT_ANSWER_LABEL = "I can't answer.";

export const MACRO_BUTTON_LABELS: Record<string, string> = {
  SendMessage: "Send message",
  SendInvitation: "Send invitation",
  UpdateInvitation: "Update invitation",
  Cancel: "Cancel meeting",
  PushBack: "Push back",
};

const CLASSIFY_LABELS: Record<string, string> = {
  new: "A new meeting request",
  existing: "Part of an existing meeting",
  not_scheduling: "Not about scheduling",
};

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function markSuggested(node: HTMLElement): void {
  node.classList.add("suggested");
}

// ----- idle -----

export function renderIdle(root: HTMLElement): void {
  const doc = root.ownerDocument;
  root.replaceChildren(el(doc, "div", "idle", "Waiting for tasks…"));
}

// ----- shared chrome -----

function renderEmail(doc: Document, email: EmailView, className: string): HTMLElement {
  const box = el(doc, "div", className);
  const rows = el(doc, "div", "email-headers");
  const header = (label: string, value: string) => {
    const row = el(doc, "div", "email-header");
    row.append(el(doc, "span", "header-label", label), el(doc, "span", "header-value", value));
    rows.append(row);
  };
  if (email.from) header("From", email.from);
  if (email.to && email.to.length) header("To", email.to.join(", "));
  if (email.cc && email.cc.length) header("Cc", email.cc.join(", "));
  if (email.subject) header("Subject", email.subject);
  if (email.sent_at) header("Sent", email.sent_at);
  box.append(rows);
  if (email.body) {
    const body = el(doc, "pre", "email-body");
    body.textContent = email.body;
    box.append(body);
  }
  return box;
}

function describeOption(opt: BallotOptionAttrs): string {
  return `${opt.position}. ${opt.day_name} ${opt.date} at ${opt.clock} (${opt.zone})`;
}

function describeWindow(opt: TimeOptionView): string {
  return `${opt.start} — ${opt.end}`;
}

// ----- microtask forms -----

function classifyForm(doc: Document, task: TaskView): HTMLElement {
  const form = el(doc, "form", "answer-form classify-form");
  const options = (task.payload.options as string[] | undefined) ??
    ["new", "existing", "not_scheduling"];
  const suggestion = task.suggestions as { verdict?: string; request_id?: string | null } | null;
  for (const value of options) {
    const label = el(doc, "label", "verdict-option");
    const radio = el(doc, "input") as HTMLInputElement;
    radio.type = "radio";
    radio.name = "verdict";
    radio.value = value;
    if (suggestion && suggestion.verdict === value) {
      radio.checked = true;
      markSuggested(label);
    }
    label.append(radio, doc.createTextNode(" " + (CLASSIFY_LABELS[value] ?? value)));
    form.append(label);
  }
  const idLabel = el(doc, "label", "request-id-row", "Existing request id ");
  const idInput = el(doc, "input") as HTMLInputElement;
  idInput.name = "request_id";
  idInput.placeholder = "req-0000";
  const prefillId = suggestion?.request_id ?? task.payload.candidate_request_id;
  if (prefillId) {
    idInput.value = String(prefillId);
    markSuggested(idInput);
  }
  idLabel.append(idInput);
  form.append(idLabel);
  return form;
}

function extractForm(doc: Document, task: TaskView): HTMLElement {
  const form = el(doc, "form", "answer-form extract-form");
  if (task.payload.question) {
    form.append(el(doc, "p", "question", task.payload.question));
  }
  const suggestion = task.suggestions as
    | { field?: string; value?: unknown; evidence?: string }
    | null;
  const fieldName = task.field ?? String(task.payload.field ?? "");
  if (fieldName === "duration") {
    const label = el(doc, "label", undefined, "Duration in minutes ");
    const input = el(doc, "input") as HTMLInputElement;
    input.type = "number";
    input.name = "value";
    input.min = "1";
    if (suggestion && typeof suggestion.value === "number") {
      input.value = String(suggestion.value);
      markSuggested(input);
    }
    label.append(input);
    form.append(label);
  } else if (fieldName === "window") {
    const windowValue = (suggestion?.value ?? {}) as { start?: string; end?: string };
    for (const part of ["start", "end"] as const) {
      const label = el(doc, "label", undefined, `Window ${part} (UTC ISO) `);
      const input = el(doc, "input") as HTMLInputElement;
      input.name = part;
      input.placeholder = "2026-01-01T09:00:00Z";
      if (windowValue[part]) {
        input.value = String(windowValue[part]);
        markSuggested(input);
      }
      label.append(input);
      form.append(label);
    }
  } else if (fieldName === "attendees") {
    const label = el(doc, "label", undefined, "Attendee addresses, one per line ");
    const area = el(doc, "textarea") as HTMLTextAreaElement;
    area.name = "attendees";
    if (Array.isArray(suggestion?.value)) {
      area.value = (suggestion.value as string[]).join("\n");
      markSuggested(area);
    }
    label.append(area);
    form.append(label);
  }
  if (suggestion?.evidence) {
    form.append(el(doc, "p", "evidence", `Suggested from: “${suggestion.evidence}”`));
  }
  return form;
}

function ballotForm(doc: Document, task: TaskView): HTMLElement {
  const form = el(doc, "form", "answer-form ballot-form");
  const options = (task.payload.options as BallotOptionAttrs[] | undefined) ?? [];
  const suggestion = task.suggestions as { selections?: boolean[] } | null;
  options.forEach((opt, index) => {
    const label = el(doc, "label", "ballot-option");
    const box = el(doc, "input") as HTMLInputElement;
    box.type = "checkbox";
    box.name = "selection";
    box.dataset.index = String(index);
    if (suggestion?.selections?.[index]) {
      box.checked = true;
      markSuggested(label);
    }
    label.append(box, doc.createTextNode(" " + describeOption(opt)));
    form.append(label);
  });
  return form;
}

// ----- macrotask source and forms -----

function renderMacroSource(doc: Document, task: TaskView): HTMLElement {
  const box = el(doc, "div", "macro-source");
  const payload = task.payload;
  if (payload.reasons && payload.reasons.length) {
    const reasons = el(doc, "div", "reasons");
    reasons.append(el(doc, "h3", undefined, "Escalated because"));
    const list = el(doc, "ul");
    for (const reason of payload.reasons) list.append(el(doc, "li", "reason", reason));
    reasons.append(list);
    box.append(reasons);
  }
  if (payload.thread && payload.thread.length) {
    const thread = el(doc, "div", "thread");
    thread.append(el(doc, "h3", undefined, "Conversation"));
    for (const message of payload.thread) {
      thread.append(renderEmail(doc, message, "thread-message"));
    }
    box.append(thread);
  }
  if (payload.collected) {
    const collected = el(doc, "div", "collected");
    collected.append(el(doc, "h3", undefined, "Collected so far"));
    const dl = el(doc, "dl");
    const add = (term: string, detail: string) => {
      dl.append(el(doc, "dt", undefined, term), el(doc, "dd", undefined, detail));
    };
    const c = payload.collected;
    if (c.state) add("State", c.state);
    if (c.organizer) add("Organizer", c.organizer);
    if (c.invitees && c.invitees.length) add("Invitees", c.invitees.join(", "));
    if (c.constraints) add("Constraints", JSON.stringify(c.constraints));
    if (c.options && c.options.length) {
      add("Proposed times", c.options.map(describeWindow).join("; "));
    }
    if (c.phones && Object.keys(c.phones).length) add("Phones", JSON.stringify(c.phones));
    collected.append(dl);
    box.append(collected);
  }
  if (payload.calendar_view?.busy) {
    const view = el(doc, "div", "calendar-view");
    view.append(el(doc, "h3", undefined, "Organizer busy times"));
    const list = el(doc, "ul");
    for (const [start, end] of payload.calendar_view.busy) {
      list.append(el(doc, "li", "busy-interval", `${start} — ${end}`));
    }
    if (!payload.calendar_view.busy.length) {
      list.append(el(doc, "li", "busy-interval none", "calendar clear"));
    }
    view.append(list);
    box.append(view);
  }
  if (payload.invitation) {
    const invite = el(doc, "div", "invitation");
    invite.append(el(doc, "h3", undefined, "Current invitation"));
    const pre = el(doc, "pre", "invitation-text");
    pre.textContent = payload.invitation;
    invite.append(pre);
    box.append(invite);
  }
  return box;
}

function macroForms(doc: Document, task: TaskView): HTMLElement {
  const wrap = el(doc, "div", "macro-actions");
  const actions = (task.payload.actions as string[] | undefined) ??
    Object.keys(MACRO_BUTTON_LABELS);
  const buttons = el(doc, "div", "macro-buttons");
  for (const action of actions) {
    const button = el(doc, "button", "macro-btn", MACRO_BUTTON_LABELS[action] ?? action);
    button.type = "button";
    button.dataset.action = action;
    buttons.append(button);
  }
  wrap.append(buttons);

  const collected = task.payload.collected ?? {};
  const options = collected.options ?? [];
  const first = options[0];

  const makeForm = (action: string): HTMLElement => {
    const form = el(doc, "form", "macro-form");
    form.dataset.action = action;
    form.hidden = true;
    if (action === "SendMessage") {
      const toLabel = el(doc, "label", undefined, "To ");
      const to = el(doc, "input") as HTMLInputElement;
      to.name = "to";
      if (collected.organizer) {
        to.value = collected.organizer;
        markSuggested(to);
      }
      toLabel.append(to);
      const bodyLabel = el(doc, "label", undefined, "Message ");
      const body = el(doc, "textarea") as HTMLTextAreaElement;
      body.name = "body";
      bodyLabel.append(body);
      form.append(toLabel, bodyLabel);
    } else if (action === "SendInvitation" || action === "UpdateInvitation") {
      if (options.length) {
        const pickLabel = el(doc, "label", undefined, "Proposed option ");
        const select = el(doc, "select") as HTMLSelectElement;
        select.name = "option_index";
        const custom = el(doc, "option", undefined, "custom times");
        (custom as HTMLOptionElement).value = "";
        select.append(custom);
        options.forEach((opt, index) => {
          const choice = el(doc, "option", undefined, describeWindow(opt));
          (choice as HTMLOptionElement).value = String(index);
          select.append(choice);
        });
        select.value = "0";
        markSuggested(select);
        pickLabel.append(select);
        form.append(pickLabel);
      }
      for (const part of ["start", "end"] as const) {
        const label = el(doc, "label", undefined, `${part} (UTC ISO) `);
        const input = el(doc, "input") as HTMLInputElement;
        input.name = part;
        input.placeholder = "2026-01-01T09:00:00Z";
        if (first) {
          input.value = first[part];
          markSuggested(input);
        }
        label.append(input);
        form.append(label);
      }
    } else if (action === "Cancel") {
      const label = el(doc, "label", undefined, "Note to participants ");
      const note = el(doc, "input") as HTMLInputElement;
      note.name = "note";
      label.append(note);
      form.append(label);
    } else if (action === "PushBack") {
      const label = el(doc, "label", undefined, "Delay in minutes ");
      const delay = el(doc, "input") as HTMLInputElement;
      delay.type = "number";
      delay.name = "delay_minutes";
      delay.min = "1";
      delay.value = "120";
      label.append(delay);
      form.append(label);
    }
    const execute = el(doc, "button", "execute", "Execute");
    execute.type = "submit";
    form.append(execute);
    return form;
  };

  for (const action of actions) wrap.append(makeForm(action));
  return wrap;
}

// ----- task view -----

export function renderTask(root: HTMLElement, task: TaskView, workerId: string): void {
  const doc = root.ownerDocument;
  const view = el(doc, "div", "task-view");
  view.dataset.taskId = task.task_id;
  view.dataset.kind = task.kind;
  view.dataset.tier = task.tier;

  const header = el(doc, "div", "instructions");
  header.append(el(doc, "h2", undefined, task.kind));
  if (task.payload.instructions) {
    header.append(el(doc, "p", "instruction-text", task.payload.instructions));
  }
  header.append(el(
    doc, "p", "task-meta",
    `Task ${task.task_id} · request ${task.request_id} · worker ${workerId}`,
  ));
  if (task.suggestions) {
    header.append(el(
      doc, "p", "suggestion-note",
      "Suggested answers are prefilled and highlighted — please verify before submitting.",
    ));
  }
  view.append(header);

  const panels = el(doc, "div", "panels");
  const source = el(doc, "div", "panel source");
  const actions = el(doc, "div", "panel actions");

  if (task.tier === "micro") {
    if (task.payload.email) {
      source.append(renderEmail(doc, task.payload.email, "source-email"));
    }
    let form: HTMLElement | null = null;
    if (task.kind === "ClassifyIntent") form = classifyForm(doc, task);
    else if (task.kind === "ExtractField") form = extractForm(doc, task);
    else if (task.kind === "InterpretBallotResponse") form = ballotForm(doc, task);
    if (form) {
      const submit = el(doc, "button", "submit", "Submit answer");
      submit.type = "submit";
      form.append(submit);
      actions.append(form);
    }
    const cant = el(doc, "button", "cant-answer", CANT_ANSWER_LABEL);
    cant.type = "button";
    actions.append(cant);
  } else {
    source.append(renderMacroSource(doc, task));
    actions.append(macroForms(doc, task));
  }

  panels.append(source, actions);
  view.append(panels);
  view.append(el(doc, "div", "flash"));
  view.append(el(doc, "div", "error"));
  root.replaceChildren(view);
}

export function showError(root: HTMLElement, message: string): void {
  const slot = root.querySelector<HTMLElement>(".error");
  if (slot) slot.textContent = message;
}

export function showFlash(root: HTMLElement, message: string): void {
  const slot = root.querySelector<HTMLElement>(".flash");
  if (slot) slot.textContent = message;
}
