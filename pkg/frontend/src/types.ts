// Mirrors of the taskboard HTTP/JSON wire shapes.

export interface EmailView {
  message_id?: string | null;
  from?: string | null;
  to?: string[] | null;
  cc?: string[] | null;
  subject?: string | null;
  body?: string | null;
  sent_at?: string | null;
}

export interface BallotOptionAttrs {
  day_name: string;
  date: string;
  clock: string;
  zone: string;
  position: number;
  option_count: number;
}

export interface TimeOptionView {
  start: string;
  end: string;
  zone?: string;
}

export interface CollectedView {
  state?: string;
  organizer?: string;
  invitees?: string[];
  constraints?: Record<string, unknown>;
  options?: TimeOptionView[];
  ballots?: Record<string, unknown>;
  phones?: Record<string, string>;
  escalations?: Array<Record<string, unknown>>;
}

export interface TaskPayload {
  instructions?: string;
  email?: EmailView;
  options?: string[] | BallotOptionAttrs[];
  field?: string;
  question?: string;
  match_kind?: string;
  candidate_request_id?: string | null;
  ballot_id?: string;
  // macro-only fields
  reasons?: string[];
  thread?: EmailView[];
  collected?: CollectedView;
  invitation?: string | null;
  calendar_view?: { busy?: Array<[string, string]> };
  actions?: string[];
  [key: string]: unknown;
}

export interface TaskView {
  task_id: string;
  tier: "micro" | "macro";
  kind: string;
  field: string | null;
  request_id: string;
  instance_id: string;
  payload: TaskPayload;
  suggestions: Record<string, unknown> | null;
  status: string;
  claimed_by: string | null;
  [key: string]: unknown;
}

export interface ClaimEnvelope {
  task: TaskView;
  now: string;
}

export interface ApiFailure {
  status: number;
  error: string;
  message: string;
}

export type ApiResult =
  | { kind: "task"; task: TaskView; now: string }
  | { kind: "idle" }
  | { kind: "failure"; failure: ApiFailure };

export type MacroActionBody = Record<string, unknown> & { type: string };
