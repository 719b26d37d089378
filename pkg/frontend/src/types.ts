// Payload shapes served by the review API. Fields mirror the JSON the
// server emits; unknown extras are tolerated so the client stays
// forward-compatible with additive server changes.

export interface HistoryEntry {
  text: string;
  exit: number | null;
  cwd: string | null;
  ts: number | null;
  env: Record<string, string>;
  relevant: boolean | null;
}

export interface CompositeEntry {
  name: string;
  indices: number[];
}

export interface HistoryPayload {
  version: number;
  entries: HistoryEntry[];
  composites: CompositeEntry[];
}

export interface FunctionInfo {
  original_name: string;
  new_name: string;
  free_vars: string[];
}

export interface DagCell {
  id: string;
  source: string;
  reads: string[];
  writes: string[];
  name: string;
  origin: number | string | null;
  is_function: boolean;
  warnings: string[];
  magics?: string[];
  imports?: string[];
  function?: FunctionInfo | null;
}

export interface DagEdge {
  src: number;
  dst: number;
  name: string;
  resolution: string;
  wildcard: string | null;
}

export interface RwPin {
  cell: number;
  reads: string[];
  writes: string[];
}

export interface WriterPin {
  dst: number;
  name: string;
  src: number;
}

export interface ResolutionPin {
  dst: number;
  name: string;
  resolution: string;
  wildcard: string | null;
}

export interface FormatPin {
  cell: number;
  variable: string;
  format: string;
}

export interface DagPins {
  rw: RwPin[];
  refined: RwPin[];
  writers: WriterPin[];
  resolutions: ResolutionPin[];
  formats: FormatPin[];
  terminal: FormatPin[];
}

export interface Violation {
  kind: string;
  cells: number[];
  names: string[];
  message: string;
}

export interface DagPayload {
  version: number;
  cells: DagCell[];
  edges: DagEdge[];
  labels: string[];
  pins: DagPins;
  imports: string[];
  findings: string[];
  violations: Violation[];
}

export type HistoryOp =
  | { op: "remove"; index: number }
  | { op: "edit"; index: number; text: string }
  | { op: "add"; text: string }
  | { op: "group"; name: string; indices: number[] }
  | { op: "ungroup"; name: string }
  | { op: "mark"; index: number; relevant: boolean };

export type DagOp =
  | { op: "label"; cell: number; label: string }
  | { op: "edit_cell"; cell: number; source: string }
  | { op: "rename"; cell: number; name: string }
  | { op: "merge"; cells: number[] }
  | { op: "split"; cell: number; line: number }
  | { op: "delete"; cell: number }
  | { op: "set_rw"; cell: number; reads: string[]; writes: string[] }
  | { op: "clear_rw"; cell: number }
  | { op: "pin_writer"; cell: number; name: string; src: number }
  | { op: "unpin_writer"; cell: number; name: string }
  | {
      op: "resolution";
      cell: number;
      name: string;
      resolution: string;
      wildcard?: string | null;
    }
  | { op: "format"; cell: number; name: string; format: string }
  | { op: "terminal"; cell: number; name: string; format?: string | null }
  | { op: "refine"; evidence?: Record<string, string[]> };

export interface AnalyzeRequest {
  sources?: string[];
  path?: string;
  notebook?: unknown;
}

export interface ExportPayload {
  snakefile: string;
  scripts: Record<string, string>;
  findings: string[];
  config: string | null;
}

export interface JobPayload {
  id: number;
  stage: string;
  [key: string]: unknown;
}

export interface ChatAction {
  uri: string;
  ok: boolean | null;
  message: string;
}

export interface ChatPayload {
  reply: string;
  actions: ChatAction[];
}

export interface ServerEvent {
  type: string;
  payload: unknown;
}
