/**
 * JSON payloads served by the debug service. Field names mirror the wire
 * format exactly; everything here is read-only data for rendering.
 */

export interface Progress {
  executed: number;
  total: number;
  failed: number;
}

export interface DecisionAttribution {
  name: string;
  shared_options: string[];
  all_options: string[];
  relevant: boolean;
}

export interface ErrorGroup {
  id: number;
  count: number;
  preview: string;
  representative: string;
  members: number[];
  samples: string[];
  decisions: DecisionAttribution[];
}

export interface ErrorReport {
  progress: Progress;
  groups: ErrorGroup[];
}

export type EditKind = "insert" | "delete" | "update" | "move";

/** Pane keys: ou/nu = old/new universe, ot/nt = old/new template. */
export type PaneKey = "ou" | "nu" | "ot" | "nt";

/** Character offsets [start, end) into the pane's text. */
export type Span = [number, number];

/** One edit linked across up to four panes; absent sides carry no span
 * (a delete has no new side, an insert no old side). */
export interface LinkedRegion {
  kind: EditKind;
  spans: Partial<Record<PaneKey, Span>>;
}

export interface LineMapEntry {
  old: number;
  new: number | null;
  inserted_after: number;
}

export interface DiffPayload {
  version: string;
  old_universe: string;
  new_universe: string;
  old_template: string;
  new_template: string;
  regions: LinkedRegion[];
  line_map: LineMapEntry[];
  provenance: string[];
  warnings: string[];
}

export interface CompileSummary {
  universes: number;
  decisions: number;
  options: number;
}

export interface SaveResult {
  ok: boolean;
  version: string;
  report?: CompileSummary;
}

/** Error envelope the service attaches to non-2xx replies. */
export interface ServiceErrorBody {
  error: {
    type: string;
    message: string;
    line?: number;
    path?: string;
    conflicts?: unknown;
  };
  /** Present on 409 replies so the client can name the newer snapshot. */
  current_version?: string;
}
