/**
 * Three-mode diff viewer. Universe mode pairs the unedited and edited
 * universe, template mode pairs the current template with the suggested
 * one, and edit mode holds a writable buffer of the suggestion plus the
 * save and save-and-compile buttons. Highlights for the same edit are
 * linked across panes; double-clicking one centers its counterpart.
 */

import { ApiError } from "./api.js";
import { centerRegion, renderPane } from "./highlight.js";
import type { DiffPayload, LinkedRegion, PaneKey, SaveResult } from "./types.js";

export type ViewerMode = "universe" | "template" | "edit";

export interface ViewerDeps {
  saveTemplate(text: string, version: string): Promise<SaveResult>;
  saveAndCompile(text: string, version: string): Promise<SaveResult>;
  /** Re-open the session after a conflict; receives the user's buffer so
   * a remount can keep their unsaved edits. */
  reload?(buffer: string): void;
}

export interface ViewerOptions {
  /** Seed the edit buffer (used when remounting after a reload). */
  initialBuffer?: string;
  mode?: ViewerMode;
}

export interface ViewerHandle {
  getMode(): ViewerMode;
  setMode(mode: ViewerMode): void;
  getBuffer(): string;
  getVersion(): string;
  dispose(): void;
}

const MODE_LABEL: Record<ViewerMode, string> = {
  universe: "Universe",
  template: "Template",
  edit: "Edit",
};

const MODE_OF_PANE: Record<PaneKey, ViewerMode> = {
  ou: "universe",
  nu: "universe",
  ot: "template",
  nt: "template",
};

const SIBLING: Record<PaneKey, PaneKey> = { ou: "nu", nu: "ou", ot: "nt", nt: "ot" };

// Cross-mode links pair the same side of the edit: old universe with old
// template, new universe with suggested template.
const CROSS: Record<PaneKey, PaneKey[]> = {
  ou: ["ot", "nt"],
  nu: ["nt", "ot"],
  ot: ["ou", "nu"],
  nt: ["nu", "ou"],
};

/** Where a double-click on `from` should land: the sibling pane when the
 * region has a span there, otherwise the linked pane in the other mode. */
export function counterpartPane(region: LinkedRegion, from: PaneKey): PaneKey | null {
  const sib = SIBLING[from];
  if (region.spans[sib]) return sib;
  for (const pane of CROSS[from]) {
    if (region.spans[pane]) return pane;
  }
  return null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function paneColumn(title: string, pane: HTMLElement): HTMLElement {
  const col = el("div", "pane-col");
  col.appendChild(el("div", "pane-title", title));
  col.appendChild(pane);
  return col;
}

/** 1-based line start offset in `text`, clamped to the last line. */
function lineOffset(text: string, line: number): number {
  const lines = text.split("\n");
  let offset = 0;
  for (let i = 0; i < Math.min(line - 1, lines.length - 1); i++) {
    offset += lines[i].length + 1;
  }
  return offset;
}

export function mountDiffViewer(
  root: HTMLElement,
  payload: DiffPayload,
  deps: ViewerDeps,
  options: ViewerOptions = {},
): ViewerHandle {
  const state = {
    mode: options.mode ?? ("universe" as ViewerMode),
    version: payload.version,
    buffer: options.initialBuffer ?? payload.new_template,
    status: "",
    statusIsError: false,
    inlineError: null as { line: number | null; message: string } | null,
    conflict: null as { currentVersion: string | null } | null,
  };

  let editor: HTMLTextAreaElement | null = null;

  function syncBuffer(): void {
    if (editor) state.buffer = editor.value;
  }

  function renderModeRow(): HTMLElement {
    const row = el("div", "mode-row");
    for (const mode of ["universe", "template", "edit"] as ViewerMode[]) {
      const button = el(
        "button",
        "mode-btn" + (mode === state.mode ? " active" : ""),
        MODE_LABEL[mode],
      );
      button.type = "button";
      button.dataset.mode = mode;
      button.addEventListener("click", () => setMode(mode));
      row.appendChild(button);
    }
    return row;
  }

  function renderPanes(): HTMLElement {
    const area = el("div", "pane-area");
    if (state.mode === "universe") {
      area.append(
        paneColumn("universe (before)", renderPane(payload.old_universe, payload.regions, "ou")),
        paneColumn("universe (edited)", renderPane(payload.new_universe, payload.regions, "nu")),
      );
    } else {
      area.append(
        paneColumn("template (current)", renderPane(payload.old_template, payload.regions, "ot")),
        paneColumn("template (suggested)", renderPane(payload.new_template, payload.regions, "nt")),
      );
    }
    return area;
  }

  function renderEditor(): HTMLElement {
    const wrap = el("div", "edit-area");
    const textarea = document.createElement("textarea");
    textarea.className = "template-editor";
    textarea.spellcheck = false;
    textarea.value = state.buffer;
    textarea.addEventListener("input", () => {
      state.buffer = textarea.value;
    });
    editor = textarea;
    wrap.appendChild(textarea);

    if (state.inlineError) {
      const where = state.inlineError.line !== null ? `line ${state.inlineError.line}: ` : "";
      wrap.appendChild(el("div", "inline-error", `${where}${state.inlineError.message}`));
    }

    const row = el("div", "save-row");
    const save = el("button", "save-btn", "Save template");
    save.type = "button";
    save.addEventListener("click", () => void doSave(false));
    const saveCompile = el("button", "save-compile-btn", "Save and compile");
    saveCompile.type = "button";
    saveCompile.addEventListener("click", () => void doSave(true));
    row.append(save, saveCompile);
    wrap.appendChild(row);

    const status = el("div", "save-status" + (state.statusIsError ? " error" : ""), state.status);
    wrap.appendChild(status);
    return wrap;
  }

  function renderNotes(): HTMLElement | null {
    if (payload.provenance.length === 0 && payload.warnings.length === 0) return null;
    const notes = el("div", "session-notes");
    if (payload.warnings.length > 0) {
      const list = el("ul", "warning-list");
      for (const w of payload.warnings) list.appendChild(el("li", "warning-item", w));
      notes.appendChild(list);
    }
    if (payload.provenance.length > 0 && state.mode !== "universe") {
      const list = el("ul", "provenance-list");
      for (const p of payload.provenance) list.appendChild(el("li", "provenance-item", p));
      notes.appendChild(list);
    }
    return notes;
  }

  function renderConflict(): HTMLElement {
    const overlay = el("div", "conflict-overlay");
    const dialog = el("div", "conflict-dialog");
    dialog.setAttribute("role", "dialog");
    dialog.appendChild(el("h3", "conflict-title", "Template changed on disk"));
    const current = state.conflict?.currentVersion;
    dialog.appendChild(
      el(
        "p",
        "conflict-text",
        `Someone saved a newer template since this diff was loaded` +
          (current ? ` (your snapshot ${state.version}, current ${current}).` : ".") +
          " Nothing was overwritten.",
      ),
    );
    const row = el("div", "conflict-actions");
    const reload = el("button", "conflict-reload", "Reload latest");
    reload.type = "button";
    reload.addEventListener("click", () => {
      state.conflict = null;
      syncBuffer();
      if (deps.reload) {
        deps.reload(state.buffer);
      } else {
        render();
      }
    });
    const dismiss = el("button", "conflict-dismiss", "Keep editing");
    dismiss.type = "button";
    dismiss.addEventListener("click", () => {
      state.conflict = null;
      render();
    });
    row.append(reload, dismiss);
    dialog.appendChild(row);
    overlay.appendChild(dialog);
    return overlay;
  }

  async function doSave(compile: boolean): Promise<void> {
    syncBuffer();
    state.inlineError = null;
    state.status = "";
    state.statusIsError = false;
    try {
      const result = compile
        ? await deps.saveAndCompile(state.buffer, state.version)
        : await deps.saveTemplate(state.buffer, state.version);
      state.version = result.version;
      state.status = result.report
        ? `saved and recompiled ${result.report.universes} universes`
        : "template saved";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // never retry with a fresh token behind the user's back
        state.conflict = { currentVersion: err.body?.current_version ?? null };
      } else if (err instanceof ApiError && err.status === 400 && err.body?.error) {
        const line = err.body.error.line ?? null;
        state.inlineError = { line, message: err.body.error.message };
      } else {
        state.status = `save failed: ${err instanceof Error ? err.message : String(err)}`;
        state.statusIsError = true;
      }
    }
    render();
    if (state.inlineError?.line != null && editor) {
      const offset = lineOffset(state.buffer, state.inlineError.line);
      editor.focus();
      editor.setSelectionRange(offset, offset);
    }
  }

  function onDoubleClick(event: MouseEvent): void {
    const target = event.target instanceof Element ? event.target.closest(".hl") : null;
    if (!(target instanceof HTMLElement) || target.dataset.region === undefined) return;
    const regionIdx = Number(target.dataset.region);
    const region = payload.regions[regionIdx];
    const fromPane = target.closest<HTMLElement>("[data-pane]")?.dataset.pane as
      | PaneKey
      | undefined;
    if (!region || !fromPane) return;
    const to = counterpartPane(region, fromPane);
    if (!to) return;
    if (MODE_OF_PANE[to] !== state.mode) setMode(MODE_OF_PANE[to]);
    const paneEl = root.querySelector<HTMLElement>(`[data-pane="${to}"]`);
    if (paneEl) centerRegion(paneEl, regionIdx);
  }

  function render(): void {
    syncBuffer();
    editor = null;
    root.textContent = "";
    root.classList.add("diff-viewer");
    root.appendChild(renderModeRow());
    if (state.mode === "edit") {
      root.appendChild(renderEditor());
    } else {
      root.appendChild(renderPanes());
    }
    const notes = renderNotes();
    if (notes) root.appendChild(notes);
    if (state.conflict) root.appendChild(renderConflict());
  }

  function setMode(mode: ViewerMode): void {
    if (mode === state.mode) return;
    syncBuffer();
    state.mode = mode;
    render();
  }

  root.addEventListener("dblclick", onDoubleClick);
  render();

  return {
    getMode: () => state.mode,
    setMode,
    getBuffer: () => {
      syncBuffer();
      return state.buffer;
    },
    getVersion: () => state.version,
    dispose(): void {
      root.removeEventListener("dblclick", onDoubleClick);
      root.textContent = "";
    },
  };
}
