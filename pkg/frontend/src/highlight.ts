/**
 * Shared pane rendering: turns source text plus linked-region spans into
 * a <pre> with highlight marks, and provides the center-and-flash helper
 * used when a linked edit is double-clicked in another pane.
 */

import type { EditKind, LinkedRegion, PaneKey } from "./types.js";

// Legend: insert green, delete red, move pink, update yellow. The hues
// themselves live in style.css under these class names.
export const KIND_CLASS: Record<EditKind, string> = {
  insert: "hl-insert",
  delete: "hl-delete",
  move: "hl-move",
  update: "hl-update",
};

export interface PaneMark {
  start: number;
  end: number;
  kind: EditKind;
  region: number;
}

/** Collect this pane's marks from the region list, ordered by start. */
export function paneMarks(regions: LinkedRegion[], pane: PaneKey): PaneMark[] {
  const marks: PaneMark[] = [];
  regions.forEach((r, i) => {
    const span = r.spans[pane];
    if (span) {
      marks.push({ start: span[0], end: span[1], kind: r.kind, region: i });
    }
  });
  marks.sort((a, b) => a.start - b.start || a.end - b.end);
  return marks;
}

/**
 * Build the DOM for one read-only pane. Each highlight carries
 * data-region (index into the session's region list) so double-click
 * handlers can find its counterpart elsewhere.
 */
export function renderPane(text: string, regions: LinkedRegion[], pane: PaneKey): HTMLElement {
  const pre = document.createElement("pre");
  pre.className = "pane-code";
  pre.dataset.pane = pane;
  const code = document.createElement("code");
  let cursor = 0;
  for (const mark of paneMarks(regions, pane)) {
    // clamp so touching or overlapping spans cannot double-emit text
    const start = Math.max(mark.start, cursor);
    const end = Math.max(mark.end, start);
    if (start > cursor) {
      code.appendChild(document.createTextNode(text.slice(cursor, start)));
    }
    const span = document.createElement("span");
    span.className = `hl ${KIND_CLASS[mark.kind]}`;
    span.dataset.region = String(mark.region);
    span.dataset.kind = mark.kind;
    span.textContent = text.slice(start, end);
    code.appendChild(span);
    cursor = end;
  }
  if (cursor < text.length) {
    code.appendChild(document.createTextNode(text.slice(cursor)));
  }
  pre.appendChild(code);
  return pre;
}

/**
 * Scroll `pane` so the mark for `region` sits at the vertical center and
 * flash it briefly so the eye lands on the right spot. Returns false when
 * the pane has no mark for that region.
 */
export function centerRegion(pane: HTMLElement, region: number): boolean {
  const mark = pane.querySelector<HTMLElement>(`[data-region="${region}"]`);
  if (!mark) return false;
  const middle = mark.offsetTop + mark.offsetHeight / 2;
  pane.scrollTop = Math.max(0, middle - pane.clientHeight / 2);
  mark.classList.add("hl-linked");
  setTimeout(() => mark.classList.remove("hl-linked"), 1200);
  return true;
}
