/**
 * Error dashboard. The summary panel on the left holds the progress bar
 * and one entry per error group (message preview plus a badge with the
 * number of universes affected); picking a group fills the main panel
 * with the full message, buttons for the decisions still plausibly
 * behind the error, and sample universes.
 */

import type { DecisionAttribution, ErrorGroup, ErrorReport } from "./types.js";
import { ApiError } from "./api.js";

export interface DashboardDeps {
  fetchErrors(): Promise<ErrorReport>;
  /** Jump to the diff view for one universe file (sample click-through). */
  openDiff?(universe: string): void;
}

export interface DashboardHandle {
  refresh(): Promise<void>;
  dispose(): void;
}

interface DashboardState {
  report: ErrorReport | null;
  selectedGroup: number | null;
  selectedDecision: string | null;
  loadError: string | null;
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

function renderProgress(report: ErrorReport): HTMLElement {
  const { executed, total, failed } = report.progress;
  const wrap = el("div", "progress");
  const bar = el("div", "progress-bar");
  const okShare = total > 0 ? ((executed - failed) / total) * 100 : 0;
  const failShare = total > 0 ? (failed / total) * 100 : 0;
  const ok = el("div", "progress-ok");
  ok.style.width = `${okShare}%`;
  const bad = el("div", "progress-fail");
  bad.style.width = `${failShare}%`;
  bar.append(ok, bad);
  const label = el(
    "div",
    "progress-label",
    `${executed} of ${total} universes run, ${failed} failed`,
  );
  wrap.append(bar, label);
  return wrap;
}

function renderGroupList(
  groups: ErrorGroup[],
  selected: number | null,
  onSelect: (id: number) => void,
): HTMLElement {
  const list = el("ul", "group-list");
  // groups arrive ordered by count; render as-is, never re-aggregate
  for (const g of groups) {
    const item = el("li", "group-item" + (g.id === selected ? " selected" : ""));
    const button = el("button", "group-row");
    button.type = "button";
    button.append(
      el("span", "group-preview", g.preview),
      el("span", "badge", String(g.count)),
    );
    button.addEventListener("click", () => onSelect(g.id));
    item.appendChild(button);
    list.appendChild(item);
  }
  return list;
}

function renderDecisionButtons(
  decisions: DecisionAttribution[],
  selected: string | null,
  onSelect: (name: string) => void,
): HTMLElement {
  const wrap = el("div", "decision-panel");
  const relevant = decisions.filter((d) => d.relevant);
  if (relevant.length === 0) {
    wrap.appendChild(
      el("p", "decision-none", "No single decision stands out for this group."),
    );
    return wrap;
  }
  wrap.appendChild(el("p", "decision-caption", "Decisions likely behind this error:"));
  const row = el("div", "decision-row");
  for (const d of relevant) {
    const button = el("button", "decision-btn" + (d.name === selected ? " selected" : ""), d.name);
    button.type = "button";
    button.addEventListener("click", () => onSelect(d.name));
    row.appendChild(button);
  }
  wrap.appendChild(row);
  if (selected) {
    const picked = relevant.find((d) => d.name === selected);
    if (picked) {
      const shared = el("div", "shared-options");
      shared.appendChild(el("span", "shared-caption", `every failing universe here uses ${picked.name} =`));
      for (const opt of picked.shared_options) {
        shared.appendChild(el("span", "option-chip", opt));
      }
      wrap.appendChild(shared);
    }
  }
  return wrap;
}

function renderGroupDetail(
  group: ErrorGroup,
  selectedDecision: string | null,
  onDecision: (name: string) => void,
  openDiff?: (universe: string) => void,
): HTMLElement {
  const main = el("div", "group-detail");
  main.appendChild(el("h2", "detail-title", `${group.count} universes with this error`));
  const message = el("pre", "error-message", group.representative);
  main.appendChild(message);
  main.appendChild(renderDecisionButtons(group.decisions, selectedDecision, onDecision));

  const samples = el("div", "sample-panel");
  samples.appendChild(el("p", "sample-caption", "Sample universes:"));
  const row = el("div", "sample-row");
  for (const name of group.samples) {
    const link = el("button", "sample-link", name);
    link.type = "button";
    if (openDiff) link.addEventListener("click", () => openDiff(name));
    row.appendChild(link);
  }
  samples.appendChild(row);
  main.appendChild(samples);
  return main;
}

/**
 * Mount the dashboard into `root` and load the first report. The handle's
 * refresh() refetches (used by the shell's refresh-on-focus); dispose()
 * clears the DOM.
 */
export async function mountDashboard(
  root: HTMLElement,
  deps: DashboardDeps,
): Promise<DashboardHandle> {
  const state: DashboardState = {
    report: null,
    selectedGroup: null,
    selectedDecision: null,
    loadError: null,
  };

  function render(): void {
    root.textContent = "";
    root.classList.add("dashboard");

    if (state.loadError !== null) {
      const banner = el("div", "connection-banner", state.loadError);
      const retry = el("button", "retry-btn", "Retry");
      retry.type = "button";
      retry.addEventListener("click", () => void refresh());
      banner.appendChild(retry);
      root.appendChild(banner);
    }
    if (!state.report) return;

    const summary = el("div", "summary-panel");
    summary.appendChild(renderProgress(state.report));

    if (state.report.groups.length === 0) {
      summary.appendChild(el("p", "no-errors", "No errors in the universes run so far."));
      root.appendChild(summary);
      return;
    }

    summary.appendChild(
      renderGroupList(state.report.groups, state.selectedGroup, (id) => {
        state.selectedGroup = id;
        state.selectedDecision = null;
        render();
      }),
    );
    root.appendChild(summary);

    const group = state.report.groups.find((g) => g.id === state.selectedGroup);
    if (group) {
      root.appendChild(
        renderGroupDetail(
          group,
          state.selectedDecision,
          (name) => {
            state.selectedDecision = name;
            render();
          },
          deps.openDiff,
        ),
      );
    }
  }

  async function refresh(): Promise<void> {
    try {
      const report = await deps.fetchErrors();
      state.report = report;
      state.loadError = null;
      // keep the selection when the group survives the refresh
      if (!report.groups.some((g) => g.id === state.selectedGroup)) {
        state.selectedGroup = report.groups.length > 0 ? report.groups[0].id : null;
        state.selectedDecision = null;
      }
    } catch (err) {
      state.loadError =
        err instanceof ApiError && err.status === 0
          ? "Cannot reach the debug service. Is `mvd serve` still running?"
          : `Failed to load the error report: ${err instanceof Error ? err.message : String(err)}`;
    }
    render();
  }

  await refresh();
  return {
    refresh,
    dispose(): void {
      root.textContent = "";
    },
  };
}
