/**
 * App shell: a tab bar switching between the error dashboard and the
 * universe/template diff viewer, wired to the debug service endpoints.
 */

import * as api from "./api.js";
import { ApiError } from "./api.js";
import { mountDashboard } from "./dashboard.js";
import { mountDiffViewer, type ViewerHandle } from "./diffview.js";
import type { DiffPayload, ErrorReport, SaveResult } from "./types.js";

export interface AppApi {
  fetchErrors(): Promise<ErrorReport>;
  fetchDiff(universe: string): Promise<DiffPayload>;
  saveTemplate(text: string, version: string): Promise<SaveResult>;
  saveAndCompile(text: string, version: string): Promise<SaveResult>;
}

export interface AppHandle {
  showView(view: "errors" | "diff"): void;
  openDiff(universe: string): Promise<void>;
  dispose(): void;
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

export async function initApp(root: HTMLElement, service: AppApi = api): Promise<AppHandle> {
  root.classList.add("app");

  const topbar = el("header", "topbar");
  topbar.appendChild(el("span", "brand", "multiverse debugger"));
  const nav = el("nav", "nav");
  const navErrors = el("button", "nav-btn active", "Errors");
  navErrors.type = "button";
  const navDiff = el("button", "nav-btn", "Diff");
  navDiff.type = "button";
  nav.append(navErrors, navDiff);
  topbar.appendChild(nav);

  const errorsView = el("div", "view view-errors");
  const diffView = el("div", "view view-diff hidden");

  const picker = el("form", "diff-picker") as HTMLFormElement;
  const input = document.createElement("input");
  input.className = "diff-input";
  input.name = "universe";
  input.placeholder = "universe file, e.g. universe_3.py";
  const open = el("button", "diff-open", "Open diff");
  open.type = "submit";
  picker.append(input, open);
  const diffStatus = el("div", "diff-load-status");
  const diffRoot = el("div", "diff-root");
  diffView.append(picker, diffStatus, diffRoot);

  root.append(topbar, errorsView, diffView);

  let viewer: ViewerHandle | null = null;

  function showView(view: "errors" | "diff"): void {
    const onErrors = view === "errors";
    errorsView.classList.toggle("hidden", !onErrors);
    diffView.classList.toggle("hidden", onErrors);
    navErrors.classList.toggle("active", onErrors);
    navDiff.classList.toggle("active", !onErrors);
  }

  async function openDiff(universe: string, initialBuffer?: string): Promise<void> {
    showView("diff");
    input.value = universe;
    diffStatus.textContent = "loading diff...";
    diffStatus.classList.remove("error");
    let payload: DiffPayload;
    try {
      payload = await service.fetchDiff(universe);
    } catch (err) {
      diffStatus.textContent =
        err instanceof ApiError && err.status === 0
          ? "Cannot reach the debug service. Is `mvd serve` still running?"
          : `Failed to load the diff: ${err instanceof Error ? err.message : String(err)}`;
      diffStatus.classList.add("error");
      return;
    }
    diffStatus.textContent = "";
    if (viewer) viewer.dispose();
    viewer = mountDiffViewer(diffRoot, payload, {
      saveTemplate: service.saveTemplate,
      saveAndCompile: service.saveAndCompile,
      // after a conflict the user can pull the newer template; their
      // buffer rides along so unsaved edits survive the remount
      reload: (buffer) => void openDiff(universe, buffer),
    }, initialBuffer !== undefined ? { initialBuffer, mode: "edit" } : {});
  }

  navErrors.addEventListener("click", () => showView("errors"));
  navDiff.addEventListener("click", () => showView("diff"));
  picker.addEventListener("submit", (event) => {
    event.preventDefault();
    const name = input.value.trim();
    if (name) void openDiff(name);
  });

  const dashboard = await mountDashboard(errorsView, {
    fetchErrors: () => service.fetchErrors(),
    openDiff: (universe) => void openDiff(universe),
  });

  // the paper's progress bar updates on refresh; refetch when the tab
  // regains focus instead of polling
  const onFocus = (): void => {
    void dashboard.refresh();
  };
  window.addEventListener("focus", onFocus);

  return {
    showView,
    openDiff: (universe: string) => openDiff(universe),
    dispose(): void {
      window.removeEventListener("focus", onFocus);
      dashboard.dispose();
      if (viewer) viewer.dispose();
      root.textContent = "";
    },
  };
}

function boot(): void {
  const root = document.getElementById("app");
  if (root) void initApp(root);
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}
