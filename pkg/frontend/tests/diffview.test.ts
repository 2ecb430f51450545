import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError } from "../src/api.js";
import {
  counterpartPane,
  mountDiffViewer,
  type ViewerDeps,
  type ViewerHandle,
} from "../src/diffview.js";
import type { DiffPayload } from "../src/types.js";
import {
  NEW_TEMPLATE,
  NEW_UNIVERSE,
  OLD_TEMPLATE,
  OLD_UNIVERSE,
  makeDiffPayload,
} from "./fixtures.js";

let handle: ViewerHandle | null = null;

function mount(payload: DiffPayload = makeDiffPayload(), deps: Partial<ViewerDeps> = {}) {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const full: ViewerDeps = {
    saveTemplate: deps.saveTemplate ?? vi.fn(async () => ({ ok: true, version: "v2" })),
    saveAndCompile: deps.saveAndCompile ?? vi.fn(async () => ({ ok: true, version: "v2" })),
    reload: deps.reload,
  };
  handle = mountDiffViewer(root, payload, full);
  return { root, deps: full, handle };
}

function tick(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

function dblclick(el: Element): void {
  el.dispatchEvent(new MouseEvent("dblclick", { bubbles: true }));
}

function pane(root: HTMLElement, key: string): HTMLElement {
  const el = root.querySelector<HTMLElement>(`[data-pane="${key}"]`);
  if (!el) throw new Error(`pane ${key} not mounted`);
  return el;
}

afterEach(() => {
  handle?.dispose();
  handle = null;
  document.body.innerHTML = "";
});

describe("modes", () => {
  it("starts in universe mode with both universe panes", () => {
    const { root } = mount();
    expect(handle!.getMode()).toBe("universe");
    expect(pane(root, "ou").textContent).toBe(OLD_UNIVERSE);
    expect(pane(root, "nu").textContent).toBe(NEW_UNIVERSE);
    expect(root.querySelector('[data-pane="ot"]')).toBeNull();
  });

  it("switches to the template panes and back via the buttons", () => {
    const { root } = mount();
    root.querySelector<HTMLElement>('[data-mode="template"]')!.click();
    expect(pane(root, "ot").textContent).toBe(OLD_TEMPLATE);
    expect(pane(root, "nt").textContent).toBe(NEW_TEMPLATE);
    expect(root.querySelector('[data-mode="template"]')!.classList.contains("active")).toBe(true);
    root.querySelector<HTMLElement>('[data-mode="universe"]')!.click();
    expect(pane(root, "ou").textContent).toBe(OLD_UNIVERSE);
  });

  it("shows the writable suggestion in edit mode", () => {
    const { root } = mount();
    root.querySelector<HTMLElement>('[data-mode="edit"]')!.click();
    const editor = root.querySelector<HTMLTextAreaElement>(".template-editor")!;
    expect(editor.value).toBe(NEW_TEMPLATE);
    expect(root.querySelector(".save-btn")).not.toBeNull();
    expect(root.querySelector(".save-compile-btn")).not.toBeNull();
  });

  it("never loses the edit buffer across mode switches", () => {
    const { root } = mount();
    root.querySelector<HTMLElement>('[data-mode="edit"]')!.click();
    const editor = root.querySelector<HTMLTextAreaElement>(".template-editor")!;
    editor.value = NEW_TEMPLATE + "# trailing note\n";
    editor.dispatchEvent(new Event("input", { bubbles: true }));

    root.querySelector<HTMLElement>('[data-mode="universe"]')!.click();
    root.querySelector<HTMLElement>('[data-mode="edit"]')!.click();
    const back = root.querySelector<HTMLTextAreaElement>(".template-editor")!;
    expect(back.value).toBe(NEW_TEMPLATE + "# trailing note\n");
    expect(handle!.getBuffer()).toBe(NEW_TEMPLATE + "# trailing note\n");
  });
});

describe("highlights", () => {
  it("marks all four edit kinds across the universe panes", () => {
    const { root } = mount();
    const kinds = new Set(
      [...root.querySelectorAll<HTMLElement>(".hl")].map((m) => m.dataset.kind),
    );
    expect(kinds).toEqual(new Set(["insert", "delete", "update", "move"]));
  });

  it("renders identical unmarked panes for an empty-region session", () => {
    const payload = makeDiffPayload();
    payload.regions = [];
    payload.new_universe = payload.old_universe;
    payload.new_template = payload.old_template;
    const { root } = mount(payload);
    expect(root.querySelectorAll(".hl").length).toBe(0);
    expect(pane(root, "ou").textContent).toBe(pane(root, "nu").textContent);
  });

  it("shows provenance notes in template mode only", () => {
    const { root } = mount();
    expect(root.querySelector(".provenance-item")).toBeNull();
    root.querySelector<HTMLElement>('[data-mode="template"]')!.click();
    expect(root.querySelector(".provenance-item")?.textContent).toContain("block (dec, one)");
  });

  it("lists warnings when the session carries any", () => {
    const payload = makeDiffPayload();
    payload.warnings = ["an edit landed outside any known region"];
    const { root } = mount(payload);
    expect(root.querySelector(".warning-item")?.textContent).toContain("outside any known region");
  });
});

describe("linking", () => {
  it("prefers the sibling pane and falls back across modes", () => {
    const regions = makeDiffPayload().regions;
    expect(counterpartPane(regions[0], "ou")).toBe("nu"); // update has both sides
    expect(counterpartPane(regions[3], "nu")).toBe("ou"); // move too
    expect(counterpartPane(regions[2], "ou")).toBe("ot"); // delete has no new side
    expect(counterpartPane(regions[1], "nu")).toBe("nt"); // insert has no old side
    expect(counterpartPane({ kind: "insert", spans: { nu: [0, 1] } }, "nu")).toBeNull();
  });

  it("double-clicking an update centers its counterpart in the other pane", () => {
    const { root } = mount();
    const mark = pane(root, "ou").querySelector<HTMLElement>('[data-region="0"]')!;
    dblclick(mark);
    const target = pane(root, "nu").querySelector<HTMLElement>('[data-region="0"]')!;
    expect(target.classList.contains("hl-linked")).toBe(true);
    expect(handle!.getMode()).toBe("universe");
  });

  it("jumps to template mode when the counterpart lives there", () => {
    const { root } = mount();
    const del = pane(root, "ou").querySelector<HTMLElement>('[data-region="2"]')!;
    dblclick(del);
    expect(handle!.getMode()).toBe("template");
    const target = pane(root, "ot").querySelector<HTMLElement>('[data-region="2"]')!;
    expect(target.classList.contains("hl-linked")).toBe(true);
  });

  it("applies the centering scroll math to the counterpart pane", () => {
    const { root } = mount();
    const nu = pane(root, "nu");
    const target = nu.querySelector<HTMLElement>('[data-region="0"]')!;
    Object.defineProperty(target, "offsetTop", { value: 500 });
    Object.defineProperty(target, "offsetHeight", { value: 16 });
    Object.defineProperty(nu, "clientHeight", { value: 200 });
    dblclick(pane(root, "ou").querySelector<HTMLElement>('[data-region="0"]')!);
    expect(nu.scrollTop).toBe(500 + 8 - 100);
  });
});

describe("saving", () => {
  function inEditMode(deps: Partial<ViewerDeps> = {}, payload?: DiffPayload) {
    const mounted = mount(payload ?? makeDiffPayload(), deps);
    mounted.root.querySelector<HTMLElement>('[data-mode="edit"]')!.click();
    return mounted;
  }

  it("posts the buffer with the session's version token", async () => {
    const saveTemplate = vi.fn(async () => ({ ok: true, version: "fresh567" }));
    const { root } = inEditMode({ saveTemplate });
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    expect(saveTemplate).toHaveBeenCalledWith(NEW_TEMPLATE, "abc123def4567890");
    expect(root.querySelector(".save-status")?.textContent).toBe("template saved");
    expect(handle!.getVersion()).toBe("fresh567");
  });

  it("uses the refreshed token for the next save", async () => {
    const saveTemplate = vi.fn(async () => ({ ok: true, version: "fresh567" }));
    const { root } = inEditMode({ saveTemplate });
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    expect(saveTemplate).toHaveBeenNthCalledWith(2, NEW_TEMPLATE, "fresh567");
  });

  it("reports the recompiled universe count after save-and-compile", async () => {
    const saveAndCompile = vi.fn(async () => ({
      ok: true,
      version: "fresh567",
      report: { universes: 8, decisions: 3, options: 7 },
    }));
    const { root } = inEditMode({ saveAndCompile });
    root.querySelector<HTMLElement>(".save-compile-btn")!.click();
    await tick();
    expect(saveAndCompile).toHaveBeenCalledTimes(1);
    expect(root.querySelector(".save-status")?.textContent).toBe(
      "saved and recompiled 8 universes",
    );
  });

  it("renders a parse failure inline at the reported line", async () => {
    const saveTemplate = vi.fn(async () => {
      throw new ApiError(
        400,
        { error: { type: "ParseError", message: "unknown decision in directive", line: 3 } },
        "unknown decision in directive",
      );
    });
    const { root } = inEditMode({ saveTemplate });
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    const inline = root.querySelector(".inline-error");
    expect(inline?.textContent).toBe("line 3: unknown decision in directive");
    expect(root.querySelector(".conflict-dialog")).toBeNull();
  });

  it("surfaces other failures in the status line", async () => {
    const saveTemplate = vi.fn(async () => {
      throw new ApiError(0, null, "cannot reach the debug service");
    });
    const { root } = inEditMode({ saveTemplate });
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    const status = root.querySelector(".save-status");
    expect(status?.classList.contains("error")).toBe(true);
    expect(status?.textContent).toContain("save failed");
  });
});

describe("conflicts", () => {
  const stale = () =>
    vi.fn(async () => {
      throw new ApiError(
        409,
        {
          error: { type: "StaleVersion", message: "template changed since this session" },
          current_version: "feedface00000000",
        },
        "template changed since this session",
      );
    });

  function editAndDirty() {
    const saveTemplate = stale();
    const reload = vi.fn();
    const mounted = mount(makeDiffPayload(), { saveTemplate, reload });
    mounted.root.querySelector<HTMLElement>('[data-mode="edit"]')!.click();
    const editor = mounted.root.querySelector<HTMLTextAreaElement>(".template-editor")!;
    editor.value = NEW_TEMPLATE + "# my unsaved work\n";
    editor.dispatchEvent(new Event("input", { bubbles: true }));
    return { ...mounted, saveTemplate, reload };
  }

  it("opens a conflict dialog on a stale token and never retries by itself", async () => {
    const { root, saveTemplate } = editAndDirty();
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    const dialog = root.querySelector(".conflict-dialog");
    expect(dialog).not.toBeNull();
    expect(dialog?.getAttribute("role")).toBe("dialog");
    expect(dialog?.textContent).toContain("feedface00000000");
    expect(dialog?.textContent).toContain("Nothing was overwritten");
    // one POST, no automatic retry with a fresher token
    expect(saveTemplate).toHaveBeenCalledTimes(1);
    expect(handle!.getVersion()).toBe("abc123def4567890");
  });

  it("keeps the buffer and closes on 'keep editing'", async () => {
    const { root } = editAndDirty();
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    root.querySelector<HTMLElement>(".conflict-dismiss")!.click();
    expect(root.querySelector(".conflict-dialog")).toBeNull();
    expect(root.querySelector<HTMLTextAreaElement>(".template-editor")!.value).toBe(
      NEW_TEMPLATE + "# my unsaved work\n",
    );
  });

  it("hands the unsaved buffer to reload when the user wants the latest", async () => {
    const { root, reload } = editAndDirty();
    root.querySelector<HTMLElement>(".save-btn")!.click();
    await tick();
    root.querySelector<HTMLElement>(".conflict-reload")!.click();
    expect(reload).toHaveBeenCalledWith(NEW_TEMPLATE + "# my unsaved work\n");
  });
});
