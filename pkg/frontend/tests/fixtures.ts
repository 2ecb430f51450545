/** Hand-built service payloads reused across the UI tests. */

import type { DiffPayload, ErrorReport, Span } from "../src/types.js";

/** Char span of `needle` inside `text`; throws when the fixture drifts. */
export function span(text: string, needle: string): Span {
  const start = text.indexOf(needle);
  if (start < 0) throw new Error(`fixture needle not found: ${JSON.stringify(needle)}`);
  return [start, start + needle.length];
}

export function makeReport(): ErrorReport {
  return {
    progress: { executed: 12, total: 16, failed: 6 },
    groups: [
      {
        id: 1,
        count: 5,
        preview: "ValueError: math domain error",
        representative:
          'Traceback (most recent call last):\n  File "universe_2.py", line 9, in <module>\n' +
          "    y = log(x)\nValueError: math domain error",
        members: [2, 4, 6, 10, 14],
        samples: ["universe_2.py", "universe_4.py", "universe_6.py"],
        decisions: [
          {
            name: "scale",
            shared_options: ["log"],
            all_options: ["linear", "log"],
            relevant: true,
          },
          {
            name: "fit",
            shared_options: ["mean", "total"],
            all_options: ["mean", "total"],
            relevant: false,
          },
        ],
      },
      {
        id: 2,
        count: 1,
        preview: "KeyError: 'cohort'",
        representative: "Traceback (most recent call last):\nKeyError: 'cohort'",
        members: [7],
        samples: ["universe_7.py"],
        decisions: [
          {
            name: "scale",
            shared_options: ["linear"],
            all_options: ["linear", "log"],
            relevant: true,
          },
          {
            name: "fit",
            shared_options: ["mean"],
            all_options: ["mean", "total"],
            relevant: true,
          },
        ],
      },
    ],
  };
}

export const OLD_UNIVERSE = "a = 1\nb = old()\nc = 3\nd = gone\n";
export const NEW_UNIVERSE = "a = 1\nb = new()\nextra()\nc = 3\n";
export const OLD_TEMPLATE = "# --- (dec) one\nb = old()\nc = 3\nd = gone\n";
export const NEW_TEMPLATE = "# --- (dec) one\nb = new()\nextra()\nc = 3\n";

/** One region of each edit kind. The delete and insert have no span on
 * the other universe side, which exercises cross-mode linking. */
export function makeDiffPayload(): DiffPayload {
  return {
    version: "abc123def4567890",
    old_universe: OLD_UNIVERSE,
    new_universe: NEW_UNIVERSE,
    old_template: OLD_TEMPLATE,
    new_template: NEW_TEMPLATE,
    regions: [
      {
        kind: "update",
        spans: {
          ou: span(OLD_UNIVERSE, "old()"),
          nu: span(NEW_UNIVERSE, "new()"),
          ot: span(OLD_TEMPLATE, "old()"),
          nt: span(NEW_TEMPLATE, "new()"),
        },
      },
      {
        kind: "insert",
        spans: {
          nu: span(NEW_UNIVERSE, "extra()"),
          nt: span(NEW_TEMPLATE, "extra()"),
        },
      },
      {
        kind: "delete",
        spans: {
          ou: span(OLD_UNIVERSE, "d = gone"),
          ot: span(OLD_TEMPLATE, "d = gone"),
        },
      },
      {
        kind: "move",
        spans: {
          ou: span(OLD_UNIVERSE, "c = 3"),
          nu: span(NEW_UNIVERSE, "c = 3"),
        },
      },
    ],
    line_map: [
      { old: 1, new: 1, inserted_after: 0 },
      { old: 2, new: 2, inserted_after: 1 },
      { old: 3, new: 4, inserted_after: 0 },
      { old: 4, new: null, inserted_after: 0 },
    ],
    provenance: ["block (dec, one): lines 2-2 of universe_1.py"],
    warnings: [],
  };
}
