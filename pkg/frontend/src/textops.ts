/**
 * Client-side mirror of the service's character/boundary model.
 *
 * All indices are code-point based (the service counts Unicode scalars,
 * not UTF-16 units). The server re-validates character preservation on
 * every feedback post; these helpers exist so violations are caught
 * before a request is made.
 */

export interface Despaced {
  /** Code points with all whitespace removed. */
  chars: string[];
  /** labels[i] === 1 when a space followed character i. */
  labels: number[];
}

export function despace(text: string): Despaced {
  const tokens = text
    .normalize("NFC")
    .split(/\s+/u)
    .filter((t) => t.length > 0)
    .map((t) => Array.from(t));
  const chars = tokens.flat();
  const labels = new Array(Math.max(chars.length - 1, 0)).fill(0);
  let pos = 0;
  for (const token of tokens.slice(0, -1)) {
    pos += token.length;
    labels[pos - 1] = 1;
  }
  return { chars, labels };
}

export function applyLabels(chars: string[], labels: number[]): string {
  if (labels.length !== Math.max(chars.length - 1, 0)) {
    throw new Error(`label count ${labels.length} does not fit ${chars.length} chars`);
  }
  let out = "";
  chars.forEach((ch, i) => {
    out += ch;
    if (i < chars.length - 1 && labels[i]) out += " ";
  });
  return out;
}

export interface CharCheck {
  ok: boolean;
  /** Code-point index (in the de-spaced sequence) of the first mismatch. */
  position?: number;
}

/** Do two texts contain exactly the same non-space characters? */
export function checkCharsPreserved(original: string, edited: string): CharCheck {
  const a = despace(original).chars;
  const b = despace(edited).chars;
  const limit = Math.min(a.length, b.length);
  for (let i = 0; i < limit; i++) {
    if (a[i] !== b[i]) return { ok: false, position: i };
  }
  if (a.length !== b.length) return { ok: false, position: limit };
  return { ok: true };
}

/** Move the space at gap `from` to gap `to`, leaving other gaps alone. */
export function moveSpace(segmented: string, from: number, to: number): string {
  const { chars, labels } = despace(segmented);
  if (from < 0 || from >= labels.length || !labels[from]) {
    throw new Error(`no space at gap ${from}`);
  }
  if (to < 0 || to >= labels.length) {
    throw new Error(`gap ${to} out of range`);
  }
  labels[from] = 0;
  labels[to] = 1;
  return applyLabels(chars, labels);
}
