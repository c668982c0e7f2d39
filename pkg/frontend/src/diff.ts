import { despace } from "./textops.js";

export type GapKind = "kept" | "inserted" | "user-forced";

export interface GapAnnotation {
  /** Gap index: between character `index` and `index + 1`. */
  index: number;
  kind: GapKind;
}

/**
 * Classify every gap of the suggestion against the user's original text.
 *
 * "user-forced": the user already typed a space there (the service never
 * removes those). "inserted": the suggestion added a space. "kept": no
 * space on either side; rendered as nothing.
 */
export function gapAnnotations(original: string, suggested: string): GapAnnotation[] {
  const orig = despace(original);
  const sugg = despace(suggested);
  const gaps = Math.min(orig.labels.length, sugg.labels.length);
  const annotations: GapAnnotation[] = [];
  for (let i = 0; i < gaps; i++) {
    let kind: GapKind = "kept";
    if (orig.labels[i]) kind = "user-forced";
    else if (sugg.labels[i]) kind = "inserted";
    annotations.push({ index: i, kind });
  }
  return annotations;
}

/** Annotations that should render a visible mark. */
export function visibleAnnotations(original: string, suggested: string): GapAnnotation[] {
  return gapAnnotations(original, suggested).filter((a) => a.kind !== "kept");
}
