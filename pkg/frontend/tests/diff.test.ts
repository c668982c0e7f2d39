import { describe, expect, it } from "vitest";

import { gapAnnotations, visibleAnnotations } from "../src/diff.js";

describe("gapAnnotations", () => {
  it("marks nothing for identical unspaced strings", () => {
    expect(visibleAnnotations("abcd", "abcd")).toEqual([]);
  });

  it("marks one inserted space", () => {
    const marks = visibleAnnotations("abcd", "ab cd");
    expect(marks).toEqual([{ index: 1, kind: "inserted" }]);
  });

  it("marks user-typed spaces as user-forced", () => {
    const marks = visibleAnnotations("ab cd", "ab cd");
    expect(marks).toEqual([{ index: 1, kind: "user-forced" }]);
  });

  it("distinguishes user and model spaces in one suggestion", () => {
    const marks = gapAnnotations("가나 다라", "가 나 다라");
    expect(marks).toEqual([
      { index: 0, kind: "inserted" },
      { index: 1, kind: "user-forced" },
      { index: 2, kind: "kept" },
    ]);
  });
});
