import { describe, expect, it } from "vitest";

import { applyLabels, checkCharsPreserved, despace, moveSpace } from "../src/textops.js";

describe("despace", () => {
  it("records boundaries after each token", () => {
    const { chars, labels } = despace("아버지 친구분 당선되셨어요");
    expect(chars.join("")).toBe("아버지친구분당선되셨어요");
    expect(labels).toEqual([0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0]);
  });

  it("collapses whitespace runs and trims", () => {
    const { chars, labels } = despace("  a  b ");
    expect(chars).toEqual(["a", "b"]);
    expect(labels).toEqual([1]);
  });

  it("handles empty input", () => {
    expect(despace("").chars).toEqual([]);
    expect(despace("   ").labels).toEqual([]);
  });

  it("indexes by code points, not UTF-16 units", () => {
    const { chars, labels } = despace("😀a b");
    expect(chars).toEqual(["😀", "a", "b"]);
    expect(labels).toEqual([0, 1]);
  });
});

describe("applyLabels", () => {
  it("is the inverse of despace", () => {
    const texts = ["가나 다라", "a b c", "한 국어 텍스트"];
    for (const text of texts) {
      const { chars, labels } = despace(text);
      expect(applyLabels(chars, labels)).toBe(text.normalize("NFC").split(/\s+/u).filter(Boolean).join(" "));
    }
  });

  it("rejects mismatched label counts", () => {
    expect(() => applyLabels(["a", "b"], [])).toThrow();
  });
});

describe("checkCharsPreserved", () => {
  it("accepts spacing-only edits", () => {
    expect(checkCharsPreserved("abcd", "a bc d").ok).toBe(true);
  });

  it("reports the violating position", () => {
    const check = checkCharsPreserved("abcd", "ab ce");
    expect(check.ok).toBe(false);
    expect(check.position).toBe(3);
  });

  it("flags missing characters at the tail", () => {
    const check = checkCharsPreserved("abcd", "ab c");
    expect(check.ok).toBe(false);
    expect(check.position).toBe(3);
  });
});

describe("moveSpace", () => {
  it("relocates one space", () => {
    expect(moveSpace("ab cd", 1, 2)).toBe("abc d");
  });

  it("refuses to move a space that is not there", () => {
    expect(() => moveSpace("ab cd", 0, 2)).toThrow();
  });
});
