/**
 * Scripted end-to-end session against a real service instance: type a
 * despaced sentence, receive the suggestion, move one space, confirm, and
 * check the feedback log on disk.
 */

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionController, SessionState } from "../src/session.js";
import { despace, moveSpace } from "../src/textops.js";

const here = dirname(fileURLToPath(import.meta.url));
const port = 18000 + (process.pid % 1000);
const baseUrl = `http://127.0.0.1:${port}`;

let served: ChildProcess | null = null;
let workDir: string;
let feedbackLog: string;

async function waitForHealth(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${baseUrl}/v1/health`);
      if (resp.ok) {
        const body = (await resp.json()) as { status: string };
        if (body.status === "ok") return;
      }
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("service did not become healthy in time");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "segrt-e2e-"));
  feedbackLog = join(workDir, "feedback.jsonl");
  execFileSync("python3", [join(here, "make_fixture.py"), workDir], { stdio: "inherit" });
  served = spawn(
    "python3",
    [
      "-m", "segrt.cli", "serve",
      "--model", join(workDir, "model.segm"),
      "--embeddings", join(workDir, "vectors.txt"),
      "--port", String(port),
      "--feedback-log", feedbackLog,
    ],
    { stdio: "inherit" },
  );
  await waitForHealth();
}, 60_000);

afterAll(() => {
  served?.kill("SIGTERM");
});

describe("assisted session against the live service", () => {
  it("type, receive suggestion, move one space, confirm", async () => {
    const states: SessionState[] = [];
    const controller = new SessionController(
      new ApiClient(baseUrl),
      (s) => states.push(s),
      50, // short debounce to keep the test quick
    );

    const sentence = "아버지친구분당선되셨어요";
    controller.setInput(sentence);
    await new Promise((r) => setTimeout(r, 120)); // ride out the debounce
    for (let i = 0; i < 100 && controller.getState().suggestion === null; i++) {
      await new Promise((r) => setTimeout(r, 50));
    }

    const state = controller.getState();
    expect(state.suggestion).not.toBeNull();
    const suggested = state.suggestion!.segmented;
    expect(suggested.replace(/ /gu, "")).toBe(sentence);
    expect(state.suggestion!.scores).toBeDefined(); // recommend mode
    // The fixture model always proposes a space after the second character.
    expect(despace(suggested).labels[1]).toBe(1);

    // Move that one space to the next gap and confirm.
    const edited = moveSpace(suggested, 1, 2);
    controller.editSegmentation(edited);
    expect(controller.getState().violationAt).toBeNull();
    const stored = await controller.confirm("e2e");
    expect(stored).toBe(true);
    expect(controller.getState().lastFeedbackId).not.toBeNull();
    controller.dispose();

    // Exactly one record, and its accepted text preserves the characters.
    const lines = readFileSync(feedbackLog, "utf-8").split("\n").filter(Boolean);
    expect(lines.length).toBe(1);
    const record = JSON.parse(lines[0]);
    expect(record.original).toBe(sentence);
    expect(record.accepted).toBe(edited);
    expect(record.confirmation).toBe(false);
    expect(despace(record.accepted).chars.join("")).toBe(despace(sentence).chars.join(""));
  }, 60_000);

  it("rejects a character-altering confirm end to end", async () => {
    const client = new ApiClient(baseUrl);
    const before = readFileSync(feedbackLog, "utf-8").split("\n").filter(Boolean).length;
    await expect(
      client.feedback({ original: "abcd", suggested: "ab cd", accepted: "ab ce" }),
    ).rejects.toMatchObject({ status: 422 });
    const after = readFileSync(feedbackLog, "utf-8").split("\n").filter(Boolean).length;
    expect(after).toBe(before); // nothing was appended
  }, 30_000);
});
