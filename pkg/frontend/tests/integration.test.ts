// @vitest-environment jsdom
//
// Full user-flow test against a live service instance: wizard submission,
// live view row accounting, results tabs matching the API byte-for-value,
// and download equality with the direct endpoint.
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App } from "../src/main.js";

const PORT = 28100 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;
const EXPLORATIONS = 4;
const ITERATIONS = 3;

let service: ChildProcess;
let storageDir: string;

function traceFileText(): string {
  // Deterministic little dataset; LCG keeps the test hermetic.
  let state = 42;
  const next = () => {
    state = (state * 1103515245 + 12345) % 2147483648;
    return state / 2147483648;
  };
  const lines: string[] = [];
  for (let t = 0; t < 60; t += 1) {
    const length = 2 + Math.floor(next() * 6);
    let x = next();
    let y = next();
    const points: string[] = [];
    for (let p = 0; p < length; p += 1) {
      x = Math.min(1, Math.max(0, x + (next() - 0.4) * 0.2));
      y = Math.min(1, Math.max(0, y + (next() - 0.4) * 0.2));
      points.push(`${x.toFixed(6)},${y.toFixed(6)}`);
    }
    lines.push(points.join(";"));
  }
  return lines.join("\n") + "\n";
}

async function waitFor(predicate: () => boolean, timeoutMs: number, label: string): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) {
      return;
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`timed out waiting for ${label}`);
}

async function waitForService(): Promise<void> {
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    try {
      await fetch(`${BASE}/api/jobs/probe`);
      return;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 200));
    }
  }
  throw new Error("service did not come up");
}

function setField(root: HTMLElement, name: string, value: string): void {
  const input = root.querySelector<HTMLInputElement>(`[name=${name}]`);
  if (!input) {
    throw new Error(`no field named ${name}`);
  }
  input.value = value;
  input.dispatchEvent(new Event("change", { bubbles: true }));
}

function click(root: HTMLElement, selector: string): void {
  const el = root.querySelector<HTMLElement>(selector);
  if (!el) {
    throw new Error(`nothing matches ${selector}`);
  }
  el.dispatchEvent(new MouseEvent("click", { bubbles: true }));
}

beforeAll(async () => {
  storageDir = mkdtempSync(join(tmpdir(), "tracesmith-ui-test-"));
  service = spawn(
    "python3",
    ["-m", "tracesmith", "serve", "--port", String(PORT), "--storage", storageDir, "--workers", "1"],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  await waitForService();
}, 60_000);

afterAll(() => {
  service?.kill("SIGTERM");
  if (storageDir) {
    rmSync(storageDir, { recursive: true, force: true });
  }
});

describe("full user flow against a live service", () => {
  it(
    "uploads, optimizes, renders results, and downloads identical bytes",
    async () => {
      const root = document.createElement("div");
      root.id = "app";
      document.body.appendChild(root);
      const api = new ApiClient(BASE);
      const app = new App(root, api);
      app.start();

      // -- upload step
      expect(root.querySelector("[data-role=file-input]")).not.toBeNull();
      await app.submitUpload(traceFileText());
      expect(app.wizard.datasetId).not.toBeNull();
      expect(app.wizard.uploadProgress).toBe(1);
      expect(root.querySelector("[data-role=upload-done]")?.textContent).toContain("60 traces");
      click(root, "[data-role=next]");
      await waitFor(
        () => root.querySelector("[name=epsilon]") !== null,
        5_000,
        "pipeline params step",
      );

      // -- pipeline parameters (invalid epsilon first: inline error, no advance)
      setField(root, "epsilon", "-1");
      click(root, "[data-role=next]");
      await waitFor(
        () => root.querySelector("[data-role=errors]")?.textContent?.includes("epsilon") ?? false,
        5_000,
        "epsilon validation error",
      );
      expect(root.querySelector("[name=epsilon]")).not.toBeNull();

      setField(root, "epsilon", "1.0");
      setField(root, "metric", "trip");
      setField(root, "grid_n", "2");
      setField(root, "trials", "1");
      click(root, "[data-role=next]");
      await waitFor(
        () => root.querySelector("[name=explorations]") !== null,
        5_000,
        "optimization params step",
      );

      // -- optimization parameters and submission
      setField(root, "explorations", String(EXPLORATIONS));
      setField(root, "iterations", String(ITERATIONS));
      setField(root, "seed", "0");
      click(root, "[data-role=next]");

      await waitFor(() => app.jobId !== null, 15_000, "job submission");
      const jobId = app.jobId as string;

      // -- live view runs to completion
      await waitFor(
        () => root.querySelector("[data-role=go-to-results]") !== null,
        120_000,
        "terminal event",
      );
      const rows = root.querySelectorAll("[data-role=live-rows] tbody tr");
      expect(rows).toHaveLength(EXPLORATIONS + ITERATIONS);
      const status = await api.getStatus(jobId);
      expect(status.state).toBe("done");
      expect(status.progress.completed).toBe(EXPLORATIONS + ITERATIONS);
      const progress = root.querySelector<HTMLElement>("[data-role=progress]");
      expect(progress?.dataset.progress).toBe("1.0000");

      // -- results phase: all six tabs with data matching the API responses
      click(root, "[data-role=go-to-results]");
      await waitFor(
        () => root.querySelectorAll("[data-tab]").length === 6,
        30_000,
        "results tabs",
      );

      const direct = await api.getResult(jobId);
      expect(JSON.stringify(app.results?.result)).toBe(JSON.stringify(direct));
      expect(root.querySelector("[data-field=epsilon]")?.textContent).toBe("1");

      click(root, "[data-tab=results]");
      const w1 = root.querySelector("[data-field=w1]")?.textContent;
      expect(w1).toBe(direct.best_weights[0].toFixed(6));
      expect(root.querySelector("[data-field=trip_error]")?.textContent).toBe(
        direct.report.trip_error.toFixed(6),
      );

      click(root, "[data-tab=spatial-distribution]");
      const heatmap = await api.getHeatmap(jobId);
      expect(JSON.stringify(app.results?.heatmap)).toBe(JSON.stringify(heatmap));
      const cells = root.querySelectorAll("[data-role=tab-body] .heatmap-cell");
      expect(cells).toHaveLength(2 * 10 * 10);
      const domSum = [...cells].reduce((acc, cell) => acc + Number((cell as HTMLElement).dataset.value), 0);
      const apiSum = [...heatmap.real.flat(), ...heatmap.synthetic.flat()].reduce(
        (a, b) => a + b,
        0,
      );
      expect(domSum).toBe(apiSum);

      click(root, "[data-tab=trip-distribution]");
      expect(JSON.stringify(app.results?.tripdist)).toBe(
        JSON.stringify(await api.getTripDist(jobId)),
      );

      click(root, "[data-tab=travel-distance]");
      const distances = await api.getDistances(jobId);
      expect(JSON.stringify(app.results?.distances)).toBe(JSON.stringify(distances));
      expect(root.querySelectorAll("[data-role=tab-body] .histogram-bar")).toHaveLength(
        2 * distances.buckets,
      );

      click(root, "[data-tab=download]");
      const link = root.querySelector<HTMLAnchorElement>("[data-role=download-link]");
      expect(link?.getAttribute("href")).toBe(`${BASE}/api/jobs/${jobId}/synthetic`);
      const viaClient = await api.fetchSynthetic(jobId);
      const viaDirect = await (await fetch(`${BASE}/api/jobs/${jobId}/synthetic`)).text();
      expect(viaClient).toBe(viaDirect);
      expect(viaClient.length).toBeGreaterThan(0);
      expect(viaClient.trim().split("\n")).toHaveLength(60);
    },
    180_000,
  );
});
