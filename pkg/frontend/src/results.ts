/**
 * Results phase: six tabs over one completed job. Each tab renders exactly
 * what its API endpoint returned; a failed stats fetch only breaks its own
 * tab.
 */

import type {
  ApiClient,
  DistanceStats,
  HeatmapStats,
  ResultDocument,
  TripDistStats,
} from "./api.js";
import { matrixMax, renderHeatmap, renderHistogram, renderSideBySide } from "./charts.js";

export const TABS = [
  "input-values",
  "results",
  "spatial-distribution",
  "trip-distribution",
  "travel-distance",
  "download",
] as const;

export type TabName = (typeof TABS)[number];

export class ResultsView {
  activeTab: TabName = "input-values";
  result: ResultDocument | null = null;
  heatmap: HeatmapStats | null = null;
  tripdist: TripDistStats | null = null;
  distances: DistanceStats | null = null;
  tabErrors = new Map<TabName, string>();

  constructor(
    private readonly api: ApiClient,
    readonly jobId: string,
  ) {}

  async load(): Promise<void> {
    this.result = await this.api.getResult(this.jobId);
    const wanted: [TabName, () => Promise<void>][] = [
      ["spatial-distribution", async () => {
        this.heatmap = await this.api.getHeatmap(this.jobId);
      }],
      ["trip-distribution", async () => {
        this.tripdist = await this.api.getTripDist(this.jobId);
      }],
      ["travel-distance", async () => {
        this.distances = await this.api.getDistances(this.jobId);
      }],
    ];
    await Promise.all(
      wanted.map(async ([tab, fetcher]) => {
        try {
          await fetcher();
        } catch (error) {
          this.tabErrors.set(tab, String(error));
        }
      }),
    );
  }

  downloadUrl(): string {
    return this.api.syntheticUrl(this.jobId);
  }
}

export function renderResults(container: HTMLElement, view: ResultsView): void {
  const tabs = TABS.map(
    (tab) =>
      `<button class="tab${tab === view.activeTab ? " active" : ""}" data-tab="${tab}">${tab}</button>`,
  ).join("");
  container.innerHTML = `
    <nav class="tabs" data-role="tabs">${tabs}</nav>
    <section class="tab-body" data-role="tab-body"></section>
  `;
  const body = container.querySelector<HTMLElement>("[data-role=tab-body]");
  if (body) {
    renderTabBody(body, view);
  }
}

function renderTabBody(body: HTMLElement, view: ResultsView): void {
  const error = view.tabErrors.get(view.activeTab);
  if (error) {
    body.innerHTML = `<div class="banner error">failed to load: ${error}</div>`;
    return;
  }
  switch (view.activeTab) {
    case "input-values":
      renderInputValues(body, view);
      return;
    case "results":
      renderResultSummary(body, view);
      return;
    case "spatial-distribution":
      renderSpatial(body, view);
      return;
    case "trip-distribution":
      renderTrips(body, view);
      return;
    case "travel-distance":
      renderDistances(body, view);
      return;
    case "download":
      renderDownload(body, view);
  }
}

function renderInputValues(body: HTMLElement, view: ResultsView): void {
  const spec = view.result?.spec;
  if (!spec) {
    body.textContent = "no result loaded";
    return;
  }
  const rows = Object.entries(spec)
    .map(([key, value]) => `<tr><th>${key}</th><td data-field="${key}">${value}</td></tr>`)
    .join("");
  body.innerHTML = `<table class="kv-table" data-role="input-values">${rows}</table>`;
}

function renderResultSummary(body: HTMLElement, view: ResultsView): void {
  const result = view.result;
  if (!result) {
    body.textContent = "no result loaded";
    return;
  }
  const weights = result.best_weights
    .map((w, i) => `<td data-field="w${i + 1}">${w.toFixed(6)}</td>`)
    .join("");
  const metrics = Object.entries(result.report)
    .filter(([key]) => key !== "custom")
    .map(
      ([key, value]) =>
        `<tr><th>${key}</th><td data-field="${key}">${(value as number).toFixed(6)}</td></tr>`,
    )
    .join("");
  const custom = Object.entries(result.report.custom ?? {})
    .map(
      ([key, value]) =>
        `<tr><th>${key} (custom)</th><td data-field="custom:${key}">${value.toFixed(6)}</td></tr>`,
    )
    .join("");
  body.innerHTML = `
    <h3>Optimized budget weights (${result.metric})</h3>
    <table class="weights-table" data-role="best-weights">
      <tr><th>w1</th><th>w2</th><th>w3</th><th>w4</th></tr>
      <tr>${weights}</tr>
    </table>
    <h3>Error metrics on the released dataset</h3>
    <table class="kv-table" data-role="metric-report">${metrics}${custom}</table>
  `;
}

function renderSpatial(body: HTMLElement, view: ResultsView): void {
  if (!view.heatmap) {
    body.textContent = "loading";
    return;
  }
  const shared = matrixMax(view.heatmap.real, view.heatmap.synthetic);
  renderSideBySide(
    body,
    renderHeatmap(view.heatmap.real, shared, "real"),
    renderHeatmap(view.heatmap.synthetic, shared, "synthetic"),
  );
}

function renderTrips(body: HTMLElement, view: ResultsView): void {
  if (!view.tripdist) {
    body.textContent = "loading";
    return;
  }
  const shared = matrixMax(view.tripdist.real, view.tripdist.synthetic);
  renderSideBySide(
    body,
    renderHeatmap(view.tripdist.real, shared, "real"),
    renderHeatmap(view.tripdist.synthetic, shared, "synthetic"),
  );
}

function renderDistances(body: HTMLElement, view: ResultsView): void {
  if (!view.distances) {
    body.textContent = "loading";
    return;
  }
  const shared = Math.max(...view.distances.real, ...view.distances.synthetic, 0);
  renderSideBySide(
    body,
    renderHistogram(view.distances.real, shared, "real"),
    renderHistogram(view.distances.synthetic, shared, "synthetic"),
  );
}

function renderDownload(body: HTMLElement, view: ResultsView): void {
  body.innerHTML = `
    <p>The synthetic dataset is served in the same flat trace format as the upload.</p>
    <a data-role="download-link" href="${view.downloadUrl()}" download>Download synthetic dataset</a>
  `;
}
