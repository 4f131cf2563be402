/**
 * Live optimization view: append-only observation rows keyed by iteration,
 * so replays after a reconnect never duplicate. Progress is rows over the
 * scheduled total.
 */

import type { JobEvent, ObservationEvent, TerminalEvent } from "./api.js";

export class LiveView {
  private rows = new Map<number, ObservationEvent>();
  terminal: TerminalEvent | null = null;
  total: number;

  constructor(total: number) {
    this.total = total;
  }

  apply(event: JobEvent): void {
    if (event.type === "observation") {
      this.rows.set(event.iteration, event);
      if (event.total > 0) {
        this.total = event.total;
      }
    } else {
      this.terminal = event;
    }
  }

  get rowCount(): number {
    return this.rows.size;
  }

  get ordered(): ObservationEvent[] {
    return [...this.rows.values()].sort((a, b) => a.iteration - b.iteration);
  }

  get progress(): number {
    return this.total > 0 ? this.rows.size / this.total : 0;
  }

  get finished(): boolean {
    return this.terminal !== null;
  }

  get failed(): boolean {
    return this.terminal?.type === "failed";
  }
}

export function renderLive(container: HTMLElement, view: LiveView): void {
  const percent = Math.round(view.progress * 100);
  const rows = view.ordered
    .map(
      (row) => `
      <tr data-iteration="${row.iteration}">
        <td>${row.iteration}</td>
        <td>${row.phase}</td>
        <td>${row.weights.map((w) => w.toFixed(4)).join(", ")}</td>
        <td>${row.error.toFixed(6)}</td>
      </tr>`,
    )
    .join("");

  const banner = view.failed
    ? `<div class="banner error" data-role="failure-banner">Optimization failed: ${view.terminal?.error ?? "unknown error"}</div>`
    : "";
  const resultsButton =
    view.finished && !view.failed
      ? `<button data-role="go-to-results">View results</button>`
      : "";

  container.innerHTML = `
    ${banner}
    <div class="progress" data-role="progress" data-progress="${view.progress.toFixed(4)}">
      <div class="progress-fill" style="width: ${percent}%"></div>
      <span>${view.rowCount} / ${view.total} observations</span>
    </div>
    <table class="live-table" data-role="live-rows">
      <thead><tr><th>#</th><th>phase</th><th>weights</th><th>error</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    ${resultsButton}
  `;
}
