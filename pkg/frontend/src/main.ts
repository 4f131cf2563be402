/**
 * Single-page app shell: input wizard, live optimization view, results tabs.
 */

import { ApiClient } from "./api.js";
import { LiveView, renderLive } from "./live.js";
import { renderResults, ResultsView, TABS, type TabName } from "./results.js";
import { DEFAULT_FIELDS, METRICS, WizardState, type WizardFields } from "./wizard.js";

export class App {
  wizard = new WizardState();
  live: LiveView | null = null;
  results: ResultsView | null = null;
  jobId: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    readonly api: ApiClient,
  ) {}

  start(): void {
    this.renderWizard();
  }

  // --- input phase --------------------------------------------------------

  renderWizard(): void {
    const w = this.wizard;
    const errors = w
      .validate()
      .map((e) => `<li class="field-error">${e}</li>`)
      .join("");
    let stepBody = "";
    if (w.step === "upload") {
      const status =
        w.datasetId === null
          ? `<progress data-role="upload-progress" max="1" value="${w.uploadProgress}"></progress>`
          : `<p data-role="upload-done">Uploaded dataset ${w.datasetId} with ${w.cardinality} traces.</p>`;
      stepBody = `
        <h2>Upload dataset</h2>
        <p>Flat text format, one trace per line: <code>x,y;x,y;...</code></p>
        <input type="file" data-role="file-input" />
        ${status}
      `;
    } else if (w.step === "pipeline-params") {
      stepBody = `
        <h2>Pipeline parameters</h2>
        ${numberField("epsilon", "Privacy budget", w.fields.epsilon, "any")}
        ${selectField("metric", "Error metric to minimize", w.fields.metric)}
        ${numberField("grid_n", "Top-level grid cell count", w.fields.grid_n)}
        ${numberField("trials", "Trials per evaluation", w.fields.trials)}
      `;
    } else {
      stepBody = `
        <h2>Optimization parameters</h2>
        ${numberField("explorations", "Random explorations", w.fields.explorations)}
        ${numberField("iterations", "Guided iterations", w.fields.iterations)}
        ${numberField("seed", "Random seed", w.fields.seed)}
      `;
    }
    const submitLabel = w.step === "optimization-params" ? "Start optimization" : "Next";
    this.root.innerHTML = `
      <section class="wizard" data-step="${w.step}">
        ${stepBody}
        <ul class="errors" data-role="errors">${errors}</ul>
        <div class="nav">
          <button data-role="back" ${w.step === "upload" ? "disabled" : ""}>Back</button>
          <button data-role="next">${submitLabel}</button>
        </div>
      </section>
    `;
    this.bindWizardHandlers();
  }

  private bindWizardHandlers(): void {
    const fileInput = this.root.querySelector<HTMLInputElement>("[data-role=file-input]");
    fileInput?.addEventListener("change", () => {
      const file = fileInput.files?.[0];
      if (file) {
        void file.text().then((content) => this.submitUpload(content));
      }
    });
    for (const key of Object.keys(DEFAULT_FIELDS) as (keyof WizardFields)[]) {
      const input = this.root.querySelector<HTMLInputElement | HTMLSelectElement>(
        `[name=${key}]`,
      );
      input?.addEventListener("change", () => {
        const raw = input.value;
        if (key === "metric") {
          this.wizard.fields.metric = raw;
        } else {
          this.wizard.fields[key] = Number(raw);
        }
        this.renderWizard();
      });
    }
    this.root
      .querySelector("[data-role=back]")
      ?.addEventListener("click", () => {
        this.wizard.back();
        this.renderWizard();
      });
    this.root.querySelector("[data-role=next]")?.addEventListener("click", () => {
      void this.advance();
    });
  }

  async submitUpload(content: string): Promise<void> {
    const result = await this.api.uploadDataset(content, (fraction) => {
      this.wizard.uploadProgress = fraction;
      const bar = this.root.querySelector<HTMLProgressElement>("[data-role=upload-progress]");
      if (bar) {
        bar.value = fraction;
      }
    });
    this.wizard.recordUpload(result.dataset_id, result.cardinality);
    this.renderWizard();
  }

  async advance(): Promise<void> {
    const wasLastStep = this.wizard.step === "optimization-params";
    if (!this.wizard.advance()) {
      this.renderWizard();
      return;
    }
    if (wasLastStep && this.wizard.phase === "optimization") {
      try {
        await this.submitJob();
      } catch (error) {
        this.root.innerHTML = `<div class="banner error">job submission failed: ${String(error)}</div>`;
      }
      return;
    }
    this.renderWizard();
  }

  // --- optimization phase ---------------------------------------------------

  async submitJob(): Promise<void> {
    const spec = this.wizard.toJobSpec();
    this.jobId = await this.api.createJob(spec);
    this.live = new LiveView(spec.explorations + spec.iterations);
    this.renderLivePhase();
    await this.api.streamEvents(this.jobId, (event) => {
      this.live?.apply(event);
      this.renderLivePhase();
    });
  }

  renderLivePhase(): void {
    if (!this.live) {
      return;
    }
    this.root.innerHTML = `<section class="live" data-phase="optimization"></section>`;
    const section = this.root.querySelector<HTMLElement>("section.live");
    if (section) {
      renderLive(section, this.live);
      section
        .querySelector("[data-role=go-to-results]")
        ?.addEventListener("click", () => void this.openResults());
    }
  }

  // --- results phase ---------------------------------------------------------

  async openResults(): Promise<void> {
    if (this.jobId === null) {
      return;
    }
    this.wizard.phase = "results";
    this.results = new ResultsView(this.api, this.jobId);
    await this.results.load();
    this.renderResultsPhase();
  }

  renderResultsPhase(): void {
    if (!this.results) {
      return;
    }
    this.root.innerHTML = `<section class="results" data-phase="results"></section>`;
    const section = this.root.querySelector<HTMLElement>("section.results");
    if (!section) {
      return;
    }
    renderResults(section, this.results);
    section.querySelectorAll<HTMLButtonElement>("[data-tab]").forEach((button) => {
      button.addEventListener("click", () => {
        const tab = button.dataset.tab as TabName;
        if (this.results && TABS.includes(tab)) {
          this.results.activeTab = tab;
          this.renderResultsPhase();
        }
      });
    });
  }
}

function numberField(name: string, label: string, value: number, step = "1"): string {
  return `
    <label class="field">
      <span>${label}</span>
      <input type="number" name="${name}" value="${value}" step="${step}" />
    </label>
  `;
}

function selectField(name: string, label: string, value: string): string {
  const options = METRICS.map(
    (m) => `<option value="${m}" ${m === value ? "selected" : ""}>${m}</option>`,
  ).join("");
  return `
    <label class="field">
      <span>${label}</span>
      <select name="${name}">${options}</select>
    </label>
  `;
}

declare global {
  interface Window {
    tracesmithApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = new App(document.getElementById("app") as HTMLElement, new ApiClient(""));
  window.tracesmithApp = app;
  app.start();
}
