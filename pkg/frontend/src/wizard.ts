/**
 * Input-phase state machine: upload, pipeline parameters, optimization
 * parameters. Forward navigation requires the current step to validate, and
 * the client mirrors the service's bounds so a submitted spec is never
 * rejected for validation.
 */

import type { JobSpec } from "./api.js";

export type Phase = "input" | "optimization" | "results";
export type InputStep = "upload" | "pipeline-params" | "optimization-params";

export const METRICS = ["distance", "pattern", "query", "trip"] as const;

export interface WizardFields {
  epsilon: number;
  metric: string;
  grid_n: number;
  trials: number;
  explorations: number;
  iterations: number;
  seed: number;
}

export const DEFAULT_FIELDS: WizardFields = {
  epsilon: 1.0,
  metric: "query",
  grid_n: 4,
  trials: 3,
  explorations: 100,
  iterations: 100,
  seed: 0,
};

export class WizardState {
  phase: Phase = "input";
  step: InputStep = "upload";
  fields: WizardFields = { ...DEFAULT_FIELDS };
  datasetId: string | null = null;
  cardinality: number | null = null;
  uploadProgress = 0;

  /** Bounds mirror the service-side spec validation. */
  validate(step: InputStep = this.step): string[] {
    const errors: string[] = [];
    if (step === "upload") {
      if (this.datasetId === null) {
        errors.push("upload a dataset first");
      }
    } else if (step === "pipeline-params") {
      const f = this.fields;
      if (!(f.epsilon > 0)) {
        errors.push("epsilon must be greater than 0");
      }
      if (!METRICS.includes(f.metric as (typeof METRICS)[number])) {
        errors.push(`metric must be one of ${METRICS.join(", ")}`);
      }
      if (!(Number.isInteger(f.grid_n) && f.grid_n >= 1)) {
        errors.push("grid cell count must be an integer >= 1");
      }
      if (!(Number.isInteger(f.trials) && f.trials >= 1)) {
        errors.push("trials must be an integer >= 1");
      }
    } else {
      const f = this.fields;
      if (!(Number.isInteger(f.explorations) && f.explorations >= 2)) {
        errors.push("explorations must be an integer >= 2");
      }
      if (!(Number.isInteger(f.iterations) && f.iterations >= 0)) {
        errors.push("iterations must be an integer >= 0");
      }
      if (!Number.isInteger(f.seed)) {
        errors.push("seed must be an integer");
      }
    }
    return errors;
  }

  canAdvance(): boolean {
    return this.validate().length === 0;
  }

  /** Move forward one step; returns false (and stays put) if invalid. */
  advance(): boolean {
    if (!this.canAdvance()) {
      return false;
    }
    if (this.step === "upload") {
      this.step = "pipeline-params";
    } else if (this.step === "pipeline-params") {
      this.step = "optimization-params";
    } else {
      this.phase = "optimization";
    }
    return true;
  }

  back(): void {
    if (this.step === "optimization-params") {
      this.step = "pipeline-params";
    } else if (this.step === "pipeline-params") {
      this.step = "upload";
    }
  }

  recordUpload(datasetId: string, cardinality: number): void {
    this.datasetId = datasetId;
    this.cardinality = cardinality;
    this.uploadProgress = 1;
  }

  /** The spec the service will receive; only valid once every step passes. */
  toJobSpec(): JobSpec {
    const all = (["upload", "pipeline-params", "optimization-params"] as InputStep[])
      .flatMap((step) => this.validate(step));
    if (all.length > 0 || this.datasetId === null) {
      throw new Error(`spec is not submittable: ${all.join("; ")}`);
    }
    return { dataset_id: this.datasetId, ...this.fields };
  }
}
