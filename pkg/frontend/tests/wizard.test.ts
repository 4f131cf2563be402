import { describe, expect, it } from "vitest";

import { WizardState } from "../src/wizard.js";

function uploaded(): WizardState {
  const wizard = new WizardState();
  wizard.recordUpload("dabc", 100);
  return wizard;
}

describe("WizardState", () => {
  it("starts at the upload step and blocks until a dataset exists", () => {
    const wizard = new WizardState();
    expect(wizard.phase).toBe("input");
    expect(wizard.step).toBe("upload");
    expect(wizard.canAdvance()).toBe(false);
    expect(wizard.advance()).toBe(false);
    expect(wizard.step).toBe("upload");
  });

  it("walks forward through the three steps into the optimization phase", () => {
    const wizard = uploaded();
    expect(wizard.advance()).toBe(true);
    expect(wizard.step).toBe("pipeline-params");
    expect(wizard.advance()).toBe(true);
    expect(wizard.step).toBe("optimization-params");
    expect(wizard.advance()).toBe(true);
    expect(wizard.phase).toBe("optimization");
  });

  it("rejects a non-positive epsilon with an inline message", () => {
    const wizard = uploaded();
    wizard.advance();
    wizard.fields.epsilon = -1;
    const errors = wizard.validate();
    expect(errors.some((e) => e.includes("epsilon"))).toBe(true);
    expect(wizard.advance()).toBe(false);
    expect(wizard.step).toBe("pipeline-params");
  });

  it("mirrors the service bounds", () => {
    const wizard = uploaded();
    wizard.advance();
    wizard.fields.grid_n = 0;
    wizard.fields.trials = 0;
    expect(wizard.validate()).toHaveLength(2);
    wizard.fields.grid_n = 4;
    wizard.fields.trials = 1;
    wizard.advance();
    wizard.fields.explorations = 1;
    wizard.fields.iterations = -1;
    expect(wizard.validate()).toHaveLength(2);
  });

  it("rejects unknown metrics", () => {
    const wizard = uploaded();
    wizard.advance();
    wizard.fields.metric = "bogus";
    expect(wizard.validate().some((e) => e.includes("metric"))).toBe(true);
  });

  it("builds the exact spec the service receives", () => {
    const wizard = uploaded();
    wizard.fields.epsilon = 2.0;
    wizard.fields.metric = "trip";
    expect(wizard.toJobSpec()).toEqual({
      dataset_id: "dabc",
      epsilon: 2.0,
      metric: "trip",
      grid_n: 4,
      trials: 3,
      explorations: 100,
      iterations: 100,
      seed: 0,
    });
  });

  it("refuses to build a spec that would be rejected", () => {
    const wizard = uploaded();
    wizard.fields.epsilon = 0;
    expect(() => wizard.toJobSpec()).toThrow(/epsilon/);
  });

  it("allows navigating back without losing fields", () => {
    const wizard = uploaded();
    wizard.advance();
    wizard.fields.epsilon = 0.5;
    wizard.advance();
    wizard.back();
    expect(wizard.step).toBe("pipeline-params");
    expect(wizard.fields.epsilon).toBe(0.5);
  });
});
