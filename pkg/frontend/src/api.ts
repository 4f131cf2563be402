/**
 * REST + server-sent-event client for the synthesis service.
 *
 * Every number the UI shows comes through this module; the views never
 * compute statistics themselves.
 */

export interface BBox {
  min_x: number;
  min_y: number;
  max_x: number;
  max_y: number;
}

export interface UploadResult {
  dataset_id: string;
  cardinality: number;
  bbox: BBox;
}

export interface JobSpec {
  dataset_id: string;
  epsilon: number;
  metric: string;
  grid_n: number;
  trials: number;
  explorations: number;
  iterations: number;
  seed: number;
}

export interface ObservationEvent {
  type: "observation";
  iteration: number;
  phase: "exploration" | "optimization";
  weights: number[];
  error: number;
  trial_errors: number[];
  completed: number;
  total: number;
}

export interface TerminalEvent {
  type: "done" | "failed";
  job_id?: string;
  error?: string;
}

export type JobEvent = ObservationEvent | TerminalEvent;

export interface JobStatus {
  id: string;
  state: string;
  progress: { completed: number; total: number };
  latest: ObservationEvent | null;
  error: string | null;
}

export interface MetricReport {
  query_error: number;
  pattern_support_error: number;
  trip_error: number;
  travel_distance_error: number;
  custom: Record<string, number>;
}

export interface ResultDocument {
  job_id: string;
  spec: JobSpec;
  best_weights: number[];
  best_error: number;
  metric: string;
  report: MetricReport;
  synthetic: string;
  observations: unknown[];
  failures: number;
  ledger: { entries: { label: string; epsilon: number }[]; total: number; released_epsilon: number };
}

export interface HeatmapStats {
  bins: number;
  real: number[][];
  synthetic: number[][];
}

export interface TripDistStats {
  grid_n: number;
  real: number[][];
  synthetic: number[][];
}

export interface DistanceStats {
  buckets: number;
  bucket_width: number;
  real: number[];
  synthetic: number[];
}

type FetchLike = typeof fetch;

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    const body = await response.text();
    throw new Error(`HTTP ${response.status}: ${body}`);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  /** Upload trace text; reports progress fractions in [0, 1] when available. */
  uploadDataset(content: string, onProgress?: (fraction: number) => void): Promise<UploadResult> {
    const url = `${this.baseUrl}/api/datasets`;
    if (typeof XMLHttpRequest !== "undefined") {
      return new Promise((resolve, reject) => {
        const xhr = new XMLHttpRequest();
        xhr.open("POST", url);
        if (xhr.upload && onProgress) {
          xhr.upload.addEventListener("progress", (event) => {
            if (event.lengthComputable && event.total > 0) {
              onProgress(event.loaded / event.total);
            }
          });
        }
        xhr.addEventListener("load", () => {
          onProgress?.(1);
          if (xhr.status >= 200 && xhr.status < 300) {
            resolve(JSON.parse(xhr.responseText) as UploadResult);
          } else {
            reject(new Error(`HTTP ${xhr.status}: ${xhr.responseText}`));
          }
        });
        xhr.addEventListener("error", () => reject(new Error("upload failed")));
        xhr.send(content);
      });
    }
    return this.fetchImpl(url, { method: "POST", body: content }).then((r) => {
      onProgress?.(1);
      return asJson<UploadResult>(r);
    });
  }

  async createJob(spec: JobSpec): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/jobs`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
    const payload = await asJson<{ job_id: string }>(response);
    return payload.job_id;
  }

  async getStatus(jobId: string): Promise<JobStatus> {
    return asJson(await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}`));
  }

  async getResult(jobId: string): Promise<ResultDocument> {
    return asJson(await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}/result`));
  }

  async getHeatmap(jobId: string, bins = 10): Promise<HeatmapStats> {
    return asJson(
      await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}/stats/heatmap?bins=${bins}`),
    );
  }

  async getTripDist(jobId: string): Promise<TripDistStats> {
    return asJson(await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}/stats/tripdist`));
  }

  async getDistances(jobId: string): Promise<DistanceStats> {
    return asJson(await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}/stats/distances`));
  }

  syntheticUrl(jobId: string): string {
    return `${this.baseUrl}/api/jobs/${jobId}/synthetic`;
  }

  async fetchSynthetic(jobId: string): Promise<string> {
    const response = await this.fetchImpl(this.syntheticUrl(jobId));
    if (!response.ok) {
      throw new Error(`HTTP ${response.status}`);
    }
    return response.text();
  }

  /**
   * Consume the job's event stream; resolves once a terminal event arrives.
   * Stream drops trigger a reconnect that replays the full history, so the
   * handler must tolerate duplicates (rows are keyed by iteration).
   */
  async streamEvents(
    jobId: string,
    onEvent: (event: JobEvent) => void,
    maxReconnects = 5,
  ): Promise<void> {
    let attempt = 0;
    for (;;) {
      try {
        const terminal = await this.consumeStream(jobId, onEvent);
        if (terminal) {
          return;
        }
      } catch (error) {
        if (attempt >= maxReconnects) {
          throw error;
        }
      }
      attempt += 1;
      if (attempt > maxReconnects) {
        throw new Error("event stream ended without a terminal event");
      }
      await new Promise((resolve) => setTimeout(resolve, 250 * attempt));
    }
  }

  private async consumeStream(
    jobId: string,
    onEvent: (event: JobEvent) => void,
  ): Promise<boolean> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}/events`);
    if (!response.ok || response.body === null) {
      throw new Error(`event stream unavailable: HTTP ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done, value } = await reader.read();
      const chunk = decoder.decode(value ?? new Uint8Array(), { stream: !done });
      for (const message of parser.push(chunk)) {
        const event = JSON.parse(message.data) as JobEvent;
        onEvent(event);
        if (event.type === "done" || event.type === "failed") {
          reader.cancel().catch(() => undefined);
          return true;
        }
      }
      if (done) {
        return false;
      }
    }
  }
}

export interface SseMessage {
  event: string;
  data: string;
}

/** Incremental text/event-stream parser; messages are blank-line separated. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const messages: SseMessage[] = [];
    for (;;) {
      const split = this.buffer.indexOf("\n\n");
      if (split < 0) {
        break;
      }
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const message: SseMessage = { event: "message", data: "" };
      const dataLines: string[] = [];
      for (const line of block.split("\n")) {
        if (line.startsWith("event:")) {
          message.event = line.slice("event:".length).trim();
        } else if (line.startsWith("data:")) {
          dataLines.push(line.slice("data:".length).trimStart());
        }
      }
      message.data = dataLines.join("\n");
      if (message.data.length > 0) {
        messages.push(message);
      }
    }
    return messages;
  }
}
