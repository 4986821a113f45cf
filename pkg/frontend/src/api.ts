// Typed client for the review service HTTP API. The UI never computes
// recognition results; everything rendered comes from these payloads.

export type JobState = "recognized" | "needs_review" | "resolved";

export interface JobSummary {
  job_id: string;
  state: JobState;
  flag_count: number;
  kind_id: string | null;
  error: string | null;
}

export interface Question {
  question_index: number;
  marks: string[];
  canceled: boolean;
  flagged: boolean;
  flag_reason: string | null;
  square_boxes: (number[] | null)[];
}

export interface BarcodeEntry {
  value?: number;
  error?: string;
  strips?: (number | string)[];
}

export interface Report {
  schema: number;
  kind_id: string;
  origin: { x: number; y: number };
  skew_applied: number;
  questions: Question[];
  answer_matrix: number[][];
  barcodes: BarcodeEntry[];
  flagged_questions: number[];
}

export interface CorrectionEntry {
  question_index: number;
  chosen: number | null;
  canceled: boolean;
  author: string;
  timestamp: string;
}

export interface JobDetail extends JobSummary {
  report: Report | null;
  corrections: CorrectionEntry[];
  final_answers: number[][] | null;
}

export interface PatchBody {
  chosen: number | null;
  canceled: boolean;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    private readonly base: string = "",
  ) {}

  listJobs(): Promise<JobSummary[]> {
    return this.request("GET", "/api/jobs");
  }

  getJob(jobId: string): Promise<JobDetail> {
    return this.request("GET", `/api/jobs/${jobId}`);
  }

  patchQuestion(jobId: string, questionIndex: number, body: PatchBody): Promise<JobDetail> {
    return this.request("PATCH", `/api/jobs/${jobId}/questions/${questionIndex}`, body);
  }

  resolve(jobId: string): Promise<JobDetail> {
    return this.request("POST", `/api/jobs/${jobId}/resolve`);
  }

  imageUrl(jobId: string): string {
    return `${this.base}/api/jobs/${jobId}/image.png`;
  }

  overlayUrl(jobId: string): string {
    return `${this.base}/api/jobs/${jobId}/overlay.png`;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let message = `HTTP ${resp.status}`;
      try {
        const doc = await resp.json();
        if (doc && typeof doc.error === "string") message = doc.error;
      } catch {
        // non-JSON error body; keep the status message
      }
      throw new ApiError(resp.status, message);
    }
    return (await resp.json()) as T;
  }
}
