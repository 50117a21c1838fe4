import type { ExplanationJob, SampleFilters, SamplePage } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function unwrap<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body; keep the status text */
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async classes(): Promise<string[]> {
    return unwrap(await this.fetchFn(`${this.base}/api/classes`));
  }

  async samples(
    filters: SampleFilters = {},
    page = 0,
    pageSize = 24,
  ): Promise<SamplePage> {
    const params = new URLSearchParams({
      page: String(page),
      page_size: String(pageSize),
    });
    if (filters.outcome !== undefined) params.set("outcome", filters.outcome);
    if (filters.classIndex !== undefined)
      params.set("class", String(filters.classIndex));
    return unwrap(await this.fetchFn(`${this.base}/api/samples?${params}`));
  }

  async requestExplanation(
    sampleId: string,
    classIndex?: number,
  ): Promise<ExplanationJob> {
    const body: Record<string, unknown> = { sample_id: sampleId };
    if (classIndex !== undefined) body.class_index = classIndex;
    return unwrap(
      await this.fetchFn(`${this.base}/api/explanations`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  async getExplanation(jobId: string): Promise<ExplanationJob> {
    return unwrap(await this.fetchFn(`${this.base}/api/explanations/${jobId}`));
  }

  assetUrl(path: string): string {
    return `${this.base}${path}`;
  }
}
