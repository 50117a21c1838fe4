import type { ApiClient } from "./api.js";
import { pollUntilSettled, type PollOptions } from "./polling.js";
import type {
  ExplanationJob,
  Outcome,
  SampleFilters,
  SampleInfo,
} from "./types.js";

export interface WorkbenchState {
  classes: string[];
  filters: SampleFilters;
  samples: SampleInfo[];
  total: number;
  page: number;
  selectedSample: string | null;
  selectedClass: number | null;
  job: ExplanationJob | null;
  error: string | null;
}

type Listener = (state: WorkbenchState) => void;

/**
 * Single source of truth for the workbench. Explanation requests are tagged
 * with a monotonically increasing token; whenever a response comes back for
 * anything but the newest request (the user has clicked elsewhere meanwhile),
 * it is discarded instead of clobbering the detail pane.
 */
export class WorkbenchStore {
  private state: WorkbenchState = {
    classes: [],
    filters: {},
    samples: [],
    total: 0,
    page: 0,
    selectedSample: null,
    selectedClass: null,
    job: null,
    error: null,
  };
  private listeners: Listener[] = [];
  private requestToken = 0;

  constructor(
    private readonly api: ApiClient,
    private readonly pollOpts: PollOptions = {},
  ) {}

  getState(): WorkbenchState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private set(patch: Partial<WorkbenchState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  async loadClasses(): Promise<void> {
    this.set({ classes: await this.api.classes() });
  }

  async loadSamples(page = 0): Promise<void> {
    const res = await this.api.samples(this.state.filters, page);
    this.set({ samples: res.items, total: res.total, page: res.page });
  }

  async setOutcomeFilter(outcome?: Outcome): Promise<void> {
    this.set({ filters: { ...this.state.filters, outcome } });
    await this.loadSamples(0);
  }

  async setClassFilter(classIndex?: number): Promise<void> {
    this.set({ filters: { ...this.state.filters, classIndex } });
    await this.loadSamples(0);
  }

  /** Open a sample in the detail pane and request its explanation. */
  async selectSample(sampleId: string, classIndex?: number): Promise<void> {
    this.set({
      selectedSample: sampleId,
      selectedClass: classIndex ?? null,
      job: null,
      error: null,
    });
    await this.requestExplanation();
  }

  /** Re-explain the selected sample for a different target class. */
  async selectClass(classIndex: number): Promise<void> {
    if (this.state.selectedSample === null) return;
    this.set({ selectedClass: classIndex, job: null, error: null });
    await this.requestExplanation();
  }

  private async requestExplanation(): Promise<void> {
    const sampleId = this.state.selectedSample;
    if (sampleId === null) return;
    const token = ++this.requestToken;
    try {
      let job = await this.api.requestExplanation(
        sampleId,
        this.state.selectedClass ?? undefined,
      );
      if (job.status === "running") {
        job = await pollUntilSettled(
          (id) => this.api.getExplanation(id),
          job.id,
          this.pollOpts,
        );
      }
      if (token !== this.requestToken) return; // superseded; drop it
      if (job.status === "failed") {
        this.set({ job: null, error: job.error ?? "explanation failed" });
      } else {
        this.set({ job, error: null });
      }
    } catch (err) {
      if (token !== this.requestToken) return;
      this.set({ job: null, error: err instanceof Error ? err.message : String(err) });
    }
  }
}
