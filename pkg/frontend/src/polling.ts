import type { ExplanationJob } from "./types.js";

export interface PollOptions {
  /** first retry delay in milliseconds */
  baseDelayMs?: number;
  /** multiplier applied after every attempt */
  factor?: number;
  /** delay ceiling */
  maxDelayMs?: number;
  /** give up after this many polls */
  maxAttempts?: number;
  /** injectable for tests */
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Poll a job until it leaves the "running" state, backing off exponentially.
 * Resolves with the finished job (done or failed); the caller decides what a
 * failed job means for the UI.
 */
export async function pollUntilSettled(
  fetchJob: (jobId: string) => Promise<ExplanationJob>,
  jobId: string,
  opts: PollOptions = {},
): Promise<ExplanationJob> {
  const base = opts.baseDelayMs ?? 250;
  const factor = opts.factor ?? 2;
  const cap = opts.maxDelayMs ?? 4000;
  const maxAttempts = opts.maxAttempts ?? 20;
  const sleep = opts.sleep ?? defaultSleep;

  let delay = base;
  for (let attempt = 0; attempt < maxAttempts; attempt++) {
    const job = await fetchJob(jobId);
    if (job.status !== "running") return job;
    await sleep(delay);
    delay = Math.min(delay * factor, cap);
  }
  throw new Error(`job ${jobId} still running after ${maxAttempts} polls`);
}
