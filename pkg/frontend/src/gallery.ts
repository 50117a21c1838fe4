import type { SampleFilters, SampleInfo } from "./types.js";

/**
 * Client-side mirror of the server's listing filters, used both to render
 * tiles and to double-check that what the server returned is consistent with
 * the active filters (a mismatch means the UI state is stale).
 */
export function matchesFilters(s: SampleInfo, f: SampleFilters): boolean {
  if (f.outcome !== undefined && s.outcome !== f.outcome) return false;
  if (
    f.classIndex !== undefined &&
    !s.targets.includes(f.classIndex) &&
    !s.prediction_set.includes(f.classIndex)
  )
    return false;
  return true;
}

export function filterSamples(
  samples: SampleInfo[],
  f: SampleFilters,
): SampleInfo[] {
  return samples.filter((s) => matchesFilters(s, f));
}

const OUTCOME_BADGE: Record<string, string> = {
  correct: "badge-correct",
  incorrect: "badge-incorrect",
  mixed: "badge-mixed",
};

function esc(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function tileHtml(s: SampleInfo, classes: string[]): string {
  const top = classes[s.top_class] ?? String(s.top_class);
  const targets = s.targets
    .map((t) => esc(classes[t] ?? String(t)))
    .join(", ");
  return (
    `<button class="tile" data-sample="${esc(s.sample_id)}">` +
    `<span class="${OUTCOME_BADGE[s.outcome] ?? ""}">${esc(s.outcome)}</span>` +
    `<span class="tile-id">${esc(s.sample_id)}</span>` +
    `<span class="tile-top">predicted: ${esc(top)}</span>` +
    `<span class="tile-targets">labels: ${targets}</span>` +
    `</button>`
  );
}

export function galleryHtml(
  samples: SampleInfo[],
  classes: string[],
  f: SampleFilters,
): string {
  const visible = filterSamples(samples, f);
  if (visible.length === 0) return `<p class="empty">no samples match</p>`;
  return visible.map((s) => tileHtml(s, classes)).join("\n");
}
