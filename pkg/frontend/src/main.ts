import { ApiClient } from "./api.js";
import {
  grayFromImageData,
  recomposite,
  rgbaBytes,
  rgbFromImageData,
} from "./compositor.js";
import { galleryHtml } from "./gallery.js";
import { WorkbenchStore, type WorkbenchState } from "./store.js";

const api = new ApiClient("");
const store = new WorkbenchStore(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function decodeAsset(url: string): Promise<ImageData> {
  const img = new Image();
  img.src = url;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const g = canvas.getContext("2d");
  if (!g) throw new Error("2d canvas unavailable");
  g.drawImage(img, 0, 0);
  return g.getImageData(0, 0, canvas.width, canvas.height);
}

async function drawDetail(state: WorkbenchState): Promise<void> {
  const job = state.job;
  const pane = el<HTMLDivElement>("detail");
  if (state.error) {
    pane.innerHTML = `<p class="error"></p>`;
    pane.querySelector("p")!.textContent = state.error;
    return;
  }
  if (!job) {
    pane.innerHTML = state.selectedSample
      ? `<p class="busy">explaining…</p>`
      : `<p class="empty">select a sample</p>`;
    return;
  }
  el<HTMLImageElement>("img-input").src = api.assetUrl(job.asset_urls.input);
  el<HTMLImageElement>("img-saliency").src = api.assetUrl(job.asset_urls.saliency);
  el<HTMLImageElement>("img-pv").src = api.assetUrl(job.asset_urls.pv);

  const [mask, recon] = await Promise.all([
    decodeAsset(api.assetUrl(job.asset_urls.saliency)),
    decodeAsset(api.assetUrl(job.asset_urls.reconstruction)),
  ]);
  const gamma = Number(el<HTMLInputElement>("gamma").value);
  const blended = recomposite(
    grayFromImageData(mask),
    rgbFromImageData(recon),
    gamma,
  );
  const canvas = el<HTMLCanvasElement>("recomposite");
  canvas.width = blended.width;
  canvas.height = blended.height;
  const frame = new ImageData(blended.width, blended.height);
  frame.data.set(rgbaBytes(blended));
  canvas.getContext("2d")!.putImageData(frame, 0, 0);
}

function render(state: WorkbenchState): void {
  el<HTMLDivElement>("gallery").innerHTML = galleryHtml(
    state.samples,
    state.classes,
    state.filters,
  );
  const select = el<HTMLSelectElement>("class-select");
  if (select.options.length === 0 && state.classes.length > 0) {
    select.innerHTML =
      `<option value="">top prediction</option>` +
      state.classes.map((c, i) => `<option value="${i}">${c}</option>`).join("");
  }
  void drawDetail(state);
}

function wireEvents(): void {
  el<HTMLSelectElement>("outcome-select").addEventListener("change", (e) => {
    const v = (e.target as HTMLSelectElement).value;
    void store.setOutcomeFilter(
      v === "" ? undefined : (v as "correct" | "incorrect" | "mixed"),
    );
  });
  el<HTMLSelectElement>("class-filter").addEventListener("change", (e) => {
    const v = (e.target as HTMLSelectElement).value;
    void store.setClassFilter(v === "" ? undefined : Number(v));
  });
  el<HTMLSelectElement>("class-select").addEventListener("change", (e) => {
    const v = (e.target as HTMLSelectElement).value;
    if (v !== "") void store.selectClass(Number(v));
  });
  el<HTMLInputElement>("gamma").addEventListener("input", () => {
    void drawDetail(store.getState());
  });
  el<HTMLDivElement>("gallery").addEventListener("click", (e) => {
    const tile = (e.target as HTMLElement).closest<HTMLElement>("[data-sample]");
    if (tile?.dataset.sample) void store.selectSample(tile.dataset.sample);
  });
}

async function start(): Promise<void> {
  store.subscribe(render);
  wireEvents();
  await store.loadClasses();
  const filter = el<HTMLSelectElement>("class-filter");
  filter.innerHTML =
    `<option value="">all classes</option>` +
    store
      .getState()
      .classes.map((c, i) => `<option value="${i}">${c}</option>`)
      .join("");
  await store.loadSamples();
}

void start();
