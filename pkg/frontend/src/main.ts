/**
 * Interactive volume explorer: arcball drag, transfer-function sliders,
 * frame-budget controller toggle, and live prediction/timing charts.
 */
import { ApiClient, RenderResponse } from "./api.js";
import { dragToPose, wheelToPose } from "./arcball.js";
import { Coalescer } from "./coalesce.js";
import { drawChart, drawOpacityCurve } from "./charts.js";
import { initialState, UiState } from "./state.js";
import { clampLobe, lobesToKappa, opacityCurve } from "./tf.js";

const api = new ApiClient("");
const state: UiState = initialState();

const el = {
  canvas: document.getElementById("view") as HTMLCanvasElement,
  volumeSelect: document.getElementById("volume") as HTMLSelectElement,
  resolutionSelect: document.getElementById("resolution") as HTMLSelectElement,
  controllerToggle: document.getElementById("controller") as HTMLInputElement,
  targetMs: document.getElementById("target-ms") as HTMLInputElement,
  fps: document.getElementById("fps") as HTMLSpanElement,
  status: document.getElementById("status") as HTMLSpanElement,
  timing: document.getElementById("timing-chart") as HTMLCanvasElement,
  deltas: document.getElementById("delta-chart") as HTMLCanvasElement,
  tfCanvas: document.getElementById("tf-curve") as HTMLCanvasElement,
  lobes: document.getElementById("lobes") as HTMLDivElement,
};

const viewCtx = el.canvas.getContext("2d")!;

function renderRequestBody() {
  return {
    volume_id: state.volumeId!,
    pose: state.pose,
    kappa: lobesToKappa(state.lobes),
    img: state.resolution,
    controller: state.controller.enabled
      ? { enabled: true, target_ms: state.controller.target_ms }
      : undefined,
  };
}

const renderer = new Coalescer<ReturnType<typeof renderRequestBody>, RenderResponse>(
  (body) => api.render(body),
  (res) => {
    const img = new Image();
    img.onload = () => {
      el.canvas.width = img.width;
      el.canvas.height = img.height;
      viewCtx.drawImage(img, 0, 0);
    };
    img.src = `data:image/png;base64,${res.frame_png_b64}`;
    state.history.push({
      predicted_ms: res.predicted_ms,
      actual_ms: res.stats.wall_ms,
      delta_used: res.delta_used,
    });
    updatePanels();
    el.status.textContent = `δ=${res.delta_used.toFixed(2)} wall=${res.stats.wall_ms.toFixed(1)}ms`;
  },
  (err) => {
    el.status.textContent = String(err);
  },
);

function requestFrame(): void {
  if (state.volumeId) renderer.request(renderRequestBody());
}

function updatePanels(): void {
  const records = state.history.records;
  drawChart(
    el.timing,
    [
      { label: "actual ms", color: "#6cf", values: records.map((r) => r.actual_ms) },
      { label: "predicted", color: "#fc6", values: records.map((r) => r.predicted_ms) },
    ],
    { hline: state.controller.enabled ? state.controller.target_ms : null, yLabel: "ms" },
  );
  drawChart(
    el.deltas,
    [{ label: "δ used", color: "#9f9", values: records.map((r) => r.delta_used) }],
    { yLabel: "step" },
  );
  const fps = state.history.fps();
  el.fps.textContent = fps === null ? "—" : `${fps.toFixed(1)} FPS`;
}

function updateTfPreview(): void {
  drawOpacityCurve(el.tfCanvas, opacityCurve(state.lobes, 128));
}

function buildLobeSliders(): void {
  el.lobes.innerHTML = "";
  state.lobes.forEach((lobe, i) => {
    const row = document.createElement("div");
    row.className = "lobe-row";
    row.appendChild(document.createTextNode(`lobe ${i + 1}`));
    const fields: [keyof typeof lobe, number, number, number][] = [
      ["center", 0, 1, 0.01],
      ["width", 0.005, 0.3, 0.005],
      ["height", 0, 1, 0.01],
    ];
    for (const [key, min, max, step] of fields) {
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(min);
      slider.max = String(max);
      slider.step = String(step);
      slider.value = String(lobe[key]);
      slider.title = key;
      slider.addEventListener("input", () => {
        state.lobes[i] = clampLobe({ ...state.lobes[i], [key]: Number(slider.value) });
        updateTfPreview();
        requestFrame();
      });
      row.appendChild(slider);
    }
    el.lobes.appendChild(row);
  });
}

function wireCamera(): void {
  let dragging = false;
  let last: [number, number] | null = null;
  el.canvas.addEventListener("pointerdown", (e) => {
    dragging = true;
    last = [e.clientX, e.clientY];
    el.canvas.setPointerCapture(e.pointerId);
  });
  el.canvas.addEventListener("pointermove", (e) => {
    if (!dragging || !last) return;
    const rect = el.canvas.getBoundingClientRect();
    state.pose = dragToPose(
      state.pose,
      e.clientX - last[0],
      e.clientY - last[1],
      rect.width,
      rect.height,
    );
    last = [e.clientX, e.clientY];
    requestFrame();
  });
  el.canvas.addEventListener("pointerup", () => {
    dragging = false;
    last = null;
  });
  el.canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    state.pose = wheelToPose(state.pose, e.deltaY);
    requestFrame();
  });
}

async function boot(): Promise<void> {
  el.status.textContent = "loading volumes…";
  const volumes = await api.volumes();
  el.volumeSelect.innerHTML = "";
  for (const v of volumes) {
    const opt = document.createElement("option");
    opt.value = v.id;
    opt.textContent = `${v.id} (${v.dims.join("×")})`;
    el.volumeSelect.appendChild(opt);
  }
  state.volumeId = volumes[0]?.id ?? null;
  el.volumeSelect.addEventListener("change", () => {
    state.volumeId = el.volumeSelect.value;
    requestFrame();
  });
  el.resolutionSelect.addEventListener("change", () => {
    const [w, h] = el.resolutionSelect.value.split("x").map(Number);
    state.resolution = [w, h];
    requestFrame();
  });
  el.controllerToggle.addEventListener("change", () => {
    state.controller.enabled = el.controllerToggle.checked;
    requestFrame();
  });
  el.targetMs.addEventListener("change", () => {
    state.controller.target_ms = Number(el.targetMs.value) || 25;
    requestFrame();
  });
  try {
    const model = await api.model();
    el.status.textContent = `model ${model.descriptor}`;
  } catch {
    el.status.textContent = "no model loaded (render-only mode)";
  }
  buildLobeSliders();
  updateTfPreview();
  wireCamera();
  requestFrame();
}

void boot();
