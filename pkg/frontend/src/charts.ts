/** Minimal canvas line charts for the timing panel, no dependencies. */

export interface Series {
  label: string;
  color: string;
  values: (number | null)[];
}

export function drawChart(
  canvas: HTMLCanvasElement,
  series: Series[],
  opts: { yLabel?: string; hline?: number | null } = {},
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#181c22";
  ctx.fillRect(0, 0, w, h);

  const all: number[] = [];
  for (const s of series) {
    for (const v of s.values) if (v !== null && isFinite(v)) all.push(v);
  }
  if (opts.hline != null) all.push(opts.hline);
  if (all.length === 0) {
    ctx.fillStyle = "#667";
    ctx.font = "12px sans-serif";
    ctx.fillText("waiting for frames…", 10, h / 2);
    return;
  }
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const pad = (hi - lo) * 0.1 || 1;
  const yMin = lo - pad;
  const yMax = hi + pad;
  const n = Math.max(...series.map((s) => s.values.length), 2);
  const toX = (i: number) => (i / (n - 1)) * (w - 8) + 4;
  const toY = (v: number) => h - 4 - ((v - yMin) / (yMax - yMin)) * (h - 8);

  if (opts.hline != null) {
    ctx.strokeStyle = "#888";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(0, toY(opts.hline));
    ctx.lineTo(w, toY(opts.hline));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let started = false;
    s.values.forEach((v, i) => {
      if (v === null || !isFinite(v)) return;
      const x = toX(i);
      const y = toY(v);
      if (started) ctx.lineTo(x, y);
      else {
        ctx.moveTo(x, y);
        started = true;
      }
    });
    ctx.stroke();
  }
  // legend
  ctx.font = "11px sans-serif";
  let lx = 8;
  for (const s of series) {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, lx, 14);
    lx += ctx.measureText(s.label).width + 14;
  }
  if (opts.yLabel) {
    ctx.fillStyle = "#99a";
    ctx.fillText(opts.yLabel, w - ctx.measureText(opts.yLabel).width - 6, 14);
  }
}

export function drawOpacityCurve(
  canvas: HTMLCanvasElement,
  curve: number[],
  color = "#6cf",
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#181c22";
  ctx.fillRect(0, 0, w, h);
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  const yMax = Math.max(1, ...curve);
  curve.forEach((v, i) => {
    const x = (i / (curve.length - 1)) * w;
    const y = h - (Math.min(v, yMax) / yMax) * (h - 6) - 3;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}
