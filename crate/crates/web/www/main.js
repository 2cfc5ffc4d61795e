import init, { score_histogram, memory_curve, curve_weights } from "./pkg/masklm_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function lines(canvas, series, ymax) {
  const ctx = clear(canvas);
  const pad = 30, w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  series.forEach((ys, s) => {
    ctx.strokeStyle = COLORS[s % COLORS.length];
    ctx.beginPath();
    ys.forEach((y, i) => {
      const x = pad + (w * i) / Math.max(ys.length - 1, 1);
      const yy = pad + h - (h * y) / ymax;
      i ? ctx.lineTo(x, yy) : ctx.moveTo(x, yy);
    });
    ctx.stroke();
  });
}

function drawHistogram() {
  const out = score_histogram(256, 256, num("p"), num("hw"), 0.5, BigInt(num("seed")), 40);
  const [sparsity, lo, hi] = out;
  const counts = out.slice(3);
  const canvas = $("hist");
  const ctx = clear(canvas);
  const max = Math.max(...counts);
  const bw = canvas.width / counts.length;
  counts.forEach((c, i) => {
    const centre = lo + ((i + 0.5) * (hi - lo)) / counts.length;
    ctx.fillStyle = centre < 0.5 ? "#d62728" : "#1f77b4";
    const bh = ((canvas.height - 10) * c) / max;
    ctx.fillRect(i * bw + 1, canvas.height - bh, bw - 2, bh);
  });
  $("hist-out").textContent =
    `scores in [${lo.toFixed(4)}, ${hi.toFixed(4)}], realized sparsity ${(100 * sparsity).toFixed(2)}% (red: below threshold 0.5)`;
}

function drawMemory() {
  try {
    const flat = memory_curve($("arch").value, $("plan").value, num("tasks"), 2);
    const ft = [], mask = [];
    for (let i = 0; i < flat.length; i += 2) {
      ft.push(flat[i]);
      mask.push(flat[i + 1]);
    }
    lines($("memory"), [ft, mask], Math.max(...ft));
    const mb = (kb) => (kb / 1000).toFixed(1) + " MB";
    $("mem-out").textContent =
      `after ${ft.length} tasks: finetuning ${mb(ft.at(-1))} (blue), masking ${mb(mask.at(-1))} (red)`;
  } catch (e) {
    $("mem-out").textContent = String(e);
  }
}

function drawWeights() {
  const bends = num("bends");
  const samples = 101;
  const flat = curve_weights(bends, samples);
  const k = bends + 2;
  const series = Array.from({ length: k }, (_, j) => Array.from({ length: samples }, (_, i) => flat[i * k + j]));
  lines($("weights"), series, 1);
}

await init();
$("draw").onclick = drawHistogram;
$("mem").onclick = drawMemory;
$("bern").onclick = drawWeights;
drawHistogram();
drawMemory();
drawWeights();
