import init, { nucleus_view, Demo } from "./pkg/narrative_demo.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1b6ca8", "#d1495b", "#edae49", "#00798c", "#6a4c93", "#30638e", "#66a182", "#8d6a9f"];

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px system-ui, sans-serif";
  return ctx;
}

function parseList(text) {
  return text.split(",").map((s) => s.trim()).filter((s) => s !== "").map(Number);
}

function drawNucleus() {
  const p = Number($("p").value);
  const t = Number($("temp").value);
  $("p-val").textContent = p.toFixed(2);
  $("temp-val").textContent = t.toFixed(2);
  const canvas = $("nucleus");
  const ctx = clear(canvas);
  let view;
  try {
    view = JSON.parse(nucleus_view(new Float64Array(parseList($("scores").value)), p, t));
    $("nucleus-msg").textContent = "";
  } catch (e) {
    $("nucleus-msg").innerHTML = `<span class="err">${e.message ?? e}</span>`;
    return;
  }
  const kept = new Set(view.kept);
  const n = view.ranked.length;
  const pad = 40, w = (canvas.width - 2 * pad) / n, h = canvas.height - 2 * pad;
  const y = (v) => canvas.height - pad - v * h;
  view.ranked.forEach((tok, i) => {
    const x = pad + i * w;
    const prob = view.probs[tok];
    ctx.fillStyle = kept.has(tok) ? "#1b6ca8" : "#fff";
    ctx.strokeStyle = "#1b6ca8";
    ctx.fillRect(x + 3, y(prob), w - 6, prob * h);
    ctx.strokeRect(x + 3, y(prob), w - 6, prob * h);
    ctx.fillStyle = "#222";
    ctx.fillText(`#${tok}`, x + 4, canvas.height - pad + 14);
    ctx.fillText(prob.toFixed(3), x + 4, y(prob) - 4);
  });
  ctx.strokeStyle = "#d1495b";
  ctx.beginPath();
  view.cumulative.forEach((c, i) => {
    const x = pad + (i + 0.5) * w;
    i === 0 ? ctx.moveTo(x, y(c)) : ctx.lineTo(x, y(c));
  });
  ctx.stroke();
  ctx.setLineDash([4, 4]);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, y(p));
  ctx.lineTo(canvas.width - pad, y(p));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillText(`p = ${p.toFixed(2)}: ${view.kept.length} of ${n} tokens kept`, pad, 16);
}

function axes(ctx, canvas, pad, xLabel, yLabel) {
  ctx.strokeStyle = "#444";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, canvas.height - pad);
  ctx.lineTo(canvas.width - pad / 2, canvas.height - pad);
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(xLabel, canvas.width / 2, canvas.height - 8);
  ctx.fillText(yLabel, 4, pad / 2 - 4);
}

function drawCdf(summary) {
  const canvas = $("cdf");
  const ctx = clear(canvas);
  const pad = 50;
  const maxLog = Math.log10(summary.vocab_size);
  const x = (size) => pad + (Math.log10(size) / maxLog) * (canvas.width - 1.5 * pad);
  const y = (f) => canvas.height - pad - f * (canvas.height - 1.5 * pad);
  axes(ctx, canvas, pad, "tokens kept (log scale)", "fraction of steps");
  for (let e = 0; e <= Math.floor(maxLog); e++) ctx.fillText(String(10 ** e), x(10 ** e) - 4, canvas.height - pad + 14);
  summary.points.forEach((pt, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    let prev = 0;
    ctx.moveTo(x(pt.sizes[0]), y(0));
    pt.sizes.forEach((s, j) => {
      ctx.lineTo(x(s), y(prev));
      ctx.lineTo(x(s), y(pt.fractions[j]));
      prev = pt.fractions[j];
    });
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(`p=${pt.p}`, canvas.width - pad - 10, pad / 2 + 14 * (i + 1));
  });
  const rows = summary.points
    .map((pt) => `<tr><td>${pt.p}</td><td>${pt.median_space}</td><td>${(100 * pt.median_space / summary.vocab_size).toFixed(2)}%</td></tr>`)
    .join("");
  $("medians").innerHTML = `<tr><th>p</th><th>median kept</th><th>of |V| = ${summary.vocab_size}</th></tr>${rows}`;
}

function drawDist(summary) {
  const canvas = $("dist");
  const ctx = clear(canvas);
  const pad = 50;
  const x = (p) => pad + p * (canvas.width - 1.5 * pad);
  const y = (v) => canvas.height - pad - v * (canvas.height - 1.5 * pad);
  axes(ctx, canvas, pad, "p", "distinct n-gram ratio");
  for (const t of [0, 0.25, 0.5, 0.75, 1]) {
    ctx.fillText(String(t), x(t) - 6, canvas.height - pad + 14);
    ctx.fillText(String(t), pad - 28, y(t) + 4);
  }
  [["dist1", "#1b6ca8"], ["dist2", "#d1495b"]].forEach(([key, color], k) => {
    ctx.strokeStyle = ctx.fillStyle = color;
    ctx.beginPath();
    summary.points.forEach((pt, i) => (i === 0 ? ctx.moveTo : ctx.lineTo).call(ctx, x(pt.p), y(pt[key])));
    ctx.stroke();
    summary.points.forEach((pt) => ctx.fillRect(x(pt.p) - 2, y(pt[key]) - 2, 5, 5));
    ctx.fillText(key.replace("dist", "dist-"), canvas.width - pad - 30, pad / 2 + 14 * (k + 1));
  });
  $("pick").innerHTML = summary.points.map((pt, i) => `<option value="${i}">${pt.p}</option>`).join("");
  const show = () => ($("example").textContent = summary.points[Number($("pick").value)].example);
  $("pick").onchange = show;
  show();
}

async function main() {
  await init();
  for (const id of ["scores", "p", "temp"]) $(id).addEventListener("input", drawNucleus);
  drawNucleus();
  $("alpha").value = Demo.default_alpha();
  let demo = null, alpha = null;
  $("run").onclick = async () => {
    $("sweep-msg").textContent = "Running...";
    await new Promise((r) => setTimeout(r));
    try {
      if (Number($("alpha").value) !== alpha) {
        const a = Number($("alpha").value);
        demo = new Demo(a);
        alpha = a;
        $("status").textContent = `Demo model: trigram, ${demo.vocab_size()} tokens, ${demo.prompt_count()} prompts, alpha ${alpha}.`;
        $("prompts").max = demo.prompt_count();
      }
      const grid = new Float64Array(parseList($("grid").value));
      const summary = JSON.parse(demo.sweep(grid, BigInt($("seed").value), Number($("prompts").value)));
      $("sweep-msg").textContent = `${summary.prompts} prompts x ${summary.points.length} values of p`;
      drawCdf(summary);
      drawDist(summary);
    } catch (e) {
      $("sweep-msg").innerHTML = `<span class="err">${e.message ?? e}</span>`;
    }
  };
  $("run").click();
}

main().catch((e) => ($("status").innerHTML = `<span class="err">${e.message ?? e}</span>`));
