import init, { Demo } from "./pkg/disparse_web.js";

const $ = (id) => document.getElementById(id);
let demo = null;
let matrix = null;

function setStatus(text) {
  $("status").textContent = text;
}

function color(v, lo, hi) {
  // Diverging: blue below zero, red above.
  if (v >= 0) {
    const t = hi > 0 ? Math.min(v / hi, 1) : 0;
    return `rgb(255,${Math.round(255 - 200 * t)},${Math.round(255 - 200 * t)})`;
  }
  const t = lo < 0 ? Math.min(v / lo, 1) : 0;
  return `rgb(${Math.round(255 - 200 * t)},${Math.round(255 - 140 * t)},255)`;
}

function draw() {
  const kind = document.querySelector("input[name=kind]:checked").value;
  matrix = JSON.parse(demo.matrix(kind));
  const canvas = $("heat");
  const ctx = canvas.getContext("2d");
  const n = matrix.tags.length;
  const margin = 150;
  const cell = (canvas.width - margin) / n;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  let lo = 0, hi = 0;
  matrix.values.forEach((row, i) => row.forEach((v, j) => {
    if (kind === "pmi" && i === j) return;
    lo = Math.min(lo, v);
    hi = Math.max(hi, v);
  }));
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      ctx.fillStyle = kind === "pmi" && i === j ? "#ddd" : color(matrix.values[i][j], lo, hi);
      ctx.fillRect(margin + j * cell, margin + i * cell, cell - 1, cell - 1);
    }
  }
  ctx.fillStyle = "#222";
  ctx.font = "10px sans-serif";
  ctx.textAlign = "right";
  ctx.textBaseline = "middle";
  matrix.tags.forEach((t, i) => ctx.fillText(t, margin - 4, margin + (i + 0.5) * cell));
  ctx.save();
  ctx.rotate(-Math.PI / 2);
  ctx.textAlign = "left";
  matrix.tags.forEach((t, j) => ctx.fillText(t, -margin + 4, margin + (j + 0.5) * cell));
  ctx.restore();
  canvas.onmousemove = (e) => {
    const r = canvas.getBoundingClientRect();
    const j = Math.floor((e.clientX - r.left - margin) / cell);
    const i = Math.floor((e.clientY - r.top - margin) / cell);
    if (i < 0 || j < 0 || i >= n || j >= n) {
      $("hover").textContent = "";
      return;
    }
    const v = matrix.values[i][j].toFixed(3);
    $("hover").textContent = `${matrix.tags[i]} → ${matrix.tags[j]}: ${v} (support ${matrix.support[i][j]})`;
  };
}

function parse() {
  const rows = JSON.parse(demo.parse($("thread").value));
  const table = $("result");
  table.innerHTML = "<tr><th>#</th><th>post</th><th>labels</th></tr>";
  rows.forEach((row, i) => {
    const tr = document.createElement("tr");
    const tags = row.labels.map((t) => `<span class="tag">${t}</span>`).join("") || "<i>none</i>";
    tr.innerHTML = `<td>${i}</td><td></td><td>${tags}</td>`;
    tr.children[1].textContent = row.text;
    table.appendChild(tr);
  });
}

function generate() {
  setStatus("training…");
  // Let the status repaint before the synchronous work.
  setTimeout(() => {
    const t0 = performance.now();
    demo = new Demo(Number($("trees").value), Number($("seed").value));
    const s = JSON.parse(demo.summary());
    setStatus(`${s.trees} trees, ${s.labeled} labeled posts, ${s.features} (${s.feature_width} features), ` +
      `${Math.round(performance.now() - t0)} ms`);
    $("cues").textContent = "cues: " + s.cues.map(([, w]) => w).join(" ") +
      " | dependent replies: " + s.dependencies.map(([a, b]) => `${a}→${b}`).join(", ");
    draw();
    parse();
  }, 10);
}

await init();
$("generate").onclick = generate;
$("parse").onclick = parse;
document.querySelectorAll("input[name=kind]").forEach((r) => (r.onchange = draw));
generate();
