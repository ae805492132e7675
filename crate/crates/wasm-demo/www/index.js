import init, { heatmap_slice, point_bound, optimize } from "./pkg/tdoa_forge_wasm_demo.js";

const ENV = {
  name: "arena",
  boundary: { min: [-0.5, -0.5, 0], max: [6.5, 6.5, 6] },
};

const PLACEMENT = {
  anchors: [
    [0, 0, 0.15], [6, 0, 0.15], [6, 6, 0.15], [0, 6, 0.15],
    [0, 0, 2.65], [6, 0, 2.65], [6, 6, 2.65], [0, 6, 2.65],
  ],
  pairs: [[8, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 8]],
};

const TARGETS = {
  points: [[1.5, 1.5, 1.2], [4.5, 1.5, 1.2], [4.5, 4.5, 1.2], [1.5, 4.5, 1.2], [3, 3, 1.5]],
};

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
let view = null;

function show(text, error = false) {
  $("out").textContent = text;
  $("out").className = error ? "err" : "";
}

function color(v, lo, hi) {
  if (v === null) return [40, 40, 40];
  const t = Math.min(1, Math.max(0, (Math.log(v) - Math.log(lo)) / (Math.log(hi) - Math.log(lo))));
  return [Math.round(255 * t), Math.round(200 * (1 - Math.abs(2 * t - 1))), Math.round(255 * (1 - t))];
}

function draw() {
  let h;
  try {
    h = JSON.parse(heatmap_slice($("env").value, $("placement").value, num("height"), num("resolution"), num("sigma"), num("kappa")));
  } catch (e) {
    show(String(e), true);
    return;
  }
  const canvas = $("map");
  const ctx = canvas.getContext("2d");
  const nx = h.xs.length, ny = h.ys.length;
  const finite = h.rmse.flat().filter((v) => v !== null);
  const lo = Math.max(1e-3, Math.min(...finite)), hi = Math.min(5, Math.max(...finite, lo * 1.01));
  const cw = canvas.width / nx, ch = canvas.height / ny;
  for (let iy = 0; iy < ny; iy++) {
    for (let ix = 0; ix < nx; ix++) {
      const [r, g, b] = color(h.rmse[iy][ix], lo, hi);
      ctx.fillStyle = `rgb(${r},${g},${b})`;
      ctx.fillRect(ix * cw, canvas.height - (iy + 1) * ch, Math.ceil(cw), Math.ceil(ch));
    }
  }
  const res = num("resolution");
  const x0 = h.xs[0] - res / 2, y0 = h.ys[0] - res / 2;
  const sx = canvas.width / (nx * res), sy = canvas.height / (ny * res);
  ctx.fillStyle = "white";
  ctx.strokeStyle = "black";
  for (const [ax, ay] of h.anchors) {
    ctx.beginPath();
    ctx.arc((ax - x0) * sx, canvas.height - (ay - y0) * sy, 5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }
  view = { x0, y0, sx, sy };
  const mean = finite.reduce((a, b) => a + b, 0) / Math.max(1, finite.length);
  $("scale").textContent = `RMSE bound ${lo.toFixed(3)} m (blue) to ${hi.toFixed(3)} m (red), mean ${mean.toFixed(3)} m, ${nx * ny - finite.length} unobservable cells`;
}

function probe(ev) {
  if (!view) return;
  const rect = ev.target.getBoundingClientRect();
  const x = view.x0 + (ev.clientX - rect.left) / view.sx;
  const y = view.y0 + (rect.bottom - ev.clientY) / view.sy;
  try {
    const b = JSON.parse(point_bound($("env").value, $("placement").value, x, y, num("height"), num("sigma"), num("kappa")));
    show(`point (${x.toFixed(2)}, ${y.toFixed(2)}, ${num("height")})\n` + JSON.stringify(b, null, 2));
  } catch (e) {
    show(String(e), true);
  }
}

function runOptimize() {
  show("optimizing...");
  setTimeout(() => {
    try {
      const r = JSON.parse(optimize($("env").value, $("targets").value, Math.round(num("anchors")), $("disjoint").checked, num("grid"), num("sigma"), num("kappa")));
      $("placement").value = JSON.stringify(r.placement, null, 2);
      show(`candidates ${r.candidates}\nstart ${r.initial_metric.toFixed(4)} m\nafter each sweep ${r.history.map((v) => v.toFixed(4)).join(", ")}`);
      draw();
    } catch (e) {
      show(String(e), true);
    }
  }, 0);
}

await init();
$("env").value = JSON.stringify(ENV, null, 2);
$("placement").value = JSON.stringify(PLACEMENT, null, 2);
$("targets").value = JSON.stringify(TARGETS, null, 2);
$("draw").onclick = draw;
$("optimize").onclick = runOptimize;
$("map").onclick = probe;
draw();
