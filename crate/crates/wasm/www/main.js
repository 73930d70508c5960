import init, { evolve_curve, sphere_radius_trajectory, body_inequalities } from "./pkg/starflow_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function attempt(statusId, fn) {
  try {
    fn();
  } catch (e) {
    $(statusId).textContent = "error: " + e;
  }
}

function drawCurves(frames) {
  const canvas = $("c-canvas");
  const ctx = canvas.getContext("2d");
  let extent = 0;
  for (const f of frames) {
    for (let i = 0; i < f.x.length; i++) extent = Math.max(extent, Math.abs(f.x[i]), Math.abs(f.y[i]));
  }
  const scale = (0.45 * canvas.width) / extent;
  let i = 0;
  const step = () => {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    frames.slice(0, i + 1).forEach((f, j) => {
      ctx.strokeStyle = j === i ? "#c33" : "rgba(40, 80, 160, 0.25)";
      ctx.beginPath();
      f.x.forEach((x, k) => {
        const px = canvas.width / 2 + scale * x;
        const py = canvas.height / 2 - scale * f.y[k];
        k === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
      });
      ctx.closePath();
      ctx.stroke();
    });
    $("c-status").textContent = `t = ${frames[i].t.toFixed(3)}, max |Dγ|² = ${frames[i].dgamma_sq_max.toExponential(3)}`;
    if (++i < frames.length) requestAnimationFrame(step);
  };
  step();
}

function runCurve() {
  const request = {
    alpha: num("c-alpha"),
    beta: num("c-beta"),
    body: $("c-body").value,
    t_end: num("c-tend"),
    n_points: 128,
    frames: 60,
    normalized: $("c-norm").checked,
  };
  const out = JSON.parse(evolve_curve(JSON.stringify(request)));
  drawCurves(out.frames);
}

function runSphere() {
  const out = JSON.parse(
    sphere_radius_trajectory(num("s-alpha"), num("s-beta"), num("s-r0"), num("s-tend"), 50),
  );
  const canvas = $("s-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const tMax = out.t[out.t.length - 1] || 1;
  const rMin = Math.min(...out.exact, ...out.numeric);
  const rMax = Math.max(...out.exact, ...out.numeric);
  const px = (t) => 40 + ((canvas.width - 60) * t) / tMax;
  const py = (r) => canvas.height - 30 - ((canvas.height - 60) * (r - rMin)) / (rMax - rMin || 1);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  out.t.forEach((t, i) => (i === 0 ? ctx.moveTo(px(t), py(out.exact[i])) : ctx.lineTo(px(t), py(out.exact[i]))));
  ctx.stroke();
  ctx.fillStyle = "#c33";
  out.t.forEach((t, i) => ctx.fillRect(px(t) - 2, py(out.numeric[i]) - 2, 4, 4));
  const err = Math.max(...out.numeric.map((r, i) => Math.abs(r / out.exact[i] - 1)));
  $("s-status").textContent = `r(${tMax}) = ${out.numeric[out.numeric.length - 1].toFixed(8)}, max relative error ${err.toExponential(2)}`;
}

function runInequalities() {
  const out = JSON.parse(body_inequalities($("i-body").value, num("i-nt"), $("i-iotas").value));
  const rows = out.inequalities.filter((r) => r.applicable);
  $("i-status").textContent = `convex: ${out.convex}, k-convex up to ${out.k_convex}; ${rows.length} applicable inequalities`;
  const table = $("i-table");
  table.innerHTML = "<tr><th>id</th><th>params</th><th>lhs</th><th>rhs</th><th>margin</th></tr>";
  for (const r of rows) {
    const tr = document.createElement("tr");
    for (const v of [r.id, r.params, r.lhs.toPrecision(8), r.rhs.toPrecision(8), r.margin.toExponential(3)]) {
      const td = document.createElement("td");
      td.textContent = v;
      tr.appendChild(td);
    }
    if (r.margin < -1e-8) tr.className = "neg";
    table.appendChild(tr);
  }
}

await init();
$("c-run").onclick = () => attempt("c-status", runCurve);
$("s-run").onclick = () => attempt("s-status", runSphere);
$("i-run").onclick = () => attempt("i-status", runInequalities);
