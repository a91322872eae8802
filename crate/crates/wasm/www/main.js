import init, { environments, describe, match_instruction, train } from "./pkg/langrid_wasm.js";

const $ = (id) => document.getElementById(id);
let rejected = [];
let top = null;

function guard(f) {
  return (...args) => {
    $("error").textContent = "";
    try {
      f(...args);
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

const env = () => $("env").value;

function showCell(state) {
  const d = JSON.parse(describe(env(), state));
  $("grid").innerHTML = d.svg;
  $("cell").textContent = d.state;
  $("cell-text").textContent = d.text;
  $("cell-legal").textContent = "Legal: " + d.legal.join(", ");
  $("grid").querySelectorAll("rect[data-cell]").forEach((r) => {
    if (r.getAttribute("class") !== "wall") {
      r.addEventListener("click", guard(() => showCell(r.dataset.cell)));
    }
  });
}

function rank() {
  const r = JSON.parse(match_instruction(env(), $("instruction").value, JSON.stringify(rejected)));
  $("match-grid").innerHTML = r.svg;
  top = r.candidates.length ? r.candidates[0].state : null;
  $("ranking").innerHTML = "";
  r.candidates.forEach((c, i) => {
    const tr = document.createElement("tr");
    for (const v of [i + 1, c.state, c.cosine.toFixed(3), c.penalty.toFixed(2), c.score.toFixed(3), c.text]) {
      const td = document.createElement("td");
      td.textContent = v;
      tr.appendChild(td);
    }
    $("ranking").appendChild(tr);
  });
}

function plot(curves) {
  const cv = $("curve");
  const g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  const all = curves.plain.concat(curves.instructed);
  const lo = Math.min(0, ...all), hi = Math.max(1, ...all);
  const n = curves.plain.length;
  const x = (i) => 40 + (i / Math.max(1, n - 1)) * (cv.width - 50);
  const y = (v) => cv.height - 20 - ((v - lo) / (hi - lo)) * (cv.height - 30);
  g.strokeStyle = "#999";
  g.strokeRect(40, 10, cv.width - 50, cv.height - 30);
  g.fillStyle = "#555";
  g.fillText(hi.toFixed(2), 2, 14);
  g.fillText(lo.toFixed(2), 2, cv.height - 20);
  const line = (ys, colour) => {
    if (!ys.length) return;
    g.strokeStyle = colour;
    g.beginPath();
    ys.forEach((v, i) => (i ? g.lineTo(x(i), y(v)) : g.moveTo(x(i), y(v))));
    g.stroke();
  };
  line(curves.plain, "#1c7ed6");
  line(curves.instructed, "#d9480f");
}

function runTraining() {
  const c = JSON.parse(train(env(), Number($("episodes").value), BigInt($("seed").value)));
  plot(c);
  const goals = c.sub_goals.map((g) => g.join(" ")).join(" then ");
  $("train-info").textContent =
    `blue: plain (test ${c.plain_test.toFixed(2)})` +
    (c.instructed_test === null ? "" : `, orange: sub-goals ${goals} (test ${c.instructed_test.toFixed(2)})`) +
    `, rolling mean over ${c.window}`;
}

await init();
for (const k of JSON.parse(environments())) {
  const o = document.createElement("option");
  o.value = o.textContent = k;
  $("env").appendChild(o);
}
$("env").value = "maze/umaze";
$("env").addEventListener("change", guard(() => { rejected = []; showCell(""); rank(); }));
$("match").addEventListener("click", guard(rank));
$("reject").addEventListener("click", guard(() => { if (top) { rejected.push(top); rank(); } }));
$("reset").addEventListener("click", guard(() => { rejected = []; rank(); }));
$("train").addEventListener("click", guard(runTraining));
guard(() => { showCell(""); rank(); })();
