import init, { scopeSearch, caliperMatching, bhAdjust } from "./pkg/sbps_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (v, d = 2) => (v === null || v === undefined ? "-" : v.toFixed(d));

function fail(out, msg) {
  out.innerHTML = `<p class="err">${msg}</p>`;
}

function table(head, rows, rowClass = () => "") {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const tr = rows.map((r, i) => `<tr class="${rowClass(i)}">${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table><tr>${th}</tr>${tr}</table>`;
}

function runSearch() {
  const out = $("s-out");
  const res = JSON.parse(scopeSearch(num("s-groups"), num("s-units"), $("s-crit").value, num("s-restarts"), num("s-seed")));
  if (res.error) return fail(out, res.error);
  const g = res.groups;
  const own = g.filter((r) => r.scope === 2).length;
  out.innerHTML =
    `<p>${res.search}: F = ${fmt(res.f_min, 4)} (all pooled: ${fmt(res.f_all_ones, 4)}), ` +
    `${res.evaluations} evaluations, ${own} of ${g.length} subgroups use their own fit.</p>` +
    table(
      ["subgroup", "scope", "treated", "control", "true", "pooled fit", "chosen scope"],
      g.map((r) => [r.label, r.scope, r.n_treated, r.n_control, fmt(r.true_tau), fmt(r.tau_traditional), fmt(r.tau_sbps)]),
      (i) => (g[i].scope === 2 ? "s2" : ""),
    );
  plotSearch(g);
}

function plotSearch(g) {
  const c = $("s-plot");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const vals = g.flatMap((r) => [r.true_tau, r.tau_traditional, r.tau_sbps]).filter((v) => v !== null);
  const lo = Math.min(...vals) - 1;
  const hi = Math.max(...vals) + 1;
  const y = (v) => c.height - 20 - ((v - lo) / (hi - lo)) * (c.height - 40);
  const step = c.width / g.length;
  g.forEach((r, i) => {
    const x = step * (i + 0.5);
    if (r.scope === 2) {
      ctx.fillStyle = "#e6f0ff";
      ctx.fillRect(step * i, 0, step, c.height);
    }
    ctx.strokeStyle = "#222";
    ctx.beginPath();
    ctx.moveTo(x - step * 0.35, y(r.true_tau));
    ctx.lineTo(x + step * 0.35, y(r.true_tau));
    ctx.stroke();
    const dot = (v, color, dx) => {
      if (v === null) return;
      ctx.fillStyle = color;
      ctx.beginPath();
      ctx.arc(x + dx, y(v), 4, 0, 2 * Math.PI);
      ctx.fill();
    };
    dot(r.tau_traditional, "#999", -step * 0.12);
    dot(r.tau_sbps, "#1a5fd0", step * 0.12);
    ctx.fillStyle = "#555";
    ctx.fillText(r.label, x - 4, c.height - 5);
  });
  ctx.fillStyle = "#222";
  ctx.fillText("bar: true effect   grey: pooled fit   blue: chosen scope   shaded: own fit", 8, 12);
}

function runMatching() {
  const out = $("m-out");
  const res = JSON.parse(
    caliperMatching(num("m-t"), num("m-c"), num("m-gap"), num("m-grid"), num("m-scale"), num("m-seed")),
  );
  if (res.error) return fail(out, res.error);
  const kept = res.treated.length - res.dropped.length;
  const wsum = res.control_weights.reduce((a, b) => a + b, 0);
  const ties = res.links.filter((l) => l.share < 1).length;
  out.innerHTML =
    `<p>caliper ${fmt(res.caliper, 3)}; matched ${kept} of ${res.treated.length} treated; ` +
    `control weight total ${fmt(wsum, 3)}; ${ties} tied links.</p>`;

  const c = $("m-plot");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const all = res.treated.concat(res.control);
  const lo = Math.min(...all) - 0.2;
  const hi = Math.max(...all) + 0.2;
  const x = (v) => 10 + ((v - lo) / (hi - lo)) * (c.width - 20);
  const yt = 40;
  const yc = c.height - 40;
  ctx.lineWidth = 1;
  for (const l of res.links) {
    ctx.strokeStyle = `rgba(26, 95, 208, ${0.25 + 0.75 * l.share})`;
    ctx.beginPath();
    ctx.moveTo(x(res.treated[l.treated]), yt);
    ctx.lineTo(x(res.control[l.control]), yc);
    ctx.stroke();
  }
  const dropped = new Set(res.dropped);
  res.treated.forEach((v, i) => {
    ctx.fillStyle = dropped.has(i) ? "#bbb" : "#d03a1a";
    ctx.beginPath();
    ctx.arc(x(v), yt, 4, 0, 2 * Math.PI);
    ctx.fill();
  });
  res.control.forEach((v, j) => {
    const w = res.control_weights[j];
    ctx.fillStyle = w > 0 ? "#1a5fd0" : "#bbb";
    ctx.beginPath();
    ctx.arc(x(v), yc, 3 + 2 * Math.sqrt(w), 0, 2 * Math.PI);
    ctx.fill();
  });
  ctx.fillStyle = "#222";
  ctx.fillText("treated", 10, 15);
  ctx.fillText("control (size ~ weight)", 10, c.height - 10);
}

function runBh() {
  const out = $("b-out");
  const res = JSON.parse(bhAdjust($("b-in").value));
  if (res.error) return fail(out, res.error);
  const rows = res.p.map((p, i) => [i + 1, p, fmt(res.adjusted[i], 4), res.adjusted[i] <= 0.05 ? "yes" : ""]);
  out.innerHTML = table(["#", "p", "adjusted", "below 0.05"], rows);
}

await init();
$("s-run").addEventListener("click", runSearch);
for (const id of ["m-t", "m-c", "m-gap", "m-grid", "m-scale", "m-seed"]) {
  $(id).addEventListener("input", runMatching);
}
$("b-run").addEventListener("click", runBh);
runSearch();
runMatching();
runBh();
