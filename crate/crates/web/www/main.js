import init, { familyGraph, frontierWalk, nspdkSimilarity } from "./pkg/gram_web.js";

const $ = (id) => document.getElementById(id);
const palette = ["#0072b2", "#009e73", "#cc79a7", "#56b4e9"];
const graphs = { a: null, b: null };
let walk = null;
let shown = 0;

// Spring embedding, good enough for a few dozen nodes.
function layout(g, width, height) {
  const n = g.nodes.length;
  const pos = g.nodes.map((_, i) => {
    const t = (2 * Math.PI * i) / n;
    return [width / 2 + 0.35 * width * Math.cos(t), height / 2 + 0.35 * height * Math.sin(t)];
  });
  const k = Math.sqrt((width * height) / n) * 0.6;
  for (let iter = 0; iter < 300; iter++) {
    const disp = pos.map(() => [0, 0]);
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        const dx = pos[i][0] - pos[j][0], dy = pos[i][1] - pos[j][1];
        const d = Math.max(Math.hypot(dx, dy), 0.01);
        const f = (k * k) / d;
        disp[i][0] += (dx / d) * f; disp[i][1] += (dy / d) * f;
        disp[j][0] -= (dx / d) * f; disp[j][1] -= (dy / d) * f;
      }
    }
    for (const [u, v] of g.edges) {
      const dx = pos[u][0] - pos[v][0], dy = pos[u][1] - pos[v][1];
      const d = Math.max(Math.hypot(dx, dy), 0.01);
      const f = (d * d) / k;
      disp[u][0] -= (dx / d) * f; disp[u][1] -= (dy / d) * f;
      disp[v][0] += (dx / d) * f; disp[v][1] += (dy / d) * f;
    }
    const temp = 10 * (1 - iter / 300) + 0.5;
    for (let i = 0; i < n; i++) {
      const d = Math.max(Math.hypot(disp[i][0], disp[i][1]), 0.01);
      pos[i][0] = Math.min(width - 12, Math.max(12, pos[i][0] + (disp[i][0] / d) * Math.min(d, temp)));
      pos[i][1] = Math.min(height - 12, Math.max(12, pos[i][1] + (disp[i][1] / d) * Math.min(d, temp)));
    }
  }
  return pos;
}

// `state` maps node id to a fill colour; missing nodes use their label colour.
function draw(canvas, entry, state = null, highlight = []) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const { graph: g, pos } = entry;
  const hot = new Set(highlight.map(([u, v]) => `${u},${v}`));
  for (const [u, v, label] of g.edges) {
    const visible = !state || (state.has(u) && state.has(v));
    ctx.strokeStyle = hot.has(`${u},${v}`) || hot.has(`${v},${u}`) ? "#d55e00" : visible ? "#555" : "#eee";
    ctx.lineWidth = hot.has(`${u},${v}`) || hot.has(`${v},${u}`) ? 3 : 1 + label;
    ctx.beginPath();
    ctx.moveTo(...pos[u]);
    ctx.lineTo(...pos[v]);
    ctx.stroke();
  }
  g.nodes.forEach((label, i) => {
    ctx.fillStyle = state ? state.get(i) ?? "#ddd" : palette[label % palette.length];
    ctx.beginPath();
    ctx.arc(...pos[i], 7, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function generate(which) {
  const seed = Number($("seed").value) + (which === "b" ? 1000 : 0);
  try {
    const json = familyGraph($("family").value, Number($("nmin").value), Number($("nmax").value), seed);
    const graph = JSON.parse(json);
    const canvas = $(`canvas-${which}`);
    graphs[which] = { json, graph, pos: layout(graph, canvas.width, canvas.height) };
    $(`info-${which}`).textContent = `${$("family").value}: ${graph.nodes.length} nodes, ${graph.edges.length} edges`;
    draw(canvas, graphs[which]);
    if (which === "a") newWalk();
    $("status").textContent = "";
  } catch (e) {
    $("status").textContent = String(e);
  }
}

function newWalk() {
  if (!graphs.a) return;
  walk = JSON.parse(frontierWalk(graphs.a.json, Number($("order-seed").value)));
  shown = 0;
  showWalk();
}

function showWalk() {
  const state = new Map();
  for (let i = 0; i <= shown; i++) state.set(walk.order[i], "#999");
  let links = [];
  let text = `step ${shown} of ${walk.steps.length}`;
  if (shown > 0) {
    const step = walk.steps[shown - 1];
    for (const u of step.frontier) state.set(u, "#e69f00");
    state.set(step.node, "#d55e00");
    links = step.links.map((u) => [u, step.node]);
    text += `: frontier size ${step.frontier.length}, edges ${step.links.length}`;
  }
  if (shown === walk.steps.length) {
    text += ` (mean alpha ${walk.mean_alpha.toFixed(2)}, mean beta ${walk.mean_beta.toFixed(2)})`;
  }
  $("walk-info").textContent = text;
  draw($("canvas-a"), graphs.a, state, links);
}

await init();
$("gen-a").onclick = () => generate("a");
$("gen-b").onclick = () => generate("b");
$("walk").onclick = () => { $("order-seed").value = Number($("order-seed").value) + 1; newWalk(); };
$("step").onclick = () => { if (walk && shown < walk.steps.length) { shown++; showWalk(); } };
$("run").onclick = () => { if (walk) { shown = walk.steps.length; showWalk(); } };
$("compare").onclick = () => {
  if (!graphs.a || !graphs.b) {
    $("similarity").textContent = "generate both graphs first";
    return;
  }
  $("similarity").textContent = `k(A, B) = ${nspdkSimilarity(graphs.a.json, graphs.b.json).toFixed(4)}`;
};
generate("a");
generate("b");
