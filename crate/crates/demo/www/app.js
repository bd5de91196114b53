// Single-page driver for the wasm bindings. Build the wasm package into
// ./pkg first (see the repository README).
import init, { generate_pair, analyze_pair, simulate_recover } from "./pkg/disconnector_demo.js";

const MODALITY_FILL = ["#4c78a8", "#f2a04b", "#59a14f", "#b07aa1", "#76b7b2", "#e15759"];
const el = (id) => document.getElementById(id);

const edgeKey = ([u, v]) => (u < v ? `${u}-${v}` : `${v}-${u}`);

// Circular layout grouped by modality; returns {id -> {x, y}} plus node order.
function layout(graph, size) {
  const nodes = [...graph.nodes].sort((a, b) =>
    a.modality === b.modality ? a.id - b.id : a.modality < b.modality ? -1 : 1
  );
  const cx = size / 2, cy = size / 2, r = size / 2 - 28;
  const pos = new Map();
  nodes.forEach((n, i) => {
    const angle = (2 * Math.PI * i) / nodes.length - Math.PI / 2;
    pos.set(n.id, { x: cx + r * Math.cos(angle), y: cy + r * Math.sin(angle) });
  });
  return pos;
}

// Renders a graph as SVG. `highlight` maps edge keys to stroke colors.
function renderGraph(container, graph, highlight = new Map()) {
  const size = 340;
  const pos = layout(graph, size);
  const modalities = [...new Set(graph.nodes.map((n) => n.modality))].sort();
  const fill = (m) => MODALITY_FILL[modalities.indexOf(m) % MODALITY_FILL.length];
  let svg = `<svg viewBox="0 0 ${size} ${size}" role="img">`;
  for (const e of graph.edges) {
    const a = pos.get(e[0]), b = pos.get(e[1]);
    const color = highlight.get(edgeKey(e)) || "#9fb0c0";
    const width = highlight.has(edgeKey(e)) ? 2.6 : 1.4;
    svg += `<line x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" stroke="${color}" stroke-width="${width}"/>`;
  }
  // Missing-edge overlays (dashed) come as pseudo-edges with a "dash" flag.
  for (const [key, color] of highlight) {
    if (!key.endsWith("!dash")) continue;
    const [u, v] = key.replace("!dash", "").split("-").map(Number);
    const a = pos.get(u), b = pos.get(v);
    svg += `<line x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" stroke="${color}" stroke-width="2.2" stroke-dasharray="6 5"/>`;
  }
  for (const n of graph.nodes) {
    const p = pos.get(n.id);
    svg += `<circle cx="${p.x}" cy="${p.y}" r="11" fill="${fill(n.modality)}" stroke="#223" stroke-width="1"/>`;
    svg += `<text x="${p.x}" y="${p.y + 4}" text-anchor="middle" font-size="11" fill="#fff">${n.id}</text>`;
    svg += `<text x="${p.x}" y="${p.y - 15}" text-anchor="middle" font-size="9" fill="#5b6b7a">${n.modality}</text>`;
  }
  svg += "</svg>";
  container.innerHTML = svg;
}

function renderModules(container, modules, prefix) {
  container.innerHTML = modules
    .map((m, i) => `<span>${prefix}_${i + 1}: {${m.join(", ")}}</span>`)
    .join("");
}

// Highlights for a healthy/patient pair: direct disconnectors dashed red on
// the healthy side (they exist there), patient-only edges green.
function pairHighlights(result) {
  const healthySet = new Set(result.healthy.edges.map(edgeKey));
  const direct = result.report.direct.map(edgeKey);
  const healthyHl = new Map(direct.map((k) => [k, "#b33939"]));
  const patientHl = new Map(
    result.patient.edges.map(edgeKey).filter((k) => !healthySet.has(k)).map((k) => [k, "#2e7d32"])
  );
  // Show the removed disconnectors as dashed ghosts on the patient side.
  for (const k of direct) patientHl.set(`${k}!dash`, "#b33939");
  return { healthyHl, patientHl };
}

function numberOr(value, fallback) {
  const x = parseFloat(value);
  return Number.isFinite(x) ? x : fallback;
}

function generateConfig() {
  const blocks = el("g-blocks").value.split(",").map((s) => parseInt(s.trim(), 10)).filter((x) => x > 0);
  const cfg = {
    block_sizes: blocks,
    p_between: numberOr(el("g-pbetween").value, 0.01),
    seed: numberOr(el("g-seed").value, 0),
    remove_count: numberOr(el("g-remove").value, 3),
    add_count: numberOr(el("g-add").value, 1),
  };
  const pw = parseFloat(el("g-pwithin").value);
  if (Number.isFinite(pw)) cfg.p_within = pw;
  return cfg;
}

function showPair(result, ids) {
  const { healthyHl, patientHl } = pairHighlights(result);
  renderGraph(el(ids.healthy), result.healthy, healthyHl);
  renderGraph(el(ids.patient), result.patient, patientHl);
  if (ids.healthyMods) renderModules(el(ids.healthyMods), result.healthy_modules, "healthy_module");
  if (ids.patientMods) renderModules(el(ids.patientMods), result.patient_modules, "patient_module");
  const report = el(ids.report);
  report.hidden = false;
  report.textContent = result.report_text;
}

async function main() {
  await init();

  el("g-run").addEventListener("click", () => {
    el("g-error").textContent = "";
    try {
      const result = JSON.parse(generate_pair(JSON.stringify(generateConfig())));
      showPair(result, {
        healthy: "g-healthy", patient: "g-patient",
        healthyMods: "g-healthy-mods", patientMods: "g-patient-mods",
        report: "g-report",
      });
      el("a-healthy").value = JSON.stringify(result.healthy, null, 1);
      el("a-patient").value = JSON.stringify(result.patient, null, 1);
    } catch (e) {
      el("g-error").textContent = String(e);
    }
  });

  el("e-run").addEventListener("click", () => {
    el("e-error").textContent = "";
    el("e-score").textContent = "estimating…";
    const button = el("e-run");
    button.disabled = true;
    // Let the browser paint before the (synchronous) wasm call.
    setTimeout(() => {
      try {
        const cfg = generateConfig();
        cfg.n = Math.max(20, numberOr(el("e-n").value, 500));
        const snr = el("e-snr").value;
        cfg.snr = snr === "clean" ? "clean" : parseFloat(snr);
        cfg.alpha = numberOr(el("e-alpha").value, 0.05);
        const ls = parseFloat(el("e-ls").value);
        if (Number.isFinite(ls)) cfg.lambda_sparse = ls;
        const lj = parseFloat(el("e-lj").value);
        if (Number.isFinite(lj)) cfg.lambda_joint = lj;

        const result = JSON.parse(simulate_recover(JSON.stringify(cfg)));
        const truth = new Set(result.truth.map(edgeKey));
        const healthyHl = new Map(
          result.report.direct.map(edgeKey).map((k) => [k, truth.has(k) ? "#b33939" : "#d98b00"])
        );
        renderGraph(el("e-healthy"), result.estimated_healthy, healthyHl);
        renderGraph(el("e-patient"), result.estimated_patient);
        const s = result.score;
        el("e-score").textContent =
          `precision ${s.precision.toFixed(2)} · recall ${s.recall.toFixed(2)} · ` +
          `F ${s.f_measure.toFixed(2)} (true ${s.true_count}, found ${s.estimated_count}, ` +
          `hits ${s.hit_count}; lambda = ${result.lambda_sparse}/${result.lambda_joint})`;
        const report = el("e-report");
        report.hidden = false;
        report.textContent = result.report_text;
      } catch (e) {
        el("e-score").textContent = "";
        el("e-error").textContent = String(e);
      } finally {
        button.disabled = false;
      }
    }, 30);
  });

  el("a-run").addEventListener("click", () => {
    el("a-error").textContent = "";
    try {
      const result = JSON.parse(analyze_pair(el("a-healthy").value, el("a-patient").value));
      showPair(result, { healthy: "a-healthy-svg", patient: "a-patient-svg", report: "a-report" });
    } catch (e) {
      el("a-error").textContent = String(e);
    }
  });

  el("g-run").click();
}

main();
