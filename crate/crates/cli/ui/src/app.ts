import { decimate, Ecg, EcgParseError, LEAD_NAMES, N_SAMPLES, parseBinary, parseCsv } from "./ecg.js";

interface Rcri {
  score: number;
  high_risk: boolean;
  components: boolean[];
}

interface Prediction {
  probability: number;
  high_risk: boolean;
  threshold: number;
  rcri: Rcri | null;
}

interface Heatmap {
  leads: number;
  segments: number;
  segment_len: number;
  values: Array<number | null>;
  legend: Array<{ quantile: number; importance: number; normalized: number }>;
}

const FLAGS = [
  "ischemic_heart_disease",
  "congestive_heart_failure",
  "cerebrovascular_disease",
  "insulin_use",
  "creatinine_gt_2mgdl",
  "elevated_risk_procedure",
];

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const state = {
  ecg: null as Ecg | null,
  payload: null as Record<string, string> | null,
  last: null as Prediction | null,
  heatmap: null as Heatmap | null,
  predictSeq: 0,
  explainSeq: 0,
};

function banner(text: string, kind: "error" | "info" = "error") {
  const el = $("banner");
  el.textContent = text;
  el.className = text ? kind : "";
}

function clinical(): Record<string, unknown> | null {
  if (($("skip-clinical") as HTMLInputElement).checked) return null;
  const body: Record<string, unknown> = {};
  for (const f of FLAGS) body[f] = ($(f) as HTMLInputElement).checked;
  body.age = Number(($("age") as HTMLInputElement).value);
  body.sex = ($("sex") as HTMLSelectElement).value;
  return body;
}

function drawStrips() {
  const grid = $("strips");
  grid.innerHTML = "";
  if (!state.ecg) return;
  // 4 columns x 3 rows: I-III, aVR-aVF, V1-V3, V4-V6
  const order = [0, 3, 6, 9, 1, 4, 7, 10, 2, 5, 8, 11];
  for (const lead of order) {
    const canvas = document.createElement("canvas");
    canvas.width = 300;
    canvas.height = 110;
    canvas.dataset.lead = String(lead);
    const ctx = canvas.getContext("2d")!;
    const hm = state.heatmap;
    if (hm) {
      for (let seg = 0; seg < hm.segments; seg++) {
        const v = hm.values[lead * hm.segments + seg];
        if (v === null) continue;
        const x0 = (seg * hm.segment_len * canvas.width) / N_SAMPLES;
        const w = (hm.segment_len * canvas.width) / N_SAMPLES;
        ctx.fillStyle = `rgba(220, 40, 40, ${v.toFixed(3)})`;
        ctx.fillRect(x0, 0, Math.max(w, 1), canvas.height);
      }
    }
    const cols = decimate(state.ecg.leads[lead], canvas.width);
    ctx.strokeStyle = "#111";
    ctx.beginPath();
    const y = (mv: number) => canvas.height / 2 - mv * 35;
    cols.forEach(([lo, hi], x) => {
      ctx.moveTo(x + 0.5, y(lo));
      ctx.lineTo(x + 0.5, y(hi));
    });
    ctx.stroke();
    ctx.fillStyle = "#333";
    ctx.fillText(LEAD_NAMES[lead], 4, 12);
    grid.appendChild(canvas);
  }
}

function showLegend() {
  const hm = state.heatmap;
  $("legend").textContent = hm
    ? hm.legend.map((l) => `q${Math.round(l.quantile * 100)}: ${l.importance.toExponential(2)}`).join("   ")
    : "";
}

async function post<T>(path: string, body: unknown): Promise<T> {
  const resp = await fetch(path, { method: "POST", headers: { "Content-Type": "application/json" }, body: JSON.stringify(body) });
  const json = await resp.json();
  if (!resp.ok) throw new Error(`${json.error}: ${json.message}`);
  return json as T;
}

async function submit() {
  if (!state.payload) return banner("Load an ECG first.");
  const seq = ++state.predictSeq;
  $("result").classList.add("pending");
  try {
    const r = await post<Prediction>("/v1/predict", { ...state.payload, clinical: clinical() });
    if (seq !== state.predictSeq) return; // a newer request superseded this one
    const prev = state.last;
    state.last = r;
    $("probability").textContent = `${(r.probability * 100).toFixed(1)}%`;
    const badge = $("risk-badge");
    badge.textContent = `${r.high_risk ? "High risk" : "Low risk"} (threshold ${(r.threshold * 100).toFixed(1)}%)`;
    badge.className = r.high_risk ? "badge high" : "badge low";
    const rb = $("rcri-badge");
    rb.textContent = r.rcri ? `RCRI ${r.rcri.score} (${r.rcri.high_risk ? "high" : "low"})` : "RCRI not assessed";
    rb.className = r.rcri?.high_risk ? "badge high" : "badge low";
    $("delta").textContent = prev
      ? `Δ ${((r.probability - prev.probability) * 100).toFixed(1)} pts vs previous`
      : "";
    $("result").classList.remove("stale", "pending");
    banner("");
  } catch (e) {
    if (seq !== state.predictSeq) return;
    $("result").classList.remove("pending");
    if (state.last) $("result").classList.add("stale");
    banner(String(e));
  }
}

async function explain() {
  if (!state.payload) return banner("Load an ECG first.");
  const seq = ++state.explainSeq;
  try {
    const r = await post<{ heatmap: Heatmap }>("/v1/explain", {
      ...state.payload,
      clinical: clinical(),
      n_samples: Number(($("n-samples") as HTMLInputElement).value),
      seed: 0,
    });
    if (seq !== state.explainSeq) return;
    state.heatmap = r.heatmap;
    drawStrips();
    showLegend();
  } catch (e) {
    if (seq === state.explainSeq) banner(`Explain failed: ${e}`);
  }
}

async function load(file: File) {
  try {
    if (file.name.toLowerCase().endsWith(".csv")) {
      const text = await file.text();
      state.ecg = parseCsv(text);
      state.payload = { ecg_csv: text };
    } else {
      const buf = await file.arrayBuffer();
      state.ecg = parseBinary(buf);
      let bin = "";
      new Uint8Array(buf).forEach((b) => (bin += String.fromCharCode(b)));
      state.payload = { ecg_base64: btoa(bin) };
    }
    state.heatmap = null;
    state.last = null;
    banner(`Loaded ${file.name}`, "info");
  } catch (e) {
    state.ecg = null;
    state.payload = null;
    banner(e instanceof EcgParseError ? `${e.reason}: ${e.message}` : String(e));
  }
  drawStrips();
  showLegend();
}

function init() {
  $("ecg-file").addEventListener("change", (ev) => {
    const f = (ev.target as HTMLInputElement).files?.[0];
    if (f) void load(f);
  });
  $("submit").addEventListener("click", () => void submit());
  $("explain").addEventListener("click", () => void explain());
  for (const f of [...FLAGS, "skip-clinical", "age", "sex"]) {
    $(f).addEventListener("change", () => {
      if (state.last) void submit(); // what-if: re-query with the new values
    });
  }
  fetch("/v1/model")
    .then((r) => r.json())
    .then((m) => ($("model-info").textContent = `target ${m.target}; threshold ${(m.threshold * 100).toFixed(1)}%`))
    .catch(() => banner("Service unavailable."));
}

init();
