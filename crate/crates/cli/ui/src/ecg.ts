// Client-side ECG decoding for display only. Mirrors the service's
// validation reasons so a bad file is rejected before any request.

export const LEAD_NAMES = ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"];
export const N_SAMPLES = 5000;
export const SAMPLE_RATE = 500;

export interface Ecg {
  leads: Float32Array[];
}

export class EcgParseError extends Error {
  constructor(public reason: string, message: string) {
    super(message);
  }
}

function check(leads: Float32Array[]): Ecg {
  if (leads.length < LEAD_NAMES.length) {
    throw new EcgParseError("MissingLead", `expected 12 leads, found ${leads.length}`);
  }
  if (leads.length > LEAD_NAMES.length) {
    throw new EcgParseError("BadShape", `expected 12 leads, found ${leads.length}`);
  }
  leads.forEach((l, i) => {
    if (l.length !== N_SAMPLES) {
      throw new EcgParseError("BadShape", `lead ${LEAD_NAMES[i]} has ${l.length} samples`);
    }
    if (l.every((v) => Number.isNaN(v))) {
      throw new EcgParseError("MissingLead", `lead ${LEAD_NAMES[i]} is empty`);
    }
  });
  return { leads };
}

export function parseCsv(text: string): Ecg {
  const rows = text.trim().split(/\r?\n/);
  const header = rows[0].split(",").map((s) => s.trim());
  const cols = header.map(() => [] as number[]);
  for (let r = 1; r < rows.length; r++) {
    const fields = rows[r].split(",");
    if (fields.length !== header.length) {
      throw new EcgParseError("MalformedEcg", `row ${r} has ${fields.length} fields`);
    }
    fields.forEach((f, c) => cols[c].push(f.trim() === "" ? NaN : Number(f)));
  }
  const byName = new Map(header.map((h, i) => [h, Float32Array.from(cols[i])]));
  for (const h of header) {
    if (!LEAD_NAMES.includes(h)) throw new EcgParseError("BadShape", `unknown lead ${h}`);
  }
  const missing = LEAD_NAMES.filter((n) => !byName.has(n));
  if (missing.length > 0 && header.length < 12) {
    throw new EcgParseError("MissingLead", `missing ${missing.join(", ")}`);
  }
  return check(LEAD_NAMES.filter((n) => byName.has(n)).map((n) => byName.get(n)!));
}

export function parseBinary(buf: ArrayBuffer): Ecg {
  const view = new DataView(buf);
  const magic = String.fromCharCode(...new Uint8Array(buf.slice(0, 4)));
  if (buf.byteLength < 20 || magic !== "PECG") throw new EcgParseError("MalformedEcg", "missing PECG magic");
  const nLeads = view.getUint32(8, true);
  const nSamples = view.getUint32(12, true);
  if (buf.byteLength !== 20 + nLeads * nSamples * 4) {
    throw new EcgParseError("MalformedEcg", "payload length does not match header");
  }
  if (view.getFloat32(16, true) !== SAMPLE_RATE) throw new EcgParseError("BadRate", "sample rate is not 500 Hz");
  const leads: Float32Array[] = [];
  for (let l = 0; l < nLeads; l++) {
    const lead = new Float32Array(nSamples);
    for (let s = 0; s < nSamples; s++) lead[s] = view.getFloat32(20 + 4 * (l * nSamples + s), true);
    leads.push(lead);
  }
  return check(leads);
}

// Min and max per pixel column, for drawing a long strip at screen width.
export function decimate(lead: Float32Array, width: number): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  for (let x = 0; x < width; x++) {
    const a = Math.floor((x * lead.length) / width);
    const b = Math.max(a + 1, Math.floor(((x + 1) * lead.length) / width));
    let lo = Infinity;
    let hi = -Infinity;
    for (let i = a; i < b; i++) {
      lo = Math.min(lo, lead[i]);
      hi = Math.max(hi, lead[i]);
    }
    out.push([lo, hi]);
  }
  return out;
}
