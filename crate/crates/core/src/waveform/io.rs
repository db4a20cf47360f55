//! ECG file formats.
//!
//! CSV: a header row of lead names followed by one row per sample, values
//! in decimal millivolts. Binary: `PECG` magic, u32 version, u32 lead count,
//! u32 sample count, f32 sample rate, then lead-major little-endian f32.

use std::io::{Read, Write};
use std::path::Path;

use super::ecg::{validate_ecg, EcgMeta, EcgRecord, RawEcg, LEAD_NAMES, N_LEADS, N_SAMPLES, SAMPLE_RATE_HZ};
use super::WaveformError;

pub const BINARY_MAGIC: &[u8; 4] = b"PECG";
pub const BINARY_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcgFileFormat {
    Csv,
    Binary,
}

impl EcgFileFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EcgFileFormat::Csv,
            _ => EcgFileFormat::Binary,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            EcgFileFormat::Csv => "csv",
            EcgFileFormat::Binary => "pecg",
        }
    }
}

/// Parses CSV text into raw leads keyed by header name. Empty cells read as NaN.
pub fn read_csv<R: Read>(reader: R) -> Result<RawEcg, WaveformError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut leads: Vec<Vec<f32>> = vec![Vec::with_capacity(N_SAMPLES); names.len()];
    for (row_idx, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != names.len() {
            return Err(WaveformError::Format(format!(
                "row {} has {} fields, header has {}",
                row_idx + 1,
                row.len(),
                names.len()
            )));
        }
        for (lead, field) in leads.iter_mut().zip(row.iter()) {
            let value = if field.is_empty() {
                f32::NAN
            } else {
                field
                    .parse::<f32>()
                    .map_err(|e| WaveformError::Format(format!("row {}: {field:?}: {e}", row_idx + 1)))?
            };
            lead.push(value);
        }
    }
    let declared_samples = leads.first().map_or(0, Vec::len);
    Ok(RawEcg {
        declared_leads: names.len(),
        lead_names: Some(names),
        leads,
        sample_rate: SAMPLE_RATE_HZ,
        declared_samples,
    })
}

pub fn write_csv<W: Write>(ecg: &EcgRecord, writer: W) -> Result<(), WaveformError> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    wtr.write_record(LEAD_NAMES)?;
    let mut row: Vec<String> = Vec::with_capacity(N_LEADS);
    for s in 0..N_SAMPLES {
        row.clear();
        row.extend((0..N_LEADS).map(|l| ecg.lead(l)[s].to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn encode_binary(ecg: &EcgRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + N_LEADS * N_SAMPLES * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(N_LEADS as u32).to_le_bytes());
    out.extend_from_slice(&(N_SAMPLES as u32).to_le_bytes());
    out.extend_from_slice(&ecg.sample_rate().to_le_bytes());
    for v in ecg.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes the binary container. The declared shape is reported as-is so
/// that [`validate_ecg`] can reject it with the right reason.
pub fn decode_binary(bytes: &[u8]) -> Result<RawEcg, WaveformError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != BINARY_MAGIC {
        return Err(WaveformError::Format("missing PECG magic".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != BINARY_VERSION {
        return Err(WaveformError::Format(format!("unsupported PECG version {version}")));
    }
    let n_leads = u32_at(8) as usize;
    let n_samples = u32_at(12) as usize;
    let sample_rate = f32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes"));
    let payload = &bytes[HEADER_LEN..];
    let expected = n_leads
        .checked_mul(n_samples)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| WaveformError::Format("declared shape overflows".into()))?;
    if payload.len() != expected {
        return Err(WaveformError::Format(format!(
            "payload has {} bytes, header declares {n_leads}x{n_samples} f32 ({expected} bytes)",
            payload.len()
        )));
    }
    let leads = if n_samples == 0 {
        vec![Vec::new(); n_leads]
    } else {
        payload
            .chunks_exact(n_samples * 4)
            .map(|lead| lead.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect())
            .collect()
    };
    Ok(RawEcg { lead_names: None, leads, sample_rate, declared_leads: n_leads, declared_samples: n_samples })
}

/// Reads and validates an ECG file; the format is chosen by extension.
pub fn read_ecg_file(path: impl AsRef<Path>, meta: EcgMeta) -> Result<EcgRecord, WaveformError> {
    let path = path.as_ref();
    let raw = match EcgFileFormat::from_path(path) {
        EcgFileFormat::Csv => read_csv(std::fs::File::open(path)?)?,
        EcgFileFormat::Binary => decode_binary(&std::fs::read(path)?)?,
    };
    Ok(validate_ecg(raw, meta)?)
}

pub fn write_ecg_file(ecg: &EcgRecord, path: impl AsRef<Path>) -> Result<(), WaveformError> {
    let path = path.as_ref();
    match EcgFileFormat::from_path(path) {
        EcgFileFormat::Csv => write_csv(ecg, std::io::BufWriter::new(std::fs::File::create(path)?)),
        EcgFileFormat::Binary => Ok(std::fs::write(path, encode_binary(ecg))?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ecg() -> EcgRecord {
        let leads: Vec<Vec<f32>> = (0..N_LEADS)
            .map(|l| (0..N_SAMPLES).map(|s| ((l * 7 + s) as f32 * 0.013).sin() * 1.37 + 1e-7 * s as f32).collect())
            .collect();
        validate_ecg(RawEcg::from_leads(leads, 500.0), EcgMeta::anonymous()).unwrap()
    }

    #[test]
    fn binary_header_layout() {
        let bytes = encode_binary(&sample_ecg());
        assert_eq!(&bytes[..4], b"PECG");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 12);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 5000);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 500.0);
        assert_eq!(bytes.len(), 20 + 12 * 5000 * 4);
    }

    #[test]
    fn csv_to_binary_and_back_is_sample_identical() {
        let ecg = sample_ecg();
        let mut csv_bytes = Vec::new();
        write_csv(&ecg, &mut csv_bytes).unwrap();
        let from_csv = validate_ecg(read_csv(&csv_bytes[..]).unwrap(), EcgMeta::anonymous()).unwrap();
        let bin = encode_binary(&from_csv);
        let from_bin = validate_ecg(decode_binary(&bin).unwrap(), EcgMeta::anonymous()).unwrap();
        assert_eq!(from_bin.samples(), ecg.samples());
        let mut csv_again = Vec::new();
        write_csv(&from_bin, &mut csv_again).unwrap();
        assert_eq!(csv_again, csv_bytes);
    }

    #[test]
    fn eleven_column_csv_is_missing_lead() {
        let mut text = LEAD_NAMES[..11].join(",");
        text.push('\n');
        for _ in 0..N_SAMPLES {
            text.push_str(&vec!["0.1"; 11].join(","));
            text.push('\n');
        }
        let raw = read_csv(text.as_bytes()).unwrap();
        let err = validate_ecg(raw, EcgMeta::anonymous()).unwrap_err();
        assert_eq!(err.reason(), "MissingLead");
    }

    #[test]
    fn eleven_lead_binary_is_missing_lead() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PECG");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&11u32.to_le_bytes());
        bytes.extend_from_slice(&5000u32.to_le_bytes());
        bytes.extend_from_slice(&500f32.to_le_bytes());
        bytes.extend(std::iter::repeat(0u8).take(11 * 5000 * 4));
        let err = validate_ecg(decode_binary(&bytes).unwrap(), EcgMeta::anonymous()).unwrap_err();
        assert_eq!(err.reason(), "MissingLead");
    }

    #[test]
    fn truncated_or_foreign_binary_is_format_error() {
        let mut bytes = encode_binary(&sample_ecg());
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode_binary(&bytes), Err(WaveformError::Format(_))));
        assert!(matches!(decode_binary(b"NOPE...................."), Err(WaveformError::Format(_))));
        let mut v2 = encode_binary(&sample_ecg());
        v2[4] = 2;
        assert!(matches!(decode_binary(&v2), Err(WaveformError::Format(_))));
    }

    #[test]
    fn file_round_trip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let ecg = sample_ecg();
        for name in ["a.csv", "a.pecg"] {
            let path = dir.path().join(name);
            write_ecg_file(&ecg, &path).unwrap();
            let back = read_ecg_file(&path, EcgMeta::anonymous()).unwrap();
            assert_eq!(back.samples(), ecg.samples());
        }
    }
}
