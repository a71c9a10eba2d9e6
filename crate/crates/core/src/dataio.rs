//! On-disk formats: SBE1 labeled matrices, the per-s manifest, and score reports.
//!
//! SBE1 layout (all little-endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `SBE1` |
//! | 4 | 4 | version (u32) = 1 |
//! | 8 | 8 | rows (u64) |
//! | 16 | 8 | cols (u64) |
//! | 24 | 8 | s (f64) |
//! | 32 | 4 | provenance length (u32) |
//! | 36 | len | provenance (UTF-8) |
//!
//! followed by `rows` i8 labels (+1/−1) and `rows × cols` f32 values in row-major order.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{BoundCurve, ScoreReport};
use crate::synth::LabeledMatrix;

pub const SBE_MAGIC: [u8; 4] = *b"SBE1";
pub const SBE_VERSION: u32 = 1;
/// Header bytes before the provenance string.
pub const SBE_FIXED_HEADER: usize = 36;
pub const MANIFEST_VERSION: u32 = 1;

/// Decoded SBE1 header.
#[derive(Debug, Clone, PartialEq)]
pub struct SbeHeader {
    pub rows: u64,
    pub cols: u64,
    pub s_value: f64,
    pub provenance: String,
}

impl SbeHeader {
    pub fn encoded_len(&self) -> usize {
        SBE_FIXED_HEADER + self.provenance.len()
    }

    /// Total file size implied by the header, if it fits in a u64.
    pub fn file_len(&self) -> Option<u64> {
        let payload = self.rows.checked_mul(self.cols)?.checked_mul(4)?;
        payload
            .checked_add(self.rows)?
            .checked_add(self.encoded_len() as u64)
    }
}

fn encode(matrix: &LabeledMatrix, s_value: f64) -> Result<Vec<u8>> {
    if !s_value.is_finite() {
        return Err(Error::InvalidArgument(format!("s value {s_value} is not finite")));
    }
    let prov = matrix.provenance.as_bytes();
    let prov_len = u32::try_from(prov.len())
        .map_err(|_| Error::InvalidArgument("provenance longer than 4 GiB".into()))?;
    let mut buf = Vec::with_capacity(SBE_FIXED_HEADER + prov.len() + matrix.rows() * (1 + 4 * matrix.cols()));
    buf.extend_from_slice(&SBE_MAGIC);
    buf.extend_from_slice(&SBE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    buf.extend_from_slice(&s_value.to_le_bytes());
    buf.extend_from_slice(&prov_len.to_le_bytes());
    buf.extend_from_slice(prov);
    buf.extend(matrix.labels().iter().map(|&l| l as u8));
    for &x in matrix.data() {
        let f = x as f32;
        if !f.is_finite() {
            return Err(Error::InvalidArgument(format!("value {x} does not fit in 32 bits")));
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    Ok(buf)
}

pub fn write_sbe(path: impl AsRef<Path>, matrix: &LabeledMatrix, s_value: f64) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(matrix, s_value)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.pos as u64 + n as u64,
                found: self.bytes.len() as u64,
            }),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice has length N"))
    }
}

/// Parses and validates an SBE1 header from the start of `bytes`.
pub fn parse_sbe_header(bytes: &[u8], path: &Path) -> Result<SbeHeader> {
    let mut cur = Cursor { bytes, pos: 0, path };
    if cur.array::<4>()? != SBE_MAGIC {
        return Err(Error::format(path, "bad magic, expected SBE1"));
    }
    let version = u32::from_le_bytes(cur.array()?);
    if version != SBE_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(cur.array()?);
    let cols = u64::from_le_bytes(cur.array()?);
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, format!("empty shape {rows}x{cols}")));
    }
    let s_value = f64::from_le_bytes(cur.array()?);
    if !s_value.is_finite() {
        return Err(Error::format(path, "non-finite s value"));
    }
    let prov_len = u32::from_le_bytes(cur.array()?) as usize;
    let provenance = std::str::from_utf8(cur.take(prov_len)?)
        .map_err(|_| Error::format(path, "provenance is not valid UTF-8"))?
        .to_string();
    Ok(SbeHeader {
        rows,
        cols,
        s_value,
        provenance,
    })
}

pub fn decode_sbe(bytes: &[u8], path: &Path) -> Result<(LabeledMatrix, f64)> {
    let header = parse_sbe_header(bytes, path)?;
    let expected = header
        .file_len()
        .ok_or_else(|| Error::format(path, "declared shape overflows"))?;
    if expected != bytes.len() as u64 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let (rows, cols) = (header.rows as usize, header.cols as usize);
    let start = header.encoded_len();
    let labels: Vec<i8> = bytes[start..start + rows].iter().map(|&b| b as i8).collect();
    if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::format(path, format!("label {bad} is not +1 or -1")));
    }
    let data: Vec<f64> = bytes[start + rows..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect();
    let matrix = LabeledMatrix::new(rows, cols, data, labels, header.provenance)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((matrix, header.s_value))
}

pub fn read_sbe(path: impl AsRef<Path>) -> Result<(LabeledMatrix, f64)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sbe(&bytes, path)
}

/// Index of the per-s SBE files of one synthetic or embedded data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Column count shared by every file.
    pub dim: usize,
    pub s_grid: Vec<f64>,
    /// Paths relative to the manifest's directory, one per s-value.
    pub files: Vec<String>,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_class: Option<usize>,
}

impl Manifest {
    fn validate(&self, path: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::format(path, format!("unsupported manifest version {}", self.version)));
        }
        if self.s_grid.is_empty() || self.s_grid.len() != self.files.len() {
            return Err(Error::format(
                path,
                format!("{} s-values but {} files", self.s_grid.len(), self.files.len()),
            ));
        }
        Ok(())
    }

    /// File paths resolved against the directory holding `manifest_path`.
    pub fn resolve(&self, manifest_path: &Path) -> Vec<PathBuf> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
        self.files.iter().map(|f| base.join(f)).collect()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    manifest.validate(path)?;
    write_json(path, manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    manifest.validate(path)?;
    Ok(manifest)
}

/// Reads a manifest and every file it lists, checking each file's s-value and
/// width against the manifest.
pub fn load_manifest_data(path: impl AsRef<Path>) -> Result<(Manifest, Vec<LabeledMatrix>)> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let mut out = Vec::with_capacity(manifest.files.len());
    for (file, &s) in manifest.resolve(path).iter().zip(&manifest.s_grid) {
        let (m, s_file) = read_sbe(file)?;
        if (s_file - s).abs() > 1e-12 * s.abs().max(1.0) {
            return Err(Error::format(file, format!("s = {s_file} but manifest lists {s}")));
        }
        if m.cols() != manifest.dim {
            return Err(Error::format(
                file,
                format!("{} columns but manifest dim is {}", m.cols(), manifest.dim),
            ));
        }
        out.push(m);
    }
    Ok((manifest, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Domain(format!("unknown report format '{other}'"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

#[derive(Debug, Serialize)]
struct ReportDocument<'a> {
    config_digest: &'a str,
    reports: &'a [ScoreReport],
    curves: &'a [BoundCurve],
}

/// Unique values in first-appearance order.
fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Table of scores: one row per a_t, one `eps=<ε>` column per budget.
pub fn render_score_table(reports: &[ScoreReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Domain("no reports to write".into()));
    }
    let eps = distinct(reports.iter().map(|r| r.epsilon));
    let a_ts = distinct(reports.iter().map(|r| r.a_t.value()));
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("a_t".to_string())
        .chain(eps.iter().map(|e| format!("eps={e:?}")))
        .collect();
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for &a in &a_ts {
        let mut row = vec![format!("{a:?}")];
        for &e in &eps {
            let cell = reports
                .iter()
                .find(|r| r.epsilon == e && r.a_t.value() == a)
                .map(|r| format!("{:?}", r.score))
                .unwrap_or_default();
            row.push(cell);
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn render_report_json(reports: &[ScoreReport], curves: &[BoundCurve]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Domain("no reports to write".into()));
    }
    let doc = ReportDocument {
        config_digest: &reports[0].config_digest,
        reports,
        curves,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|source| Error::Json {
        path: PathBuf::new(),
        source,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(
    reports: &[ScoreReport],
    curves: &[BoundCurve],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => render_report_json(reports, curves),
        ReportFormat::Csv => render_score_table(reports),
    }?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Curve values side by side for plotting: an `a_t` column, then one column per
/// curve (`reference` or `eps=<ε>`). All curves must share one a-grid.
pub fn render_curves_csv(curves: &[BoundCurve]) -> Result<String> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Domain("no curves to write".into()))?;
    if curves.iter().any(|c| c.a_grid != first.a_grid) {
        return Err(Error::InvalidArgument("curves use different a-grids".into()));
    }
    let mut out = String::from("a_t");
    for c in curves {
        match c.kind {
            crate::scoring::CurveKind::Reference => out.push_str(",reference"),
            crate::scoring::CurveKind::Representation => out.push_str(&format!(",eps={:?}", c.epsilon)),
        }
    }
    out.push('\n');
    for (i, a) in first.a_grid.iter().enumerate() {
        out.push_str(&format!("{a:?}"));
        for c in curves {
            out.push_str(&format!(",{:?}", c.values[i]));
        }
        out.push('\n');
    }
    Ok(out)
}
