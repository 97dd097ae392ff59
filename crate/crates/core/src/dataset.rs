//! On-disk labelled datasets: one directory holding `manifest.json` plus one
//! file per sample, in a text (CSV) or compact binary variant.
//!
//! CSV sample files are flexible-width records: `key,value…` metadata rows
//! (`version`, `dim`, `index`, `start_index`, `end_index`, `label`, `sr`,
//! `generating_regime`, `source`, `permutation`) followed by `dim` matrix
//! rows. Binary files start with magic `SPDRSAMP` and a `u32` version, then
//! hold the same fields little-endian with the matrix column-major.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::regimes::{Regime, RegimeLabel, SampleSource, WindowedSample};
use crate::spd::{Mat, SpdMatrix};
use crate::synth::SyntheticSample;

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const BINARY_MAGIC: &[u8; 8] = b"SPDRSAMP";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    Csv,
    Binary,
}

impl SampleFormat {
    fn extension(self) -> &'static str {
        match self {
            SampleFormat::Csv => "csv",
            SampleFormat::Binary => "bin",
        }
    }
}

/// A labelled window plus its generation metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSample {
    pub window: WindowedSample,
    pub generating_regime: Option<Regime>,
    /// Identity for empirical data.
    pub permutation: Vec<usize>,
}

impl From<&SyntheticSample> for DatasetSample {
    fn from(s: &SyntheticSample) -> Self {
        DatasetSample {
            window: s.to_windowed(),
            generating_regime: Some(s.generating_regime),
            permutation: s.permutation.clone(),
        }
    }
}

impl From<&WindowedSample> for DatasetSample {
    fn from(w: &WindowedSample) -> Self {
        DatasetSample {
            window: w.clone(),
            generating_regime: None,
            permutation: (0..w.corr.dim()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub total: usize,
    pub stressed: usize,
    pub normal: usize,
    pub rally: usize,
}

impl LabelCounts {
    pub fn of<'a>(labels: impl Iterator<Item = &'a Regime>) -> Self {
        let mut c = LabelCounts {
            total: 0,
            stressed: 0,
            normal: 0,
            rally: 0,
        };
        for r in labels {
            c.total += 1;
            match r {
                Regime::Stressed => c.stressed += 1,
                Regime::Normal => c.normal += 1,
                Regime::Rally => c.rally += 1,
            }
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// `synthetic`, `empirical` or `block_resampled`.
    pub kind: String,
    pub format: SampleFormat,
    pub dim: usize,
    /// Generation parameters echoed verbatim.
    pub spec: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub counts: LabelCounts,
    pub files: Vec<FileEntry>,
    /// SHA-256 over the sample file digests, in file order.
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<DatasetSample>,
}

impl Dataset {
    pub fn windows(&self) -> Vec<WindowedSample> {
        self.samples.iter().map(|s| s.window.clone()).collect()
    }
}

fn source_tag(s: SampleSource) -> u8 {
    match s {
        SampleSource::Empirical => 0,
        SampleSource::Synthetic => 1,
        SampleSource::BlockResampled => 2,
    }
}

fn source_from(s: &str) -> Result<SampleSource> {
    match s {
        "empirical" => Ok(SampleSource::Empirical),
        "synthetic" => Ok(SampleSource::Synthetic),
        "block_resampled" => Ok(SampleSource::BlockResampled),
        other => Err(Error::Format(format!("unknown sample source {other:?}"))),
    }
}

pub fn sample_to_csv(index: usize, s: &DatasetSample) -> String {
    let w = &s.window;
    let n = w.corr.dim();
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push(',');
        out.push_str(&v);
        out.push('\n');
    };
    line("version", DATASET_VERSION.to_string());
    line("dim", n.to_string());
    line("index", index.to_string());
    line("start_index", w.start_index.to_string());
    line("end_index", w.end_index.to_string());
    line("label", w.label.regime.to_string());
    line("sr", w.label.sr_value.to_string());
    line(
        "generating_regime",
        s.generating_regime.map(|r| r.to_string()).unwrap_or_default(),
    );
    line("source", w.source.as_str().to_string());
    line(
        "permutation",
        s.permutation.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
    );
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| w.corr.get(i, j).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn sample_from_csv(text: &str) -> Result<DatasetSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let bad = |m: &str| Error::Format(format!("sample csv: {m}"));
    let field = |k: &str, row: usize| -> Result<&csv::StringRecord> {
        let r = records.get(row).ok_or_else(|| bad(&format!("missing {k}")))?;
        if r.get(0) != Some(k) {
            return Err(bad(&format!("expected {k} at line {}", row + 1)));
        }
        Ok(r)
    };
    let value = |k: &str, row: usize| -> Result<String> { Ok(field(k, row)?.get(1).unwrap_or("").to_string()) };
    let num = |k: &str, row: usize| -> Result<usize> { value(k, row)?.parse().map_err(|_| bad(k)) };
    let version = num("version", 0)?;
    if version != DATASET_VERSION as usize {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = num("dim", 1)?;
    let start_index = num("start_index", 3)?;
    let end_index = num("end_index", 4)?;
    let regime: Regime = value("label", 5)?.parse()?;
    let sr_value: f64 = value("sr", 6)?.parse().map_err(|_| bad("sr"))?;
    let g = value("generating_regime", 7)?;
    let generating_regime = if g.is_empty() { None } else { Some(g.parse()?) };
    let source = source_from(&value("source", 8)?)?;
    let permutation = field("permutation", 9)?
        .iter()
        .skip(1)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| bad("permutation")))
        .collect::<Result<Vec<_>>>()?;
    if records.len() != 10 + n {
        return Err(bad(&format!("expected {n} matrix rows")));
    }
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        let r = &records[10 + i];
        if r.len() != n {
            return Err(bad(&format!("matrix row {i} has {} entries", r.len())));
        }
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = v.parse().map_err(|_| bad(&format!("matrix entry ({i},{j})")))?;
        }
    }
    Ok(DatasetSample {
        window: WindowedSample {
            start_index,
            end_index,
            corr: SpdMatrix::new(m)?,
            label: RegimeLabel { regime, sr_value },
            source,
        },
        generating_regime,
        permutation,
    })
}

pub fn sample_to_bytes(index: usize, s: &DatasetSample) -> Vec<u8> {
    let w = &s.window;
    let n = w.corr.dim();
    let mut out = Vec::with_capacity(64 + 8 * n * n);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(index as u64).to_le_bytes());
    out.extend_from_slice(&(w.start_index as u64).to_le_bytes());
    out.extend_from_slice(&(w.end_index as u64).to_le_bytes());
    out.push(w.label.regime.index() as u8);
    out.extend_from_slice(&w.label.sr_value.to_le_bytes());
    out.push(s.generating_regime.map(|r| r.index() as u8).unwrap_or(u8::MAX));
    out.push(source_tag(w.source));
    for &p in &s.permutation {
        out.extend_from_slice(&(p as u32).to_le_bytes());
    }
    for v in w.corr.as_mat().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn sample_from_bytes(buf: &[u8]) -> Result<DatasetSample> {
    let bad = |m: &str| Error::Format(format!("sample binary: {m}"));
    let mut pos = 0;
    let mut take = |k: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + k).ok_or_else(|| bad("truncated"))?;
        pos += k;
        Ok(s)
    };
    if take(8)? != BINARY_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_ = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let u64_ = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
    let version = u32_(take(4)?);
    if version != DATASET_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u32_(take(4)?) as usize;
    let _index = u64_(take(8)?);
    let start_index = u64_(take(8)?) as usize;
    let end_index = u64_(take(8)?) as usize;
    let regime = Regime::from_index(take(1)?[0] as usize).ok_or_else(|| bad("label"))?;
    let sr_value = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let g = take(1)?[0];
    let generating_regime = if g == u8::MAX {
        None
    } else {
        Some(Regime::from_index(g as usize).ok_or_else(|| bad("generating regime"))?)
    };
    let source = match take(1)?[0] {
        0 => SampleSource::Empirical,
        1 => SampleSource::Synthetic,
        2 => SampleSource::BlockResampled,
        _ => return Err(bad("source")),
    };
    let mut permutation = Vec::with_capacity(n);
    for _ in 0..n {
        permutation.push(u32_(take(4)?) as usize);
    }
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        data.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    if pos != buf.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(DatasetSample {
        window: WindowedSample {
            start_index,
            end_index,
            corr: SpdMatrix::new(Mat::from_vec(n, n, data))?,
            label: RegimeLabel { regime, sr_value },
            source,
        },
        generating_regime,
        permutation,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `samples` and the manifest into `dir` (created if needed).
pub fn write_dataset(
    dir: &Path,
    kind: &str,
    spec: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    samples: &[DatasetSample],
    format: SampleFormat,
) -> Result<Manifest> {
    let dim = samples.first().map(|s| s.window.corr.dim()).unwrap_or(0);
    if samples.iter().any(|s| s.window.corr.dim() != dim) {
        return Err(Error::Data("samples have mixed dimensions".into()));
    }
    let sample_dir = dir.join("samples");
    std::fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
    let mut files = Vec::with_capacity(samples.len());
    let mut all = Sha256::new();
    for (i, s) in samples.iter().enumerate() {
        let name = format!("samples/sample_{i:05}.{}", format.extension());
        let bytes = match format {
            SampleFormat::Csv => sample_to_csv(i, s).into_bytes(),
            SampleFormat::Binary => sample_to_bytes(i, s),
        };
        let digest = sha256_hex(&bytes);
        all.update(digest.as_bytes());
        write_file(&dir.join(&name), &bytes)?;
        files.push(FileEntry { file: name, sha256: digest });
    }
    let manifest = Manifest {
        version: DATASET_VERSION,
        kind: kind.to_string(),
        format,
        dim,
        spec,
        seeds,
        counts: LabelCounts::of(samples.iter().map(|s| &s.window.label.regime)),
        files,
        digest: hex::encode(all.finalize()),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    write_file(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

/// Reads a dataset directory, checking every file digest.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = manifest_path(dir);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {}", manifest.version)));
    }
    let mut samples = Vec::with_capacity(manifest.files.len());
    for f in &manifest.files {
        let path = dir.join(&f.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Error::Data(format!("digest mismatch for {}", f.file)));
        }
        samples.push(match manifest.format {
            SampleFormat::Csv => {
                sample_from_csv(std::str::from_utf8(&bytes).map_err(|_| Error::Format("sample is not UTF-8".into()))?)?
            }
            SampleFormat::Binary => sample_from_bytes(&bytes)?,
        });
    }
    Ok(Dataset { manifest, samples })
}
