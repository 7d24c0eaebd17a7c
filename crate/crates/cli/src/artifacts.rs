//! On-disk artifacts shared between stages.
//!
//! Feature file layout (little-endian): magic `SGFT`, `u32` version,
//! `u32` count, `u32` dimension, then per record `u32` user, `u8` label
//! (0 genuine, 1 simple, 2 skilled), `u32` index and `dimension` `f32`s.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use sigver::protocol::SampleKind;
use sigver::svm::GridPoint;

use crate::error::{CliError, CliResult};

pub const FEATURE_MAGIC: [u8; 4] = *b"SGFT";
pub const FEATURE_VERSION: u32 = 1;

pub const PREP_DIR: &str = "prep";
pub const WI_DIR: &str = "wi";
pub const FEATURE_DIR: &str = "features";
pub const GRID_DIR: &str = "grid";
pub const WD_DIR: &str = "wd";
pub const REPORT_DIR: &str = "report";

/// Fails with a stage-order error naming the stage that produces `path`.
pub fn require(path: &Path, producer: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::StageOrder {
            artifact: path.to_path_buf(),
            hint: format!("run `sigver {producer}` first"),
        })
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}

pub fn open(path: &Path) -> CliResult<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(format!("opening {}", path.display()), e))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `provenance.txt` in `dir`: the config digest and a checksum of
/// each listed output.
pub fn write_provenance(dir: &Path, stage: &str, digest: &str, outputs: &[PathBuf]) -> CliResult<()> {
    let mut text = format!("stage {stage}\nconfig {digest}\n");
    for p in outputs {
        let name = p.strip_prefix(dir).unwrap_or(p);
        let _ = writeln!(text, "{} sha256 {}", name.display(), sha256_file(p)?);
    }
    write_bytes(&dir.join("provenance.txt"), text.as_bytes())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub user: usize,
    pub kind: SampleKind,
    pub index: usize,
    pub values: Vec<f32>,
}

fn kind_tag(kind: SampleKind) -> u8 {
    match kind {
        SampleKind::Genuine => 0,
        SampleKind::Simple => 1,
        SampleKind::Skilled => 2,
    }
}

fn format_err(msg: impl Into<String>) -> CliError {
    CliError::Core(sigver::Error::Format(msg.into()))
}

fn u32_of(v: usize, what: &str) -> CliResult<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| format_err(format!("{what} {v} does not fit the feature file")))
}

pub fn write_features<W: Write>(mut w: W, records: &[FeatureRecord]) -> CliResult<()> {
    let dim = records.first().map_or(0, |r| r.values.len());
    if records.iter().any(|r| r.values.len() != dim) {
        return Err(format_err("feature records differ in dimension"));
    }
    let io = |e| CliError::io("writing features", e);
    let mut head = FEATURE_MAGIC.to_vec();
    head.extend(FEATURE_VERSION.to_le_bytes());
    head.extend(u32_of(records.len(), "record count")?);
    head.extend(u32_of(dim, "dimension")?);
    w.write_all(&head).map_err(io)?;
    let mut buf = Vec::with_capacity(9 + 4 * dim);
    for r in records {
        buf.clear();
        buf.extend(u32_of(r.user, "user id")?);
        buf.push(kind_tag(r.kind));
        buf.extend(u32_of(r.index, "sample index")?);
        for v in &r.values {
            buf.extend(v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features<R: Read>(mut r: R) -> CliResult<Vec<FeatureRecord>> {
    let mut word = [0u8; 4];
    let mut next = |r: &mut R| -> CliResult<u32> {
        r.read_exact(&mut word).map_err(|e| CliError::io("reading features", e))?;
        Ok(u32::from_le_bytes(word))
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| CliError::io("reading features", e))?;
    if magic != FEATURE_MAGIC {
        return Err(format_err("not a feature file (bad magic)"));
    }
    let version = next(&mut r)?;
    if version != FEATURE_VERSION {
        return Err(format_err(format!("feature file version {version}, expected {FEATURE_VERSION}")));
    }
    let count = next(&mut r)? as usize;
    let dim = next(&mut r)? as usize;
    let mut records = Vec::with_capacity(count);
    let mut body = vec![0u8; 4 * dim];
    for _ in 0..count {
        let user = next(&mut r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(|e| CliError::io("reading features", e))?;
        let kind = match tag[0] {
            0 => SampleKind::Genuine,
            1 => SampleKind::Simple,
            2 => SampleKind::Skilled,
            t => return Err(format_err(format!("unknown label tag {t}"))),
        };
        let index = next(&mut r)? as usize;
        r.read_exact(&mut body).map_err(|e| CliError::io("reading features", e))?;
        let values = body.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        records.push(FeatureRecord { user, kind, index, values });
    }
    Ok(records)
}

pub fn save_features(path: &Path, records: &[FeatureRecord]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
    write_features(BufWriter::new(file), records)
}

/// Selected grid point plus the full error table.
pub fn render_grid(best: GridPoint, best_error: f64, table: &[(GridPoint, f64)], digest: &str) -> String {
    let mut s = format!("# config {digest}\nc = {:?}\ngamma = {:?}\nerror = {:?}\n# c gamma mean_error\n", best.c, best.gamma, best_error);
    for (p, e) in table {
        let _ = writeln!(s, "# {:?} {:?} {:?}", p.c, p.gamma, e);
    }
    s
}

pub fn parse_grid(text: &str) -> CliResult<GridPoint> {
    let kv = crate::config::parse_pairs(text)?;
    let get = |k: &str| -> CliResult<f64> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(format!("grid result lacks a valid '{k}'")))
    };
    Ok(GridPoint {
        c: get("c")?,
        gamma: get("gamma")?,
    })
}
