//! Corpus manifest: one `path<TAB>user<TAB>label` record per line, paths
//! relative to the corpus root, ordered by user, label and index.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sigver::protocol::{Corpus, SampleKind, UserSamples};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.txt";
const HEADER: &str = "# sigver manifest v1";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Entry {
    pub user: usize,
    pub kind: SampleKind,
    pub index: usize,
    pub path: String,
}

/// `userNNN/<label>_MM.png`
pub fn relative_path(user: usize, kind: SampleKind, index: usize) -> String {
    format!("user{user:03}/{}_{index:02}.png", kind.as_str())
}

pub fn render(entries: &[Entry], digest: &str) -> String {
    let mut out = format!("{HEADER}\n# config {digest}\n");
    for e in entries {
        let _ = writeln!(out, "{}\t{}\t{}", e.path, e.user, e.kind.as_str());
    }
    out
}

/// Reads a manifest; the index of each record is its position among the
/// same user's records of the same label.
pub fn parse(text: &str) -> CliResult<Vec<Entry>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(CliError::Validation(format!("manifest does not start with '{HEADER}'")));
    }
    let mut counters: BTreeMap<(usize, SampleKind), usize> = BTreeMap::new();
    let mut entries = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [path, user, kind] = fields[..] else {
            return Err(CliError::Validation(format!("manifest line {}: expected 3 tab-separated fields", no + 2)));
        };
        let user: usize = user
            .parse()
            .map_err(|_| CliError::Validation(format!("manifest line {}: bad user id '{user}'", no + 2)))?;
        let kind: SampleKind = kind.parse()?;
        let counter = counters.entry((user, kind)).or_default();
        entries.push(Entry {
            user,
            kind,
            index: *counter,
            path: path.to_string(),
        });
        *counter += 1;
    }
    entries.sort();
    Ok(entries)
}

pub fn load(root: &Path) -> CliResult<Vec<Entry>> {
    let path = root.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(CliError::StageOrder {
            artifact: path,
            hint: "generate a corpus with `sigver datagen` or provide a manifest".into(),
        });
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse(&text)
}

/// Groups sorted entries into a corpus whose samples are positions in
/// `entries`.
pub fn corpus_of(entries: &[Entry]) -> CliResult<Corpus<usize>> {
    let mut users: Vec<UserSamples<usize>> = Vec::new();
    for (pos, e) in entries.iter().enumerate() {
        if users.last().map(|u| u.id) != Some(e.user) {
            users.push(UserSamples::new(e.user));
        }
        users.last_mut().expect("just pushed").samples_mut(e.kind).push(pos);
    }
    Ok(Corpus::new(users)?)
}
