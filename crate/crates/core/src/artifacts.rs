//! Reading and writing pipeline artifacts stamped with a config hash.
//!
//! CSV artifacts start with a `# config_hash: <hex>` comment line (CSV readers
//! here skip `#` lines); JSON artifacts carry a top-level `config_hash` field.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::PredictionSummary;

pub const HASH_PREFIX: &str = "# config_hash: ";

pub const SUMMARY_COLUMNS: [&str; 7] = [
    "scorer_id",
    "argument_id",
    "mean_score",
    "score_sd",
    "na_probability",
    "na_count",
    "n_reps",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// CSV text with the hash comment, a header and the given rows.
pub fn csv_text<I>(hash: &str, header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut buf = format!("{HASH_PREFIX}{hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv buffer>", e))?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Pretty JSON with sorted keys and `config_hash` added when the value is an object.
pub fn json_text<T: Serialize>(hash: Option<&str>, value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if let (Some(h), serde_json::Value::Object(map)) = (hash, &mut v) {
        map.insert("config_hash".into(), h.into());
    }
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// The hash an artifact was stamped with, if any.
pub fn stamped_hash(text: &str) -> Option<String> {
    if let Some(rest) = text.strip_prefix(HASH_PREFIX) {
        return Some(rest.lines().next().unwrap_or("").trim().to_owned());
    }
    let v: serde_json::Value = serde_json::from_str(text).ok()?;
    v.get("config_hash")?.as_str().map(str::to_owned)
}

/// Reads an artifact, refusing it when its hash differs from `expected` unless `force`.
pub fn read_checked(path: &Path, expected: &str, force: bool) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let found = stamped_hash(&text).unwrap_or_else(|| "<none>".into());
    if found != expected {
        if !force {
            return Err(Error::HashMismatch {
                path: path.to_owned(),
                expected: expected.to_owned(),
                found,
            });
        }
        log::warn!(
            "{}: config hash {found} differs from {expected}; continuing (--force)",
            path.display()
        );
    }
    Ok(text)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Output directory that records the SHA-256 of everything written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<OutputDir> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(OutputDir {
            root,
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes `text` at the `/`-separated relative path and records its hash.
    pub fn write(&mut self, rel: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        write_file(&path, text)?;
        self.written.insert(rel.to_owned(), sha256_hex(text.as_bytes()));
        Ok(path)
    }

    pub fn written(&self) -> &BTreeMap<String, String> {
        &self.written
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| x.to_string())
}

pub fn summaries_text(hash: &str, summaries: &[PredictionSummary]) -> Result<String> {
    csv_text(
        hash,
        &SUMMARY_COLUMNS,
        summaries.iter().map(|s| {
            vec![
                s.scorer_id.clone(),
                s.argument_id.clone(),
                opt_f64(s.mean_score),
                opt_f64(s.score_sd),
                s.na_probability().to_string(),
                s.na_count.to_string(),
                s.n_reps.to_string(),
            ]
        }),
    )
}

pub fn parse_summaries(text: &str, name: &str) -> Result<Vec<PredictionSummary>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let col = |c: &str| {
        header
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::invalid(format!("{name}: missing column {c}")))
    };
    let idx: Vec<usize> = SUMMARY_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |k: usize| rec.get(idx[k]).unwrap_or("");
        let float = |k: usize| -> Result<Option<f64>> {
            match cell(k) {
                "NA" | "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::row(name, line, format!("unparseable {} {s:?}", SUMMARY_COLUMNS[k]))),
            }
        };
        let count = |k: usize| -> Result<usize> {
            cell(k)
                .parse()
                .map_err(|_| Error::row(name, line, format!("unparseable {} {:?}", SUMMARY_COLUMNS[k], cell(k))))
        };
        let s = PredictionSummary {
            scorer_id: cell(0).to_owned(),
            argument_id: cell(1).to_owned(),
            mean_score: float(2)?,
            score_sd: float(3)?,
            na_count: count(5)?,
            n_reps: count(6)?,
        };
        if s.n_reps == 0 || s.na_count > s.n_reps {
            return Err(Error::row(name, line, "need 0 <= na_count <= n_reps and n_reps >= 1"));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn read_summaries(path: &Path, expected: &str, force: bool) -> Result<Vec<PredictionSummary>> {
    parse_summaries(&read_checked(path, expected, force)?, &path.display().to_string())
}

/// Cell text for report tables: three decimals, empty when absent.
pub fn rounded(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.3}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summaries_round_trip() {
        let s = vec![
            PredictionSummary {
                scorer_id: "m".into(),
                argument_id: "a1".into(),
                mean_score: Some(12.3456789),
                score_sd: None,
                na_count: 2,
                n_reps: 3,
            },
            PredictionSummary {
                scorer_id: "m".into(),
                argument_id: "a2".into(),
                mean_score: None,
                score_sd: None,
                na_count: 3,
                n_reps: 3,
            },
        ];
        let text = summaries_text("abc", &s).unwrap();
        assert!(text.starts_with("# config_hash: abc\n"));
        assert_eq!(stamped_hash(&text).as_deref(), Some("abc"));
        assert_eq!(parse_summaries(&text, "t").unwrap(), s);
    }

    #[test]
    fn hash_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_file(&p, &json_text(Some("h1"), &serde_json::json!({"a": 1})).unwrap()).unwrap();
        assert!(read_checked(&p, "h1", false).is_ok());
        assert!(matches!(read_checked(&p, "h2", false), Err(Error::HashMismatch { .. })));
        assert!(read_checked(&p, "h2", true).is_ok());
    }
}
