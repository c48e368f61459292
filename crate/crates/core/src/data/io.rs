use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{FeatureTable, Interaction};
use crate::error::{Error, Result};

const FEATURE_MAGIC: &[u8; 4] = b"CCLF";

/// Parsed interaction records plus the count of skipped lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InteractionLog {
    /// Sorted by `(user, timestamp)`; ties keep file order.
    pub records: Vec<Interaction>,
    /// Lines that did not have exactly four tab-separated fields.
    pub malformed: usize,
}

pub fn load_interactions(path: impl AsRef<Path>) -> Result<InteractionLog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_interactions(&text, &path.display().to_string())
}

/// Parses `user_id\titem_id\ttimestamp\tlabel` lines.
///
/// A first line whose first field is not numeric is treated as a header.
/// Blank lines and lines with the wrong field count are skipped and counted;
/// a line with four fields that fail to parse is an error.
pub fn read_interactions(text: &str, source_name: &str) -> Result<InteractionLog> {
    let mut log = InteractionLog::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && fields[0].trim().parse::<u64>().is_err() {
            continue;
        }
        if fields.len() != 4 {
            log.malformed += 1;
            continue;
        }
        let err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message,
        };
        let user = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad user id {:?}", fields[0])))?;
        let item = fields[1]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad item id {:?}", fields[1])))?;
        let timestamp = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad timestamp {:?}", fields[2])))?;
        let clicked = match fields[3].trim() {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("label must be 0 or 1, got {other:?}"))),
        };
        log.records.push(Interaction {
            user,
            item,
            timestamp,
            clicked,
        });
    }
    log.records.sort_by_key(|r| (r.user, r.timestamp));
    Ok(log)
}

pub fn write_interactions(path: impl AsRef<Path>, records: &[Interaction]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(records.len() * 16);
    out.push_str("user_id\titem_id\ttimestamp\tlabel\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.user,
            r.item,
            r.timestamp,
            u8::from(r.clicked)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

impl FeatureTable {
    /// Loads the binary `CCLF` format, or CSV when the extension is `.csv`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            return Self::from_csv(&text, &path.display().to_string());
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn from_bytes(bytes: &[u8], source_name: &str) -> Result<Self> {
        let bad = |message: &str| Error::Parse {
            source_name: source_name.to_string(),
            line: 0,
            message: message.to_string(),
        };
        if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
            return Err(bad("missing CCLF header"));
        }
        let n_items = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() != n_items * dim * 4 {
            return Err(bad("payload length does not match n_items·dim"));
        }
        let rows = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        FeatureTable::new(n_items, dim, rows)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.rows.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(self.n_items as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.rows {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_csv(text: &str, source_name: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut dim = None;
        let mut n_items = 0;
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let values = parsed.map_err(|e| Error::Parse {
                source_name: source_name.to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Parse {
                        source_name: source_name.to_string(),
                        line: idx + 1,
                        message: format!("expected {d} columns, found {}", values.len()),
                    })
                }
                _ => {}
            }
            rows.extend(values);
            n_items += 1;
        }
        FeatureTable::new(n_items, dim.unwrap_or(0), rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }
}
