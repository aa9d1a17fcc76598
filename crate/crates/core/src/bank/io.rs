//! JSON Lines persistence for the knowledge bank.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BankEntry, KnowledgeBank};
use crate::error::{io_err, EraError, Result};

pub const BANK_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankHeader {
    pub version: u64,
    pub d: usize,
    pub sim: String,
    pub seed: u64,
}

impl KnowledgeBank {
    /// Header line followed by one entry per line in ascending id order.
    pub fn to_jsonl(&self) -> Result<String> {
        let header = BankHeader {
            version: BANK_FORMAT_VERSION,
            d: self.d,
            sim: "cosine".into(),
            seed: self.seed,
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for e in self.sorted_entries() {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses a bank file without building an index. An empty document is an
    /// empty bank of dimension `default_d`.
    pub fn from_jsonl(text: &str, source: &str, default_d: usize) -> Result<Self> {
        let parse_err = |line: usize, msg: String| EraError::Parse { path: source.to_string(), line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((hl, header_line)) = lines.next() else {
            return Ok(KnowledgeBank::new(default_d, 0));
        };
        let header: BankHeader =
            serde_json::from_str(header_line).map_err(|e| parse_err(hl + 1, format!("bad header: {e}")))?;
        if header.version != BANK_FORMAT_VERSION {
            return Err(EraError::Version { found: header.version, expected: BANK_FORMAT_VERSION });
        }
        if header.sim != "cosine" {
            return Err(parse_err(hl + 1, format!("unsupported similarity {:?}", header.sim)));
        }
        let mut bank = KnowledgeBank::new(header.d, header.seed);
        for (n, line) in lines {
            let entry: BankEntry = serde_json::from_str(line).map_err(|e| parse_err(n + 1, e.to_string()))?;
            bank.insert(entry).map_err(|e| parse_err(n + 1, e.to_string()))?;
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?).map_err(io_err(path))
    }

    /// Loads a bank and rebuilds its index (when non-empty) from the stored seed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut bank = Self::from_jsonl(&text, &path.display().to_string(), crate::encoder::LATENT_DIM)?;
        if !bank.is_empty() {
            bank.build_default_index()?;
        }
        Ok(bank)
    }
}
