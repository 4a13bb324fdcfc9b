//! Plain-text `key = value` configuration files.
//!
//! ```text
//! # comment
//! date_format = %m/%d/%Y
//! date_format = %m/%d/%y
//!
//! [episode]
//! start = 2017-03-01
//! ```
//!
//! Keys may repeat; order is preserved. A `[name]` line opens a new block, so
//! the same section name may appear several times.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    /// `None` for entries before the first section header.
    pub section: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Block {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvFile {
    pub name: String,
    pub blocks: Vec<Block>,
}

impl KvFile {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut blocks = vec![Block {
            section: None,
            line: 0,
            entries: Vec::new(),
        }];
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let section = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| Error::parse(name, line_no, "malformed section header"))?;
                blocks.push(Block {
                    section: Some(section.to_ascii_lowercase()),
                    line: line_no,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(name, line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(name, line_no, "empty key"));
            }
            blocks
                .last_mut()
                .expect("at least the top-level block")
                .entries
                .push(Entry {
                    key: key.to_string(),
                    value: value.trim().to_string(),
                    line: line_no,
                });
        }
        Ok(KvFile {
            name: name.to_string(),
            blocks,
        })
    }

    pub fn top(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn sections<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a Block> + 'a {
        self.blocks
            .iter()
            .filter(move |b| b.section.as_deref() == Some(section))
    }

    /// Entries of the top-level block followed by those of every `[section]` block.
    pub fn scoped<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.top()
            .entries
            .iter()
            .chain(self.sections(section).flat_map(|b| b.entries.iter()))
    }

    pub fn error(&self, entry: &Entry, msg: impl Into<String>) -> Error {
        Error::parse(&self.name, entry.line, msg)
    }

    pub fn value<T: std::str::FromStr>(&self, entry: &Entry) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        entry
            .value
            .parse()
            .map_err(|e| self.error(entry, format!("bad value for `{}`: {e}", entry.key)))
    }
}
