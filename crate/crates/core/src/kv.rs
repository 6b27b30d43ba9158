//! `key: value` text files used for metadata, problem specs and solutions.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KvFile {
    path: PathBuf,
    entries: Vec<(String, String, usize)>,
    /// Lines after a `key:` line with an empty value, keyed by that key.
    blocks: Vec<(String, Vec<(usize, String)>)>,
}

impl KvFile {
    /// Parses `key: value` lines. A key with an empty value opens a block
    /// that collects every following non-key line (e.g. a CSV matrix).
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut blocks: Vec<(String, Vec<(usize, String)>)> = Vec::new();
        let mut open_block = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let key_value = line.split_once(':').filter(|(k, _)| {
                !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            });
            match key_value {
                Some((k, v)) => {
                    let v = v.trim();
                    if entries.iter().any(|(e, _, _): &(String, String, usize)| e == k)
                        || blocks.iter().any(|(b, _)| b == k)
                    {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: line_no,
                            message: format!("duplicate key `{k}`"),
                        });
                    }
                    if v.is_empty() {
                        blocks.push((k.to_string(), Vec::new()));
                        open_block = true;
                    } else {
                        entries.push((k.to_string(), v.to_string(), line_no));
                        open_block = false;
                    }
                }
                None if open_block => {
                    blocks.last_mut().expect("open block").1.push((line_no, line.to_string()));
                }
                None => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: format!("expected `key: value`, found `{line}`"),
                    })
                }
            }
        }
        Ok(KvFile {
            path: path.to_path_buf(),
            entries,
            blocks,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn missing(&self, key: &str) -> Error {
        Error::Format {
            path: self.path.clone(),
            message: format!("missing key `{key}`"),
        }
    }

    pub fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.raw(key).map(|(v, _)| v).ok_or_else(|| self.missing(key))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (v, line) = self.raw(key).ok_or_else(|| self.missing(key))?;
        v.parse().map_err(|e: T::Err| Error::Parse {
            path: self.path.clone(),
            line,
            message: format!("bad value for `{key}`: {e}"),
        })
    }

    pub fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let (v, line) = self.raw(key).ok_or_else(|| self.missing(key))?;
        parse_float_list(v).map_err(|message| Error::Parse {
            path: self.path.clone(),
            line,
            message: format!("bad list for `{key}`: {message}"),
        })
    }

    pub fn block(&self, key: &str) -> Result<&[(usize, String)]> {
        self.blocks
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, b)| b.as_slice())
            .ok_or_else(|| self.missing(key))
    }

    /// Parses a block of comma-separated rows into a dense row list.
    pub fn float_block(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        self.block(key)?
            .iter()
            .map(|(line, text)| {
                parse_float_list(text).map_err(|message| Error::Parse {
                    path: self.path.clone(),
                    line: *line,
                    message,
                })
            })
            .collect()
    }
}

pub fn parse_float_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_blocks() {
        let text = "# comment\nalpha: 1.5\nname: hello world\nH:\n1,2,3\n4,5,6\nbeta: 2\n";
        let kv = KvFile::parse(Path::new("x"), text).unwrap();
        assert_eq!(kv.get::<f64>("alpha").unwrap(), 1.5);
        assert_eq!(kv.str("name").unwrap(), "hello world");
        assert_eq!(kv.float_block("H").unwrap(), vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(kv.get::<u32>("beta").unwrap(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let kv = KvFile::parse(Path::new("f.meta"), "a: 1\nb: nope\n").unwrap();
        let err = kv.get::<f64>("b").unwrap_err().to_string();
        assert!(err.starts_with("f.meta:2:"), "{err}");
        let err = KvFile::parse(Path::new("f"), "a: 1\ngarbage line\n").unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        assert!(KvFile::parse(Path::new("f"), "a: 1\na: 2\n").is_err());
    }
}
