//! Self-describing text container shared by the dataset (`.efd`), parameter
//! pack (`.npk`) and calibration outputs.
//!
//! ```text
//! # efd v1
//! ny = 33
//! nx = 33
//! [ux 33 33]
//! 0.0000000000000000e0 1.2500000000000000e-2 ...
//! ...
//! ```
//!
//! The first line names the container kind. Header lines are `key = value`,
//! blank lines and `#` comments are ignored. Each block starts with
//! `[name rows cols]` followed by `rows` lines of `cols` numbers, row-major.
//! Numbers are written with 17 significant digits so every `f64` survives a
//! round trip bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    kind: String,
    header: Vec<(String, String)>,
    blocks: Vec<Block>,
    /// Source path, for error messages.
    origin: PathBuf,
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Container {
            kind: kind.to_string(),
            header: Vec::new(),
            blocks: Vec::new(),
            origin: PathBuf::from("<memory>"),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, format_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.header.iter().map(|(k, _)| k.as_str())
    }

    pub fn format_error(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.origin.clone(),
            msg: msg.into(),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| self.format_error(format!("missing header key `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.format_error(format!("cannot parse `{key} = {raw}`"))),
        }
    }

    pub fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| self.format_error(format!("missing header key `{key}`")))
    }

    pub fn push_block(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        debug_assert_eq!(rows * cols, data.len());
        self.blocks.push(Block {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn require_block(&self, name: &str) -> Result<&Block> {
        self.block(name)
            .ok_or_else(|| self.format_error(format!("missing block `{name}`")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} v1", self.kind);
        for (k, v) in &self.header {
            let _ = writeln!(out, "{k} = {v}");
        }
        for b in &self.blocks {
            let _ = writeln!(out, "[{} {} {}]", b.name, b.rows, b.cols);
            for r in 0..b.rows {
                let row = &b.data[r * b.cols..(r + 1) * b.cols];
                let line: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, path)
    }

    pub fn parse_text(text: &str, origin: &Path) -> Result<Self> {
        let fail = |line: usize, msg: String| Error::Format {
            path: origin.to_path_buf(),
            msg: format!("line {}: {msg}", line + 1),
        };
        let mut lines = text.lines().enumerate().peekable();
        let kind = match lines.next() {
            Some((_, first)) => {
                let mut parts = first.trim().strip_prefix('#').unwrap_or("").split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some(kind), Some("v1")) => kind.to_string(),
                    _ => return Err(fail(0, format!("expected `# <kind> v1`, found `{first}`"))),
                }
            }
            None => return Err(fail(0, "empty file".into())),
        };
        let mut container = Container::new(&kind);
        container.origin = origin.to_path_buf();

        while let Some((n, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(spec) = line.strip_prefix('[') {
                let spec = spec
                    .strip_suffix(']')
                    .ok_or_else(|| fail(n, format!("unterminated block header `{line}`")))?;
                let parts: Vec<&str> = spec.split_whitespace().collect();
                let [name, rows, cols] = parts[..] else {
                    return Err(fail(n, format!("block header must be `[name rows cols]`, found `{line}`")));
                };
                let rows: usize = rows.parse().map_err(|_| fail(n, format!("bad row count `{rows}`")))?;
                let cols: usize = cols.parse().map_err(|_| fail(n, format!("bad column count `{cols}`")))?;
                if container.block(name).is_some() {
                    return Err(fail(n, format!("duplicate block `{name}`")));
                }
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let (m, row) = lines
                        .next()
                        .ok_or_else(|| fail(n, format!("block `{name}` truncated after {r} rows")))?;
                    let before = data.len();
                    for tok in row.split_whitespace() {
                        data.push(
                            tok.parse::<f64>()
                                .map_err(|_| fail(m, format!("bad number `{tok}` in block `{name}`")))?,
                        );
                    }
                    if data.len() - before != cols {
                        return Err(fail(
                            m,
                            format!("block `{name}` row {r} has {} values, expected {cols}", data.len() - before),
                        ));
                    }
                }
                container.push_block(name, rows, cols, data);
            } else if let Some((k, v)) = line.split_once('=') {
                if !container.blocks.is_empty() {
                    return Err(fail(n, "header key after first block".into()));
                }
                let key = k.trim();
                if key.is_empty() || container.get(key).is_some() {
                    return Err(fail(n, format!("empty or duplicate key `{key}`")));
                }
                container.set(key, v.trim());
            } else {
                return Err(fail(n, format!("unrecognized line `{line}`")));
            }
        }
        Ok(container)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Container> {
        Container::parse_text(text, Path::new("test.efd"))
    }

    #[test]
    fn rejects_malformed_header() {
        assert!(parse("").is_err());
        assert!(parse("ny = 3\n").is_err());
        assert!(parse("# efd v1\nny 3\n").is_err());
        assert!(parse("# efd v1\nny = 3\nny = 4\n").is_err());
        assert!(parse("# efd v1\n[a 1 2]\n1\n").is_err());
        assert!(parse("# efd v1\n[a 2 1]\n1\n").is_err());
        assert!(parse("# efd v1\n[a 1 1]\nx\n").is_err());
        assert!(parse("# efd v1\n[a 1 1]\n1\nk = v\n").is_err());
    }

    #[test]
    fn parses_comments_and_blocks() {
        let c = parse("# efd v1\n# note\nny = 2\n\n[a 2 1]\n1.5\n-2\n").unwrap();
        assert_eq!(c.kind(), "efd");
        assert_eq!(c.parse_required::<usize>("ny").unwrap(), 2);
        assert_eq!(c.require_block("a").unwrap().data, vec![1.5, -2.0]);
        assert!(c.require("nx").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut c = Container::new("efd");
            c.set_f64("x", values[0]);
            c.push_block("v", 1, values.len(), values.clone());
            let back = parse(&c.to_text()).unwrap();
            let got = &back.require_block("v").unwrap().data;
            prop_assert_eq!(got.len(), values.len());
            for (a, b) in got.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.parse_required::<f64>("x").unwrap().to_bits(), values[0].to_bits());
        }
    }
}
