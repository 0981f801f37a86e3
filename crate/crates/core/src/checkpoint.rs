//! Plain-text checkpoint container.
//!
//! A checkpoint is a list of named scalars and named `f64` vectors. Floats are
//! written as the hex of their IEEE-754 bits so a reload is bit-exact. The
//! last line is a SHA-256 over everything before it.
//!
//! ```text
//! longtail-checkpoint 1
//! scalar model rnn
//! scalar hidden_size 16
//! vector params 3
//! 3ff0000000000000
//! ...
//! checksum 5d41...
//! ```

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &str = "longtail-checkpoint 1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    scalars: Vec<(String, String)>,
    vectors: Vec<(String, Vec<f64>)>,
}

fn check_key(key: &str) {
    assert!(
        !key.is_empty() && !key.contains(char::is_whitespace),
        "checkpoint keys must be nonempty and whitespace-free: {key:?}"
    );
}

fn f64_hex(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn hex_f64(s: &str) -> Option<f64> {
    (s.len() == 16).then(|| u64::from_str_radix(s, 16).ok().map(f64::from_bits)).flatten()
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a scalar; the value must fit on one line.
    pub fn set(&mut self, key: &str, value: impl Display) {
        check_key(key);
        let value = value.to_string();
        assert!(!value.contains('\n'), "checkpoint values must be single-line");
        match self.scalars.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.scalars.push((key.to_string(), value)),
        }
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, f64_hex(value));
    }

    pub fn set_vector(&mut self, key: &str, values: Vec<f64>) {
        check_key(key);
        match self.vectors.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = values,
            None => self.vectors.push((key.to_string(), values)),
        }
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.scalars
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing key {key:?}")))
    }

    pub fn has(&self, key: &str) -> bool {
        self.scalars.iter().any(|(k, _)| k == key)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::Checkpoint(format!("bad value {raw:?} for {key:?}")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self.get(key)?;
        hex_f64(raw).ok_or_else(|| Error::Checkpoint(format!("bad float {raw:?} for {key:?}")))
    }

    pub fn vector(&self, key: &str) -> Result<&[f64]> {
        self.vectors
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing vector {key:?}")))
    }

    pub fn to_text(&self) -> String {
        let mut body = String::new();
        body.push_str(MAGIC);
        body.push('\n');
        for (k, v) in &self.scalars {
            body.push_str(&format!("scalar {k} {v}\n"));
        }
        for (k, vals) in &self.vectors {
            body.push_str(&format!("vector {k} {}\n", vals.len()));
            for x in vals {
                body.push_str(&f64_hex(*x));
                body.push('\n');
            }
        }
        let sum = sha256_hex(&body);
        body.push_str(&format!("checksum {sum}\n"));
        body
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let trimmed = text.strip_suffix('\n').unwrap_or(text);
        let (body, last) = match trimmed.rfind('\n') {
            Some(i) => (&text[..=i], &trimmed[i + 1..]),
            None => return Err(Error::Checkpoint("truncated checkpoint".into())),
        };
        let sum = last
            .strip_prefix("checksum ")
            .ok_or_else(|| Error::Checkpoint("missing checksum line".into()))?;
        if sha256_hex(body) != sum {
            return Err(Error::ChecksumMismatch);
        }

        let mut lines = body.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut out = Self::new();
        while let Some(line) = lines.next() {
            let mut parts = line.splitn(3, ' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("scalar"), Some(k), Some(v)) => out.scalars.push((k.to_string(), v.to_string())),
                (Some("vector"), Some(k), Some(n)) => {
                    let n: usize = n.parse().map_err(|_| Error::Checkpoint(format!("bad length in {line:?}")))?;
                    let vals = (0..n)
                        .map(|_| lines.next().and_then(hex_f64))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| Error::Checkpoint(format!("vector {k:?} is truncated or malformed")))?;
                    out.vectors.push((k.to_string(), vals));
                }
                _ => return Err(Error::Checkpoint(format!("unrecognized line {line:?}"))),
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
