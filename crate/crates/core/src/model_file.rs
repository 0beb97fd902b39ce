//! Binary model files.
//!
//! Layout: magic `DPRS`, format version (u32 LE), header length (u32 LE),
//! UTF-8 header, then every parameter as f32 LE values in manifest order.
//! The header has `[config]`, `[words]`, `[tags]`, `[labels]` and `[params]`
//! sections; symbols are escaped so that tabs and newlines survive.

use std::io::Write as _;

use crate::autodiff::ParameterStore;
use crate::config::ExperimentConfig;
use crate::encoder::Vocab;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DPRS";
pub const VERSION: u32 = 1;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::ModelFormat(format!("bad escape \\{other:?} in header"))),
        }
    }
    Ok(out)
}

pub fn to_bytes(config: &ExperimentConfig, vocab: &Vocab, store: &ParameterStore) -> Vec<u8> {
    let mut header = String::from("[config]\n");
    header.push_str(&config.to_text());
    header.push_str("[words]\n");
    for (w, f) in vocab.words.symbols().iter().zip(&vocab.word_freq) {
        header.push_str(&format!("{}\t{f}\n", escape(w)));
    }
    header.push_str("[tags]\n");
    for t in vocab.tags.symbols() {
        header.push_str(&escape(t));
        header.push('\n');
    }
    header.push_str("[labels]\n");
    for l in vocab.labels.symbols() {
        header.push_str(&escape(l));
        header.push('\n');
    }
    header.push_str("[params]\n");
    for p in store.params() {
        header.push_str(&format!("{}\t{}\t{}\n", escape(&p.name), p.rows, p.cols));
    }
    let mut out = Vec::with_capacity(12 + header.len() + 4 * store.num_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for p in store.params() {
        for &x in &p.value {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes
        .get(at..at + 4)
        .ok_or_else(|| Error::ModelFormat("truncated file".into()))?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ExperimentConfig, Vocab, ParameterStore)> {
    if bytes.get(..4) != Some(&MAGIC[..]) {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported format version {version}")));
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| Error::ModelFormat("truncated header".into()))?;
    let header = std::str::from_utf8(header).map_err(|_| Error::ModelFormat("header is not UTF-8".into()))?;

    let mut section = "";
    let mut config_text = String::new();
    let mut words = Vec::new();
    let mut tags = Vec::new();
    let mut labels = Vec::new();
    let mut manifest = Vec::new();
    for line in header.lines() {
        if line.starts_with('[') && line.ends_with(']') {
            section = match line {
                "[config]" => "config",
                "[words]" => "words",
                "[tags]" => "tags",
                "[labels]" => "labels",
                "[params]" => "params",
                _ => return Err(Error::ModelFormat(format!("unknown header section {line}"))),
            };
            continue;
        }
        let bad = || Error::ModelFormat(format!("malformed {section} line '{line}'"));
        match section {
            "config" => {
                config_text.push_str(line);
                config_text.push('\n');
            }
            "words" => {
                let (w, f) = line.rsplit_once('\t').ok_or_else(bad)?;
                words.push((unescape(w)?, f.parse().map_err(|_| bad())?));
            }
            "tags" => tags.push(unescape(line)?),
            "labels" => labels.push(unescape(line)?),
            "params" => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(bad());
                }
                let rows: usize = fields[1].parse().map_err(|_| bad())?;
                let cols: usize = fields[2].parse().map_err(|_| bad())?;
                manifest.push((unescape(fields[0])?, rows, cols));
            }
            _ => return Err(Error::ModelFormat("header does not start with a section".into())),
        }
    }
    let config = ExperimentConfig::parse(&config_text)?;
    let vocab = Vocab::from_parts(words, tags, labels);

    let payload = &bytes[12 + header_len..];
    let expected: usize = manifest.iter().map(|(_, r, c)| 4 * r * c).sum();
    if payload.len() != expected {
        return Err(Error::ModelFormat(format!(
            "payload has {} bytes, manifest needs {expected}",
            payload.len()
        )));
    }
    let mut store = ParameterStore::new();
    let mut chunks = payload.chunks_exact(4);
    for (name, rows, cols) in manifest {
        if store.id(&name).is_some() {
            return Err(Error::ModelFormat(format!("duplicate parameter {name}")));
        }
        let value = chunks
            .by_ref()
            .take(rows * cols)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        store.add(&name, rows, cols, value);
    }
    Ok((config, vocab, store))
}

pub fn save(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (ExperimentConfig, Vocab, ParameterStore) {
        let vocab = Vocab::from_parts(
            vec![("<unk>".into(), 0), ("a\tb".into(), 3), ("back\\slash".into(), 1)],
            vec!["<unk>".into(), "NOUN".into()],
            vec!["nsubj".into(), "root".into()],
        );
        let mut store = ParameterStore::new();
        store.add("w", 2, 3, vec![0.1, -0.2, 0.3, 1e-8, 5.0, -7.25]);
        store.add("b", 1, 1, vec![0.5]);
        (ExperimentConfig::default(), vocab, store)
    }

    #[test]
    fn save_load_save_is_identical() {
        let (c, v, s) = sample();
        let bytes = to_bytes(&c, &v, &s);
        let (c2, v2, s2) = from_bytes(&bytes).unwrap();
        assert_eq!(c2, c);
        assert_eq!(v2, v);
        assert_eq!(s2.snapshot(), s.snapshot());
        assert_eq!(to_bytes(&c2, &v2, &s2), bytes);
    }

    #[test]
    fn rejects_bad_files() {
        let (c, v, s) = sample();
        let mut bytes = to_bytes(&c, &v, &s);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[4] = 2;
        let err = from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
        assert!(from_bytes(b"XXXX").is_err());
    }
}
