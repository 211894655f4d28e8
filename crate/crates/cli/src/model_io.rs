//! Model file format: a UTF-8 text header (version, dimensions, vocabularies,
//! label set, config echo, parameter directory) terminated by a `binary`
//! line, followed by the parameter blocks as little-endian 64-bit floats in
//! directory order, followed by an 8-byte FNV-1a checksum over every
//! preceding byte. Saving a loaded model reproduces the file byte for byte.

use std::path::Path;

use seqtag_core::trainer::{Checkpoint, Model, TrainConfig};
use seqtag_core::{LabelSet, Scheme, Vocab};

use crate::error::{CliError, CliResult};

const MAGIC: &str = "seqtag model v1";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Config echo in a fixed key order; parsing requires every key.
fn config_echo(config: &TrainConfig) -> Vec<(String, String)> {
    let clip = match config.clip {
        Some(v) => v.to_string(),
        None => "none".to_string(),
    };
    vec![
        ("lr".into(), config.lr.to_string()),
        ("momentum".into(), config.momentum.to_string()),
        ("epochs".into(), config.epochs.to_string()),
        ("patience".into(), config.patience.to_string()),
        ("beta".into(), config.beta.to_string()),
        ("eta".into(), config.eta.to_string()),
        ("gamma".into(), config.gamma.to_string()),
        ("zc".into(), config.zc.to_string()),
        ("zh".into(), config.zh.to_string()),
        ("hidden".into(), config.hidden.to_string()),
        ("word_dim".into(), config.word_dim.to_string()),
        ("char_dim".into(), config.char_dim.to_string()),
        ("seed".into(), config.seed.to_string()),
        ("clip".into(), clip),
        ("scheme".into(), config.scheme.to_string()),
        ("lowercase".into(), config.lowercase.to_string()),
    ]
}

fn config_from_echo(pairs: &[(String, String)]) -> CliResult<TrainConfig> {
    let mut config = TrainConfig::default();
    let get = |key: &str| -> CliResult<&str> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CliError::Data(format!("model file config echo is missing '{key}'")))
    };
    let bad = |key: &str, v: &str| CliError::Data(format!("bad config value {key}={v} in model file"));
    macro_rules! field {
        ($name:ident, $ty:ty) => {{
            let v = get(stringify!($name))?;
            config.$name = v.parse::<$ty>().map_err(|_| bad(stringify!($name), v))?;
        }};
    }
    field!(lr, f64);
    field!(momentum, f64);
    field!(epochs, usize);
    field!(patience, usize);
    field!(beta, f64);
    field!(eta, f64);
    field!(gamma, f64);
    field!(zc, f64);
    field!(zh, f64);
    field!(hidden, usize);
    field!(word_dim, usize);
    field!(char_dim, usize);
    field!(seed, u64);
    field!(lowercase, bool);
    let clip = get("clip")?;
    config.clip = if clip.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(clip.parse::<f64>().map_err(|_| bad("clip", clip))?)
    };
    let scheme = get("scheme")?;
    config.scheme = scheme.parse::<Scheme>().map_err(|_| bad("scheme", scheme))?;
    Ok(config)
}

pub fn encode_model(checkpoint: &Checkpoint) -> Vec<u8> {
    let model = &checkpoint.model;
    let mut text = String::new();
    text.push_str(MAGIC);
    text.push('\n');
    text.push_str(&format!(
        "dims word_dim={} char_dim={} hidden={} aux_dim={} labels={} words={} chars={}\n",
        model.config.word_dim,
        model.config.char_dim,
        model.config.hidden,
        model.aux_dim,
        model.labels.len(),
        model.words.len(),
        model.chars.len()
    ));
    text.push_str(&format!(
        "meta dev_f1={} epoch={}\n",
        checkpoint.dev_f1, checkpoint.epoch
    ));
    for label in model.labels.items() {
        text.push_str(&format!("label {label}\n"));
    }
    for word in model.words.items() {
        text.push_str(&format!("word {word}\n"));
    }
    for ch in model.chars.items() {
        text.push_str(&format!("char {ch}\n"));
    }
    for (key, value) in config_echo(&model.config) {
        text.push_str(&format!("config {key}={value}\n"));
    }
    let blocks = model.export_params();
    for (name, shape, _) in &blocks {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        text.push_str(&format!("param {name} {}\n", dims.join(" ")));
    }
    text.push_str("binary\n");

    let mut bytes = text.into_bytes();
    for (_, _, values) in &blocks {
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = fnv1a64(&bytes);
    bytes.extend_from_slice(&checksum.to_le_bytes());
    bytes
}

pub fn save_model(path: &Path, checkpoint: &Checkpoint) -> CliResult<()> {
    std::fs::write(path, encode_model(checkpoint))
        .map_err(|e| CliError::Config(format!("cannot write model '{}': {e}", path.display())))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> CliResult<&'a str> {
        let rest = &self.bytes[self.pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CliError::Data("model file header ended unexpectedly".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| CliError::Data("model file header is not UTF-8".into()))?;
        self.pos += nl + 1;
        Ok(line)
    }

    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Data("model file is truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

fn parse_kv(part: Option<&str>, key: &str) -> CliResult<usize> {
    part.and_then(|p| p.strip_prefix(&format!("{key}=")))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Data(format!("model file dims line is missing '{key}'")))
}

pub fn decode_model(bytes: &[u8]) -> CliResult<Checkpoint> {
    if bytes.len() < 8 {
        return Err(CliError::Data("model file is too short".into()));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a64(payload) != stored {
        return Err(CliError::Data("model file checksum mismatch".into()));
    }

    let mut cur = Cursor { bytes: payload, pos: 0 };
    let magic = cur.line()?;
    if magic != MAGIC {
        return Err(CliError::Data(format!(
            "unsupported model format '{magic}', expected '{MAGIC}'"
        )));
    }
    let dims_line = cur.line()?;
    let mut parts = dims_line.split_whitespace();
    if parts.next() != Some("dims") {
        return Err(CliError::Data("model file is missing the dims line".into()));
    }
    let _word_dim = parse_kv(parts.next(), "word_dim")?;
    let _char_dim = parse_kv(parts.next(), "char_dim")?;
    let _hidden = parse_kv(parts.next(), "hidden")?;
    let aux_dim = parse_kv(parts.next(), "aux_dim")?;
    let n_labels = parse_kv(parts.next(), "labels")?;
    let n_words = parse_kv(parts.next(), "words")?;
    let n_chars = parse_kv(parts.next(), "chars")?;

    let meta_line = cur.line()?;
    let mut meta = meta_line.split_whitespace();
    if meta.next() != Some("meta") {
        return Err(CliError::Data("model file is missing the meta line".into()));
    }
    let dev_f1: f64 = meta
        .next()
        .and_then(|p| p.strip_prefix("dev_f1="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Data("model file meta line is missing dev_f1".into()))?;
    let epoch: usize = meta
        .next()
        .and_then(|p| p.strip_prefix("epoch="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Data("model file meta line is missing epoch".into()))?;

    let mut take_prefixed = |prefix: &str, n: usize| -> CliResult<Vec<String>> {
        (0..n)
            .map(|_| {
                let line = cur.line()?;
                line.strip_prefix(prefix)
                    .map(str::to_string)
                    .ok_or_else(|| {
                        CliError::Data(format!("expected a '{prefix}' line, found '{line}'"))
                    })
            })
            .collect()
    };
    let labels = take_prefixed("label ", n_labels)?;
    let words = take_prefixed("word ", n_words)?;
    let chars = take_prefixed("char ", n_chars)?;

    let mut config_pairs = Vec::new();
    let mut params: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        let line = cur.line()?;
        if line == "binary" {
            break;
        }
        if let Some(rest) = line.strip_prefix("config ") {
            let (k, v) = rest.split_once('=').ok_or_else(|| {
                CliError::Data(format!("malformed config echo line '{line}'"))
            })?;
            config_pairs.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("param ") {
            let mut parts = rest.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| CliError::Data("param line without a name".into()))?
                .to_string();
            let shape: Vec<usize> = parts
                .map(|p| {
                    p.parse()
                        .map_err(|_| CliError::Data(format!("bad shape in param line '{line}'")))
                })
                .collect::<CliResult<_>>()?;
            params.push((name, shape));
        } else {
            return Err(CliError::Data(format!(
                "unexpected model header line '{line}'"
            )));
        }
    }

    let config = config_from_echo(&config_pairs)?;
    let mut blocks = Vec::with_capacity(params.len());
    for (name, shape) in params {
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blocks.push((name, shape, values));
    }
    if cur.pos != payload.len() {
        return Err(CliError::Data("model file has trailing bytes".into()));
    }

    let words = Vocab::from_items(words, config.lowercase).map_err(CliError::from)?;
    let chars = Vocab::from_items(chars, false).map_err(CliError::from)?;
    let labels = LabelSet::from_items(labels).map_err(CliError::from)?;
    let mut model =
        Model::with_shapes(config, words, chars, labels, aux_dim).map_err(CliError::from)?;
    model.load_params(&blocks).map_err(CliError::from)?;
    Ok(Checkpoint {
        model,
        dev_f1,
        epoch,
    })
}

pub fn load_model(path: &Path) -> CliResult<Checkpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read model '{}': {e}", path.display())))?;
    decode_model(&bytes)
}
