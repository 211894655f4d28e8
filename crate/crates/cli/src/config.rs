//! Flat key=value run configuration: one `key=value` per line, `#` comments,
//! unknown keys rejected, all paths checked before training starts.

use std::path::{Path, PathBuf};

use seqtag_core::{Scheme, TrainConfig};

use crate::error::{CliError, CliResult};

/// Everything a training run needs: hyperparameters plus file locations.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub train_path: PathBuf,
    pub dev_path: PathBuf,
    pub test_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    /// Prefix for auxiliary vector files: `<aux_path>.train`, `<aux_path>.dev`
    /// and, when a test set is configured, `<aux_path>.test`.
    pub aux_path: Option<PathBuf>,
    pub model_out: PathBuf,
}

impl RunConfig {
    pub fn aux_file(&self, split: &str) -> Option<PathBuf> {
        self.aux_path
            .as_ref()
            .map(|p| PathBuf::from(format!("{}.{split}", p.display())))
    }
}

const KNOWN_KEYS: [&str; 22] = [
    "train_path",
    "dev_path",
    "test_path",
    "embeddings_path",
    "aux_path",
    "model_out",
    "lr",
    "momentum",
    "epochs",
    "patience",
    "beta",
    "eta",
    "gamma",
    "zc",
    "zh",
    "hidden",
    "word_dim",
    "char_dim",
    "seed",
    "clip",
    "scheme",
    "lowercase",
];

fn bad_value(key: &str, value: &str, line: usize) -> CliError {
    CliError::Config(format!("line {line}: invalid value '{value}' for key '{key}'"))
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let mut train = TrainConfig::default();
    let mut train_path = None;
    let mut dev_path = None;
    let mut test_path = None;
    let mut embeddings_path = None;
    let mut aux_path = None;
    let mut model_out = None;
    let mut seen: Vec<String> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {lineno}: expected 'key=value', found '{line}'"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!("line {lineno}: unknown key '{key}'")));
        }
        if seen.iter().any(|k| k == key) {
            return Err(CliError::Config(format!("line {lineno}: duplicate key '{key}'")));
        }
        seen.push(key.to_string());

        let parse_f64 =
            |v: &str| v.parse::<f64>().map_err(|_| bad_value(key, v, lineno));
        let parse_usize =
            |v: &str| v.parse::<usize>().map_err(|_| bad_value(key, v, lineno));
        match key {
            "train_path" => train_path = Some(PathBuf::from(value)),
            "dev_path" => dev_path = Some(PathBuf::from(value)),
            "test_path" => test_path = Some(PathBuf::from(value)),
            "embeddings_path" => embeddings_path = Some(PathBuf::from(value)),
            "aux_path" => aux_path = Some(PathBuf::from(value)),
            "model_out" => model_out = Some(PathBuf::from(value)),
            "lr" => train.lr = parse_f64(value)?,
            "momentum" => train.momentum = parse_f64(value)?,
            "epochs" => train.epochs = parse_usize(value)?,
            "patience" => train.patience = parse_usize(value)?,
            "beta" => train.beta = parse_f64(value)?,
            "eta" => train.eta = parse_f64(value)?,
            "gamma" => train.gamma = parse_f64(value)?,
            "zc" => train.zc = parse_f64(value)?,
            "zh" => train.zh = parse_f64(value)?,
            "hidden" => train.hidden = parse_usize(value)?,
            "word_dim" => train.word_dim = parse_usize(value)?,
            "char_dim" => train.char_dim = parse_usize(value)?,
            "seed" => {
                train.seed = value
                    .parse::<u64>()
                    .map_err(|_| bad_value(key, value, lineno))?
            }
            "clip" => {
                train.clip = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse_f64(value)?)
                }
            }
            "scheme" => {
                train.scheme = value
                    .parse::<Scheme>()
                    .map_err(|e| CliError::Config(format!("line {lineno}: {e}")))?
            }
            "lowercase" => {
                train.lowercase = value
                    .parse::<bool>()
                    .map_err(|_| bad_value(key, value, lineno))?
            }
            _ => unreachable!("key checked against KNOWN_KEYS"),
        }
    }

    let require = |name: &str, v: Option<PathBuf>| {
        v.ok_or_else(|| CliError::Config(format!("missing required key '{name}'")))
    };
    Ok(RunConfig {
        train,
        train_path: require("train_path", train_path)?,
        dev_path: require("dev_path", dev_path)?,
        test_path,
        embeddings_path,
        aux_path,
        model_out: require("model_out", model_out)?,
    })
}

fn check_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} '{}' does not exist",
            path.display()
        )))
    }
}

/// Loads, parses, and validates a config: hyperparameters are checked (with
/// grid warnings returned) and every input path must exist.
pub fn load_config(path: &Path) -> CliResult<(RunConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config '{}': {e}", path.display())))?;
    let config = parse_config(&text)?;
    let warnings = config.train.validate().map_err(CliError::from)?;
    check_exists(&config.train_path, "train_path")?;
    check_exists(&config.dev_path, "dev_path")?;
    if let Some(p) = &config.test_path {
        check_exists(p, "test_path")?;
    }
    if let Some(p) = &config.embeddings_path {
        check_exists(p, "embeddings_path")?;
    }
    if config.aux_path.is_some() {
        check_exists(&config.aux_file("train").unwrap(), "aux train file")?;
        check_exists(&config.aux_file("dev").unwrap(), "aux dev file")?;
        if config.test_path.is_some() {
            check_exists(&config.aux_file("test").unwrap(), "aux test file")?;
        }
    }
    Ok((config, warnings))
}
