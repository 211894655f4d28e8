//! The four subcommands: train, predict, eval, compare.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqtag_core::data::{self, RawSentence, Scheme};
use seqtag_core::{eval, trainer};

use crate::config::load_config;
use crate::error::{CliError, CliResult};
use crate::model_io;

/// Fixed seed for the comparison test's randomization rounds; keeps
/// `compare` deterministic across runs.
const COMPARE_SEED: u64 = 0x5e9_7a9;

struct Tee<A: Write, B: Write> {
    a: A,
    b: B,
}

impl<A: Write, B: Write> Write for Tee<A, B> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.a.write_all(buf)?;
        self.b.write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.a.flush()?;
        self.b.flush()
    }
}

fn read_corpus(path: &Path) -> CliResult<Vec<RawSentence>> {
    data::read_conll(path, None).map_err(CliError::from)
}

fn attach_aux_file(sentences: &mut [RawSentence], path: &Path) -> CliResult<()> {
    let aux = data::load_aux_vectors(path)?;
    data::attach_aux(sentences, aux).map_err(CliError::from)
}

/// Trains a model from a config file, writing the model and a `.log` file
/// next to it.
pub fn cmd_train(config_path: &Path) -> CliResult<()> {
    let (config, warnings) = load_config(config_path)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }

    let mut train_set = read_corpus(&config.train_path)?;
    let mut dev_set = read_corpus(&config.dev_path)?;
    let embeddings = match &config.embeddings_path {
        Some(path) => Some(data::load_embeddings(path, config.train.word_dim)?),
        None => None,
    };
    if config.aux_path.is_some() {
        attach_aux_file(&mut train_set, &config.aux_file("train").unwrap())?;
        attach_aux_file(&mut dev_set, &config.aux_file("dev").unwrap())?;
    }
    if let Some(emb) = &embeddings {
        let build = data::build_vocab(&train_set, Some(emb), config.train.lowercase);
        println!(
            "embedding coverage: {}/{} training tokens ({:.2}%)",
            build.covered,
            build.train_tokens,
            100.0 * build.coverage()
        );
    }

    let log_path = PathBuf::from(format!("{}.log", config.model_out.display()));
    let log_file = BufWriter::new(File::create(&log_path)?);
    let mut log = Tee {
        a: log_file,
        b: std::io::stdout(),
    };
    let mut checkpoint =
        trainer::train(&config.train, &train_set, &dev_set, embeddings.as_ref(), &mut log)?;
    log.flush()?;

    model_io::save_model(&config.model_out, &checkpoint)?;
    println!(
        "best dev_f1={:.6} at epoch {}; model written to {}",
        checkpoint.dev_f1,
        checkpoint.epoch,
        config.model_out.display()
    );

    if let Some(test_path) = &config.test_path {
        let mut test_set = read_corpus(test_path)?;
        if config.aux_path.is_some() {
            attach_aux_file(&mut test_set, &config.aux_file("test").unwrap())?;
        }
        if config.train.scheme == Scheme::Iob1 {
            data::convert_scheme(&mut test_set, Scheme::Iob1, Scheme::Iob2)?;
        }
        let predictions = trainer::predict(&mut checkpoint, &test_set)?;
        let gold: Vec<Vec<String>> = test_set.iter().map(|s| s.labels.clone()).collect();
        let report = eval::f1_score(&gold, &predictions)?;
        println!(
            "test_p={:.6} test_r={:.6} test_f1={:.6}",
            report.precision, report.recall, report.f1
        );
    }
    Ok(())
}

/// Tags a CoNLL file, writing `token predicted-label` lines.
pub fn cmd_predict(
    model_path: &Path,
    input_path: &Path,
    output_path: &Path,
    aux_path: Option<&Path>,
) -> CliResult<()> {
    let mut checkpoint = model_io::load_model(model_path)?;
    let mut sentences = read_corpus(input_path)?;
    match aux_path {
        Some(path) => attach_aux_file(&mut sentences, path)?,
        None => {
            if checkpoint.model.aux_dim > 0 {
                return Err(CliError::Data(format!(
                    "model expects {}-dimensional auxiliary vectors; pass --aux",
                    checkpoint.model.aux_dim
                )));
            }
        }
    }
    let predictions = trainer::predict(&mut checkpoint, &sentences)?;
    let tagged: Vec<RawSentence> = sentences
        .into_iter()
        .zip(predictions)
        .map(|(s, labels)| RawSentence::new(s.tokens, labels))
        .collect();
    let mut out = BufWriter::new(File::create(output_path)?);
    data::write_conll(&mut out, &tagged)?;
    out.flush()?;
    Ok(())
}

fn check_alignment(gold: &[RawSentence], other: &[RawSentence], what: &str) -> CliResult<()> {
    if gold.len() != other.len() {
        return Err(CliError::Data(format!(
            "{what} has {} sentences, gold has {}",
            other.len(),
            gold.len()
        )));
    }
    for (i, (g, o)) in gold.iter().zip(other).enumerate() {
        if g.tokens != o.tokens {
            return Err(CliError::Data(format!(
                "{what} is misaligned with gold at sentence {i}"
            )));
        }
    }
    Ok(())
}

fn labels_of(sentences: &[RawSentence]) -> Vec<Vec<String>> {
    sentences.iter().map(|s| s.labels.clone()).collect()
}

/// Scores a prediction file against gold, printing the report in aligned text
/// and key=value form.
pub fn cmd_eval(gold_path: &Path, pred_path: &Path) -> CliResult<()> {
    let gold = read_corpus(gold_path)?;
    let pred = read_corpus(pred_path)?;
    check_alignment(&gold, &pred, "prediction file")?;
    let report = eval::f1_score(&labels_of(&gold), &labels_of(&pred))?;
    print!("{}", report.to_text());
    println!();
    print!("{}", report.to_kv());
    Ok(())
}

/// Approximate randomization comparison of two prediction files.
pub fn cmd_compare(
    gold_path: &Path,
    pred_a_path: &Path,
    pred_b_path: &Path,
    iterations: usize,
) -> CliResult<()> {
    if iterations == 0 {
        return Err(CliError::Config("--iters must be at least 1".into()));
    }
    let gold = read_corpus(gold_path)?;
    let pred_a = read_corpus(pred_a_path)?;
    let pred_b = read_corpus(pred_b_path)?;
    check_alignment(&gold, &pred_a, "system A")?;
    check_alignment(&gold, &pred_b, "system B")?;

    let gold_labels = labels_of(&gold);
    let a_labels = labels_of(&pred_a);
    let b_labels = labels_of(&pred_b);
    let report_a = eval::f1_score(&gold_labels, &a_labels)?;
    let report_b = eval::f1_score(&gold_labels, &b_labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(COMPARE_SEED);
    let p = eval::randomization_test(&gold_labels, &a_labels, &b_labels, iterations, &mut rng)?;

    let delta = (report_a.f1 - report_b.f1).abs();
    println!(
        "F1 A = {:.2}, F1 B = {:.2}, |delta| = {:.2}, p = {:.4} ({} rounds)",
        100.0 * report_a.f1,
        100.0 * report_b.f1,
        100.0 * delta,
        p,
        iterations
    );
    println!("f1_a={:.8}", report_a.f1);
    println!("f1_b={:.8}", report_b.f1);
    println!("delta={:.8}", delta);
    println!("p={:.8}", p);
    println!("iterations={iterations}");
    Ok(())
}
