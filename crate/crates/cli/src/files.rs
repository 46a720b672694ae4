//! File helpers: impressions are a query-format minutiae file plus an
//! optional PGM image with the same stem.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use fuzzy_vault::config::Config;
use fuzzy_vault::prealign::GrayImage;
use fuzzy_vault::synth::SyntheticImpression;
use fuzzy_vault::vault::Impression;
use fuzzy_vault::verify::{format_query, parse_query};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Usage(String),
    #[error("{op}: {message}")]
    Operation { op: &'static str, message: String },
}

impl CliError {
    /// Wrap a library error with the command that raised it.
    pub fn op<E: std::fmt::Display>(op: &'static str) -> impl Fn(E) -> CliError {
        move |e| CliError::Operation {
            op,
            message: e.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn read_query_file(path: &Path, finger: u8) -> Result<Impression, CliError> {
    let minutiae = parse_query(&read_text(path)?, finger)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok(Impression::points(minutiae))
}

pub fn read_impression(dir: &Path, stem: &str, finger: u8) -> Result<Impression, CliError> {
    let mut imp = read_query_file(&dir.join(format!("{stem}.txt")), finger)?;
    let pgm = dir.join(format!("{stem}.pgm"));
    if pgm.exists() {
        let file = File::open(&pgm).map_err(|e| CliError::Io(pgm.clone(), e))?;
        let img = GrayImage::read_pgm(BufReader::new(file))
            .map_err(|e| CliError::Format(format!("{}: {e}", pgm.display())))?;
        imp.image = Some(img);
    }
    Ok(imp)
}

pub fn write_impression(
    dir: &Path,
    stem: &str,
    imp: &SyntheticImpression,
    cfg: &Config,
) -> Result<(), CliError> {
    write_text(
        &dir.join(format!("{stem}.txt")),
        &format_query(&imp.minutiae),
    )?;
    if cfg.use_prealign {
        let path = dir.join(format!("{stem}.pgm"));
        let img = imp
            .with_mask(cfg.params.frame)
            .image
            .expect("mask is rendered");
        let file = File::create(&path).map_err(|e| CliError::Io(path.clone(), e))?;
        img.write_pgm(std::io::BufWriter::new(file))
            .map_err(|e| CliError::Io(path.clone(), e))?;
    }
    Ok(())
}
