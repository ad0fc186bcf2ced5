use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use roadkit::{RasterMask, RoadGraph};
use serde::Serialize;

use crate::error::CliError;

/// Expands directories to their files with extension `ext`, sorted by
/// path. Plain file arguments are kept as given.
pub fn expand_inputs(inputs: &[PathBuf], ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == ext))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(CliError::io(p, "no such file or directory"));
        }
    }
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Files of `dir` grouped by stem, keeping `.json` graphs and `.pgm` masks.
pub fn index_dir(dir: &Path) -> Result<BTreeMap<String, Entry>, CliError> {
    let mut map: BTreeMap<String, Entry> = BTreeMap::new();
    for f in expand_inputs(&[dir.to_path_buf()], "json")? {
        let id = stem(&f);
        map.entry(id).or_default().graph = Some(f);
    }
    for f in expand_inputs(&[dir.to_path_buf()], "pgm")? {
        let id = stem(&f);
        map.entry(id).or_default().mask = Some(f);
    }
    Ok(map)
}

#[derive(Debug, Default, Clone)]
pub struct Entry {
    pub graph: Option<PathBuf>,
    pub mask: Option<PathBuf>,
}

pub fn read_graph(path: &Path) -> Result<RoadGraph, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RoadGraph::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn read_mask(path: &Path) -> Result<RasterMask, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    RasterMask::read_pgm(BufReader::new(f)).map_err(|e| match e {
        roadkit::Error::Io(e) => CliError::io(path, e),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Pretty JSON to `out`, or to stdout when no path is given.
pub fn emit<T: Serialize>(report: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}
