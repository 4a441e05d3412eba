//! Shared CLI plumbing: dataset-root resolution, config dumps, model
//! loading and the nearest-node rasterizer.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use msgnn::model::{Model, ModelConfig};
use msgnn::neural::{read_checkpoint, AdamState};

/// Environment variable consulted when `--data` is omitted.
pub const DATA_ENV: &str = "MSGNN_DATA";

/// Resolve the dataset directory: explicit flag or the MSGNN_DATA root.
pub fn resolve_data_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p),
        None => match std::env::var_os(DATA_ENV) {
            Some(root) => Ok(PathBuf::from(root)),
            None => bail!("no --data given and {DATA_ENV} is not set"),
        },
    }
}

/// Write the fully resolved configuration next to the outputs before any
/// long computation starts.
pub fn write_resolved_config<T: serde::Serialize>(out_dir: &Path, name: &str, cfg: &T) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join(name);
    let text = serde_json::to_string_pretty(cfg)?;
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ModelConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(cfg)
}

/// Instantiate a model and load parameter values (and optionally optimizer
/// state) from a checkpoint file.
pub fn load_model(config: &ModelConfig, ckpt: &Path, adam: Option<&mut AdamState>) -> Result<Model> {
    let mut model = Model::new(config.clone(), 0)?;
    let display = ckpt.display().to_string();
    let bytes = fs::read(ckpt).with_context(|| format!("reading {display}"))?;
    let parsed = read_checkpoint(&mut bytes.as_slice(), &display)?;
    parsed.load_into(&mut model.params, adam, &display)?;
    Ok(model)
}

/// Parse a comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("invalid list entry {part:?}: {e}"))
        })
        .collect()
}

/// Rasterize node values to a square grayscale image by nearest-node lookup
/// and encode it as a binary PGM (P5).
pub fn rasterize_pgm(
    positions: &[[f64; 2]],
    values: &[f64],
    min: [f64; 2],
    max: [f64; 2],
    size: usize,
) -> Vec<u8> {
    use rayon::prelude::*;
    let header = format!("P5\n{size} {size}\n255\n");
    let rows: Vec<Vec<u8>> = (0..size)
        .into_par_iter()
        .map(|row| {
            let mut out = Vec::with_capacity(size);
            // Image rows run top to bottom.
            let y = max[1] - (row as f64 + 0.5) / size as f64 * (max[1] - min[1]);
            for col in 0..size {
                let x = min[0] + (col as f64 + 0.5) / size as f64 * (max[0] - min[0]);
                let mut best = f64::INFINITY;
                let mut best_i = 0usize;
                for (i, p) in positions.iter().enumerate() {
                    let d = (p[0] - x).powi(2) + (p[1] - y).powi(2);
                    if d < best {
                        best = d;
                        best_i = i;
                    }
                }
                let v = values[best_i].clamp(-1.0, 1.0);
                out.push(((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8);
            }
            out
        })
        .collect();
    let mut bytes = header.into_bytes();
    for row in rows {
        bytes.extend(row);
    }
    bytes
}
