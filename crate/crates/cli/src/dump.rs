//! Feature-map dumps: `<name>.f32` holds the `c × h × w` map as
//! little-endian `f32`, `<name>.json` a one-line description.

use std::path::Path;

use padfree_core::Tensor;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    name: &'a str,
    shape: [usize; 3],
    dtype: &'static str,
    order: &'static str,
}

pub fn write_feature_maps<'a>(dir: &Path, maps: impl IntoIterator<Item = (String, &'a Tensor)>) -> CliResult<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for (name, t) in maps {
        let raw: Vec<u8> = t.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let bin = dir.join(format!("{name}.f32"));
        std::fs::write(&bin, raw).map_err(|e| CliError::io(&bin, e))?;
        let side = Sidecar { name: &name, shape: t.shape(), dtype: "f32le", order: "chw" };
        let mut line = serde_json::to_string(&side)?;
        line.push('\n');
        let json = dir.join(format!("{name}.json"));
        std::fs::write(&json, line).map_err(|e| CliError::io(&json, e))?;
        names.push(name);
    }
    Ok(names)
}
