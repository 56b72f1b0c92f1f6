//! Point files: a flat TOML map of named vectors.
//!
//! ```toml
//! x = [1.0]
//! y = [3.0]
//! z = [-4.0, 0.0, 0.0]
//! ```
//!
//! Blocks of length zero may be omitted.

use std::collections::BTreeMap;

use bisolve::{Dims, Model};

pub fn block_layout(model: Model, dims: Dims) -> Vec<(&'static str, usize)> {
    match model {
        Model::Kkt => vec![
            ("x", dims.n),
            ("y", dims.m),
            ("z", dims.q),
            ("s", dims.m),
            ("u", dims.p),
            ("v", dims.q),
            ("w", dims.q),
        ],
        Model::Llvf => vec![("x", dims.n), ("y", dims.m), ("z", dims.m), ("u", dims.p), ("v", dims.q), ("w", dims.q)],
    }
}

/// Parses a point file into the flat vector of `model`.
pub fn parse_point(text: &str, model: Model, dims: Dims) -> Result<Vec<f64>, String> {
    let map: BTreeMap<String, Vec<f64>> = toml::from_str(text).map_err(|e| format!("point file: {e}"))?;
    let layout = block_layout(model, dims);
    if let Some(extra) = map.keys().find(|k| !layout.iter().any(|(name, _)| name == k)) {
        return Err(format!("point file: unexpected key '{extra}' for the {model} model"));
    }
    let mut out = Vec::new();
    for (name, len) in layout {
        let block = match map.get(name) {
            Some(v) => v.as_slice(),
            None if len == 0 => &[],
            None => return Err(format!("point file: missing '{name}' (length {len})")),
        };
        if block.len() != len {
            return Err(format!("point file: '{name}' has length {}, expected {len}", block.len()));
        }
        out.extend_from_slice(block);
    }
    Ok(out)
}

/// Inverse of [`parse_point`].
pub fn format_point(point: &[f64], model: Model, dims: Dims) -> String {
    let mut map = BTreeMap::new();
    let mut at = 0;
    for (name, len) in block_layout(model, dims) {
        map.insert(name, point[at..at + len].to_vec());
        at += len;
    }
    toml::to_string(&map).expect("vectors of floats serialize")
}
