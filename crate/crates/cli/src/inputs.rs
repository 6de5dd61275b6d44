//! Parsing of the user-supplied side files: masks, polylines and parameter documents.

use std::path::Path;

use anyhow::{bail, Context, Result};
use retarget_core::geometry::Point;
use retarget_core::{ConstraintSet, Mask, Polyline, Raster};
use serde::{Deserialize, Serialize};

/// One entry of a polyline file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolylineSpec {
    pub points: Vec<[f64; 2]>,
    /// Accepted for editor compatibility; the solver chooses line scales itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_hint: Option<f64>,
}

pub fn parse_polylines(text: &str) -> Result<Vec<Polyline>> {
    let specs: Vec<PolylineSpec> = serde_json::from_str(text).context("polyline file must be a JSON array of {points: [[x, y], ...]}")?;
    specs
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.points.len() < 2 {
                bail!("polyline {i} needs at least two points");
            }
            Ok(Polyline::new(s.points.into_iter().map(|[x, y]| Point::new(x, y)).collect()))
        })
        .collect()
}

/// Parses a parameter document; TOML when `toml_hint` is set or JSON fails to parse.
pub fn parse_params(text: &str, toml_hint: bool) -> Result<ConstraintSet> {
    if toml_hint {
        return toml::from_str(text).context("invalid TOML parameter file");
    }
    match serde_json::from_str(text) {
        Ok(c) => Ok(c),
        Err(json_err) => toml::from_str(text).map_err(|_| json_err).context("parameter file is neither valid JSON nor TOML"),
    }
}

pub fn load_params(path: &Path) -> Result<ConstraintSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    parse_params(&text, is_toml).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_polylines(path: &Path) -> Result<Vec<Polyline>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_polylines(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A mask image: pixels brighter than mid-gray are inside.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let gray = Raster::decode(bytes)?.to_gray();
    let data = gray.data().iter().map(|&v| v > 0.5).collect();
    Ok(Mask::from_vec(gray.width(), gray.height(), data))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_mask(&bytes).with_context(|| format!("decoding mask {}", path.display()))
}

/// 8-bit PNG with 0 outside and 255 inside.
pub fn encode_mask(mask: &Mask) -> Result<Vec<u8>> {
    let data = mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Ok(Raster::from_data(mask.width(), mask.height(), 1, data)?.encode_png()?)
}
