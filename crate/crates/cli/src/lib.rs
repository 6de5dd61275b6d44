//! Command-line front end and HTTP job service for mesh-based image retargeting.
//!
//! Both front ends funnel through [`execute`], so identical inputs give byte-identical
//! artifacts whichever way they are submitted.

pub mod cli;
pub mod inputs;
pub mod service;

use retarget_core::mesh::io::mesh_to_string;
use retarget_core::pipeline::{retarget_image, Diagnostics, RetargetError, RetargetSpec};
use retarget_core::roi::compute_saliency;
use retarget_core::{ConstraintSet, Mask, Polyline, Raster};
use sha2::{Digest, Sha256};

/// Everything needed to run one retargeting job.
#[derive(Debug, Clone)]
pub struct JobInput {
    pub image: Raster,
    pub spec: RetargetSpec,
    pub masks: Vec<Mask>,
    pub polylines: Vec<Polyline>,
    pub params: Option<ConstraintSet>,
}

/// Encoded outputs of a job.
#[derive(Debug, Clone)]
pub struct Artifacts {
    /// Retargeted image, the decoded result before encoding.
    pub output: Raster,
    pub output_png: Vec<u8>,
    pub density_png: Vec<u8>,
    /// Present in auto mode (the map the ROIs came from) or when explicitly requested.
    pub saliency_png: Option<Vec<u8>>,
    pub diagnostics: Diagnostics,
    pub diagnostics_json: String,
    /// The source mesh in `rtmesh` text form, with vertex classes.
    pub mesh_text: String,
}

pub fn saliency_png(image: &Raster) -> Result<Vec<u8>, RetargetError> {
    Ok(compute_saliency(image).to_raster().encode_png()?)
}

pub fn execute(input: &JobInput, want_saliency: bool) -> Result<Artifacts, RetargetError> {
    let res = retarget_image(&input.image, &input.spec, &input.masks, &input.polylines, input.params.clone())?;
    let saliency_png = match (&res.saliency, want_saliency) {
        (Some(s), _) => Some(s.to_raster().encode_png()?),
        (None, true) => Some(saliency_png(&input.image)?),
        (None, false) => None,
    };
    let diagnostics_json = serde_json::to_string_pretty(&res.result.diagnostics).expect("diagnostics serialize");
    Ok(Artifacts {
        output_png: res.image.encode_png()?,
        density_png: res.density.encode_png()?,
        saliency_png,
        diagnostics_json,
        mesh_text: mesh_to_string(&res.result.mesh, Some(res.result.classes.roles())),
        diagnostics: res.result.diagnostics,
        output: res.image,
    })
}

/// SHA-256 over the raw inputs, hex encoded.
pub fn input_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}
