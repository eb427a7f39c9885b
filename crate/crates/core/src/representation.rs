//! Flattened multi-scale representation of an image's likelihood grids.

use crate::encoder::{FeatureMap, FeaturePyramid};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::scoring::LikelihoodGrid;

/// Standardized per-scale grids, flattened row-major and concatenated in
/// ascending scale order. Values are held at f32 precision so the in-memory
/// and persisted forms agree exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub id: String,
    pub values: Vec<f64>,
}

fn standardized<'a>(grid: &'a LikelihoodGrid, model: &FlowModel) -> Result<impl Iterator<Item = f64> + 'a> {
    let (mu, sigma) = model.training_stats(grid.scale);
    if !(sigma > 0.0) {
        return Err(Error::Degenerate(format!("scale {} has training ll std {sigma}", grid.scale)));
    }
    Ok(grid.values.iter().map(move |ll| ((ll - mu) / sigma) as f32 as f64))
}

fn check_complete(grids: &[LikelihoodGrid], model: &FlowModel) -> Result<()> {
    let shapes = model.pyramid_config().shapes();
    if grids.len() != shapes.len() {
        return Err(Error::Config(format!("representation needs {} scales, got {}", shapes.len(), grids.len())));
    }
    for (k, (g, &(h, w, _))) in grids.iter().zip(&shapes).enumerate() {
        if g.scale != k || g.height != h || g.width != w || g.values.len() != h * w {
            return Err(Error::Config(format!("grid {k} does not match scale {k} shape {h}x{w}")));
        }
    }
    Ok(())
}

/// `F_H`: all scales concatenated.
pub fn build_representation(id: &str, grids: &[LikelihoodGrid], model: &FlowModel) -> Result<Representation> {
    check_complete(grids, model)?;
    let mut values = Vec::with_capacity(grids.iter().map(|g| g.values.len()).sum());
    for g in grids {
        values.extend(standardized(g, model)?);
    }
    Ok(Representation { id: id.to_string(), values })
}

/// One scale only; `scale` is 1-based.
pub fn build_single_scale(id: &str, grids: &[LikelihoodGrid], model: &FlowModel, scale: usize) -> Result<Representation> {
    check_complete(grids, model)?;
    if scale == 0 || scale > grids.len() {
        return Err(Error::Argument(format!("scale {scale} outside 1..={}", grids.len())));
    }
    Ok(Representation { id: id.to_string(), values: standardized(&grids[scale - 1], model)?.collect() })
}

/// Packs representations into 1x1xD pyramids for the feature file container.
pub fn to_feature_pyramids(reps: &[Representation]) -> Result<(Vec<FeaturePyramid>, Vec<String>)> {
    let pyramids = reps
        .iter()
        .map(|r| {
            Ok(FeaturePyramid {
                scales: vec![FeatureMap::new(1, 1, r.values.len(), r.values.iter().map(|&v| v as f32).collect())?],
            })
        })
        .collect::<Result<_>>()?;
    Ok((pyramids, reps.iter().map(|r| r.id.clone()).collect()))
}

pub fn from_feature_pyramids(pyramids: Vec<FeaturePyramid>, ids: Vec<String>) -> Result<Vec<Representation>> {
    pyramids
        .into_iter()
        .zip(ids)
        .map(|(p, id)| match p.scales.as_slice() {
            [m] if m.height == 1 && m.width == 1 => {
                Ok(Representation { id, values: m.data.iter().map(|&v| v as f64).collect() })
            }
            _ => Err(Error::format(0, format!("representation file entry {id:?} is not a single 1x1xD map"))),
        })
        .collect()
}
