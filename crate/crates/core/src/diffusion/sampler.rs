use std::collections::BTreeSet;

use rand::Rng;

use super::DiffusionError;
use crate::asset::TextureMap;
use crate::render::RenderedView;

/// Draws reference renders uniformly over (view, strength, rig) while the
/// target maps stay fixed.
pub struct DisentangleSampler<'a> {
    renders: &'a [RenderedView],
    albedo: &'a TextureMap,
    emission: &'a TextureMap,
    strengths: usize,
    rigs: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DisentangleSample<'a> {
    pub reference: &'a RenderedView,
    pub target_albedo: &'a TextureMap,
    pub target_emission: &'a TextureMap,
    pub strength: f64,
}

impl<'a> DisentangleSampler<'a> {
    pub fn new(
        renders: &'a [RenderedView],
        albedo: &'a TextureMap,
        emission: &'a TextureMap,
    ) -> Result<Self, DiffusionError> {
        let strengths: BTreeSet<u64> = renders.iter().map(|r| r.strength.to_bits()).collect();
        let rigs: BTreeSet<usize> = renders.iter().map(|r| r.rig_index).collect();
        if strengths.len() < 2 || rigs.len() < 2 {
            return Err(DiffusionError::InsufficientVariation { strengths: strengths.len(), rigs: rigs.len() });
        }
        Ok(Self { renders, albedo, emission, strengths: strengths.len(), rigs: rigs.len() })
    }

    /// Number of distinct (view, strength, rig) references.
    pub fn space_size(&self) -> usize {
        self.renders.len()
    }

    pub fn strength_count(&self) -> usize {
        self.strengths
    }

    pub fn rig_count(&self) -> usize {
        self.rigs
    }

    pub fn draw(&self, rng: &mut impl Rng) -> DisentangleSample<'a> {
        let r = &self.renders[rng.random_range(0..self.renders.len())];
        DisentangleSample { reference: r, target_albedo: self.albedo, target_emission: self.emission, strength: r.strength }
    }
}
