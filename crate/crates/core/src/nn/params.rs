use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Named, ordered parameter arrays of one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.entries.push(Param {
            name: name.into(),
            shape,
            values,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].values
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].values
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.values.len()).sum()
    }

    /// Copy values for every parameter whose name appears in both sets with
    /// the same shape. Returns how many arrays were copied.
    pub fn copy_matching_from(&mut self, other: &ParamSet) -> usize {
        let mut copied = 0;
        for p in &mut self.entries {
            if let Some(q) = other.entries.iter().find(|q| q.name == p.name && q.shape == p.shape) {
                p.values.copy_from_slice(&q.values);
                copied += 1;
            }
        }
        copied
    }

    /// Replace all values from another set with identical names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(CoreError::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (p, q) in self.entries.iter_mut().zip(&other.entries) {
            if p.name != q.name || p.shape != q.shape {
                return Err(CoreError::Checkpoint(format!(
                    "parameter mismatch: {} {:?} vs {} {:?}",
                    p.name, p.shape, q.name, q.shape
                )));
            }
            p.values.copy_from_slice(&q.values);
        }
        Ok(())
    }
}

/// Gradient buffers laid out like a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            values: params.entries.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn arrays(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }
}

/// Seeded parameter initializer. Parameters are drawn in creation order, so a
/// model's initial weights are a pure function of (config, seed).
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-normal: N(0, 2 / fan_in).
    pub fn he_normal(&mut self, fan_in: usize, n: usize) -> Vec<f64> {
        let std = (2.0 / fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }

    /// N(0, scale² / fan_in), for layers that feed a residual sum or a head.
    pub fn scaled_normal(&mut self, fan_in: usize, n: usize, scale: f64) -> Vec<f64> {
        let std = scale / (fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }
}
