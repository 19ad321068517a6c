//! Guidance scripts: a JSON array answering successive guidance requests,
//! each entry a configuration or the string `"decline"`. Once the script
//! runs out every further request is declined, unless the provider was told
//! to keep re-offering the last entry.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use guided_mha::{GuidanceAnswer, GuidanceProvider, GuidanceRequest, Planner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq)]
pub enum ScriptEntry {
    Configuration(Vec<f64>),
    Decline,
}

pub fn parse(text: &str) -> Result<Vec<ScriptEntry>> {
    let Value::Array(items) = serde_json::from_str(text)? else {
        bail!("a guidance script is a JSON array");
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| match item {
            Value::String(s) if s == "decline" => Ok(ScriptEntry::Decline),
            v => serde_json::from_value(v)
                .map(ScriptEntry::Configuration)
                .with_context(|| format!("entry {i}: expected a number array or \"decline\"")),
        })
        .collect()
}

pub fn load(path: &Path) -> Result<Vec<ScriptEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading script {}", path.display()))?;
    parse(&text).with_context(|| format!("script {}", path.display()))
}

/// Plays a script, optionally perturbing each configuration with seeded
/// Gaussian noise the way a human would place it imprecisely. Perturbed
/// configurations are redrawn until they snap to a valid state.
pub struct ScriptProvider {
    entries: Vec<ScriptEntry>,
    next: usize,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    repeat_last: bool,
}

const MAX_REDRAWS: usize = 100;

impl ScriptProvider {
    pub fn new(entries: Vec<ScriptEntry>, jitter: f64, seed: u64) -> Result<Self> {
        let noise = if jitter > 0.0 {
            Some(Normal::new(0.0, jitter).context("jitter")?)
        } else {
            None
        };
        Ok(Self {
            entries,
            next: 0,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            repeat_last: false,
        })
    }

    /// Past the end of the script, answer again with the last entry (freshly
    /// perturbed) instead of declining.
    pub fn repeat_last(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    fn perturb(&mut self, base: &[f64], planner: &Planner) -> Vec<f64> {
        let Some(noise) = self.noise else {
            return base.to_vec();
        };
        for _ in 0..MAX_REDRAWS {
            let candidate: Vec<f64> = base.iter().map(|x| x + noise.sample(&mut self.rng)).collect();
            if planner.snap(&candidate).is_ok() {
                return candidate;
            }
        }
        base.to_vec()
    }
}

impl GuidanceProvider for ScriptProvider {
    fn provide(&mut self, _: &GuidanceRequest, planner: &Planner) -> GuidanceAnswer {
        let index = match self.entries.len() {
            0 => return GuidanceAnswer::Decline,
            n if self.next >= n && !self.repeat_last => return GuidanceAnswer::Decline,
            n => self.next.min(n - 1),
        };
        let entry = self.entries[index].clone();
        self.next += 1;
        match entry {
            ScriptEntry::Decline => GuidanceAnswer::Decline,
            ScriptEntry::Configuration(c) => GuidanceAnswer::Configuration(self.perturb(&c, planner)),
        }
    }
}
