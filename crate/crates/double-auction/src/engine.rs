//! Expectation engine.
//!
//! Two modes share one interface: `Exact` enumerates the product support of
//! the relevant distributions (refusing spaces above a configurable cap) and
//! sums exact rationals, so results are identical in any summation order;
//! `MonteCarlo` averages seeded samples in fixed-size batches, each batch on
//! its own ChaCha stream and batch partials combined in batch order, so the
//! estimate is reproducible and independent of the degree of parallelism.

use crate::market::{Distribution, Instance, Profile, Valuation};
use crate::rational::{rat_from_f64, rat_to_f64, Rat};
use num::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default bound on the number of product-support entries `Exact` will
/// enumerate.
pub const DEFAULT_EXACT_CAP: usize = 1_000_000;

/// Samples per Monte Carlo batch; each batch runs on its own RNG stream.
const MC_BATCH: usize = 1024;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("product support has {size} entries, above the exact-mode cap {cap}")]
    CapExceeded { size: u128, cap: usize },
    #[error("expectation over scalar values requested but a distribution has bundle values")]
    NonScalarSupport,
    #[error("Monte Carlo mode needs at least one sample")]
    NoSamples,
}

/// How inner loops execute. With the `parallel` feature disabled only
/// `Sequential` exists; results are identical either way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Parallelism {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Parallelism::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Parallelism::Sequential
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineMode {
    Exact { cap: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// An expectation estimator with a fixed mode and execution strategy.
#[derive(Clone, Copy, Debug)]
pub struct Engine {
    pub mode: EngineMode,
    pub parallelism: Parallelism,
}

/// An expectation value plus Monte Carlo error information when applicable.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub value: Rat,
    /// Standard error of the mean; `None` in exact mode.
    pub std_error: Option<f64>,
    pub samples: Option<usize>,
}

impl Estimate {
    fn exact(value: Rat) -> Self {
        Estimate { value, std_error: None, samples: None }
    }
}

impl Engine {
    pub fn exact(cap: usize) -> Self {
        Engine { mode: EngineMode::Exact { cap }, parallelism: Parallelism::default() }
    }

    pub fn exact_default() -> Self {
        Self::exact(DEFAULT_EXACT_CAP)
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Engine { mode: EngineMode::MonteCarlo { samples, seed }, parallelism: Parallelism::default() }
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, EngineMode::Exact { .. })
    }

    /// Exact sum of `term(0) + .. + term(len-1)`; rational addition commutes,
    /// so the parallel reduction returns the identical value.
    pub fn sum_rat<F>(&self, len: usize, term: F) -> Rat
    where
        F: Fn(usize) -> Rat + Sync + Send,
    {
        match self.parallelism {
            Parallelism::Sequential => (0..len).map(term).sum(),
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => {
                (0..len).into_par_iter().map(term).reduce(Rat::zero, |a, b| a + b)
            }
        }
    }

    fn sum_vec<F>(&self, len: usize, dim: usize, term: F) -> Vec<Rat>
    where
        F: Fn(usize) -> Vec<Rat> + Sync + Send,
    {
        let add = |mut a: Vec<Rat>, b: Vec<Rat>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        };
        match self.parallelism {
            Parallelism::Sequential => (0..len).map(term).fold(vec![Rat::zero(); dim], add),
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => (0..len)
                .into_par_iter()
                .map(term)
                .reduce(|| vec![Rat::zero(); dim], add),
        }
    }

    /// Map batch index to partial results, then combine in batch order.
    fn map_batches<T, F>(&self, batches: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self.parallelism {
            Parallelism::Sequential => (0..batches).map(f).collect(),
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => (0..batches).into_par_iter().map(f).collect(),
        }
    }

    /// Expectation of `f` over the joint (independent) distribution of scalar
    /// values, one per entry of `dists`.
    pub fn expect_units<F>(&self, dists: &[&Distribution], f: F) -> Result<Estimate, EngineError>
    where
        F: Fn(&[Rat]) -> Rat + Sync + Send,
    {
        if dists.iter().any(|d| !d.is_unit()) {
            return Err(EngineError::NonScalarSupport);
        }
        match self.mode {
            EngineMode::Exact { cap } => {
                let space = ProductSpace::new(dists, cap)?;
                let total = self.sum_rat(space.len(), |idx| {
                    let (values, prob) = space.decode_units(idx);
                    f(&values) * prob
                });
                Ok(Estimate::exact(total))
            }
            EngineMode::MonteCarlo { samples, seed } => {
                self.monte_carlo_mean(samples, seed, |rng| {
                    let values: Vec<Rat> = dists
                        .iter()
                        .map(|d| d.sample_ref(rng).unit().expect("scalar support").clone())
                        .collect();
                    rat_to_f64(&f(&values))
                })
            }
        }
    }

    /// Expectation of `f` over full valuation profiles of the instance.
    pub fn expect_instance<F>(&self, instance: &Instance, f: F) -> Result<Estimate, EngineError>
    where
        F: Fn(&Profile) -> Rat + Sync + Send,
    {
        match self.mode {
            EngineMode::Exact { cap } => {
                let space = ProfileSpace::new(instance, cap)?;
                let total = self.sum_rat(space.len(), |idx| {
                    let (profile, prob) = space.decode(idx);
                    f(&profile) * prob
                });
                Ok(Estimate::exact(total))
            }
            EngineMode::MonteCarlo { samples, seed } => {
                self.monte_carlo_mean(samples, seed, |rng| {
                    rat_to_f64(&f(&sample_profile_with(instance, rng)))
                })
            }
        }
    }

    /// Vector-valued exact expectation over full profiles (one enumeration
    /// pass for all components). Exact mode only concept-wise; Monte Carlo
    /// averages each component the same way.
    pub fn expect_instance_vec<F>(
        &self,
        instance: &Instance,
        dim: usize,
        f: F,
    ) -> Result<Vec<Rat>, EngineError>
    where
        F: Fn(&Profile) -> Vec<Rat> + Sync + Send,
    {
        match self.mode {
            EngineMode::Exact { cap } => {
                let space = ProfileSpace::new(instance, cap)?;
                Ok(self.sum_vec(space.len(), dim, |idx| {
                    let (profile, prob) = space.decode(idx);
                    let mut v = f(&profile);
                    debug_assert_eq!(v.len(), dim);
                    for x in &mut v {
                        *x *= &prob;
                    }
                    v
                }))
            }
            EngineMode::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(EngineError::NoSamples);
                }
                let batches = samples.div_ceil(MC_BATCH);
                let partials = self.map_batches(batches, |batch| {
                    let mut rng = batch_rng(seed, batch);
                    let lo = batch * MC_BATCH;
                    let hi = (lo + MC_BATCH).min(samples);
                    let mut acc = vec![0f64; dim];
                    for _ in lo..hi {
                        let profile = sample_profile_with(instance, &mut rng);
                        for (a, x) in acc.iter_mut().zip(f(&profile)) {
                            *a += rat_to_f64(&x);
                        }
                    }
                    acc
                });
                let mut total = vec![0f64; dim];
                for partial in partials {
                    for (t, p) in total.iter_mut().zip(partial) {
                        *t += p;
                    }
                }
                Ok(total.into_iter().map(|t| rat_from_f64(t / samples as f64)).collect())
            }
        }
    }

    fn monte_carlo_mean<F>(
        &self,
        samples: usize,
        seed: u64,
        sample_value: F,
    ) -> Result<Estimate, EngineError>
    where
        F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
    {
        if samples == 0 {
            return Err(EngineError::NoSamples);
        }
        let batches = samples.div_ceil(MC_BATCH);
        let partials = self.map_batches(batches, |batch| {
            let mut rng = batch_rng(seed, batch);
            let lo = batch * MC_BATCH;
            let hi = (lo + MC_BATCH).min(samples);
            let mut sum = 0f64;
            let mut sum_sq = 0f64;
            for _ in lo..hi {
                let x = sample_value(&mut rng);
                sum += x;
                sum_sq += x * x;
            }
            (sum, sum_sq)
        });
        let (mut sum, mut sum_sq) = (0f64, 0f64);
        for (s, q) in partials {
            sum += s;
            sum_sq += q;
        }
        let n = samples as f64;
        let mean = sum / n;
        let variance = (sum_sq / n - mean * mean).max(0.0);
        Ok(Estimate {
            value: rat_from_f64(mean),
            std_error: Some((variance / n).sqrt()),
            samples: Some(samples),
        })
    }
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

fn sample_profile_with(instance: &Instance, rng: &mut ChaCha8Rng) -> Profile {
    Profile {
        buyers: instance.buyers().iter().map(|d| d.sample_ref(rng).clone()).collect(),
        sellers: instance.sellers().iter().map(|d| d.sample_ref(rng).clone()).collect(),
    }
}

// ---------------------------------------------------------------------------
// Product-support enumeration
// ---------------------------------------------------------------------------

/// Mixed-radix index over the product support of scalar distributions.
pub struct ProductSpace<'a> {
    dists: Vec<&'a Distribution>,
    len: usize,
}

impl<'a> ProductSpace<'a> {
    pub fn new(dists: &[&'a Distribution], cap: usize) -> Result<Self, EngineError> {
        let mut len: u128 = 1;
        for d in dists {
            len = len.saturating_mul(d.support_len() as u128);
        }
        if len > cap as u128 {
            return Err(EngineError::CapExceeded { size: len, cap });
        }
        Ok(ProductSpace { dists: dists.to_vec(), len: len as usize })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Scalar values and joint probability at `idx`.
    pub fn decode_units(&self, idx: usize) -> (Vec<Rat>, Rat) {
        let mut values = Vec::with_capacity(self.dists.len());
        let mut prob = Rat::one();
        let mut rest = idx;
        for d in &self.dists {
            let s = d.support_len();
            let (v, p) = &d.support()[rest % s];
            values.push(v.unit().expect("scalar support").clone());
            prob *= p;
            rest /= s;
        }
        (values, prob)
    }
}

/// Mixed-radix index over full valuation profiles of an instance
/// (buyers first, then sellers; the first buyer varies fastest).
pub struct ProfileSpace<'a> {
    instance: &'a Instance,
    len: usize,
}

impl<'a> ProfileSpace<'a> {
    pub fn new(instance: &'a Instance, cap: usize) -> Result<Self, EngineError> {
        let mut len: u128 = 1;
        for d in instance.buyers().iter().chain(instance.sellers()) {
            len = len.saturating_mul(d.support_len() as u128);
        }
        if len > cap as u128 {
            return Err(EngineError::CapExceeded { size: len, cap });
        }
        Ok(ProfileSpace { instance, len: len as usize })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The profile and joint probability at `idx`.
    pub fn decode(&self, idx: usize) -> (Profile, Rat) {
        let mut rest = idx;
        let mut prob = Rat::one();
        let mut pick = |d: &Distribution| -> Valuation {
            let s = d.support_len();
            let (v, p) = &d.support()[rest % s];
            prob *= p;
            rest /= s;
            v.clone()
        };
        let buyers = self.instance.buyers().iter().map(&mut pick).collect();
        let sellers = self.instance.sellers().iter().map(&mut pick).collect();
        (Profile { buyers, sellers }, prob)
    }
}
