//! Cooperative-game Shapley values, independent of any reinforcement
//! learning structure.
//!
//! A game is anything implementing [`CharacteristicFn`]. [`exact_shapley`]
//! evaluates every coalition once into a dense table and applies the
//! multinomial weights; [`sampled_shapley`] averages marginal gains over
//! coalitions formed by the predecessors of a feature in a uniformly random
//! ordering, which draws each coalition with exactly the multinomial weight.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Widest feature set a [`Coalition`] can represent.
pub const MAX_FEATURES: usize = 32;

/// Largest arity accepted by [`exact_shapley`].
pub const MAX_EXACT_ARITY: usize = 20;

/// A subset of the feature indices `0..n`, stored as a bit pattern where
/// feature `i` is bit `i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition {
    bits: u32,
    n: u8,
}

impl Coalition {
    pub fn empty(n: usize) -> Result<Self> {
        Self::from_bits(0, n)
    }

    pub fn full(n: usize) -> Result<Self> {
        check_width(n)?;
        Ok(Self {
            bits: full_mask(n),
            n: n as u8,
        })
    }

    pub fn from_bits(bits: u32, n: usize) -> Result<Self> {
        check_width(n)?;
        if bits & !full_mask(n) != 0 {
            return Err(Error::FeatureOutOfRange {
                index: 31 - (bits & !full_mask(n)).leading_zeros() as usize,
                n,
            });
        }
        Ok(Self { bits, n: n as u8 })
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I, n: usize) -> Result<Self> {
        check_width(n)?;
        let mut bits = 0u32;
        for index in members {
            if index >= n {
                return Err(Error::FeatureOutOfRange { index, n });
            }
            bits |= 1 << index;
        }
        Ok(Self { bits, n: n as u8 })
    }

    /// Every coalition over `n` features, in increasing bit-pattern order.
    pub fn all(n: usize) -> Result<impl Iterator<Item = Coalition>> {
        check_width(n)?;
        let n8 = n as u8;
        Ok((0..(1u64 << n)).map(move |b| Coalition {
            bits: b as u32,
            n: n8,
        }))
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Total number of features, not the coalition size.
    pub fn n(self) -> usize {
        self.n as usize
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn is_full(self) -> bool {
        self.bits == full_mask(self.n())
    }

    pub fn contains(self, i: usize) -> bool {
        i < self.n() && self.bits & (1 << i) != 0
    }

    /// The coalition with feature `i` added. Panics if `i` is out of range.
    pub fn with(self, i: usize) -> Self {
        assert!(i < self.n(), "feature {i} out of range for {} features", self.n);
        Self {
            bits: self.bits | (1 << i),
            n: self.n,
        }
    }

    pub fn without(self, i: usize) -> Self {
        Self {
            bits: self.bits & !(1u32.checked_shl(i as u32).unwrap_or(0)),
            n: self.n,
        }
    }

    pub fn complement(self) -> Self {
        Self {
            bits: !self.bits & full_mask(self.n()),
            n: self.n,
        }
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.n()).filter(move |i| bits & (1 << i) != 0)
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

fn check_width(n: usize) -> Result<()> {
    if n > MAX_FEATURES {
        return Err(Error::TooManyFeatures {
            n,
            limit: MAX_FEATURES,
        });
    }
    Ok(())
}

fn full_mask(n: usize) -> u32 {
    ((1u64 << n) - 1) as u32
}

/// A cooperative game over `arity()` players.
///
/// `eval` must be deterministic for a fixed coalition and safe to call from
/// several threads at once; exact enumeration evaluates coalitions in
/// parallel.
pub trait CharacteristicFn: Sync {
    fn arity(&self) -> usize;
    fn eval(&self, coalition: Coalition) -> Result<f64>;
}

impl<T: CharacteristicFn + ?Sized> CharacteristicFn for &T {
    fn arity(&self) -> usize {
        (**self).arity()
    }
    fn eval(&self, coalition: Coalition) -> Result<f64> {
        (**self).eval(coalition)
    }
}

/// A game defined by a plain closure.
pub struct FnGame<F> {
    n: usize,
    f: F,
}

impl<F> FnGame<F>
where
    F: Fn(Coalition) -> f64 + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> CharacteristicFn for FnGame<F>
where
    F: Fn(Coalition) -> f64 + Sync,
{
    fn arity(&self) -> usize {
        self.n
    }
    fn eval(&self, coalition: Coalition) -> Result<f64> {
        Ok((self.f)(coalition))
    }
}

/// A game stored as a dense table indexed by coalition bit pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > MAX_EXACT_ARITY {
            return Err(Error::ArityTooLarge {
                n,
                limit: MAX_EXACT_ARITY,
            });
        }
        if values.len() != 1 << n {
            return Err(Error::InvalidArgument(format!(
                "a game over {n} features needs {} values, got {}",
                1usize << n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    /// Evaluate `v` on every coalition.
    pub fn tabulate<V: CharacteristicFn + ?Sized>(v: &V) -> Result<Self> {
        let n = v.arity();
        if n > MAX_EXACT_ARITY {
            return Err(Error::ArityTooLarge {
                n,
                limit: MAX_EXACT_ARITY,
            });
        }
        let values = (0..1u32 << n)
            .into_par_iter()
            .map(|bits| v.eval(Coalition { bits, n: n as u8 }))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { n, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, coalition: Coalition) -> f64 {
        self.values[coalition.bits as usize]
    }
}

impl CharacteristicFn for TableGame {
    fn arity(&self) -> usize {
        self.n
    }
    fn eval(&self, coalition: Coalition) -> Result<f64> {
        if coalition.n() != self.n {
            return Err(Error::ArityMismatch {
                expected: self.n,
                found: coalition.n(),
            });
        }
        Ok(self.get(coalition))
    }
}

/// How an attribution was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimate {
    Exact,
    Sampled { budget: u64, seed: u64 },
}

/// Whether an attribution explains one state or is aggregated over states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Local,
    Global,
}

/// Per-feature Shapley values together with the endpoints of the game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    pub v_empty: f64,
    pub v_full: f64,
    pub estimate: Estimate,
    #[serde(default)]
    pub scope: Scope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<Vec<f64>>,
}

impl Attribution {
    pub fn arity(&self) -> usize {
        self.phi.len()
    }

    /// `v(F) - v(∅) - Σ φ`; zero up to rounding for exact attributions.
    pub fn efficiency_gap(&self) -> f64 {
        self.v_full - self.v_empty - self.phi.iter().sum::<f64>()
    }
}

/// `|C|! (n - |C| - 1)! / n!` for every coalition size `|C|` in `0..n`.
pub fn multinomial_weights(n: usize) -> Vec<f64> {
    // 1 / (n * C(n-1, k)); binomials below 2^53 are exact in f64.
    let mut weights = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for k in 0..n {
        weights.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
    }
    weights
}

/// Exact Shapley values by enumerating all `2^n` coalitions.
///
/// Each coalition is evaluated exactly once; the table is filled in parallel.
pub fn exact_shapley<V: CharacteristicFn + ?Sized>(v: &V) -> Result<Attribution> {
    let table = TableGame::tabulate(v)?;
    Ok(shapley_from_table(&table))
}

/// Shapley values of an already tabulated game.
pub fn shapley_from_table(table: &TableGame) -> Attribution {
    let n = table.n;
    let weights = multinomial_weights(n);
    let values = &table.values;
    let phi = (0..n)
        .map(|i| {
            let bit = 1usize << i;
            let mut total = 0.0;
            for c in 0..values.len() {
                if c & bit == 0 {
                    let k = c.count_ones() as usize;
                    total += weights[k] * (values[c | bit] - values[c]);
                }
            }
            total
        })
        .collect();
    Attribution {
        phi,
        v_empty: values[0],
        v_full: values[values.len() - 1],
        estimate: Estimate::Exact,
        scope: Scope::Local,
        standard_error: None,
    }
}

/// `v(C ∪ {i}) - v(C)`.
pub fn marginal_gain<V: CharacteristicFn + ?Sized>(
    v: &V,
    i: usize,
    coalition: Coalition,
) -> Result<f64> {
    let n = v.arity();
    if i >= n {
        return Err(Error::FeatureOutOfRange { index: i, n });
    }
    if coalition.contains(i) {
        return Err(Error::FeatureInCoalition { feature: i });
    }
    Ok(v.eval(coalition.with(i))? - v.eval(coalition)?)
}

/// Mean and standard error of a sampled Shapley value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEstimate {
    pub mean: f64,
    /// Standard error of the mean; zero when `budget` is one.
    pub standard_error: f64,
    pub budget: u64,
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn standard_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.count - 1) as f64;
        (var.max(0.0) / self.count as f64).sqrt()
    }
}

/// Draw a coalition from `F \ {i}` with probability proportional to its
/// Shapley weight: the predecessors of `i` in a uniformly random ordering.
pub fn sample_predecessors<R: Rng + ?Sized>(
    order: &mut [usize],
    i: usize,
    rng: &mut R,
) -> Coalition {
    order.shuffle(rng);
    let mut bits = 0u32;
    for &j in order.iter() {
        if j == i {
            break;
        }
        bits |= 1 << j;
    }
    Coalition {
        bits,
        n: order.len() as u8,
    }
}

/// Average `budget` samples of `gain(C)` with `C` drawn by
/// [`sample_predecessors`]. The gain closure may itself be random.
pub fn sample_gains<R, G>(
    n: usize,
    i: usize,
    budget: u64,
    rng: &mut R,
    mut gain: G,
) -> Result<FeatureEstimate>
where
    R: Rng,
    G: FnMut(Coalition, &mut R) -> Result<f64>,
{
    check_width(n)?;
    if i >= n {
        return Err(Error::FeatureOutOfRange { index: i, n });
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("sample budget must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = RunningStats::default();
    for _ in 0..budget {
        let coalition = sample_predecessors(&mut order, i, rng);
        stats.push(gain(coalition, rng)?);
    }
    Ok(FeatureEstimate {
        mean: stats.mean(),
        standard_error: stats.standard_error(),
        budget,
    })
}

/// The rng stream used for feature `i` under `seed`.
pub fn feature_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Monte Carlo estimate of the Shapley value of feature `i`.
pub fn sampled_shapley<V: CharacteristicFn + ?Sized>(
    v: &V,
    i: usize,
    budget: u64,
    seed: u64,
) -> Result<FeatureEstimate> {
    let mut rng = feature_rng(seed, i);
    sample_gains(v.arity(), i, budget, &mut rng, |c, _| marginal_gain(v, i, c))
}

/// [`sampled_shapley`] for every feature, each on its own rng stream.
pub fn sampled_attribution<V: CharacteristicFn + ?Sized>(
    v: &V,
    budget: u64,
    seed: u64,
) -> Result<Attribution> {
    let n = v.arity();
    let estimates = (0..n)
        .into_par_iter()
        .map(|i| sampled_shapley(v, i, budget, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Attribution {
        phi: estimates.iter().map(|e| e.mean).collect(),
        v_empty: v.eval(Coalition::empty(n)?)?,
        v_full: v.eval(Coalition::full(n)?)?,
        estimate: Estimate::Sampled { budget, seed },
        scope: Scope::Local,
        standard_error: Some(estimates.iter().map(|e| e.standard_error).collect()),
    })
}

/// Probability-weighted mean of attributions, e.g. local values weighted by
/// state occupancy.
pub fn weighted_global(attributions: &[(Attribution, f64)]) -> Result<Attribution> {
    let sum: f64 = attributions.iter().map(|(_, w)| w).sum();
    if attributions.is_empty() || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::WeightSum { sum });
    }
    let n = attributions[0].0.arity();
    let mut phi = vec![0.0; n];
    let mut v_empty = 0.0;
    let mut v_full = 0.0;
    let mut estimate = Estimate::Exact;
    for (a, w) in attributions {
        if a.arity() != n {
            return Err(Error::ArityMismatch {
                expected: n,
                found: a.arity(),
            });
        }
        for (p, x) in phi.iter_mut().zip(&a.phi) {
            *p += w * x;
        }
        v_empty += w * a.v_empty;
        v_full += w * a.v_full;
        if a.estimate != Estimate::Exact {
            estimate = a.estimate.clone();
        }
    }
    Ok(Attribution {
        phi,
        v_empty,
        v_full,
        estimate,
        scope: Scope::Global,
        standard_error: None,
    })
}
