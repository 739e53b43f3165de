//! Sampling-based approximate skylines and their error predictors.
//!
//! [`baseline`] returns the exact skyline of one uniform sample. [`double`]
//! grows the sample by doubling until a Monte-Carlo check ([`verify_error`])
//! certifies the result as an (ε, δ)-approximation.

use std::collections::HashSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{merge_skyline, Engine, SkylineResult};
use crate::dominance::{covers_values, ErrorReport, TupleRecord};
use crate::error::{Error, Result};
use crate::storage::{seeded_rng, IoCounter, Relation};

pub const EULER_GAMMA: f64 = 0.5772156649;

/// Largest `n` for which [`harmonic`] runs the exact recurrence.
pub const HARMONIC_EXACT_LIMIT: u64 = 10_000_000;

/// Inputs of [`double`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Initial sample size; `None` uses the verification sample size.
    pub s_initial: Option<u64>,
    pub engine: Engine,
}

impl ApproxParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let p = Self {
            epsilon,
            delta,
            s_initial: None,
            engine: Engine::Sfs,
        };
        p.validate()?;
        Ok(p)
    }

    /// The three error bounds used in the scaling experiments:
    /// `double1` = 0.1, `double2` = 0.01, `double3` = 0.001.
    pub fn preset(name: &str, delta: f64) -> Result<Self> {
        let epsilon = match name {
            "double1" => 0.1,
            "double2" => 0.01,
            "double3" => 0.001,
            other => return Err(Error::invalid(format!("unknown preset '{other}'"))),
        };
        Self::new(epsilon, delta)
    }

    pub fn with_s_initial(mut self, s: u64) -> Result<Self> {
        self.s_initial = Some(s);
        self.validate()?;
        Ok(self)
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon {} not in (0,1)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta {} not in (0,1)", self.delta)));
        }
        if self.s_initial == Some(0) {
            return Err(Error::invalid("initial sample size must be positive"));
        }
        Ok(())
    }
}

/// Skyline of a uniform without-replacement sample of `m` records.
pub fn baseline(
    rel: &Relation,
    m: u64,
    engine: Engine,
    seed: u64,
    counter: &mut IoCounter,
) -> Result<SkylineResult> {
    if m == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let sample = rel.sample_without_replacement(m, seed, counter)?;
    engine.skyline(sample.records)
}

/// `ceil(18 (ln log2 n + ln(1/δ)) / ε)`.
pub fn required_verification_size(n: u64, epsilon: f64, delta: f64) -> Result<u64> {
    if n < 2 {
        return Err(Error::invalid("verification size needs n >= 2"));
    }
    ApproxParams::new(epsilon, delta)?;
    let lnlog = (n as f64).log2().ln();
    Ok((18.0 * (lnlog + (1.0 / delta).ln()) / epsilon).ceil() as u64)
}

/// Membership test "is `t` covered (⪯) by some member", with members
/// ordered by coordinate sum so that broad coverers are tried first.
pub struct Coverage {
    dim: usize,
    flat: Vec<f64>,
}

impl Coverage {
    pub fn new(approx: &[TupleRecord]) -> Result<Self> {
        let dim = approx.first().map_or(0, TupleRecord::dim);
        if let Some(bad) = approx.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let mut order: Vec<&TupleRecord> = approx.iter().collect();
        order.sort_by(|a, b| {
            let sa: f64 = a.values().iter().sum();
            let sb: f64 = b.values().iter().sum();
            sa.total_cmp(&sb)
        });
        let flat = order.iter().flat_map(|r| r.values().iter().copied()).collect();
        Ok(Self { dim, flat })
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    #[inline]
    pub fn covers(&self, t: &[f64]) -> bool {
        if self.flat.is_empty() {
            return false;
        }
        debug_assert_eq!(t.len(), self.dim);
        self.flat.chunks_exact(self.dim).any(|c| covers_values(c, t))
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if !self.is_empty() && self.dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.dim,
            });
        }
        Ok(())
    }
}

/// Exact error of `approx` by one streaming pass over the relation.
pub fn relation_error(approx: &[TupleRecord], rel: &Relation, counter: &mut IoCounter) -> Result<ErrorReport> {
    if rel.n() == 0 {
        return Err(Error::EmptyRelation);
    }
    let cover = Coverage::new(approx)?;
    cover.check_dim(rel.d())?;
    let mut covered = 0u64;
    rel.for_each_values(counter, |_, v| {
        if cover.covers(v) {
            covered += 1;
        }
    })?;
    ErrorReport::new(covered, rel.n())
}

/// Fraction of a fresh sample of `min(s_v, n)` records not covered by `approx`.
pub fn verify_error(
    approx: &[TupleRecord],
    rel: &Relation,
    s_v: u64,
    seed: u64,
    counter: &mut IoCounter,
) -> Result<f64> {
    verify_error_with_rng(approx, rel, s_v, &mut seeded_rng(seed, 0), counter)
}

pub fn verify_error_with_rng<R: Rng + ?Sized>(
    approx: &[TupleRecord],
    rel: &Relation,
    s_v: u64,
    rng: &mut R,
    counter: &mut IoCounter,
) -> Result<f64> {
    if s_v == 0 {
        return Err(Error::invalid("verification sample size must be positive"));
    }
    if rel.n() == 0 {
        return Err(Error::EmptyRelation);
    }
    let cover = Coverage::new(approx)?;
    cover.check_dim(rel.d())?;
    let v = rel.sample_with_rng(s_v.min(rel.n()), rng, counter)?;
    let uncovered = v.records.iter().filter(|t| !cover.covers(t.values())).count();
    Ok(uncovered as f64 / v.len() as f64)
}

/// One verification round of [`double`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub m: u64,
    pub skyline_size: u64,
    pub eps_hat: f64,
    pub verify_sample_size: u64,
    /// Pages read during this round (sample draw plus verification).
    pub pages_read: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DoubleTrace {
    pub rounds: Vec<RoundRecord>,
    /// Sample size behind the returned skyline (`n` after a fallback).
    pub final_m: u64,
    /// The last verification passed the 2ε/3 threshold.
    pub terminated: bool,
    /// The sample would have exceeded the relation, so the exact skyline was
    /// computed from a full scan instead.
    pub fell_back_to_exact: bool,
}

impl DoubleTrace {
    /// Writes one JSON object per round, newline separated.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rounds {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn draw_fresh<R: Rng + ?Sized>(n: u64, k: u64, drawn: &mut HashSet<u64>, rng: &mut R) -> Vec<u64> {
    debug_assert!(drawn.len() as u64 + k <= n);
    let mut fresh = Vec::with_capacity(k as usize);
    while (fresh.len() as u64) < k {
        let t = rng.random_range(0..n);
        if drawn.insert(t) {
            fresh.push(t);
        }
    }
    fresh.sort_unstable();
    fresh
}

/// The doubling algorithm. Sample growth uses substream 0 of `seed`,
/// verification uses substream 1, so both are reproducible.
pub fn double(
    rel: &Relation,
    params: &ApproxParams,
    seed: u64,
    counter: &mut IoCounter,
) -> Result<(SkylineResult, DoubleTrace)> {
    params.validate()?;
    let n = rel.n();
    let s_v = required_verification_size(n, params.epsilon, params.delta)?;
    let threshold = 2.0 * params.epsilon / 3.0;
    let mut m = params.s_initial.unwrap_or(s_v);

    let mut sample_rng = seeded_rng(seed, 0);
    let mut verify_rng = seeded_rng(seed, 1);
    let mut trace = DoubleTrace::default();

    if m > n {
        return exact_fallback(rel, params.engine, counter, trace);
    }

    let start = *counter;
    let mut drawn: HashSet<u64> = HashSet::with_capacity(2 * m as usize);
    let first = draw_fresh(n, m, &mut drawn, &mut sample_rng);
    let mut sky = params.engine.skyline(rel.fetch_sorted(&first, counter)?)?;
    let mut eps_hat = verify_error_with_rng(&sky.members, rel, s_v, &mut verify_rng, counter)?;
    trace.rounds.push(RoundRecord {
        round: 1,
        m,
        skyline_size: sky.len() as u64,
        eps_hat,
        verify_sample_size: s_v.min(n),
        pages_read: counter.pages_read - start.pages_read,
    });

    while eps_hat > threshold {
        if 2 * m > n {
            return exact_fallback(rel, params.engine, counter, trace);
        }
        let start = *counter;
        let fresh = draw_fresh(n, m, &mut drawn, &mut sample_rng);
        let part = params.engine.skyline(rel.fetch_sorted(&fresh, counter)?)?;
        sky = merge_skyline(sky, part)?;
        m *= 2;
        eps_hat = verify_error_with_rng(&sky.members, rel, s_v, &mut verify_rng, counter)?;
        trace.rounds.push(RoundRecord {
            round: trace.rounds.len() as u32 + 1,
            m,
            skyline_size: sky.len() as u64,
            eps_hat,
            verify_sample_size: s_v.min(n),
            pages_read: counter.pages_read - start.pages_read,
        });
    }

    trace.final_m = m;
    trace.terminated = true;
    Ok((sky, trace))
}

fn exact_fallback(
    rel: &Relation,
    engine: Engine,
    counter: &mut IoCounter,
    mut trace: DoubleTrace,
) -> Result<(SkylineResult, DoubleTrace)> {
    let all = rel.read_all(counter)?;
    let sky = engine.skyline(all)?;
    trace.final_m = rel.n();
    trace.terminated = false;
    trace.fell_back_to_exact = true;
    Ok((sky, trace))
}

/// Higher-order harmonic number: `H(0, n) = 1`, `H(k, n) = Σ_{i≤n} H(k−1, i) / i`.
///
/// Exact recurrence up to [`HARMONIC_EXACT_LIMIT`]; beyond that the two
/// leading asymptotic terms, whose relative error there is well under 1%
/// for k ≤ 2 and shrinks as n grows.
pub fn harmonic(k: u32, n: u64) -> f64 {
    if k == 0 || n == 0 {
        return if n == 0 && k > 0 { 0.0 } else { 1.0 };
    }
    if n > HARMONIC_EXACT_LIMIT {
        harmonic_asymptotic(k, n)
    } else {
        harmonic_exact(k, n)
    }
}

/// Runs the recurrence; O(k·n).
pub fn harmonic_exact(k: u32, n: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    // row[j] holds H(j, i) for the current i.
    let mut row = vec![0.0f64; k as usize + 1];
    row[0] = 1.0;
    for i in 1..=n {
        let inv = 1.0 / i as f64;
        for j in 1..=k as usize {
            row[j] += row[j - 1] * inv;
        }
    }
    row[k as usize]
}

/// `(ln n)^k / k! + γ (ln n)^(k−1) / (k−1)!`.
pub fn harmonic_asymptotic(k: u32, n: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let l = (n as f64).ln();
    let lead = l.powi(k as i32) / factorial(k);
    let next = EULER_GAMMA * l.powi(k as i32 - 1) / factorial(k - 1);
    lead + next
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Expected baseline error under component independence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPrediction {
    pub d: u32,
    pub m: u64,
    pub n: u64,
    pub predicted_mean: f64,
    pub bound_sum: f64,
}

/// `(n−m)/(n(m+1)) · H(d−1, m+1)` and its closed-form upper bound
/// `(n−m)/(n(m+1)) · Σ_{i<d} ln(m+1)^i / i!`.
pub fn predict_error(d: u32, m: u64, n: u64) -> Result<ErrorPrediction> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("need 1 <= m < n, got m={m}, n={n}")));
    }
    let factor = (n - m) as f64 / (n as f64 * (m + 1) as f64);
    let l = ((m + 1) as f64).ln();
    let series: f64 = (0..d).map(|i| l.powi(i as i32) / factorial(i)).sum();
    Ok(ErrorPrediction {
        d,
        m,
        n,
        predicted_mean: (factor * harmonic(d - 1, m + 1)).clamp(0.0, 1.0),
        bound_sum: (factor * series).clamp(0.0, 1.0),
    })
}

/// Distribution-free error estimate from an observed sample skyline:
/// `(n−m)/n · |Sky(S)| / m`.
pub fn estimate_error_from_sample(sample_skyline_size: u64, m: u64, n: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    if sample_skyline_size > m {
        return Err(Error::invalid("skyline larger than its sample"));
    }
    if m > n {
        return Err(Error::SampleTooLarge { m, n });
    }
    Ok((n - m) as f64 / n as f64 * sample_skyline_size as f64 / m as f64)
}

/// Replaces each attribute by its rank divided by n (rank 0 for the
/// smallest value). Ties are ranked by input position.
pub fn rank_transform(records: &[TupleRecord]) -> Result<Vec<TupleRecord>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let d = first.dim();
    if let Some(bad) = records.iter().find(|r| r.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    let n = records.len();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
    let mut order: Vec<usize> = (0..n).collect();
    for a in 0..d {
        order.sort_by(|&i, &j| {
            records[i].values()[a]
                .total_cmp(&records[j].values()[a])
                .then(i.cmp(&j))
        });
        for (rank, &pos) in order.iter().enumerate() {
            out[pos][a] = rank as f64 / n as f64;
        }
    }
    Ok(records
        .iter()
        .zip(out)
        .map(|(r, v)| TupleRecord::new_unchecked(r.index, v))
        .collect())
}
