//! Synthetic relations: independent, correlated and anti-correlated.
//!
//! Correlated pairs come from a Gaussian copula on the first two attributes.
//! For bivariate normals with correlation ρ_N, the Pearson correlation of the
//! uniform marginals Φ(Z₁), Φ(Z₂) is (6/π)·asin(ρ_N/2), so a target ρ_U is
//! reached with ρ_N = 2·sin(π·ρ_U/6). Remaining attributes are i.i.d. uniform.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::storage::{seeded_rng, IoCounter, PageLayout, Relation, RelationHeader, RelationWriter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Independent,
    Correlated,
    Anticorrelated,
}

impl Distribution {
    pub fn default_pcc(self) -> f64 {
        match self {
            Distribution::Independent => 0.0,
            Distribution::Correlated => 0.5,
            Distribution::Anticorrelated => -0.5,
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Independent => "independent",
            Distribution::Correlated => "correlated",
            Distribution::Anticorrelated => "anticorrelated",
        })
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "independent" | "indep" => Ok(Distribution::Independent),
            "correlated" | "corr" => Ok(Distribution::Correlated),
            "anticorrelated" | "anti" => Ok(Distribution::Anticorrelated),
            other => Err(Error::invalid(format!("unknown distribution '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: u64,
    pub d: u32,
    pub distribution: Distribution,
    /// Pearson target between attributes 1 and 2; `None` takes ±0.5.
    pub target_pcc: Option<f64>,
    pub seed: u64,
    /// Round each value down to one of `k` equally spaced levels.
    pub quantize: Option<u32>,
    pub layout: PageLayout,
}

impl GenSpec {
    pub fn new(n: u64, d: u32, distribution: Distribution, seed: u64) -> Self {
        Self {
            n,
            d,
            distribution,
            target_pcc: None,
            seed,
            quantize: None,
            layout: PageLayout::for_dim(d, crate::storage::DEFAULT_PAGE_BYTES),
        }
    }

    pub fn pcc(&self) -> f64 {
        self.target_pcc.unwrap_or(self.distribution.default_pcc())
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.distribution != Distribution::Independent {
            if self.d < 2 {
                return Err(Error::invalid("correlated generators need d >= 2"));
            }
            let r = self.pcc();
            if !(r > -1.0 && r < 1.0) {
                return Err(Error::invalid(format!("target pcc {r} not in (-1,1)")));
            }
        }
        if self.quantize == Some(0) {
            return Err(Error::invalid("quantization needs at least one level"));
        }
        self.layout.validate(self.d)
    }
}

/// Normal-scale correlation whose copula yields uniform marginals with
/// Pearson correlation `target`.
pub fn copula_normal_rho(target: f64) -> f64 {
    2.0 * (std::f64::consts::PI * target / 6.0).sin()
}

/// Streams `spec.n` records into `out` and writes `<out>.json` with the spec.
pub fn generate(spec: &GenSpec, out: impl AsRef<Path>) -> Result<RelationHeader> {
    spec.validate()?;
    let out = out.as_ref();
    let mut writer = RelationWriter::create(out, spec.d, spec.layout)?;
    let mut rng = seeded_rng(spec.seed, 0);
    let std_normal = Normal::standard();
    let rho = copula_normal_rho(spec.pcc());
    let tail = (1.0 - rho * rho).sqrt();
    let mut row = vec![0.0f64; spec.d as usize];

    for _ in 0..spec.n {
        let free_from = match spec.distribution {
            Distribution::Independent => 0,
            _ => {
                let z1: f64 = rng.sample(StandardNormal);
                let w: f64 = rng.sample(StandardNormal);
                let z2 = rho * z1 + tail * w;
                row[0] = std_normal.cdf(z1);
                row[1] = std_normal.cdf(z2);
                2
            }
        };
        for v in &mut row[free_from..] {
            *v = rng.random::<f64>();
        }
        if let Some(k) = spec.quantize {
            let k = f64::from(k);
            for v in &mut row {
                *v = (*v * k).floor().min(k - 1.0) / k;
            }
        }
        writer.push(&row)?;
    }
    let (header, _) = writer.finish()?;
    fs::write(sidecar_path(out), serde_json::to_vec_pretty(spec)?)?;
    Ok(header)
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Sample Pearson correlation of attributes `i` and `j` in one pass.
pub fn measured_pcc(rel: &Relation, i: usize, j: usize) -> Result<f64> {
    let d = rel.d();
    for a in [i, j] {
        if a >= d {
            return Err(Error::invalid(format!("attribute {a} out of range for d={d}")));
        }
    }
    if rel.n() < 2 {
        return Err(Error::invalid("correlation needs at least two records"));
    }
    // Welford-style running co-moments.
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut k = 0.0;
    rel.for_each_values(&mut IoCounter::new(), |_, v| {
        k += 1.0;
        let (x, y) = (v[i], v[j]);
        let dx = x - mx;
        mx += dx / k;
        let dy = y - my;
        my += dy / k;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    })?;
    if sxx == 0.0 {
        return Err(Error::ZeroVariance(i));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance(j));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Kolmogorov–Smirnov distance between attribute `a` and Uniform[0,1].
pub fn uniform_ks_statistic(rel: &Relation, a: usize) -> Result<f64> {
    if a >= rel.d() {
        return Err(Error::invalid(format!("attribute {a} out of range")));
    }
    let mut xs = Vec::with_capacity(rel.n() as usize);
    rel.for_each_values(&mut IoCounter::new(), |_, v| xs.push(v[a]))?;
    if xs.is_empty() {
        return Err(Error::EmptyRelation);
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let x = x.clamp(0.0, 1.0);
            (x - k as f64 / n).abs().max(((k + 1) as f64 / n - x).abs())
        })
        .fold(0.0, f64::max))
}
