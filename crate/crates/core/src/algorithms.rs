//! Exact skyline engines and skyline merging.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dominance::{self, dominates_values, TupleRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Bnl,
    Sfs,
    Dc,
    Brute,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Bnl, Engine::Sfs, Engine::Dc, Engine::Brute];

    /// Default BNL window when an engine is selected by name only.
    pub const DEFAULT_WINDOW: usize = 1024;

    /// Computes the skyline of an in-memory batch with this engine.
    pub fn skyline(self, records: Vec<TupleRecord>) -> Result<SkylineResult> {
        match self {
            Engine::Bnl => bnl_skyline(records, Self::DEFAULT_WINDOW),
            Engine::Sfs => sfs_skyline(records),
            Engine::Dc => dc_skyline(records),
            Engine::Brute => brute_skyline(records),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Bnl => "bnl",
            Engine::Sfs => "sfs",
            Engine::Dc => "dc",
            Engine::Brute => "brute",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bnl" => Ok(Engine::Bnl),
            "sfs" => Ok(Engine::Sfs),
            "dc" => Ok(Engine::Dc),
            "brute" => Ok(Engine::Brute),
            other => Err(Error::invalid(format!("unknown engine '{other}'"))),
        }
    }
}

/// An antichain of input records plus how it was obtained.
#[derive(Clone, Debug)]
pub struct SkylineResult {
    pub members: Vec<TupleRecord>,
    pub algorithm: Engine,
    pub comparisons: u64,
    pub duration: Duration,
}

impl SkylineResult {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member indices in ascending order.
    pub fn index_set(&self) -> Vec<u64> {
        let mut idx: Vec<u64> = self.members.iter().map(|r| r.index).collect();
        idx.sort_unstable();
        idx
    }

    fn empty(algorithm: Engine) -> Self {
        Self {
            members: Vec::new(),
            algorithm,
            comparisons: 0,
            duration: Duration::ZERO,
        }
    }
}

fn uniform_dim(records: &[TupleRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        let d = first.dim();
        if let Some(bad) = records.iter().find(|r| r.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
    }
    Ok(())
}

pub fn brute_skyline(records: Vec<TupleRecord>) -> Result<SkylineResult> {
    let start = Instant::now();
    let n = records.len() as u64;
    let members = dominance::brute_force_skyline(&records)?;
    Ok(SkylineResult {
        members,
        algorithm: Engine::Brute,
        comparisons: n.saturating_mul(n),
        duration: start.elapsed(),
    })
}

/// Block-nested-loops over a record stream.
///
/// At most `window_capacity` candidates stay in memory; records that find no
/// room are spilled to an anonymous temporary file and re-read in the next
/// pass. Candidates that entered the window before the first spill of a pass
/// have been compared against every surviving record and are emitted; the
/// rest are carried into the next pass ahead of the spilled records.
pub fn bnl_skyline<I>(input: I, window_capacity: usize) -> Result<SkylineResult>
where
    I: IntoIterator<Item = TupleRecord>,
{
    if window_capacity == 0 {
        return Err(Error::invalid("window capacity must be at least 1"));
    }
    let start = Instant::now();
    let mut comparisons = 0u64;
    let mut output = Vec::new();
    let mut dim: Option<usize> = None;

    let mut pass = Pass::new(window_capacity);
    for r in input {
        check_stream_dim(&mut dim, &r)?;
        pass.offer(r, &mut comparisons)?;
    }

    while let Some(spill) = pass.finish(&mut output)? {
        let Spill { carried, file, count } = spill;
        let mut next = Pass::new(window_capacity);
        for r in carried {
            next.offer(r, &mut comparisons)?;
        }
        let d = dim.expect("spill implies at least one record");
        let mut reader = SpillReader::new(file, d)?;
        for _ in 0..count {
            next.offer(reader.next_record()?, &mut comparisons)?;
        }
        pass = next;
    }

    Ok(SkylineResult {
        members: output,
        algorithm: Engine::Bnl,
        comparisons,
        duration: start.elapsed(),
    })
}

fn check_stream_dim(dim: &mut Option<usize>, r: &TupleRecord) -> Result<()> {
    match *dim {
        None => *dim = Some(r.dim()),
        Some(d) if d != r.dim() => {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.dim(),
            })
        }
        _ => {}
    }
    Ok(())
}

struct WindowEntry {
    record: TupleRecord,
    // Number of records spilled in this pass when the entry was admitted.
    spilled_before: u64,
}

struct Pass {
    capacity: usize,
    window: Vec<WindowEntry>,
    spill: Option<BufWriter<File>>,
    spilled: u64,
}

struct Spill {
    carried: Vec<TupleRecord>,
    file: File,
    count: u64,
}

impl Pass {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            window: Vec::with_capacity(capacity.min(4096)),
            spill: None,
            spilled: 0,
        }
    }

    fn offer(&mut self, r: TupleRecord, comparisons: &mut u64) -> Result<()> {
        let mut i = 0;
        while i < self.window.len() {
            let w = self.window[i].record.values();
            *comparisons += 1;
            if dominates_values(w, r.values()) {
                return Ok(());
            }
            if dominates_values(r.values(), w) {
                self.window.swap_remove(i);
            } else {
                i += 1;
            }
        }
        if self.window.len() < self.capacity {
            self.window.push(WindowEntry {
                record: r,
                spilled_before: self.spilled,
            });
        } else {
            let writer = match &mut self.spill {
                Some(w) => w,
                None => self.spill.insert(BufWriter::new(tempfile::tempfile()?)),
            };
            write_spilled(writer, &r)?;
            self.spilled += 1;
        }
        Ok(())
    }

    /// Emits confirmed candidates; returns the work left for another pass.
    fn finish(self, output: &mut Vec<TupleRecord>) -> Result<Option<Spill>> {
        let Some(writer) = self.spill else {
            output.extend(self.window.into_iter().map(|e| e.record));
            return Ok(None);
        };
        let mut carried = Vec::new();
        for e in self.window {
            if e.spilled_before == 0 {
                output.push(e.record);
            } else {
                carried.push(e.record);
            }
        }
        let mut file = writer.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(0))?;
        Ok(Some(Spill {
            carried,
            file,
            count: self.spilled,
        }))
    }
}

fn write_spilled(w: &mut impl Write, r: &TupleRecord) -> Result<()> {
    w.write_all(&r.index.to_le_bytes())?;
    for v in r.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct SpillReader {
    inner: BufReader<File>,
    buf: Vec<u8>,
    dim: usize,
}

impl SpillReader {
    fn new(file: File, dim: usize) -> Result<Self> {
        Ok(Self {
            inner: BufReader::new(file),
            buf: vec![0; 8 * (dim + 1)],
            dim,
        })
    }

    fn next_record(&mut self) -> Result<TupleRecord> {
        self.inner.read_exact(&mut self.buf)?;
        let word = |i: usize| -> [u8; 8] { self.buf[8 * i..8 * i + 8].try_into().unwrap() };
        let index = u64::from_le_bytes(word(0));
        let values = (1..=self.dim).map(|i| f64::from_le_bytes(word(i))).collect();
        Ok(TupleRecord::new_unchecked(index, values))
    }
}

/// Sort-filter-skyline: order by coordinate sum, then one filter pass.
///
/// Ties on the sum fall back to lexicographic value order and then index.
/// Rounding can make a dominating record's sum equal to the dominated one's,
/// and the lexicographic key keeps the dominator first in that case.
pub fn sfs_skyline<I>(input: I) -> Result<SkylineResult>
where
    I: IntoIterator<Item = TupleRecord>,
{
    let start = Instant::now();
    let records: Vec<TupleRecord> = input.into_iter().collect();
    uniform_dim(&records)?;

    let mut keyed: Vec<(f64, TupleRecord)> = records
        .into_iter()
        .map(|r| (r.values().iter().sum::<f64>(), r))
        .collect();
    keyed.sort_by(|(sa, a), (sb, b)| {
        sa.total_cmp(sb)
            .then_with(|| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.index.cmp(&b.index))
    });

    let mut comparisons = 0u64;
    let mut members: Vec<TupleRecord> = Vec::new();
    for (_, r) in keyed {
        let dominated = members.iter().any(|m| {
            comparisons += 1;
            dominates_values(m.values(), r.values())
        });
        if !dominated {
            debug_assert!(
                !members.iter().any(|m| dominates_values(r.values(), m.values())),
                "sort order let a later record dominate an emitted one"
            );
            members.push(r);
        }
    }

    Ok(SkylineResult {
        members,
        algorithm: Engine::Sfs,
        comparisons,
        duration: start.elapsed(),
    })
}

const DC_LEAF: usize = 16;

/// Divide and conquer: split in half by position, recurse, merge.
pub fn dc_skyline(records: Vec<TupleRecord>) -> Result<SkylineResult> {
    let start = Instant::now();
    uniform_dim(&records)?;
    let mut comparisons = 0u64;
    let members = dc_rec(records, &mut comparisons);
    Ok(SkylineResult {
        members,
        algorithm: Engine::Dc,
        comparisons,
        duration: start.elapsed(),
    })
}

fn dc_rec(mut records: Vec<TupleRecord>, comparisons: &mut u64) -> Vec<TupleRecord> {
    if records.len() <= DC_LEAF {
        let keep: Vec<bool> = records
            .iter()
            .map(|t| {
                !records.iter().any(|o| {
                    *comparisons += 1;
                    dominates_values(o.values(), t.values())
                })
            })
            .collect();
        let mut keep = keep.into_iter();
        records.retain(|_| keep.next().unwrap());
        return records;
    }
    let right = records.split_off(records.len() / 2);
    let left = dc_rec(records, comparisons);
    let right = dc_rec(right, comparisons);
    merge_members(left, right, comparisons)
}

fn merge_members(
    a: Vec<TupleRecord>,
    b: Vec<TupleRecord>,
    comparisons: &mut u64,
) -> Vec<TupleRecord> {
    let undominated = |x: &TupleRecord, by: &[TupleRecord], c: &mut u64| {
        !by.iter().any(|y| {
            *c += 1;
            dominates_values(y.values(), x.values())
        })
    };
    let mut keep_a: Vec<bool> = Vec::with_capacity(a.len());
    for x in &a {
        keep_a.push(undominated(x, &b, comparisons));
    }
    let mut out: Vec<TupleRecord> = Vec::with_capacity(a.len() + b.len());
    for y in b.iter() {
        if undominated(y, &a, comparisons) {
            out.push(y.clone());
        }
    }
    let mut merged: Vec<TupleRecord> = a
        .into_iter()
        .zip(keep_a)
        .filter_map(|(x, k)| k.then_some(x))
        .collect();
    merged.append(&mut out);
    merged
}

/// Skyline of the union of two antichains.
pub fn merge_skyline(a: SkylineResult, b: SkylineResult) -> Result<SkylineResult> {
    if let (Some(x), Some(y)) = (a.members.first(), b.members.first()) {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                found: y.dim(),
            });
        }
    }
    let start = Instant::now();
    let mut comparisons = a.comparisons + b.comparisons;
    let algorithm = if a.is_empty() { b.algorithm } else { a.algorithm };
    let members = merge_members(a.members, b.members, &mut comparisons);
    Ok(SkylineResult {
        members,
        algorithm,
        comparisons,
        duration: a.duration + b.duration + start.elapsed(),
    })
}

impl Default for SkylineResult {
    fn default() -> Self {
        Self::empty(Engine::Brute)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dominance::{brute_force_skyline, is_antichain, rec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_points() -> Vec<TupleRecord> {
        vec![
            rec(0, &[0.0, 2.0]),
            rec(1, &[1.0, 1.0]),
            rec(2, &[2.0, 0.0]),
            rec(3, &[2.0, 2.0]),
        ]
    }

    fn random(n: usize, d: usize, seed: u64) -> Vec<TupleRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| rec(i as u64, &(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
            .collect()
    }

    fn oracle(records: &[TupleRecord]) -> Vec<u64> {
        let mut idx: Vec<u64> = brute_force_skyline(records)
            .unwrap()
            .iter()
            .map(|r| r.index)
            .collect();
        idx.sort_unstable();
        idx
    }

    #[test]
    fn four_point_set_all_engines() {
        for engine in Engine::ALL {
            let r = engine.skyline(four_points()).unwrap();
            assert_eq!(r.index_set(), vec![0, 1, 2], "{engine}");
            assert_eq!(r.algorithm, engine);
        }
    }

    #[test]
    fn bnl_small_window_matches_oracle() {
        let t = random(1000, 3, 7);
        let r = bnl_skyline(t.clone(), 64).unwrap();
        assert_eq!(r.index_set(), oracle(&t));
        let r1 = bnl_skyline(t.clone(), 1).unwrap();
        assert_eq!(r1.index_set(), oracle(&t));
    }

    #[test]
    fn bnl_spills_on_anticorrelated_input() {
        // A line x + y = 1 is all skyline, so a window of 8 must spill repeatedly.
        let t: Vec<TupleRecord> = (0..300)
            .map(|i| {
                let x = i as f64 / 300.0;
                rec(i, &[x, 1.0 - x])
            })
            .collect();
        let r = bnl_skyline(t.clone(), 8).unwrap();
        assert_eq!(r.len(), 300);
        assert_eq!(r.index_set(), oracle(&t));
    }

    #[test]
    fn bnl_rejects_zero_window() {
        assert!(bnl_skyline(four_points(), 0).is_err());
    }

    #[test]
    fn sfs_examples() {
        let line: Vec<TupleRecord> = (0..10).map(|i| rec(i, &[i as f64, 9.0 - i as f64])).collect();
        assert_eq!(sfs_skyline(line.clone()).unwrap().len(), 10);

        let dup = vec![rec(0, &[1.0, 1.0]), rec(1, &[1.0, 1.0])];
        assert_eq!(sfs_skyline(dup).unwrap().index_set(), vec![0, 1]);
    }

    #[test]
    fn sfs_survives_sum_rounding_ties() {
        // Both sums round to 1e20; index order alone would emit 0 first.
        let t = vec![rec(0, &[1e20, 1.0]), rec(1, &[1e20, 0.0])];
        assert_eq!(sfs_skyline(t).unwrap().index_set(), vec![1]);
    }

    #[test]
    fn dc_examples() {
        assert_eq!(dc_skyline(vec![rec(5, &[3.0, 3.0])]).unwrap().index_set(), vec![5]);
        let t = random(2000, 4, 11);
        assert_eq!(dc_skyline(t.clone()).unwrap().index_set(), oracle(&t));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let t = vec![rec(0, &[1.0, 2.0]), rec(1, &[1.0])];
        assert!(sfs_skyline(t.clone()).is_err());
        assert!(dc_skyline(t.clone()).is_err());
        assert!(bnl_skyline(t, 4).is_err());
    }

    #[test]
    fn merge_examples() {
        let x = dc_skyline(four_points()).unwrap();
        let merged = merge_skyline(x.clone(), SkylineResult::default()).unwrap();
        assert_eq!(merged.index_set(), x.index_set());

        let a = dc_skyline(vec![rec(0, &[0.0, 2.0])]).unwrap();
        let b = dc_skyline(vec![rec(1, &[1.0, 1.0])]).unwrap();
        assert_eq!(merge_skyline(a, b).unwrap().index_set(), vec![0, 1]);

        let a = dc_skyline(vec![rec(0, &[0.0, 2.0])]).unwrap();
        let b = dc_skyline(vec![rec(1, &[1.0])]).unwrap();
        assert!(merge_skyline(a, b).is_err());
    }

    #[test]
    fn merge_of_halves_is_skyline_of_union() {
        let all = random(1000, 3, 3);
        let (a, b) = all.split_at(500);
        let sa = sfs_skyline(a.to_vec()).unwrap();
        let sb = sfs_skyline(b.to_vec()).unwrap();
        let m = merge_skyline(sa, sb).unwrap();
        assert!(is_antichain(&m.members).unwrap());
        assert_eq!(m.index_set(), oracle(&all));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn relation() -> impl Strategy<Value = Vec<TupleRecord>> {
            (2usize..5).prop_flat_map(|d| {
                prop::collection::vec(prop::collection::vec((0u8..6).prop_map(f64::from), d), 0..120)
                    .prop_map(|pts| {
                        pts.into_iter()
                            .enumerate()
                            .map(|(i, v)| rec(i as u64, &v))
                            .collect()
                    })
            })
        }

        proptest! {
            #[test]
            fn engines_agree(t in relation(), window in 1usize..10) {
                let expect = oracle(&t);
                prop_assert_eq!(bnl_skyline(t.clone(), window).unwrap().index_set(), expect.clone());
                prop_assert_eq!(sfs_skyline(t.clone()).unwrap().index_set(), expect.clone());
                prop_assert_eq!(dc_skyline(t).unwrap().index_set(), expect);
            }

            #[test]
            fn merge_commutes_and_associates(t in relation()) {
                let third = t.len() / 3;
                let parts: Vec<SkylineResult> = [&t[..third], &t[third..2 * third], &t[2 * third..]]
                    .iter()
                    .map(|p| dc_skyline(p.to_vec()).unwrap())
                    .collect();
                let ab = merge_skyline(parts[0].clone(), parts[1].clone()).unwrap();
                let ba = merge_skyline(parts[1].clone(), parts[0].clone()).unwrap();
                prop_assert_eq!(ab.index_set(), ba.index_set());
                let left = merge_skyline(ab, parts[2].clone()).unwrap();
                let bc = merge_skyline(parts[1].clone(), parts[2].clone()).unwrap();
                let right = merge_skyline(parts[0].clone(), bc).unwrap();
                prop_assert_eq!(left.index_set(), right.index_set());
            }
        }
    }
}
