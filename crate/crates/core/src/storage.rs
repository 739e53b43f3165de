//! Page-organized relation files with logical I/O accounting.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! page 0      magic "SKYR" | version u32 | n u64 | d u32 | tuple_bytes u32 | page_bytes u32 | zero fill
//! page 1..    floor(page_bytes / tuple_bytes) slots per page, each slot d f64 values then zero padding
//! ```
//!
//! Records never straddle a page boundary and the last data page is padded
//! to full size, so a valid file is exactly `(1 + data_pages) * page_bytes`
//! bytes long. A record's index is its position; it is not stored.
//!
//! Samples are drawn with ChaCha8 (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`, with the ChaCha stream id selecting an
//! independent substream. The same seed reproduces the same sample on any
//! platform.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use memmap2::Mmap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dominance::TupleRecord;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SKYR";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TUPLE_BYTES: u32 = 128;
pub const DEFAULT_PAGE_BYTES: u32 = 8192;
const HEADER_LEN: usize = 28;

/// Deterministic generator for a (seed, substream) pair.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationHeader {
    pub format_version: u32,
    pub n: u64,
    pub d: u32,
    pub tuple_bytes: u32,
    pub page_bytes: u32,
}

impl RelationHeader {
    /// Header with the default 128-byte tuples on 8 KiB pages.
    pub fn new(n: u64, d: u32) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n,
            d,
            tuple_bytes: DEFAULT_TUPLE_BYTES,
            page_bytes: DEFAULT_PAGE_BYTES,
        }
    }

    pub fn with_layout(mut self, layout: PageLayout) -> Self {
        self.tuple_bytes = layout.tuple_bytes;
        self.page_bytes = layout.page_bytes;
        self
    }

    pub fn layout(&self) -> PageLayout {
        PageLayout {
            tuple_bytes: self.tuple_bytes,
            page_bytes: self.page_bytes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        if self.d == 0 {
            return Err(Error::ZeroDimension);
        }
        self.layout().validate(self.d)
    }

    pub fn records_per_page(&self) -> u64 {
        u64::from(self.page_bytes / self.tuple_bytes)
    }

    pub fn data_pages(&self) -> u64 {
        self.n.div_ceil(self.records_per_page())
    }

    pub fn file_len(&self) -> u64 {
        (1 + self.data_pages()) * u64::from(self.page_bytes)
    }

    pub fn page_of(&self, index: u64) -> u64 {
        index / self.records_per_page()
    }

    fn offset_of(&self, index: u64) -> usize {
        let rpp = self.records_per_page();
        let page = 1 + index / rpp;
        let slot = index % rpp;
        (page * u64::from(self.page_bytes) + slot * u64::from(self.tuple_bytes)) as usize
    }

    fn encode(&self) -> Vec<u8> {
        let mut page = vec![0u8; self.page_bytes as usize];
        page[0..4].copy_from_slice(&MAGIC);
        page[4..8].copy_from_slice(&self.format_version.to_le_bytes());
        page[8..16].copy_from_slice(&self.n.to_le_bytes());
        page[16..20].copy_from_slice(&self.d.to_le_bytes());
        page[20..24].copy_from_slice(&self.tuple_bytes.to_le_bytes());
        page[24..28].copy_from_slice(&self.page_bytes.to_le_bytes());
        page
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corrupt("file shorter than header".into()));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let header = Self {
            format_version: u32_at(4),
            n: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            d: u32_at(16),
            tuple_bytes: u32_at(20),
            page_bytes: u32_at(24),
        };
        header.validate()?;
        Ok(header)
    }
}

/// Record stride and page size of a relation file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageLayout {
    pub tuple_bytes: u32,
    pub page_bytes: u32,
}

impl Default for PageLayout {
    fn default() -> Self {
        Self {
            tuple_bytes: DEFAULT_TUPLE_BYTES,
            page_bytes: DEFAULT_PAGE_BYTES,
        }
    }
}

impl PageLayout {
    /// Tight stride for `d` attributes: 8 bytes per value, no padding.
    pub fn packed(d: u32) -> Self {
        Self {
            tuple_bytes: 8 * d,
            page_bytes: DEFAULT_PAGE_BYTES,
        }
    }

    /// Smallest stride that fits `d` values: the default 128 bytes, or more
    /// when `d > 16`.
    pub fn for_dim(d: u32, page_bytes: u32) -> Self {
        Self {
            tuple_bytes: DEFAULT_TUPLE_BYTES.max(8 * d),
            page_bytes,
        }
    }

    pub fn validate(&self, d: u32) -> Result<()> {
        if u64::from(self.tuple_bytes) < 8 * u64::from(d) {
            return Err(Error::invalid(format!(
                "tuple_bytes {} cannot hold {d} float64 values",
                self.tuple_bytes
            )));
        }
        if (self.page_bytes as usize) < HEADER_LEN || self.page_bytes < self.tuple_bytes {
            return Err(Error::invalid(format!(
                "page_bytes {} too small for tuple_bytes {}",
                self.page_bytes, self.tuple_bytes
            )));
        }
        Ok(())
    }
}

/// Logical page counters for one reader.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCounter {
    pub pages_read: u64,
    pub pages_written: u64,
    pub seeks: u64,
}

impl IoCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, other: &IoCounter) {
        self.pages_read += other.pages_read;
        self.pages_written += other.pages_written;
        self.seeks += other.seeks;
    }
}

/// Streaming writer. The header is rewritten with the final count on
/// [`RelationWriter::finish`], so `n` need not be known up front.
pub struct RelationWriter {
    out: BufWriter<File>,
    header: RelationHeader,
    expected_n: Option<u64>,
    written: u64,
    slot_buf: Vec<u8>,
    pages_written: u64,
}

impl RelationWriter {
    pub fn create(path: impl AsRef<Path>, d: u32, layout: PageLayout) -> Result<Self> {
        let header = RelationHeader::new(0, d).with_layout(layout);
        header.validate()?;
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.encode())?;
        Ok(Self {
            out,
            header,
            expected_n: None,
            written: 0,
            slot_buf: vec![0u8; layout.tuple_bytes as usize],
            pages_written: 1,
        })
    }

    pub fn d(&self) -> u32 {
        self.header.d
    }

    /// Appends one record's values; they must be finite and of length `d`.
    pub fn push(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.header.d as usize {
            return Err(Error::DimensionMismatch {
                expected: self.header.d as usize,
                found: values.len(),
            });
        }
        if let Some(attribute) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: self.written,
                attribute,
            });
        }
        let rpp = self.header.records_per_page();
        let slot = self.written % rpp;
        if slot == 0 && self.written > 0 {
            self.pad_page_tail(rpp)?;
        }
        for (chunk, v) in self.slot_buf.chunks_exact_mut(8).zip(values) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&self.slot_buf)?;
        if slot == 0 {
            self.pages_written += 1;
        }
        self.written += 1;
        Ok(())
    }

    fn pad_page_tail(&mut self, filled_slots: u64) -> Result<()> {
        let used = filled_slots * u64::from(self.header.tuple_bytes);
        let tail = u64::from(self.header.page_bytes) - used;
        if tail > 0 {
            self.out.write_all(&vec![0u8; tail as usize])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(RelationHeader, IoCounter)> {
        if let Some(expected) = self.expected_n {
            if expected != self.written {
                return Err(Error::invalid(format!(
                    "header declares {expected} records but stream yielded {}",
                    self.written
                )));
            }
        }
        let rpp = self.header.records_per_page();
        if self.written > 0 {
            let last = match self.written % rpp {
                0 => rpp,
                k => k,
            };
            self.pad_page_tail(last)?;
        }
        self.header.n = self.written;
        let mut file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(0))?;
        file.write_all(&self.header.encode())?;
        file.sync_data()?;
        let counter = IoCounter {
            pages_written: self.pages_written,
            ..IoCounter::default()
        };
        Ok((self.header, counter))
    }
}

/// Writes exactly `header.n` records from `records` to `path`.
pub fn write_relation<I, V>(records: I, header: RelationHeader, path: impl AsRef<Path>) -> Result<IoCounter>
where
    I: IntoIterator<Item = V>,
    V: AsRef<[f64]>,
{
    header.validate()?;
    let mut w = RelationWriter::create(path, header.d, header.layout())?;
    w.expected_n = Some(header.n);
    for r in records {
        if w.written == header.n {
            return Err(Error::invalid(format!(
                "stream yields more than the declared {} records",
                header.n
            )));
        }
        w.push(r.as_ref())?;
    }
    Ok(w.finish()?.1)
}

/// A read-only, memory-mapped relation. Safe to share between threads;
/// each reader passes its own [`IoCounter`].
pub struct Relation {
    map: Mmap,
    header: RelationHeader,
}

impl Relation {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        if len < HEADER_LEN as u64 {
            return Err(Error::Corrupt(format!("file is {len} bytes, shorter than the header")));
        }
        // SAFETY: the file is opened read-only and relation files are
        // immutable once written.
        let map = unsafe { Mmap::map(&file)? };
        let header = RelationHeader::decode(&map)?;
        if len != header.file_len() {
            return Err(Error::Corrupt(format!(
                "expected {} bytes for n={} but file has {len}",
                header.file_len(),
                header.n
            )));
        }
        Ok(Self { map, header })
    }

    pub fn header(&self) -> &RelationHeader {
        &self.header
    }

    pub fn n(&self) -> u64 {
        self.header.n
    }

    pub fn d(&self) -> usize {
        self.header.d as usize
    }

    /// Decodes record `index` into `buf` without touching any counter.
    fn decode_into(&self, index: u64, buf: &mut [f64]) -> Result<()> {
        let off = self.header.offset_of(index);
        let bytes = &self.map[off..off + 8 * buf.len()];
        for (i, (v, chunk)) in buf.iter_mut().zip(bytes.chunks_exact(8)).enumerate() {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite { index, attribute: i });
            }
        }
        Ok(())
    }

    fn record(&self, index: u64) -> Result<TupleRecord> {
        let mut values = vec![0.0; self.d()];
        self.decode_into(index, &mut values)?;
        Ok(TupleRecord::new_unchecked(index, values))
    }

    /// Sequential scan in index order. Charges one page read per data page
    /// entered, so a full scan costs exactly `data_pages()`.
    pub fn scan<'a>(&'a self, counter: &'a mut IoCounter) -> Scan<'a> {
        if self.n() > 0 {
            counter.seeks += 1;
        }
        Scan {
            rel: self,
            next: 0,
            counter,
        }
    }

    /// Allocation-free full scan handing each record's values to `f`.
    pub fn for_each_values<F>(&self, counter: &mut IoCounter, mut f: F) -> Result<()>
    where
        F: FnMut(u64, &[f64]),
    {
        let mut buf = vec![0.0; self.d()];
        if self.n() > 0 {
            counter.seeks += 1;
        }
        counter.pages_read += self.header.data_pages();
        for i in 0..self.n() {
            self.decode_into(i, &mut buf)?;
            f(i, &buf);
        }
        Ok(())
    }

    /// Loads every record; charges a full scan.
    pub fn read_all(&self, counter: &mut IoCounter) -> Result<Vec<TupleRecord>> {
        self.scan(counter).collect()
    }

    /// Fetches strictly increasing `indices`, charging each distinct page once.
    pub fn fetch_sorted(&self, indices: &[u64], counter: &mut IoCounter) -> Result<Vec<TupleRecord>> {
        let mut out = Vec::with_capacity(indices.len());
        let mut last_page: Option<u64> = None;
        let mut prev: Option<u64> = None;
        for &i in indices {
            if i >= self.n() {
                return Err(Error::invalid(format!("index {i} out of range for n={}", self.n())));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::invalid("fetch indices must be strictly increasing"));
            }
            prev = Some(i);
            let page = self.header.page_of(i);
            if last_page != Some(page) {
                counter.pages_read += 1;
                if last_page.map_or(true, |lp| lp + 1 != page) {
                    counter.seeks += 1;
                }
                last_page = Some(page);
            }
            out.push(self.record(i)?);
        }
        Ok(out)
    }

    /// Uniform without-replacement sample of `m` records under `seed`.
    pub fn sample_without_replacement(&self, m: u64, seed: u64, counter: &mut IoCounter) -> Result<Sample> {
        let mut rng = seeded_rng(seed, 0);
        let mut sample = self.sample_with_rng(m, &mut rng, counter)?;
        sample.seed = seed;
        Ok(sample)
    }

    /// As [`Relation::sample_without_replacement`] but drawing from a caller
    /// supplied generator; `seed` in the result is 0.
    pub fn sample_with_rng<R: Rng + ?Sized>(&self, m: u64, rng: &mut R, counter: &mut IoCounter) -> Result<Sample> {
        if m > self.n() {
            return Err(Error::SampleTooLarge { m, n: self.n() });
        }
        let indices = floyd_subset(self.n(), m, rng);
        let records = self.fetch_sorted(&indices, counter)?;
        Ok(Sample {
            records,
            source_indices: indices,
            seed: 0,
            replacement: false,
        })
    }
}

/// Iterator returned by [`Relation::scan`].
pub struct Scan<'a> {
    rel: &'a Relation,
    next: u64,
    counter: &'a mut IoCounter,
}

impl Iterator for Scan<'_> {
    type Item = Result<TupleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.rel.n() {
            return None;
        }
        let i = self.next;
        if i % self.rel.header.records_per_page() == 0 {
            self.counter.pages_read += 1;
        }
        self.next += 1;
        Some(self.rel.record(i))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.rel.n() - self.next) as usize;
        (left, Some(left))
    }
}

/// Floyd's subset sampling: a uniform `m`-subset of `0..n`, sorted.
pub fn floyd_subset<R: Rng + ?Sized>(n: u64, m: u64, rng: &mut R) -> Vec<u64> {
    assert!(m <= n, "subset larger than population");
    if m == n {
        return (0..n).collect();
    }
    let mut chosen: HashSet<u64> = HashSet::with_capacity(m as usize);
    for j in (n - m)..n {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut v: Vec<u64> = chosen.into_iter().collect();
    v.sort_unstable();
    v
}

/// A without-replacement subset of a relation.
#[derive(Clone, Debug)]
pub struct Sample {
    pub records: Vec<TupleRecord>,
    pub source_indices: Vec<u64>,
    pub seed: u64,
    pub replacement: bool,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Column selection and orientation for [`ingest_csv`].
#[derive(Clone, Debug, Default)]
pub struct CsvSchema {
    /// Zero-based source columns to keep, in output order. `None` keeps all.
    pub columns: Option<Vec<usize>>,
    /// Per output attribute: multiply by -1 so a maximized criterion becomes
    /// minimized. Shorter than `d` means the remaining attributes are kept.
    pub negate: Vec<bool>,
    pub has_header: bool,
}

/// Converts a comma-separated UTF-8 file into a relation file.
pub fn ingest_csv(
    input: impl AsRef<Path>,
    schema: &CsvSchema,
    out: impl AsRef<Path>,
    page_bytes: u32,
) -> Result<RelationHeader> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(input)
        .map_err(csv_error)?;

    let mut writer: Option<RelationWriter> = None;
    let mut values = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let cols: Vec<usize> = match &schema.columns {
            Some(c) => c.clone(),
            None => (0..row.len()).collect(),
        };
        values.clear();
        for (k, &c) in cols.iter().enumerate() {
            let cell = row.get(c).ok_or_else(|| Error::Csv {
                row: line,
                message: format!("missing column {c}"),
            })?;
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                row: line,
                message: format!("column {c}: cannot parse '{cell}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row: line,
                    message: format!("column {c}: non-finite value"),
                });
            }
            let flip = schema.negate.get(k).copied().unwrap_or(false);
            values.push(if flip { -v } else { v });
        }
        let w = match &mut writer {
            Some(w) => w,
            None => {
                let d = u32::try_from(values.len()).map_err(|_| Error::invalid("too many columns"))?;
                if d == 0 {
                    return Err(Error::ZeroDimension);
                }
                writer.insert(RelationWriter::create(&out, d, PageLayout::for_dim(d, page_bytes))?)
            }
        };
        w.push(&values)?;
    }
    match writer {
        Some(w) => Ok(w.finish()?.0),
        None => Err(Error::EmptyRelation),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Csv {
            row,
            message: e.to_string(),
        },
    }
}
