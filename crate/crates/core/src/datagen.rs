//! Seeded tuple stream generators.
//!
//! Three dataset families are supported: round-robin uniform, zipf-ordered
//! (group 0 most frequent) and zipf with randomly relabelled groups. All
//! generators are lazy iterators; equal specs produce bitwise-equal streams.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seed offset used to derive the relabelling permutation from the run seed.
const PERMUTATION_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// One stream element: a group-by key and its integer attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tuple {
    pub group: u32,
    pub attr: i32,
}

impl Tuple {
    pub const fn new(group: u32, attr: i32) -> Self {
        Self { group, attr }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    /// Groups assigned round-robin (`i mod n_groups`).
    Uniform,
    /// Groups drawn i.i.d. with `P(g) ∝ (g + 1)^-s`.
    Zipf,
    /// Zipf stream with group labels relabelled by a fixed random permutation.
    PermutedZipf,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Uniform => "uniform",
            DatasetKind::Zipf => "zipf",
            DatasetKind::PermutedZipf => "pzipf",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DatasetKind::Uniform),
            "zipf" => Ok(DatasetKind::Zipf),
            "pzipf" => Ok(DatasetKind::PermutedZipf),
            other => Err(Error::InvalidSpec(format!(
                "unknown dataset '{other}' (expected uniform, zipf or pzipf)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_tuples: u64,
    pub n_groups: usize,
    /// Only read for the zipf families.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 {
            return Err(Error::InvalidSpec("n_groups must be at least 1".into()));
        }
        if self.n_groups > u32::MAX as usize {
            return Err(Error::InvalidSpec(format!(
                "n_groups {} does not fit a 32-bit group id",
                self.n_groups
            )));
        }
        if self.kind != DatasetKind::Uniform
            && !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0)
        {
            return Err(Error::InvalidSpec(format!(
                "zipf exponent must be a positive finite number, got {}",
                self.zipf_exponent
            )));
        }
        Ok(())
    }

    /// Builds the lazy tuple stream described by this spec.
    pub fn stream(&self) -> Result<TupleStream> {
        self.validate()?;
        Ok(match self.kind {
            DatasetKind::Uniform => {
                TupleStream::Uniform(gen_uniform(self.n_tuples, self.n_groups, self.seed)?)
            }
            DatasetKind::Zipf => TupleStream::Zipf(gen_zipf(
                self.n_tuples,
                self.n_groups,
                self.zipf_exponent,
                self.seed,
            )?),
            DatasetKind::PermutedZipf => {
                let inner = gen_zipf(self.n_tuples, self.n_groups, self.zipf_exponent, self.seed)?;
                let perm =
                    GroupPermutation::random(self.n_groups, self.seed ^ PERMUTATION_SEED_SALT);
                TupleStream::PermutedZipf(permute_groups(inner, perm))
            }
        })
    }
}

/// Round-robin generator: tuple `i` belongs to group `i mod n_groups`.
#[derive(Clone, Debug)]
pub struct UniformStream {
    rng: ChaCha8Rng,
    n_groups: u64,
    next: u64,
    len: u64,
}

pub fn gen_uniform(n_tuples: u64, n_groups: usize, seed: u64) -> Result<UniformStream> {
    if n_groups == 0 {
        return Err(Error::InvalidSpec("n_groups must be at least 1".into()));
    }
    Ok(UniformStream {
        rng: ChaCha8Rng::seed_from_u64(seed),
        n_groups: n_groups as u64,
        next: 0,
        len: n_tuples,
    })
}

impl Iterator for UniformStream {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        if self.next >= self.len {
            return None;
        }
        let group = (self.next % self.n_groups) as u32;
        self.next += 1;
        Some(Tuple::new(group, self.rng.random()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = (self.len - self.next) as usize;
        (rest, Some(rest))
    }
}

/// Inverse-CDF sampler over `n` ranks with `P(rank = g) ∝ (g + 1)^-s`.
#[derive(Clone, Debug)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: usize, exponent: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("n_groups must be at least 1".into()));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "zipf exponent must be a positive finite number, got {exponent}"
            )));
        }
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for rank in 1..=n {
            acc += (rank as f64).powf(-exponent);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        // Guard against the normalised tail rounding to just below 1.
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Self { cdf })
    }

    /// Probability mass of `rank`.
    pub fn probability(&self, rank: usize) -> f64 {
        let prev = if rank == 0 { 0.0 } else { self.cdf[rank - 1] };
        self.cdf[rank] - prev
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }
}

#[derive(Clone, Debug)]
pub struct ZipfStream {
    rng: ChaCha8Rng,
    sampler: ZipfSampler,
    remaining: u64,
}

pub fn gen_zipf(n_tuples: u64, n_groups: usize, exponent: f64, seed: u64) -> Result<ZipfStream> {
    Ok(ZipfStream {
        rng: ChaCha8Rng::seed_from_u64(seed),
        sampler: ZipfSampler::new(n_groups, exponent)?,
        remaining: n_tuples,
    })
}

impl Iterator for ZipfStream {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let group = self.sampler.sample(&mut self.rng) as u32;
        Some(Tuple::new(group, self.rng.random()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.remaining as usize;
        (rest, Some(rest))
    }
}

/// A bijection over group labels `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPermutation {
    map: Vec<u32>,
}

impl GroupPermutation {
    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n as u32).collect(),
        }
    }

    /// Uniformly random permutation (Fisher-Yates) seeded by `seed`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut perm = Self::identity(n);
        perm.map.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        perm
    }

    pub fn apply(&self, group: u32) -> u32 {
        self.map[group as usize]
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Relabels every group of `inner` through a fixed permutation; order and
/// attributes are untouched.
#[derive(Clone, Debug)]
pub struct Permuted<I> {
    inner: I,
    perm: GroupPermutation,
}

pub fn permute_groups<I>(inner: I, perm: GroupPermutation) -> Permuted<I>
where
    I: Iterator<Item = Tuple>,
{
    Permuted { inner, perm }
}

impl<I: Iterator<Item = Tuple>> Iterator for Permuted<I> {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        self.inner
            .next()
            .map(|t| Tuple::new(self.perm.apply(t.group), t.attr))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.inner.size_hint()
    }
}

/// The stream produced by [`DatasetSpec::stream`].
#[derive(Clone, Debug)]
pub enum TupleStream {
    Uniform(UniformStream),
    Zipf(ZipfStream),
    PermutedZipf(Permuted<ZipfStream>),
}

impl Iterator for TupleStream {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        match self {
            TupleStream::Uniform(s) => s.next(),
            TupleStream::Zipf(s) => s.next(),
            TupleStream::PermutedZipf(s) => s.next(),
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        match self {
            TupleStream::Uniform(s) => s.size_hint(),
            TupleStream::Zipf(s) => s.size_hint(),
            TupleStream::PermutedZipf(s) => s.size_hint(),
        }
    }
}

/// A fixed-size slice of the stream, processed as one iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub index: usize,
    pub tuples: Vec<Tuple>,
}

impl Batch {
    pub fn new(index: usize, tuples: Vec<Tuple>) -> Self {
        Self { index, tuples }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

#[derive(Debug)]
pub struct Batches<I> {
    inner: I,
    batch_size: usize,
    index: usize,
}

/// Slices a stream into consecutive batches of `batch_size` tuples; only the
/// last batch may be short.
pub fn batches<I>(stream: I, batch_size: usize) -> Result<Batches<I::IntoIter>>
where
    I: IntoIterator<Item = Tuple>,
{
    if batch_size == 0 {
        return Err(Error::InvalidSpec("batch size must be at least 1".into()));
    }
    Ok(Batches {
        inner: stream.into_iter(),
        batch_size,
        index: 0,
    })
}

impl<I: Iterator<Item = Tuple>> Iterator for Batches<I> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let tuples: Vec<Tuple> = self.inner.by_ref().take(self.batch_size).collect();
        if tuples.is_empty() {
            return None;
        }
        let batch = Batch::new(self.index, tuples);
        self.index += 1;
        Some(batch)
    }
}

/// Writes a stream as little-endian `(u32 group, i32 attr)` records with no
/// header. Returns the number of records written.
pub fn write_replay<I>(path: impl AsRef<Path>, stream: I) -> Result<u64>
where
    I: IntoIterator<Item = Tuple>,
{
    let mut out = BufWriter::new(File::create(path)?);
    let mut written = 0u64;
    for t in stream {
        out.write_all(&t.group.to_le_bytes())?;
        out.write_all(&t.attr.to_le_bytes())?;
        written += 1;
    }
    out.flush()?;
    Ok(written)
}

/// Streaming reader for files produced by [`write_replay`].
#[derive(Debug)]
pub struct ReplayReader<R> {
    reader: R,
    remaining: u64,
}

impl ReplayReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        if len % 8 != 0 {
            return Err(Error::Replay(format!(
                "length {len} is not a multiple of 8 bytes"
            )));
        }
        Ok(Self {
            reader: BufReader::new(file),
            remaining: len / 8,
        })
    }
}

impl<R: Read> ReplayReader<R> {
    pub fn len(&self) -> u64 {
        self.remaining
    }

    pub fn is_empty(&self) -> bool {
        self.remaining == 0
    }
}

impl<R: Read> Iterator for ReplayReader<R> {
    type Item = Result<Tuple>;

    fn next(&mut self) -> Option<Result<Tuple>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut rec = [0u8; 8];
        Some(match self.reader.read_exact(&mut rec) {
            Ok(()) => Ok(Tuple::new(
                u32::from_le_bytes(rec[..4].try_into().unwrap()),
                i32::from_le_bytes(rec[4..].try_into().unwrap()),
            )),
            Err(e) => {
                self.remaining = 0;
                Err(e.into())
            }
        })
    }
}
