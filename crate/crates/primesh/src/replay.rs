//! Experience replay: fixed-capacity ring buffers with oldest-first
//! overwrite, equal-mix sampling across two buffers, and a binary archive
//! for demonstration sets.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::Observation;
use crate::error::{Error, Result};

/// One transition. `is_demo` marks expert-labeled records, which are the
/// only ones the margin loss may touch.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub observation: Observation,
    pub action: u32,
    pub reward: f64,
    pub next_observation: Observation,
    pub done: bool,
    pub is_demo: bool,
}

/// A fixed-capacity ring: pushing past capacity overwrites the oldest
/// record. Indexing and iteration run oldest to newest.
pub struct ReplayBuffer {
    capacity: usize,
    records: Vec<Experience>,
    start: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { capacity, records: Vec::new(), start: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.records.len() < self.capacity {
            self.records.push(e);
        } else {
            self.records[self.start] = e;
            self.start = (self.start + 1) % self.capacity;
        }
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = Experience>) {
        for e in records {
            self.push(e);
        }
    }

    /// The i-th record in age order (0 = oldest).
    pub fn get(&self, i: usize) -> &Experience {
        assert!(i < self.records.len());
        &self.records[(self.start + i) % self.records.len()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.start = 0;
    }

    /// `n` uniform draws with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Experience> {
        assert!(!self.is_empty());
        (0..n).map(|_| self.get(rng.gen_range(0..self.len())).clone()).collect()
    }
}

/// Draws `batch/2` records with replacement from each buffer and shuffles
/// the result. `batch` must be even and both buffers non-empty.
pub fn sample_equal(
    a: &ReplayBuffer,
    b: &ReplayBuffer,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Experience>> {
    if batch % 2 != 0 {
        return Err(Error::contract(format!("batch {batch} is not even")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("equal-mix sampling from an empty buffer"));
    }
    let mut out = a.sample(batch / 2, rng);
    out.extend(b.sample(batch / 2, rng));
    out.shuffle(rng);
    Ok(out)
}

const ARCHIVE_MAGIC: &[u8; 4] = b"DEMA";
const ARCHIVE_VERSION: u32 = 1;

fn write_u32<W: Write>(out: &mut W, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(|_| Error::format("archive", "truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn write_f32s<W: Write>(out: &mut W, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

fn read_f32s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    input.read_exact(&mut bytes).map_err(|_| Error::format("archive", "truncated floats"))?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Writes a demonstration archive. The reference rasters (shared by every
/// step of an episode) are deduplicated into a table; records carry indices.
///
/// Layout, all integers little-endian:
/// magic "DEMA", u32 version, u32 reference_len, u32 params_len,
/// u32 steps_total, u32 reference_count, u32 record_count,
/// then the reference rasters (f32), then per record:
/// u32 reference_index, u32 step, u32 next_step, u32 action, f64 reward,
/// u8 done, u8 is_demo, params f32[params_len], next_params f32[params_len].
pub fn write_archive<W: Write>(out: &mut W, records: &[Experience]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::contract("refusing to write an empty archive"));
    }
    let reference_len = records[0].observation.reference.len();
    let params_len = records[0].observation.params.len();
    let steps_total = records[0].observation.steps_total;
    let mut refs: Vec<Arc<Vec<f32>>> = Vec::new();
    let mut ref_index = Vec::with_capacity(records.len());
    for e in records {
        if e.observation.reference.len() != reference_len
            || e.observation.params.len() != params_len
            || e.next_observation.params.len() != params_len
            || e.observation.steps_total != steps_total
            || !Arc::ptr_eq(&e.observation.reference, &e.next_observation.reference)
        {
            return Err(Error::contract("archive records must share one observation shape"));
        }
        let idx = match refs.iter().position(|r| Arc::ptr_eq(r, &e.observation.reference)) {
            Some(i) => i,
            None => {
                refs.push(e.observation.reference.clone());
                refs.len() - 1
            }
        };
        ref_index.push(idx as u32);
    }
    out.write_all(ARCHIVE_MAGIC)?;
    write_u32(out, ARCHIVE_VERSION)?;
    write_u32(out, reference_len as u32)?;
    write_u32(out, params_len as u32)?;
    write_u32(out, steps_total as u32)?;
    write_u32(out, refs.len() as u32)?;
    write_u32(out, records.len() as u32)?;
    for r in &refs {
        write_f32s(out, r)?;
    }
    for (e, &ri) in records.iter().zip(&ref_index) {
        write_u32(out, ri)?;
        write_u32(out, e.observation.step as u32)?;
        write_u32(out, e.next_observation.step as u32)?;
        write_u32(out, e.action)?;
        out.write_all(&e.reward.to_le_bytes())?;
        out.write_all(&[e.done as u8, e.is_demo as u8])?;
        write_f32s(out, &e.observation.params)?;
        write_f32s(out, &e.next_observation.params)?;
    }
    Ok(())
}

pub fn read_archive<R: Read>(input: &mut R) -> Result<Vec<Experience>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| Error::format("archive", "truncated header"))?;
    if &magic != ARCHIVE_MAGIC {
        return Err(Error::format("archive", "bad magic"));
    }
    let version = read_u32(input)?;
    if version != ARCHIVE_VERSION {
        return Err(Error::format("archive", format!("unsupported version {version}")));
    }
    let reference_len = read_u32(input)? as usize;
    let params_len = read_u32(input)? as usize;
    let steps_total = read_u32(input)? as usize;
    let ref_count = read_u32(input)? as usize;
    let record_count = read_u32(input)? as usize;
    let mut refs = Vec::with_capacity(ref_count);
    for _ in 0..ref_count {
        refs.push(Arc::new(read_f32s(input, reference_len)?));
    }
    let mut records = Vec::with_capacity(record_count);
    for _ in 0..record_count {
        let ri = read_u32(input)? as usize;
        if ri >= refs.len() {
            return Err(Error::format("archive", "reference index out of range"));
        }
        let step = read_u32(input)? as usize;
        let next_step = read_u32(input)? as usize;
        let action = read_u32(input)?;
        let mut reward_bytes = [0u8; 8];
        input.read_exact(&mut reward_bytes).map_err(|_| Error::format("archive", "truncated"))?;
        let reward = f64::from_le_bytes(reward_bytes);
        let mut flags = [0u8; 2];
        input.read_exact(&mut flags).map_err(|_| Error::format("archive", "truncated"))?;
        let params = read_f32s(input, params_len)?;
        let next_params = read_f32s(input, params_len)?;
        records.push(Experience {
            observation: Observation {
                reference: refs[ri].clone(),
                params,
                step,
                steps_total,
            },
            action,
            reward,
            next_observation: Observation {
                reference: refs[ri].clone(),
                params: next_params,
                step: next_step,
                steps_total,
            },
            done: flags[0] != 0,
            is_demo: flags[1] != 0,
        });
    }
    Ok(records)
}
