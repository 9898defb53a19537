//! Dual replay: real transitions in `d_r`, self-loop penalty transitions in
//! `d_a`, mixed per batch at a decaying ratio `eta`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{AcrlError, Result};
use crate::mdp::{ActionVec, EnvState, Preference};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: EnvState,
    pub a: ActionVec,
    /// Reward in `[0, 1]`.
    pub r: f64,
    /// `0` or `-K`.
    pub c: f64,
    pub s_next: EnvState,
    /// Stops bootstrapping (true terminal only).
    pub done: bool,
    /// Preference the behavior policy acted under.
    pub lam: Preference,
}

impl Transition {
    pub fn is_augmented(&self) -> bool {
        self.c < 0.0
    }
}

/// Fixed-capacity FIFO with uniform sampling.
#[derive(Clone, Debug)]
pub struct RingBuffer<T> {
    data: Vec<T>,
    capacity: usize,
    head: usize,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { data: Vec::new(), capacity, head: 0 }
    }

    pub fn push(&mut self, item: T) {
        if self.data.len() < self.capacity {
            self.data.push(item);
        } else {
            self.data[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Element by age, 0 being the oldest retained.
    pub fn get(&self, i: usize) -> Option<&T> {
        if i >= self.data.len() {
            return None;
        }
        let idx = if self.data.len() < self.capacity { i } else { (self.head + i) % self.capacity };
        self.data.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        (0..self.len()).map(move |i| self.get(i).expect("in range"))
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.data.len())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &T {
        &self.data[self.sample_index(rng)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaSchedule {
    pub eta0: f64,
    pub decay_interval: u64,
    pub decay_factor: f64,
}

impl Default for EtaSchedule {
    fn default() -> Self {
        Self { eta0: 0.2, decay_interval: 10_000, decay_factor: 0.9 }
    }
}

impl EtaSchedule {
    pub fn at(&self, steps: u64) -> f64 {
        let k = (steps / self.decay_interval) as i32;
        self.eta0 * self.decay_factor.powi(k)
    }
}

#[derive(Clone, Debug)]
pub struct DualReplay {
    pub d_r: RingBuffer<Transition>,
    pub d_a: RingBuffer<Transition>,
    schedule: EtaSchedule,
    eta: f64,
    steps_seen: u64,
}

impl DualReplay {
    pub fn new(capacity: usize, schedule: EtaSchedule) -> Self {
        assert!((0.0..=1.0).contains(&schedule.eta0));
        assert!(schedule.decay_factor > 0.0 && schedule.decay_factor <= 1.0);
        assert!(schedule.decay_interval > 0);
        Self {
            d_r: RingBuffer::new(capacity),
            d_a: RingBuffer::new(capacity),
            eta: schedule.eta0,
            schedule,
            steps_seen: 0,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    pub fn schedule(&self) -> EtaSchedule {
        self.schedule
    }

    pub fn push(&mut self, t: Transition) {
        if t.is_augmented() {
            self.d_a.push(t);
        } else {
            self.d_r.push(t);
        }
    }

    /// Call once per environment step. Returns the current `eta`.
    pub fn tick_decay(&mut self) -> f64 {
        self.steps_seen += 1;
        self.eta = self.schedule.at(self.steps_seen);
        self.eta
    }

    /// Number of batch slots filled from `d_a`.
    pub fn augmented_share(&self, batch: usize) -> usize {
        ((self.eta * batch as f64).floor() as usize).min(self.d_a.len())
    }

    /// `floor(eta * batch)` draws from `d_a` (fewer if it holds fewer
    /// transitions), the rest from `d_r`, each uniform with replacement.
    pub fn sample_mixed<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.d_r.is_empty() {
            return Err(AcrlError::NotWarmedUp);
        }
        let n_a = self.augmented_share(batch);
        let mut out = Vec::with_capacity(batch);
        for _ in 0..n_a {
            out.push(self.d_a.sample(rng));
        }
        for _ in n_a..batch {
            out.push(self.d_r.sample(rng));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.d_r.capacity() as u64).to_le_bytes())?;
        w.write_all(&self.schedule.eta0.to_le_bytes())?;
        w.write_all(&self.schedule.decay_interval.to_le_bytes())?;
        w.write_all(&self.schedule.decay_factor.to_le_bytes())?;
        w.write_all(&self.steps_seen.to_le_bytes())?;
        for buf in [&self.d_r, &self.d_a] {
            w.write_all(&(buf.len() as u64).to_le_bytes())?;
            for t in buf.iter() {
                let rec = encode(t);
                w.write_all(&(rec.len() as u64).to_le_bytes())?;
                w.write_all(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(AcrlError::Checkpoint("not a replay checkpoint".into()));
        }
        let capacity = read_u64(&mut r)? as usize;
        let schedule = EtaSchedule {
            eta0: read_f64(&mut r)?,
            decay_interval: read_u64(&mut r)?,
            decay_factor: read_f64(&mut r)?,
        };
        let steps_seen = read_u64(&mut r)?;
        let mut out = Self::new(capacity, schedule);
        for _ in 0..2 {
            let n = read_u64(&mut r)?;
            for _ in 0..n {
                let len = read_u64(&mut r)? as usize;
                let mut rec = vec![0u8; len];
                r.read_exact(&mut rec)?;
                out.push(decode(&rec)?);
            }
        }
        out.steps_seen = steps_seen;
        out.eta = schedule.at(steps_seen);
        Ok(out)
    }
}

const MAGIC: &[u8; 8] = b"ACRLRB01";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    out.extend((v.len() as u64).to_le_bytes());
    for x in v {
        out.extend(x.to_le_bytes());
    }
}

fn put_state(out: &mut Vec<u8>, s: &EnvState) {
    put_vec(out, &s.vector);
    out.extend((s.step_index as u64).to_le_bytes());
    out.push(s.done as u8);
}

fn encode(t: &Transition) -> Vec<u8> {
    let mut out = Vec::new();
    put_state(&mut out, &t.s);
    put_vec(&mut out, &t.a);
    out.extend(t.r.to_le_bytes());
    out.extend(t.c.to_le_bytes());
    put_state(&mut out, &t.s_next);
    out.push(t.done as u8);
    out.extend(t.lam.lambda_r.to_le_bytes());
    out.extend(t.lam.lambda_c.to_le_bytes());
    out
}

fn decode(mut rec: &[u8]) -> Result<Transition> {
    let r = &mut rec;
    let vec = |r: &mut &[u8]| -> Result<Vec<f64>> {
        let n = read_u64(r)? as usize;
        (0..n).map(|_| read_f64(r)).collect()
    };
    let byte = |r: &mut &[u8]| -> Result<u8> {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        Ok(b[0])
    };
    let state = |r: &mut &[u8]| -> Result<EnvState> {
        let vector = vec(r)?;
        let step_index = read_u64(r)? as usize;
        let done = byte(r)? != 0;
        Ok(EnvState { vector, step_index, done })
    };
    let s = state(r)?;
    let a = ActionVec::new(vec(r)?);
    let rew = read_f64(r)?;
    let c = read_f64(r)?;
    let s_next = state(r)?;
    let done = byte(r)? != 0;
    let lam = Preference { lambda_r: read_f64(r)?, lambda_c: read_f64(r)? };
    if !r.is_empty() {
        return Err(AcrlError::Checkpoint("trailing bytes in record".into()));
    }
    Ok(Transition { s, a, r: rew, c, s_next, done, lam })
}
