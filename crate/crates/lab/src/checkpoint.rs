//! Binary checkpoints of a whole training run.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field | encoding |
//! |---|---|
//! | magic | 8 bytes `SITCOMM\0` |
//! | version | u32, currently 1 |
//! | config | u32 length + UTF-8 JSON of the run config |
//! | log offset | u64, bytes of `metrics.ndjson` covered by this state |
//! | counters | u64 episode, u64 env steps |
//! | curriculum | u32 stage, u64 steps in stage, u32 window, u32 count, count bytes of 0/1 |
//! | rng streams | 3 × (32-byte seed, u64 stream, u128 word position): env, speaker, listener |
//! | cumulative metrics | u64 n, 3 × f64 sums, u32 s_opt |
//! | metric window | u32 window, u32 count, count × (f64 reward, u32 steps, u32 messages) |
//! | agents | speaker then listener, see below |
//! | checksum | u32 CRC-32 of every preceding byte |
//!
//! Each agent is a u32 tensor count followed by, per tensor, a u16 name
//! length, the name, a u8 rank, rank × u32 dims and the f64 values; then the
//! u64 Adam step, the first and second moments as raw f64 values in the
//! same tensor order, and the recurrent state as two u32-length-prefixed f64
//! vectors (h, then c; empty without memory).

use std::path::Path;

use sitcomm_core::agent::QAgent;
use sitcomm_core::comm::StageState;
use sitcomm_core::episode::EpisodeSummary;
use sitcomm_core::metrics::{RunningMetrics, SuccessWindow};
use sitcomm_core::nn::ParamSet;
use sitcomm_core::rng::{StreamPos, StreamRng};
use sitcomm_core::train::{MetricWindow, Run, RunConfig};

use crate::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"SITCOMM\0";
pub const VERSION: u32 = 1;

/// A run plus the length of its metric log at the time of the snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub run: Run,
    pub log_offset: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn len_u32(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("checkpoint sections stay below 4 GiB"));
    }

    fn rng(&mut self, r: &StreamRng) {
        let p = StreamPos::capture(r);
        self.bytes(&p.seed);
        self.u64(p.stream);
        self.u128(p.word_pos);
    }

    fn params(&mut self, p: &ParamSet) {
        self.len_u32(p.tensors.len());
        for t in &p.tensors {
            self.u16(t.name.len() as u16);
            self.bytes(t.name.as_bytes());
            self.u8(t.shape.len() as u8);
            for d in &t.shape {
                self.len_u32(*d);
            }
            for v in &t.data {
                self.f64(*v);
            }
        }
    }

    fn agent(&mut self, a: &QAgent) {
        self.params(&a.params);
        self.u64(a.adam.t);
        for v in a.adam.m.values().chain(a.adam.v.values()) {
            self.f64(*v);
        }
        for part in [&a.memory.h, &a.memory.c] {
            self.len_u32(part.len());
            for v in part {
                self.f64(*v);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| LabError::Checkpoint("truncated data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.arr::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.arr()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.arr()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.arr()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.arr()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.arr()?))
    }

    fn rng(&mut self) -> Result<StreamRng> {
        let seed = self.arr::<32>()?;
        let stream = self.u64()?;
        let word_pos = self.u128()?;
        Ok(StreamPos {
            seed,
            stream,
            word_pos,
        }
        .restore())
    }

    /// Reads tensors into `into`, which fixes the expected names and shapes.
    fn params(&mut self, into: &mut ParamSet) -> Result<()> {
        let count = self.u32()? as usize;
        if count != into.tensors.len() {
            return Err(LabError::Checkpoint(format!(
                "expected {} tensors, found {count}",
                into.tensors.len()
            )));
        }
        for t in &mut into.tensors {
            let name_len = usize::from(self.u16()?);
            let name = std::str::from_utf8(self.take(name_len)?)
                .map_err(|_| LabError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = usize::from(self.u8()?);
            let shape = (0..rank)
                .map(|_| self.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if name != t.name || shape != t.shape {
                return Err(LabError::Checkpoint(format!(
                    "tensor {name} {shape:?} does not match {} {:?} of the configured network",
                    t.name, t.shape
                )));
            }
            for v in &mut t.data {
                *v = self.f64()?;
            }
        }
        Ok(())
    }

    fn agent(&mut self, a: &mut QAgent) -> Result<()> {
        self.params(&mut a.params)?;
        a.adam.t = self.u64()?;
        for v in a.adam.m.values_mut() {
            *v = self.f64()?;
        }
        for v in a.adam.v.values_mut() {
            *v = self.f64()?;
        }
        for part in [&mut a.memory.h, &mut a.memory.c] {
            let len = self.u32()? as usize;
            if len != part.len() {
                return Err(LabError::Checkpoint(format!(
                    "recurrent state of width {len}, expected {}",
                    part.len()
                )));
            }
            for v in part.iter_mut() {
                *v = self.f64()?;
            }
        }
        if !a.params.all_finite() || !a.adam.m.all_finite() || !a.adam.v.all_finite() {
            return Err(LabError::Checkpoint("non-finite weights".into()));
        }
        Ok(())
    }
}

pub fn encode(run: &Run, log_offset: u64) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(MAGIC);
    w.u32(VERSION);
    let config = serde_json::to_vec(&run.config).expect("run configs always serialize");
    w.len_u32(config.len());
    w.bytes(&config);
    w.u64(log_offset);
    w.u64(run.episode);
    w.u64(run.env_steps);

    w.u32(run.stage.stage);
    w.u64(run.stage.steps_in_stage);
    w.len_u32(run.stage.success_window.window());
    w.len_u32(run.stage.success_window.len());
    for s in run.stage.success_window.iter() {
        w.u8(u8::from(s));
    }

    w.rng(&run.rngs.env);
    w.rng(&run.rngs.agents.speaker);
    w.rng(&run.rngs.agents.listener);

    let c = &run.cumulative;
    w.u64(c.n);
    w.f64(c.sum_r);
    w.f64(c.sum_r_over_steps);
    w.f64(c.sum_neglog_m);
    w.u32(c.s_opt);

    w.len_u32(run.recent.window());
    w.len_u32(run.recent.len());
    for s in run.recent.iter() {
        w.f64(s.reward);
        w.u32(s.steps);
        w.u32(s.nonzero_messages);
    }

    w.agent(&run.speaker);
    w.agent(&run.listener);
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(LabError::Checkpoint("not a checkpoint file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
    if crc32fast::hash(body) != stored {
        return Err(LabError::Checkpoint(
            "checksum mismatch (file is truncated or corrupted)".into(),
        ));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(LabError::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let config_len = r.u32()? as usize;
    let config: RunConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| LabError::Checkpoint(format!("config: {e}")))?;
    let mut run = Run::new(config)?;
    let log_offset = r.u64()?;
    run.episode = r.u64()?;
    run.env_steps = r.u64()?;

    let stage = r.u32()?;
    let steps_in_stage = r.u64()?;
    let mut window = SuccessWindow::new(r.u32()? as usize);
    for _ in 0..r.u32()? {
        window.push(r.u8()? != 0);
    }
    run.stage = StageState {
        stage,
        steps_in_stage,
        success_window: window,
    };

    run.rngs.env = r.rng()?;
    run.rngs.agents.speaker = r.rng()?;
    run.rngs.agents.listener = r.rng()?;

    run.cumulative = RunningMetrics {
        n: r.u64()?,
        sum_r: r.f64()?,
        sum_r_over_steps: r.f64()?,
        sum_neglog_m: r.f64()?,
        s_opt: r.u32()?,
    };

    let mut recent = MetricWindow::new(r.u32()? as usize);
    for _ in 0..r.u32()? {
        recent.push(EpisodeSummary {
            reward: r.f64()?,
            steps: r.u32()?,
            nonzero_messages: r.u32()?,
        });
    }
    run.recent = recent;

    r.agent(&mut run.speaker)?;
    r.agent(&mut run.listener)?;
    if r.pos != body.len() {
        return Err(LabError::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { run, log_offset })
}

/// Writes through a temporary file so a crash never leaves a partial
/// checkpoint under the final name.
pub fn save(path: &Path, run: &Run, log_offset: u64) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, encode(run, log_offset)).map_err(|e| LabError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| LabError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    decode(&bytes)
}
