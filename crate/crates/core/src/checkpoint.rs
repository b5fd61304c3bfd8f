//! Binary training checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "CAL2" | version u32 | descriptor len u32 | descriptor utf8 | n u64
//! | w: n × f64 | ẇ: n × f64
//! | criterion u8 | m u64 | ν, s, s_prev: m × f64 each
//! | next frame u64
//! | gaze flag u8 [a.x a.y v.x v.y f64]
//! | previous-frame flag u8 [width u64 height u64 index u64 pixels f64…]
//! | running MI: frames u64 | Σh_cond f64 | ΣP̄: m × f64
//! ```

use crate::attention::GazeState;
use crate::error::{Error, Result};
use crate::evaluation::MiAccumulator;
use crate::network::Architecture;
use crate::objective::Criterion;
use crate::stream::Frame;

pub const MAGIC: &[u8; 4] = b"CAL2";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EntropySnapshot {
    pub criterion: Criterion,
    pub nu: Vec<f64>,
    pub s: Vec<f64>,
    pub s_prev: Vec<f64>,
}

/// Everything needed to continue training bit-for-bit.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub entropy: EntropySnapshot,
    /// Index of the next frame to train on.
    pub next_frame: u64,
    pub gaze: Option<GazeState>,
    pub prev_frame: Option<Frame>,
    pub running_mi: MiAccumulator,
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let desc = self.arch.descriptor();
        let m = self.entropy.nu.len();
        let mut out = Vec::with_capacity(64 + 16 * self.w.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        out.extend_from_slice(desc.as_bytes());
        out.extend_from_slice(&(self.w.len() as u64).to_le_bytes());
        put_f64s(&mut out, &self.w);
        put_f64s(&mut out, &self.v);
        out.push(match self.entropy.criterion {
            Criterion::Pla => 0,
            Criterion::Var => 1,
            Criterion::Avg => 2,
        });
        out.extend_from_slice(&(m as u64).to_le_bytes());
        put_f64s(&mut out, &self.entropy.nu);
        put_f64s(&mut out, &self.entropy.s);
        put_f64s(&mut out, &self.entropy.s_prev);
        out.extend_from_slice(&self.next_frame.to_le_bytes());
        match &self.gaze {
            Some(g) => {
                out.push(1);
                put_f64s(&mut out, &[g.a[0], g.a[1], g.v[0], g.v[1]]);
            }
            None => out.push(0),
        }
        match &self.prev_frame {
            Some(f) => {
                out.push(1);
                out.extend_from_slice(&(f.width() as u64).to_le_bytes());
                out.extend_from_slice(&(f.height() as u64).to_le_bytes());
                out.extend_from_slice(&(f.index() as u64).to_le_bytes());
                put_f64s(&mut out, f.pixels());
            }
            None => out.push(0),
        }
        let (h, p, frames) = self.running_mi.parts();
        out.extend_from_slice(&(frames as u64).to_le_bytes());
        put_f64s(&mut out, &[h]);
        put_f64s(&mut out, p);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let desc = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("descriptor is not utf-8".into()))?;
        let arch: Architecture = desc.parse()?;
        let n = r.len()?;
        if n != arch.n_params() {
            return Err(Error::Checkpoint(format!("n = {n} but {desc} has {}", arch.n_params())));
        }
        let w = r.f64s(n)?;
        let v = r.f64s(n)?;
        let criterion = match r.take(1)?[0] {
            0 => Criterion::Pla,
            1 => Criterion::Var,
            2 => Criterion::Avg,
            c => return Err(Error::Checkpoint(format!("unknown criterion tag {c}"))),
        };
        let m = r.len()?;
        if m != arch.m() {
            return Err(Error::Checkpoint(format!("entropy block has m = {m}, architecture {}", arch.m())));
        }
        let entropy = EntropySnapshot { criterion, nu: r.f64s(m)?, s: r.f64s(m)?, s_prev: r.f64s(m)? };
        let next_frame = r.u64()?;
        let gaze = match r.flag()? {
            true => {
                let g = r.f64s(4)?;
                Some(GazeState { a: [g[0], g[1]], v: [g[2], g[3]] })
            }
            false => None,
        };
        let prev_frame = match r.flag()? {
            true => {
                let (fw, fh, idx) = (r.len()?, r.len()?, r.len()?);
                let px = r.f64s(fw.checked_mul(fh).ok_or_else(|| Error::Checkpoint("frame size overflow".into()))?)?;
                Some(Frame::new(fw, fh, idx, px)?)
            }
            false => None,
        };
        let frames = r.len()?;
        let h = r.f64s(1)?[0];
        let p = r.f64s(m)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            arch,
            w,
            v,
            entropy,
            next_frame,
            gaze,
            prev_frame,
            running_mi: MiAccumulator::from_parts(h, p, frames),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {k} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("bad flag byte {b} at {}", self.pos - 1))),
        }
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let raw = self.take(k.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
