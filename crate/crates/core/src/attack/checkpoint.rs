//! Resumable attack state and its "ATKS" binary encoding.

use std::io::{Read, Write};
use std::path::Path;

use super::HistoryRecord;
use crate::error::{Error, Result};
use crate::optim::OptimizerState;

const MAGIC: &[u8; 4] = b"ATKS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Best {
    pub lambda: f64,
    pub ctc_sum: f64,
    pub matched: bool,
    pub delta: Vec<f64>,
    pub transcripts: Vec<String>,
}

/// Everything needed to continue a search where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub delta: Vec<f64>,
    pub iteration: u64,
    /// Number of λ increments applied so far.
    pub lambda_k: u64,
    pub optimizer: OptimizerState,
    pub history: Vec<super::HistoryRecord>,
    pub(crate) best: Option<Best>,
}

impl AttackState {
    pub fn fresh(delta: Vec<f64>) -> Self {
        Self {
            delta,
            iteration: 0,
            lambda_k: 0,
            optimizer: OptimizerState::default(),
            history: Vec::new(),
            best: None,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, VERSION)?;
        put_u64(&mut w, self.iteration)?;
        put_u64(&mut w, self.lambda_k)?;
        put_f64s(&mut w, &self.delta)?;
        put_u64(&mut w, self.optimizer.step)?;
        put_f64s(&mut w, &self.optimizer.first)?;
        put_f64s(&mut w, &self.optimizer.second)?;
        put_u64(&mut w, self.history.len() as u64)?;
        for h in &self.history {
            put_u64(&mut w, h.iteration)?;
            put_f64(&mut w, h.lambda)?;
            put_f64(&mut w, h.ctc_sum)?;
            put_f64(&mut w, h.f_pam)?;
            put_u32(&mut w, h.matches)?;
            put_u32(&mut w, h.total_rooms)?;
        }
        match &self.best {
            None => w.write_all(&[0])?,
            Some(b) => {
                w.write_all(&[1, b.matched as u8])?;
                put_f64(&mut w, b.lambda)?;
                put_f64(&mut w, b.ctc_sum)?;
                put_f64s(&mut w, &b.delta)?;
                put_u64(&mut w, b.transcripts.len() as u64)?;
                for t in &b.transcripts {
                    put_u64(&mut w, t.len() as u64)?;
                    w.write_all(t.as_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an ATKS checkpoint".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported ATKS version {version}")));
        }
        let iteration = get_u64(&mut r)?;
        let lambda_k = get_u64(&mut r)?;
        let delta = get_f64s(&mut r)?;
        let optimizer = OptimizerState {
            step: get_u64(&mut r)?,
            first: get_f64s(&mut r)?,
            second: get_f64s(&mut r)?,
        };
        let n = get_len(&mut r)?;
        let mut history = Vec::with_capacity(n);
        for _ in 0..n {
            history.push(HistoryRecord {
                iteration: get_u64(&mut r)?,
                lambda: get_f64(&mut r)?,
                ctc_sum: get_f64(&mut r)?,
                f_pam: get_f64(&mut r)?,
                matches: get_u32(&mut r)?,
                total_rooms: get_u32(&mut r)?,
            });
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let best = match flag[0] {
            0 => None,
            1 => {
                r.read_exact(&mut flag)?;
                let matched = flag[0] != 0;
                let lambda = get_f64(&mut r)?;
                let ctc_sum = get_f64(&mut r)?;
                let delta = get_f64s(&mut r)?;
                let count = get_len(&mut r)?;
                let mut transcripts = Vec::with_capacity(count);
                for _ in 0..count {
                    let len = get_len(&mut r)?;
                    let mut buf = vec![0u8; len];
                    r.read_exact(&mut buf)?;
                    transcripts.push(String::from_utf8(buf).map_err(|_| Error::Format("transcript is not UTF-8".into()))?);
                }
                Some(Best {
                    lambda,
                    ctc_sum,
                    matched,
                    delta,
                    transcripts,
                })
            }
            other => return Err(Error::Format(format!("bad best-state flag {other}"))),
        };
        Ok(Self {
            delta,
            iteration,
            lambda_k,
            optimizer,
            history,
            best,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Format(format!("{}: truncated checkpoint", path.display()))
            }
            other => other,
        })
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    put_u64(w, v.len() as u64)?;
    for x in v {
        put_f64(w, *x)?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

// Lengths are capped so a corrupt header cannot request a huge allocation.
fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = get_u64(r)?;
    if n > 1 << 28 {
        return Err(Error::Format(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

fn get_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    (0..n).map(|_| get_f64(r)).collect()
}
