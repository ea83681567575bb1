//! Binary model checkpoints.
//!
//! Layout (all integers `u64` and floats `f64`, little-endian):
//! magic `MDSCORE\0`, version, kind (0 plain, 1 time-switched), then for
//! time-switched models `t_large`, `t_small`, followed by one network record
//! per network: layer count, widths, output-scale code, `B`, `C_R`,
//! feature count, `r̄`, `ε`, feature centers, parameter count, parameters.

use std::io::{Read, Write};
use std::path::Path;

use super::network::{ChartFeatures, OutputScale, ReluNetwork};
use super::switch::TimeSwitchedScore;
use super::ScoreModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MDSCORE\0";
pub const VERSION: u64 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, limit: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > limit {
            return Err(Error::Checkpoint(format!("implausible length {n}")));
        }
        Ok(n)
    }
}

fn write_net(out: &mut Vec<u8>, net: &ReluNetwork) {
    put_u64(out, net.widths().len() as u64);
    for &w in net.widths() {
        put_u64(out, w as u64);
    }
    put_u64(out, net.output_scale().code() as u64);
    put_f64(out, net.weight_bound());
    put_f64(out, net.clip_const());
    match net.features() {
        None => {
            put_u64(out, 0);
            put_f64(out, 0.0);
            put_f64(out, 0.0);
        }
        Some(f) => {
            put_u64(out, f.centers.len() as u64);
            put_f64(out, f.r_bar);
            put_f64(out, f.eps);
            for c in &f.centers {
                for &v in c {
                    put_f64(out, v);
                }
            }
        }
    }
    put_u64(out, net.params().len() as u64);
    for &p in net.params() {
        put_f64(out, p);
    }
}

fn read_net(c: &mut Cursor<'_>) -> Result<ReluNetwork> {
    let limit = c.buf.len() / 8;
    let n_layers = c.len(limit)?;
    let widths = (0..n_layers).map(|_| c.len(limit)).collect::<Result<Vec<_>>>()?;
    let d = *widths.last().ok_or_else(|| Error::Checkpoint("no layers".into()))?;
    let scale = OutputScale::from_code(c.u64()? as u8)?;
    let bound = c.f64()?;
    let clip = c.f64()?;
    let n_feat = c.len(limit)?;
    let r_bar = c.f64()?;
    let eps = c.f64()?;
    let features = if n_feat == 0 {
        None
    } else {
        let centers = (0..n_feat)
            .map(|_| (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Some(ChartFeatures { centers, r_bar, eps })
    };
    let n_params = c.len(limit)?;
    let params = (0..n_params).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let net = ReluNetwork::from_parts(widths, params, features)
        .map_err(|e| Error::Checkpoint(e.to_string()))?
        .with_output_scale(scale)
        .with_clip(clip);
    if net.max_abs_param() > bound {
        return Err(Error::Checkpoint("stored weights exceed the stored bound".into()));
    }
    Ok(net.with_weight_bound(bound))
}

pub fn to_bytes(model: &ScoreModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u64(&mut out, VERSION);
    match model {
        ScoreModel::Plain(n) => {
            put_u64(&mut out, 0);
            write_net(&mut out, n);
        }
        ScoreModel::TimeSwitched(s) => {
            put_u64(&mut out, 1);
            put_f64(&mut out, s.t_large);
            put_f64(&mut out, s.t_small);
            write_net(&mut out, &s.small);
            write_net(&mut out, &s.large);
        }
    }
    out
}

pub fn from_bytes(buf: &[u8]) -> Result<ScoreModel> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u64()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let model = match c.u64()? {
        0 => ScoreModel::Plain(read_net(&mut c)?),
        1 => {
            let (tl, ts) = (c.f64()?, c.f64()?);
            let small = read_net(&mut c)?;
            let large = read_net(&mut c)?;
            ScoreModel::TimeSwitched(TimeSwitchedScore::new(small, large, tl, ts)?)
        }
        k => return Err(Error::Checkpoint(format!("unknown model kind {k}"))),
    };
    if c.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save(model: &ScoreModel, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ScoreModel> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}
