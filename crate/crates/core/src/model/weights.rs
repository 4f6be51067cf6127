//! Weight file: `MAGIC`, `u32` version, `u32`-prefixed `key=value` config
//! text, `u32` tensor count, then every parameter in build order followed by
//! every batch-norm running mean and variance, each as a `u64` length and
//! `f32` values. All integers little-endian. A trailing `u64` holds the first
//! eight bytes of the SHA-256 of everything before it.

use sha2::{Digest, Sha256};

use super::{DEPTH, GraspFcn, GraspFcnConfig};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 8] = b"GRASPFCN";
pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl GraspFcnConfig {
    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        format!(
            "input_size={}\ndown_kernels={}\nup_kernels={}\ndown_channels={}\ndown_strides={}\nskip_kernel={}\nout_channels={}\n",
            self.input_size,
            join(&self.down_kernels),
            join(&self.up_kernels),
            join(&self.down_channels),
            join(&self.down_strides),
            self.skip_kernel,
            self.out_channels
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = GraspFcnConfig::tiny();
        let mut seen = 0;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |reason: String| Error::Parse { line: i + 1, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("`{line}` is not key=value")))?;
            let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(format!("`{s}` is not an integer")));
            let list = |s: &str| -> Result<[usize; DEPTH]> {
                let v = s.split(',').map(num).collect::<Result<Vec<_>>>()?;
                let n = v.len();
                v.try_into().map_err(|_| bad(format!("{key} needs {DEPTH} values, found {n}")))
            };
            match key.trim() {
                "input_size" => cfg.input_size = num(value)?,
                "down_kernels" => cfg.down_kernels = list(value)?,
                "up_kernels" => cfg.up_kernels = list(value)?,
                "down_channels" => cfg.down_channels = list(value)?,
                "down_strides" => cfg.down_strides = list(value)?,
                "skip_kernel" => cfg.skip_kernel = num(value)?,
                "out_channels" => cfg.out_channels = num(value)?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
            seen += 1;
        }
        if seen != 7 {
            return Err(Error::Format(format!("config block has {seen} of 7 keys")));
        }
        Ok(cfg)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("stream ends inside a field at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn into_tensor<T: Real>(&mut self, into: &mut Tensor<T>, what: &str) -> Result<()> {
        let len = self.u64()? as usize;
        if len != into.len() {
            return Err(Error::Format(format!("{what}: {len} values stored, model expects {}", into.len())));
        }
        let raw = self.take(len.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        for (d, chunk) in into.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *d = T::from_f64_lossy(f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64);
        }
        Ok(())
    }
}

fn push_tensor<T: Real>(out: &mut Vec<u8>, t: &Tensor<T>) {
    out.extend_from_slice(&(t.len() as u64).to_le_bytes());
    for &v in t.data() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
}

impl<T: Real> GraspFcn<T> {
    /// Serializes weights and running statistics as `f32`.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let cfg = self.config.to_text();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        let params = self.parameters();
        let stats = self.batchnorm_stats();
        out.extend_from_slice(&((params.len() + 2 * stats.len()) as u32).to_le_bytes());
        for p in params {
            push_tensor(&mut out, &p.value);
        }
        for s in stats {
            push_tensor(&mut out, &s.mean);
            push_tensor(&mut out, &s.var);
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Restores a network written by [`GraspFcn::save`]. The checksum is
    /// verified before anything else is decoded.
    pub fn load(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 8 {
            return Err(Error::Format(format!("{} bytes is too short for a weight file", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = checksum(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("not a grasp FCN weight file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let cfg_len = r.u32()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
            .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
        let config = GraspFcnConfig::from_text(cfg_text)?;
        let mut net = GraspFcn::build(config, 0)?;
        let count = r.u32()? as usize;
        let expected = net.parameters().len() + 2 * net.batchnorm_stats().len();
        if count != expected {
            return Err(Error::Format(format!("{count} tensors stored, model has {expected}")));
        }
        for p in net.parameters_mut() {
            r.into_tensor(&mut p.value, &p.name)?;
        }
        for s in net.batchnorm_stats_mut() {
            r.into_tensor(&mut s.mean, "running mean")?;
            r.into_tensor(&mut s.var, "running variance")?;
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(net)
    }
}
