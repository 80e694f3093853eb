//! Checkpoint files.
//!
//! ```text
//! "SSNCK" | version u32 = 1 | config_len u32 | config text (UTF-8)
//! then until EOF, one record per parameter in store order:
//!   name_len u32 | name | ndim u32 | dims u32… | numel × f64
//! ```
//!
//! Little-endian throughout. The config text is the canonical network
//! config followed by a `step = N` line carrying the training step counter.

use std::fs;
use std::path::Path;

use crate::config::{render_lines, ConfigSection, FlatConfig};
use crate::error::{Error, FormatError};
use crate::net::{Network, NetworkConfig};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"SSNCK";
const VERSION: u32 = 1;
const WHAT: &str = "checkpoint";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub step: u64,
    pub params: ParamStore<f64>,
}

impl Checkpoint {
    pub fn config_text(&self) -> String {
        let mut text = render_lines(&self.config.render());
        text.push_str(&format!("step = {}\n", self.step));
        text
    }

    pub fn network(&self) -> Result<Network, Error> {
        Network::for_params(&self.config, &self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let text = self.config_text();
        let mut out = Vec::with_capacity(16 + text.len() + self.params.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, text.len() as u32);
        out.extend_from_slice(text.as_bytes());
        for (name, t) in self.params.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.ndim() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, Error> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(FormatError::Magic {
                what: WHAT,
                expected: "SSNCK".into(),
            }
            .into());
        }
        let mut r = Reader {
            bytes,
            pos: MAGIC.len(),
        };
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(FormatError::Version {
                what: WHAT,
                found: version,
                expected: VERSION,
            }
            .into());
        }
        let len = r.u32("config length")? as usize;
        let text = std::str::from_utf8(r.take(len, "config text")?)
            .map_err(|_| FormatError::Invalid("checkpoint config is not UTF-8".into()))?;
        let (config, step) = parse_config_text(text)?;

        let mut params = ParamStore::new();
        while r.pos < bytes.len() {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| FormatError::Invalid("parameter name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32("ndim")? as usize;
            let dims = (0..ndim).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let bytes_needed = dims
                .iter()
                .try_fold(8usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| FormatError::Invalid(format!("`{name}`: tensor too large")))?;
            let data: Vec<f64> = r
                .take(bytes_needed, "tensor data")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(&dims, data).map_err(|e| FormatError::Invalid(format!("`{name}`: {e}")))?;
            params.register(name, t).map_err(|e| FormatError::Invalid(e.to_string()))?;
        }
        let ck = Checkpoint { config, step, params };
        ck.network()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, Error> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

fn parse_config_text(text: &str) -> Result<(NetworkConfig, u64), Error> {
    let mut cfg = NetworkConfig::default();
    let mut step = None;
    for (k, v) in FlatConfig::parse(text)?.entries() {
        if k == "step" {
            step = Some(v.parse().map_err(|_| FormatError::Invalid(format!("bad step counter `{v}`")))?);
        } else if !cfg.apply(k, v)? {
            return Err(crate::error::ConfigError::UnknownKey(k.to_string()).into());
        }
    }
    cfg.validate()?;
    let step = step.ok_or_else(|| FormatError::Invalid("checkpoint config lacks a step counter".into()))?;
    Ok((cfg, step))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::Truncated {
                what: WHAT,
                detail: format!("{field} at byte {} needs {n} bytes", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}
