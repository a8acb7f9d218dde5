//! Checkpoint files: the magic line `DRX1`, a UTF-8 manifest, a blank line
//! and a little-endian `f32` payload.
//!
//! ```text
//! DRX1
//! config 11-S4
//! n_rx 2
//! conv_in/w f32 3,3,10,32 0
//! conv_in/b f32 32 11520
//! ...
//!
//! <payload>
//! ```
//!
//! Offsets are in bytes from the start of the payload.

use crate::config::DeepRxConfig;
use crate::error::{format_err, Error, Result};
use crate::model::DeepRx;
use deeprx_nn::{Scalar, Tensor};
use std::io::Write;
use std::path::Path;

pub const MAGIC: &str = "DRX1";

/// Contents of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_name: String,
    pub n_rx: usize,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &DeepRx<T>) -> Self {
        Self {
            config_name: model.config.name.clone(),
            n_rx: model.n_rx,
            tensors: model.params.iter().map(|(_, p)| (p.name.clone(), p.value.cast())).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\nconfig {}\nn_rx {}\n", self.config_name, self.n_rx);
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            let shape = if shape.is_empty() { "scalar".to_string() } else { shape.join(",") };
            head.push_str(&format!("{name} f32 {shape} {offset}\n"));
            offset += 4 * t.len();
        }
        head.push('\n');
        let mut out = head.into_bytes();
        out.reserve(offset);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| Error::Format { tensor: "<manifest>".into(), message: "no blank line after manifest".into() })?;
        let manifest = std::str::from_utf8(&bytes[..split])
            .map_err(|e| Error::Format { tensor: "<manifest>".into(), message: e.to_string() })?;
        let payload = &bytes[split + 2..];
        let mut lines = manifest.lines();
        if lines.next() != Some(MAGIC) {
            return format_err("<manifest>", "missing DRX1 magic");
        }
        let config_name = match lines.next().and_then(|l| l.strip_prefix("config ")) {
            Some(n) => n.to_string(),
            None => return format_err("<manifest>", "missing config line"),
        };
        let n_rx = match lines.next().and_then(|l| l.strip_prefix("n_rx ")).map(str::parse::<usize>) {
            Some(Ok(n)) => n,
            _ => return format_err("<manifest>", "missing or malformed n_rx line"),
        };
        let mut tensors = Vec::new();
        let mut expected_offset = 0usize;
        for line in lines {
            let fields: Vec<&str> = line.split(' ').collect();
            let [name, dtype, shape, offset] = fields[..] else {
                return format_err(line, "manifest line needs name, dtype, shape, offset");
            };
            if dtype != "f32" {
                return format_err(name, format!("unsupported dtype '{dtype}'"));
            }
            let shape: Vec<usize> = if shape == "scalar" {
                vec![]
            } else {
                match shape.split(',').map(str::parse).collect::<std::result::Result<_, _>>() {
                    Ok(s) => s,
                    Err(_) => return format_err(name, format!("malformed shape '{shape}'")),
                }
            };
            let offset: usize = match offset.parse() {
                Ok(o) => o,
                Err(_) => return format_err(name, format!("malformed offset '{offset}'")),
            };
            if offset != expected_offset {
                return format_err(name, format!("offset {offset}, expected {expected_offset}"));
            }
            let n: usize = shape.iter().product();
            let end = offset + 4 * n;
            if end > payload.len() {
                return format_err(name, format!("payload ends at byte {} but tensor needs {end}", payload.len()));
            }
            let data = payload[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name.to_string(), Tensor::from_vec(&shape, data)?));
            expected_offset = end;
        }
        if expected_offset != payload.len() {
            return format_err("<payload>", format!("{} trailing bytes", payload.len() - expected_offset));
        }
        Ok(Self { config_name, n_rx, tensors })
    }
}

/// Writes atomically: a temporary file in the same directory is renamed over
/// `path`.
pub fn save_checkpoint<T: Scalar>(model: &DeepRx<T>, path: &Path) -> Result<()> {
    let bytes = Checkpoint::from_model(model).to_bytes();
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("bad path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

/// Rebuilds the network named in the checkpoint and loads its tensors.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<DeepRx<T>> {
    let ck = read_checkpoint(path)?;
    let config = DeepRxConfig::preset(&ck.config_name)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut model = DeepRx::new(config, ck.n_rx, &mut rng)?;
    apply(&mut model, &ck)?;
    Ok(model)
}

/// Loads a checkpoint into an existing network of the same configuration.
pub fn load_into<T: Scalar>(model: &mut DeepRx<T>, path: &Path) -> Result<()> {
    let ck = read_checkpoint(path)?;
    if ck.config_name != model.config.name {
        return Err(Error::ConfigMismatch { expected: model.config.name.clone(), found: ck.config_name });
    }
    apply(model, &ck)
}

fn apply<T: Scalar>(model: &mut DeepRx<T>, ck: &Checkpoint) -> Result<()> {
    if ck.n_rx != model.n_rx {
        return format_err("<manifest>", format!("checkpoint has n_rx {}, network {}", ck.n_rx, model.n_rx));
    }
    if ck.tensors.len() != model.params.len() {
        return format_err("<manifest>", format!("{} tensors, network has {}", ck.tensors.len(), model.params.len()));
    }
    for (name, t) in &ck.tensors {
        let id = match model.params.find(name) {
            Some(id) => id,
            None => return format_err(name, "not a parameter of this network"),
        };
        if model.params.value(id).shape() != t.shape() {
            return format_err(name, format!("shape {:?}, network expects {:?}", t.shape(), model.params.value(id).shape()));
        }
        *model.params.value_mut(id) = t.cast();
    }
    Ok(())
}
