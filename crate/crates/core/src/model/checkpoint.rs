//! Checkpoint file: a text header followed by little-endian f64 tensors.
//!
//! ```text
//! ssmix-checkpoint 1
//! vocab_size=54
//! dim=32
//! hidden=64
//! classes=2
//! paired=false
//! activation=tanh
//! values=3522
//!
//! <embedding, w1, b1, w2, b2 as raw f64 LE>
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Activation, ModelConfig, Params, ToyTextClassifier};
use crate::error::{Error, Result};

const MAGIC: &str = "ssmix-checkpoint";
const VERSION: u32 = 1;

impl ToyTextClassifier {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let mut out = format!(
            "{MAGIC} {VERSION}\nvocab_size={}\ndim={}\nhidden={}\nclasses={}\npaired={}\nactivation={}\nvalues={}\n\n",
            cfg.vocab_size,
            cfg.dim,
            cfg.hidden,
            cfg.num_classes,
            cfg.paired,
            cfg.activation.tag(),
            self.params().num_values()
        )
        .into_bytes();
        for t in self.params().tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| bad("missing header terminator"))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8"))?;
        let payload = &bytes[split + 2..];

        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        if first != format!("{MAGIC} {VERSION}") {
            return Err(bad(&format!("unsupported header {first:?}")));
        }
        let fields: HashMap<&str, &str> = lines.filter_map(|l| l.split_once('=')).collect();
        let num = |key: &str| -> Result<usize> {
            fields
                .get(key)
                .ok_or_else(|| bad(&format!("missing {key}")))?
                .parse()
                .map_err(|_| bad(&format!("bad {key}")))
        };
        let paired = match fields.get("paired").copied() {
            Some("true") => true,
            Some("false") => false,
            _ => return Err(bad("bad paired flag")),
        };
        let activation = match fields.get("activation").copied() {
            Some("tanh") => Activation::Tanh,
            other => return Err(bad(&format!("unknown activation {other:?}"))),
        };
        let config = ModelConfig {
            vocab_size: num("vocab_size")?,
            dim: num("dim")?,
            hidden: num("hidden")?,
            num_classes: num("classes")?,
            paired,
            activation,
        };
        let mut params = Params::zeros(&config);
        let expected = params.num_values();
        if num("values")? != expected || payload.len() != expected * 8 {
            return Err(bad("payload size does not match header"));
        }
        let mut chunks = payload.chunks_exact(8);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                let chunk = chunks.next().expect("length checked");
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
        ToyTextClassifier::from_parts(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
