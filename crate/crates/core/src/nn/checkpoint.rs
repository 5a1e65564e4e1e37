//! Model checkpoints stored in the shared binary container.

use std::path::Path;

use serde_json::{json, Value};

use super::{Network, NetworkSpec};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub seed: u64,
    /// Free-form run configuration carried alongside the weights.
    pub config: Value,
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &Network, seed: u64, config: &Value) -> Result<()> {
    let meta = json!({
        "architecture": net.spec(),
        "seed": seed,
        "config": config,
    });
    let mut c = Container::new(CHECKPOINT_KIND, meta);
    let params = net.params();
    let buffers = net.buffers();
    c.push("params", vec![params.len()], params)?;
    c.push("buffers", vec![buffers.len()], buffers)?;
    c.write(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let c = Container::read(path)?;
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if c.kind != CHECKPOINT_KIND {
        return Err(bad(&format!("expected a checkpoint, found {:?}", c.kind)));
    }
    let spec: NetworkSpec = serde_json::from_value(c.meta["architecture"].clone())?;
    let seed = c.meta["seed"].as_u64().ok_or_else(|| bad("missing seed"))?;
    let mut network = Network::init(&spec, &mut RngStream::new(0, 0))?;
    let params = c.get("params").ok_or_else(|| bad("missing params array"))?.1;
    let buffers = c.get("buffers").ok_or_else(|| bad("missing buffers array"))?.1;
    network.set_params(params)?;
    network.set_buffers(buffers)?;
    Ok(Checkpoint {
        network,
        seed,
        config: c.meta["config"].clone(),
    })
}
