//! Snapshot serialization for sampler state.
//!
//! Layout: one JSON header line, a `\n`, then the raw little-endian f64
//! blocks named in the header, concatenated in order. Particles come first,
//! then per-layer weights and biases, then optimizer buffers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParticleEnsemble, ScoreEstimator, SifgState};
use crate::nn::{net_init, Activation, OptimizerKind, OptimizerState};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    n: usize,
    d: usize,
    sigma: f64,
    iteration: u64,
    estimator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerKind>,
    #[serde(default)]
    opt_step_count: u64,
    blocks: Vec<Block>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Block {
    name: String,
    len: usize,
}

const FORMAT: &str = "sifg-checkpoint-v1";

impl SifgState {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let n = self.ensemble().count();
        let d = self.ensemble().dim();
        let mut blocks = vec![Block {
            name: "particles".into(),
            len: n * d,
        }];
        let mut payload: Vec<&[f64]> = vec![self.ensemble().as_flat()];

        let mut header = Header {
            format: FORMAT.into(),
            n,
            d,
            sigma: self.sigma(),
            iteration: self.iteration(),
            estimator: "gaussian_oracle".into(),
            layer_dims: None,
            activation: None,
            optimizer: None,
            opt_step_count: 0,
            blocks: Vec::new(),
        };

        let owned: Vec<Vec<f64>>;
        if let ScoreEstimator::Net { net, opt } = self.estimator() {
            header.estimator = "net".into();
            header.layer_dims = Some(net.layer_dims().to_vec());
            header.activation = Some(net.activation());
            header.optimizer = Some(opt.kind);
            header.opt_step_count = opt.step_count;

            let mut bufs = Vec::new();
            for (l, (w, b)) in net
                .params()
                .weights
                .iter()
                .zip(&net.params().biases)
                .enumerate()
            {
                blocks.push(Block {
                    name: format!("weights_{l}"),
                    len: w.len(),
                });
                bufs.push(w.clone());
                blocks.push(Block {
                    name: format!("biases_{l}"),
                    len: b.len(),
                });
                bufs.push(b.clone());
            }
            let (momentum, second) = opt.buffers();
            blocks.push(Block {
                name: "opt_momentum".into(),
                len: momentum.param_count(),
            });
            bufs.push(momentum.flatten());
            if let Some(second) = second {
                blocks.push(Block {
                    name: "opt_second_moment".into(),
                    len: second.param_count(),
                });
                bufs.push(second.flatten());
            }
            owned = bufs;
            payload.extend(owned.iter().map(|v| v.as_slice()));
        }
        header.blocks = blocks;

        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &header).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_all(b"\n")?;
        for block in payload {
            for v in block {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<SifgState> {
        let file = File::open(path)?;
        let mut r = BufReader::new(file);
        let mut header_bytes = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
        let header: Header =
            serde_json::from_slice(&header_bytes).map_err(|e| Error::Parse(e.to_string()))?;
        if header.format != FORMAT {
            return Err(Error::Parse(format!(
                "unknown checkpoint format {:?}",
                header.format
            )));
        }

        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };

        let mut blocks = header.blocks.iter();
        let particles_block = blocks
            .next()
            .ok_or_else(|| Error::Parse("missing particles block".into()))?;
        let particles = read_block(particles_block.len)?;
        let ensemble = ParticleEnsemble::from_flat(particles, header.d)?;

        let estimator = match header.estimator.as_str() {
            "gaussian_oracle" => ScoreEstimator::GaussianOracle,
            "net" => {
                let dims = header
                    .layer_dims
                    .ok_or_else(|| Error::Parse("missing layer_dims".into()))?;
                let activation = header
                    .activation
                    .ok_or_else(|| Error::Parse("missing activation".into()))?;
                let kind = header
                    .optimizer
                    .ok_or_else(|| Error::Parse("missing optimizer".into()))?;
                let mut net = net_init(&dims, activation, 0)?;
                let mut params = net.params().clone();
                for l in 0..dims.len() - 1 {
                    let wb = blocks
                        .next()
                        .ok_or_else(|| Error::Parse("missing weight block".into()))?;
                    params.weights[l] = read_block(wb.len)?;
                    let bb = blocks
                        .next()
                        .ok_or_else(|| Error::Parse("missing bias block".into()))?;
                    params.biases[l] = read_block(bb.len)?;
                }
                net = net.with_params(params)?;
                let mut opt = OptimizerState::new(kind, &net);
                let mb = blocks
                    .next()
                    .ok_or_else(|| Error::Parse("missing momentum block".into()))?;
                let momentum_flat = read_block(mb.len)?;
                let second_flat = match blocks.next() {
                    Some(b) => Some(read_block(b.len)?),
                    None => None,
                };
                {
                    let (momentum, second) = opt.buffers_mut();
                    momentum.unflatten_into(&momentum_flat)?;
                    if let (Some(second), Some(flat)) = (second, second_flat) {
                        second.unflatten_into(&flat)?;
                    }
                }
                opt.step_count = header.opt_step_count;
                ScoreEstimator::Net { net, opt }
            }
            other => return Err(Error::Parse(format!("unknown estimator {other:?}"))),
        };

        let mut state = SifgState::new(ensemble, estimator, header.sigma)?;
        state.iteration = header.iteration;
        Ok(state)
    }
}
