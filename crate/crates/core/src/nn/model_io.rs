//! Network container format.
//!
//! Little-endian throughout:
//!
//! ```text
//! "SGNT"  u32 version
//! u32 channels, u32 height, u32 width          input shape
//! u32 layer_count
//! per layer:
//!   u8 kind tag, kind-specific hyperparameters
//!   u32 tensor_count (0 or 2: weights, bias)
//!   per tensor: u32 rank, u32 dims[rank], f32 data[product(dims)]
//! ```
//!
//! Tags: 1 conv (u32 filters, kh, kw, stride, pad), 2 lrn (f64 alpha, beta,
//! k; u32 n), 3 maxpool (u32 size, stride), 4 fc (u32 width), 5 relu,
//! 6 dropout (f64 p), 7 softmax.

use std::io::{Read, Write};

use super::lrn::LrnParams;
use super::network::{Network, Params};
use super::pool::PoolGeometry;
use super::spec::{LayerSpec, NetworkSpec, Width};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::wire::*;

pub const MODEL_MAGIC: &[u8; 4] = b"SGNT";
pub const MODEL_VERSION: u32 = 1;

fn write_tensor<W: Write, F: Scalar>(w: &mut W, t: &Tensor<F>) -> Result<()> {
    write_usize(w, t.shape().len())?;
    for &d in t.shape() {
        write_usize(w, d)?;
    }
    write_f32s(w, t.data().iter().map(|v| v.as_f64() as f32))
}

fn read_tensor<R: Read, F: Scalar>(r: &mut R) -> Result<Tensor<F>> {
    let rank = read_usize(r)?;
    if rank > 8 {
        return Err(Error::Format(format!("implausible tensor rank {rank}")));
    }
    let shape: Vec<usize> = (0..rank).map(|_| read_usize(r)).collect::<Result<_>>()?;
    let n = shape.iter().product();
    let data = read_f32s(r, n)?.into_iter().map(|v| F::of(v as f64)).collect();
    Tensor::from_vec(&shape, data)
}

/// Serializes a network; parameters are stored as `f32`.
pub fn save_network<W: Write, F: Scalar>(w: &mut W, net: &Network<F>) -> Result<()> {
    let spec = net.spec();
    write_header(w, MODEL_MAGIC, MODEL_VERSION)?;
    for &d in &spec.input {
        write_usize(w, d)?;
    }
    write_usize(w, spec.layers.len())?;
    for (layer, params) in spec.layers.iter().zip(net.params()) {
        match *layer {
            LayerSpec::Conv {
                filters,
                kernel_h,
                kernel_w,
                stride,
                pad,
            } => {
                write_u8(w, 1)?;
                for v in [filters, kernel_h, kernel_w, stride, pad] {
                    write_usize(w, v)?;
                }
            }
            LayerSpec::Lrn(p) => {
                write_u8(w, 2)?;
                write_f64(w, p.alpha)?;
                write_f64(w, p.beta)?;
                write_f64(w, p.k)?;
                write_usize(w, p.n)?;
            }
            LayerSpec::MaxPool(g) => {
                write_u8(w, 3)?;
                write_usize(w, g.size)?;
                write_usize(w, g.stride)?;
            }
            LayerSpec::Fc(Width::Units(u)) => {
                write_u8(w, 4)?;
                write_usize(w, u)?;
            }
            LayerSpec::Fc(Width::Classes) => unreachable!("instantiated networks are resolved"),
            LayerSpec::Relu => write_u8(w, 5)?,
            LayerSpec::Dropout(p) => {
                write_u8(w, 6)?;
                write_f64(w, p)?;
            }
            LayerSpec::Softmax => write_u8(w, 7)?,
        }
        match params {
            None => write_u32(w, 0)?,
            Some(p) => {
                write_u32(w, 2)?;
                write_tensor(w, &p.weights)?;
                write_tensor(w, &p.bias)?;
            }
        }
    }
    Ok(())
}

pub fn load_network<R: Read, F: Scalar>(r: &mut R) -> Result<Network<F>> {
    read_header(r, MODEL_MAGIC, MODEL_VERSION)?;
    let input = [read_usize(r)?, read_usize(r)?, read_usize(r)?];
    let count = read_usize(r)?;
    let mut layers = Vec::with_capacity(count.min(1024));
    let mut params = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let layer = match read_u8(r)? {
            1 => LayerSpec::Conv {
                filters: read_usize(r)?,
                kernel_h: read_usize(r)?,
                kernel_w: read_usize(r)?,
                stride: read_usize(r)?,
                pad: read_usize(r)?,
            },
            2 => LayerSpec::Lrn(LrnParams {
                alpha: read_f64(r)?,
                beta: read_f64(r)?,
                k: read_f64(r)?,
                n: read_usize(r)?,
            }),
            3 => LayerSpec::MaxPool(PoolGeometry {
                size: read_usize(r)?,
                stride: read_usize(r)?,
            }),
            4 => LayerSpec::Fc(Width::Units(read_usize(r)?)),
            5 => LayerSpec::Relu,
            6 => LayerSpec::Dropout(read_f64(r)?),
            7 => LayerSpec::Softmax,
            tag => return Err(Error::Format(format!("layer {i}: unknown kind tag {tag}"))),
        };
        params.push(match read_u32(r)? {
            0 => None,
            2 => Some(Params {
                weights: read_tensor(r)?,
                bias: read_tensor(r)?,
            }),
            n => return Err(Error::Format(format!("layer {i}: unexpected tensor count {n}"))),
        });
        layers.push(layer);
    }
    Network::from_parts(NetworkSpec { input, layers }, params)
}
