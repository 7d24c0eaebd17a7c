//! Declarative network architecture and its text form.
//!
//! One layer per line, `#` starts a comment:
//!
//! ```text
//! input 1x155x220
//! conv 96 11x11 stride=4 pad=0
//! relu
//! lrn alpha=0.0001 beta=0.75 k=2 n=5
//! maxpool 3x3 stride=2
//! fc 4096
//! dropout 0.5
//! fc classes
//! softmax
//! ```
//!
//! `fc classes` is resolved to the number of training users when the network
//! is instantiated.

use std::fmt;
use std::str::FromStr;

use super::conv::conv_output_extent;
use super::dense::check_dropout_rate;
use super::lrn::LrnParams;
use super::pool::{pool_output_extent, PoolGeometry};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Width {
    Units(usize),
    /// One unit per class, fixed at instantiation.
    Classes,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
    },
    Lrn(LrnParams),
    MaxPool(PoolGeometry),
    Fc(Width),
    Relu,
    Dropout(f64),
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Lrn(_) => "lrn",
            LayerSpec::MaxPool(_) => "maxpool",
            LayerSpec::Fc(_) => "fc",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout(_) => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    /// `[channels, height, width]` of one input image.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

fn conv(filters: usize, k: usize, stride: usize, pad: usize) -> LayerSpec {
    LayerSpec::Conv {
        filters,
        kernel_h: k,
        kernel_w: k,
        stride,
        pad,
    }
}

fn pool(size: usize, stride: usize) -> LayerSpec {
    LayerSpec::MaxPool(PoolGeometry { size, stride })
}

impl NetworkSpec {
    /// The full-size architecture for 155×220 inputs with a 4096-unit
    /// feature layer.
    pub fn canonical() -> Self {
        let lrn = LayerSpec::Lrn(LrnParams::default());
        NetworkSpec {
            input: [1, 155, 220],
            layers: vec![
                conv(96, 11, 4, 0),
                LayerSpec::Relu,
                lrn,
                pool(3, 2),
                conv(256, 5, 1, 2),
                LayerSpec::Relu,
                lrn,
                pool(3, 2),
                conv(384, 3, 1, 1),
                LayerSpec::Relu,
                conv(256, 3, 1, 1),
                LayerSpec::Relu,
                pool(3, 2),
                LayerSpec::Fc(Width::Units(4096)),
                LayerSpec::Relu,
                LayerSpec::Dropout(0.5),
                LayerSpec::Fc(Width::Classes),
                LayerSpec::Softmax,
            ],
        }
    }

    /// Reduced, non-canonical variant for 55×80 inputs and a 256-unit
    /// feature layer. Same layer sequence with fewer filters, sized for
    /// CPU-only runs on small corpora.
    pub fn desk() -> Self {
        let lrn = LayerSpec::Lrn(LrnParams::default());
        NetworkSpec {
            input: [1, 55, 80],
            layers: vec![
                conv(16, 5, 2, 0),
                LayerSpec::Relu,
                lrn,
                pool(3, 2),
                conv(32, 3, 1, 1),
                LayerSpec::Relu,
                lrn,
                pool(3, 2),
                conv(48, 3, 1, 1),
                LayerSpec::Relu,
                conv(32, 3, 1, 1),
                LayerSpec::Relu,
                pool(3, 2),
                LayerSpec::Fc(Width::Units(256)),
                LayerSpec::Relu,
                LayerSpec::Dropout(0.5),
                LayerSpec::Fc(Width::Classes),
                LayerSpec::Softmax,
            ],
        }
    }

    /// Replaces `fc classes` with a concrete width.
    pub fn resolve(&self, classes: usize) -> NetworkSpec {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Fc(Width::Classes) => LayerSpec::Fc(Width::Units(classes)),
                other => *other,
            })
            .collect();
        NetworkSpec {
            input: self.input,
            layers,
        }
    }

    /// Index of the last fully connected layer (the classifier).
    pub fn classifier_index(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| matches!(l, LayerSpec::Fc(_)))
    }

    /// Validates the layer sequence and returns the activation shape after
    /// every layer, with `fc classes` taken as `classes` wide.
    pub fn activation_shapes(&self, classes: usize) -> Result<Vec<Vec<usize>>> {
        if self.input.contains(&0) {
            return Err(Error::config(format!("input shape {:?} has a zero extent", self.input)));
        }
        if classes < 1 {
            return Err(Error::config("network needs at least one class"));
        }
        let n = self.layers.len();
        if n < 2 || self.layers[n - 1] != LayerSpec::Softmax || !matches!(self.layers[n - 2], LayerSpec::Fc(_)) {
            return Err(Error::config("network must end with a fully connected layer followed by softmax"));
        }
        let mut shape = self.input.to_vec();
        let mut shapes = Vec::with_capacity(n);
        for (i, layer) in self.layers.iter().enumerate() {
            let spatial = |shape: &[usize]| -> Result<(usize, usize, usize)> {
                match *shape {
                    [c, h, w] => Ok((c, h, w)),
                    _ => Err(Error::config(format!(
                        "layer {i} ({}) needs a spatial input, got {shape:?}",
                        layer.kind()
                    ))),
                }
            };
            shape = match *layer {
                LayerSpec::Conv {
                    filters,
                    kernel_h,
                    kernel_w,
                    stride,
                    pad,
                } => {
                    let (_, h, w) = spatial(&shape)?;
                    if filters == 0 {
                        return Err(Error::config(format!("layer {i}: conv needs at least one filter")));
                    }
                    match (
                        conv_output_extent(h, kernel_h, stride, pad),
                        conv_output_extent(w, kernel_w, stride, pad),
                    ) {
                        (Some(oh), Some(ow)) => vec![filters, oh, ow],
                        _ => {
                            return Err(Error::shape(format!(
                                "layer {i}: {kernel_h}x{kernel_w} conv (stride {stride}, pad {pad}) does not fit {h}x{w}"
                            )))
                        }
                    }
                }
                LayerSpec::Lrn(p) => {
                    p.validate()?;
                    spatial(&shape)?;
                    shape
                }
                LayerSpec::MaxPool(g) => {
                    let (c, h, w) = spatial(&shape)?;
                    match (pool_output_extent(h, g.size, g.stride), pool_output_extent(w, g.size, g.stride)) {
                        (Some(oh), Some(ow)) => vec![c, oh, ow],
                        _ => {
                            return Err(Error::shape(format!(
                                "layer {i}: {0}x{0} pool (stride {1}) does not fit {h}x{w}",
                                g.size, g.stride
                            )))
                        }
                    }
                }
                LayerSpec::Fc(width) => {
                    let units = match width {
                        Width::Units(u) => u,
                        Width::Classes => classes,
                    };
                    if units == 0 {
                        return Err(Error::config(format!("layer {i}: fc width must be positive")));
                    }
                    vec![units]
                }
                LayerSpec::Relu => shape,
                LayerSpec::Dropout(p) => {
                    check_dropout_rate(p)?;
                    shape
                }
                LayerSpec::Softmax => {
                    if i != n - 1 {
                        return Err(Error::config("softmax is only allowed as the last layer"));
                    }
                    shape
                }
            };
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                filters,
                kernel_h,
                kernel_w,
                stride,
                pad,
            } => write!(f, "conv {filters} {kernel_h}x{kernel_w} stride={stride} pad={pad}"),
            LayerSpec::Lrn(p) => write!(f, "lrn alpha={} beta={} k={} n={}", p.alpha, p.beta, p.k, p.n),
            LayerSpec::MaxPool(g) => write!(f, "maxpool {0}x{0} stride={1}", g.size, g.stride),
            LayerSpec::Fc(Width::Units(u)) => write!(f, "fc {u}"),
            LayerSpec::Fc(Width::Classes) => write!(f, "fc classes"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::Dropout(p) => write!(f, "dropout {p}"),
            LayerSpec::Softmax => write!(f, "softmax"),
        }
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c, h, w] = self.input;
        writeln!(f, "input {c}x{h}x{w}")?;
        for l in &self.layers {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::config(format!("line {line}: cannot parse number {s:?}")))
}

fn parse_dims(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split('x').map(|p| parse_num(p, line)).collect()
}

/// Parses `key=value` options, requiring exactly the given keys.
fn options<'a>(tokens: &[&'a str], keys: &[&str], line: usize) -> Result<Vec<&'a str>> {
    let mut out = vec![None; keys.len()];
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {line}: expected key=value, got {t:?}")))?;
        let idx = keys
            .iter()
            .position(|&key| key == k)
            .ok_or_else(|| Error::config(format!("line {line}: unknown option {k:?}")))?;
        out[idx] = Some(v);
    }
    out.into_iter()
        .zip(keys)
        .map(|(v, k)| v.ok_or_else(|| Error::config(format!("line {line}: missing option {k}"))))
        .collect()
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        for (idx, raw) in s.lines().enumerate() {
            let line = idx + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = text.split_whitespace().collect();
            let bad = || Error::config(format!("line {line}: malformed layer {text:?}"));
            let layer = match tokens[0] {
                "input" => {
                    let d = parse_dims(tokens.get(1).ok_or_else(bad)?, line)?;
                    let [c, h, w] = d[..] else { return Err(bad()) };
                    input = Some([c, h, w]);
                    continue;
                }
                "conv" => {
                    let filters = parse_num(tokens.get(1).ok_or_else(bad)?, line)?;
                    let k = parse_dims(tokens.get(2).ok_or_else(bad)?, line)?;
                    let [kernel_h, kernel_w] = k[..] else { return Err(bad()) };
                    let o = options(&tokens[3..], &["stride", "pad"], line)?;
                    LayerSpec::Conv {
                        filters,
                        kernel_h,
                        kernel_w,
                        stride: parse_num(o[0], line)?,
                        pad: parse_num(o[1], line)?,
                    }
                }
                "lrn" => {
                    let o = options(&tokens[1..], &["alpha", "beta", "k", "n"], line)?;
                    LayerSpec::Lrn(LrnParams {
                        alpha: parse_num(o[0], line)?,
                        beta: parse_num(o[1], line)?,
                        k: parse_num(o[2], line)?,
                        n: parse_num(o[3], line)?,
                    })
                }
                "maxpool" => {
                    let k = parse_dims(tokens.get(1).ok_or_else(bad)?, line)?;
                    let [a, b] = k[..] else { return Err(bad()) };
                    if a != b {
                        return Err(Error::config(format!("line {line}: only square pooling windows are supported")));
                    }
                    let o = options(&tokens[2..], &["stride"], line)?;
                    LayerSpec::MaxPool(PoolGeometry {
                        size: a,
                        stride: parse_num(o[0], line)?,
                    })
                }
                "fc" => match *tokens.get(1).ok_or_else(bad)? {
                    "classes" => LayerSpec::Fc(Width::Classes),
                    n => LayerSpec::Fc(Width::Units(parse_num(n, line)?)),
                },
                "relu" => LayerSpec::Relu,
                "dropout" => LayerSpec::Dropout(parse_num(tokens.get(1).ok_or_else(bad)?, line)?),
                "softmax" => LayerSpec::Softmax,
                other => return Err(Error::config(format!("line {line}: unknown layer kind {other:?}"))),
            };
            layers.push(layer);
        }
        let input = input.ok_or_else(|| Error::config("network spec has no input line"))?;
        Ok(NetworkSpec { input, layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_shape_chain() {
        let shapes = NetworkSpec::canonical().activation_shapes(721).unwrap();
        let expected: Vec<Vec<usize>> = vec![
            vec![96, 37, 53],
            vec![96, 37, 53],
            vec![96, 37, 53],
            vec![96, 18, 26],
            vec![256, 18, 26],
            vec![256, 18, 26],
            vec![256, 18, 26],
            vec![256, 8, 12],
            vec![384, 8, 12],
            vec![384, 8, 12],
            vec![256, 8, 12],
            vec![256, 8, 12],
            vec![256, 3, 5],
            vec![4096],
            vec![4096],
            vec![4096],
            vec![721],
            vec![721],
        ];
        assert_eq!(shapes, expected);
    }

    #[test]
    fn text_round_trip() {
        for spec in [NetworkSpec::canonical(), NetworkSpec::desk()] {
            let text = spec.to_string();
            assert_eq!(text.parse::<NetworkSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn comments_and_errors() {
        let text = "# tiny\ninput 1x8x8\nconv 2 3x3 stride=1 pad=0 # first\nrelu\nfc classes\nsoftmax\n";
        let spec: NetworkSpec = text.parse().unwrap();
        assert_eq!(spec.activation_shapes(3).unwrap().last().unwrap(), &vec![3]);

        assert!("conv 2 3x3 stride=1 pad=0".parse::<NetworkSpec>().is_err());
        assert!("input 1x8x8\nconv 2 3x3 stride=1".parse::<NetworkSpec>().is_err());
        assert!("input 1x8x8\nwarp 3".parse::<NetworkSpec>().is_err());
    }

    #[test]
    fn structural_validation() {
        let no_softmax: NetworkSpec = "input 1x4x4\nfc 3".parse().unwrap();
        assert!(no_softmax.activation_shapes(2).is_err());
        let conv_after_fc: NetworkSpec =
            "input 1x4x4\nfc 16\nconv 1 1x1 stride=1 pad=0\nfc classes\nsoftmax".parse().unwrap();
        assert!(conv_after_fc.activation_shapes(2).is_err());
        let too_big: NetworkSpec = "input 1x4x4\nconv 1 5x5 stride=1 pad=0\nfc classes\nsoftmax".parse().unwrap();
        assert!(matches!(too_big.activation_shapes(2), Err(Error::Shape(_))));
    }
}
