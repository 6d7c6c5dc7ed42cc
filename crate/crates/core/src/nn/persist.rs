//! Plain-text model files.
//!
//! ```text
//! loadtl-mlp 1 lookback=168 horizon=24 activation=relu layers=64-32 learning_rate=1.0000000000000000e-3 batch_size=32
//! layer 0 64 168
//! <64·168 weights, row-major>
//! <64 biases>
//! ...
//! ```
//!
//! Every number is written with 17 significant digits, so a load followed by
//! a save reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, Hyperparameters, Layer, Mlp};

pub const FORMAT_TAG: &str = "loadtl-mlp";
pub const FORMAT_VERSION: u32 = 1;

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(number).collect::<Vec<_>>().join(" ")
}

pub fn to_text(model: &Mlp) -> String {
    let h = &model.hyper;
    let mut out = format!(
        "{FORMAT_TAG} {FORMAT_VERSION} lookback={} horizon={} activation={} layers={} learning_rate={} batch_size={}\n",
        h.lookback,
        h.horizon,
        model.activation.name(),
        h.layers_label(),
        number(h.learning_rate),
        h.batch_size
    );
    for (k, l) in model.layers.iter().enumerate() {
        let _ = writeln!(out, "layer {k} {} {}", l.outputs(), l.inputs());
        let _ = writeln!(out, "{}", join(l.weights.iter().copied()));
        let _ = writeln!(out, "{}", join(l.bias.iter().copied()));
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn parse_numbers(line: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let values = line
        .split_ascii_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}` in {what}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(bad(format!("{what}: expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

pub fn from_text(text: &str) -> Result<Mlp> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some(FORMAT_TAG) {
        return Err(bad("missing format tag"));
    }
    match fields.next().map(str::parse::<u32>) {
        Some(Ok(FORMAT_VERSION)) => {}
        other => return Err(bad(format!("unsupported version {other:?}"))),
    }
    let mut get = std::collections::BTreeMap::new();
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| bad(format!("bad header field `{f}`")))?;
        get.insert(k, v);
    }
    let field = |k: &str| get.get(k).copied().ok_or_else(|| bad(format!("header lacks `{k}`")));
    let int = |k: &str| -> Result<usize> { field(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
    let layer_sizes = field("layers")?
        .split('-')
        .map(|s| s.parse::<usize>().map_err(|_| bad("bad layer sizes")))
        .collect::<Result<Vec<_>>>()?;
    let hyper = Hyperparameters {
        layer_sizes,
        lookback: int("lookback")?,
        horizon: int("horizon")?,
        learning_rate: field("learning_rate")?.parse().map_err(|_| bad("bad learning rate"))?,
        batch_size: int("batch_size")?,
    };
    let activation = Activation::parse(field("activation")?)?;

    let mut layers = Vec::new();
    while let Some(line) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_ascii_whitespace().collect();
        let [tag, k, out, inp] = parts[..] else {
            return Err(bad(format!("bad layer line `{line}`")));
        };
        if tag != "layer" || k.parse::<usize>().ok() != Some(layers.len()) {
            return Err(bad(format!("expected `layer {}`", layers.len())));
        }
        let out: usize = out.parse().map_err(|_| bad("bad layer rows"))?;
        let inp: usize = inp.parse().map_err(|_| bad("bad layer columns"))?;
        let what = format!("layer {k}");
        let w = parse_numbers(lines.next().unwrap_or(""), out * inp, &format!("{what} weights"))?;
        let b = parse_numbers(lines.next().unwrap_or(""), out, &format!("{what} bias"))?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((out, inp), w).expect("length checked"),
            bias: Array1::from_vec(b),
        });
    }
    Mlp::from_layers(hyper, activation, layers)
}

pub fn save_model(path: &Path, model: &Mlp) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Mlp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64) -> Mlp {
        let h = Hyperparameters {
            layer_sizes: vec![5, 3],
            lookback: 7,
            horizon: 24,
            learning_rate: 2.06e-4,
            batch_size: 32,
        };
        Mlp::new(h, Activation::Tanh, seed).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut m = model(1);
        m.layers[0].bias[0] = -0.0;
        m.layers[1].bias[2] = 1e-310;
        m.layers[2].bias[1] = std::f64::consts::PI * 1e17;
        let text = to_text(&m);
        let back = from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_text(&back), text);
        assert!(text.starts_with("loadtl-mlp 1 lookback=7 horizon=24 activation=tanh layers=5-3 "));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        let m = model(2);
        save_model(&p, &m).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let text = to_text(&model(3));
        assert!(from_text(&text.replacen("loadtl-mlp", "other", 1)).is_err());
        assert!(from_text(&text.replacen("layer 1 3 5", "layer 1 3 4", 1)).is_err());
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(from_text(&truncated).is_err());
        assert!(from_text(&text.replacen("e-1", "e-1x", 1)).is_err());
        assert!(from_text("").is_err());
    }
}
