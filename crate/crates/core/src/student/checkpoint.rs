//! Text checkpoint with a shape header. Values are written as the hex bit
//! pattern of their `f64` widening, so save/load round-trips bit-exactly for
//! both `f32` and `f64` parameters. Lines after the first that start with `#`
//! are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Layer, StudentParams};
use crate::error::{FwlError, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "fwl-student 1";

fn push_values<T: Scalar>(out: &mut String, name: &str, values: &[T]) {
    out.push_str(name);
    for v in values {
        let _ = write!(out, " {:016x}", v.f64().to_bits());
    }
    out.push('\n');
}

pub fn write_checkpoint<T: Scalar>(params: &StudentParams<T>) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "vocab_size {}", params.vocab_size);
    let _ = writeln!(out, "embed_dim {}", params.embed_dim);
    let shapes: Vec<String> = params.layers.iter().map(|l| format!("{}x{}", l.inputs, l.outputs)).collect();
    let _ = writeln!(out, "layers {}", shapes.join(" "));
    push_values(&mut out, "embeddings", &params.embeddings);
    push_values(&mut out, "importance", &params.importance);
    for (i, l) in params.layers.iter().enumerate() {
        push_values(&mut out, &format!("layer{i}.weights"), &l.weights);
        push_values(&mut out, &format!("layer{i}.bias"), &l.bias);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn err(line: usize, msg: impl Into<String>) -> FwlError {
        FwlError::Parse { file: "checkpoint".into(), line, msg: msg.into() }
    }

    /// Next line that is not a `#` comment.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        self.inner.find(|(_, l)| !l.starts_with('#'))
    }

    fn field(&mut self, name: &str) -> Result<(usize, Vec<&'a str>)> {
        let (i, line) = self.next_line().ok_or_else(|| Self::err(0, format!("missing `{name}`")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(Self::err(i + 1, format!("expected `{name}`")));
        }
        Ok((i + 1, parts.collect()))
    }

    fn usize(&mut self, name: &str) -> Result<usize> {
        let (line, v) = self.field(name)?;
        match v.as_slice() {
            [x] => x.parse().map_err(|_| Self::err(line, format!("bad `{name}`"))),
            _ => Err(Self::err(line, format!("`{name}` takes one value"))),
        }
    }

    fn values<T: Scalar>(&mut self, name: &str, expected: usize) -> Result<Vec<T>> {
        let (line, v) = self.field(name)?;
        if v.len() != expected {
            return Err(Self::err(line, format!("`{name}` has {} values, expected {expected}", v.len())));
        }
        v.iter()
            .map(|h| {
                u64::from_str_radix(h, 16)
                    .map(|b| T::of(f64::from_bits(b)))
                    .map_err(|_| Self::err(line, format!("bad value `{h}`")))
            })
            .collect()
    }
}

pub fn parse_checkpoint<T: Scalar>(text: &str) -> Result<StudentParams<T>> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    match lines.inner.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(Lines::err(1, "not a student checkpoint")),
    }
    let vocab_size = lines.usize("vocab_size")?;
    let embed_dim = lines.usize("embed_dim")?;
    let (line, shapes) = lines.field("layers")?;
    let shapes = shapes
        .iter()
        .map(|s| {
            s.split_once('x')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .ok_or_else(|| Lines::err(line, format!("bad layer shape `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let embeddings = lines.values("embeddings", vocab_size * embed_dim)?;
    let importance = lines.values("importance", vocab_size)?;
    let mut layers = Vec::with_capacity(shapes.len());
    for (i, (inputs, outputs)) in shapes.into_iter().enumerate() {
        let weights = lines.values(&format!("layer{i}.weights"), inputs * outputs)?;
        let bias = lines.values(&format!("layer{i}.bias"), outputs)?;
        layers.push(Layer { inputs, outputs, weights, bias });
    }
    let params = StudentParams { vocab_size, embed_dim, embeddings, importance, layers };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &StudentParams<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<StudentParams<T>> {
    parse_checkpoint(&fs::read_to_string(path)?)
}
