//! Plain-text model format.
//!
//! ```text
//! dims: 16,64,32,8
//! weight 0 64x16
//! <64 lines of 16 values>
//! bias 0 64
//! <1 line of 64 values>
//! ...
//! ```
//!
//! Values are written with 17 significant digits so reading a file back
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{EmbeddingModel, Layer};
use crate::{Error, Result};

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let row: Vec<String> = values.map(|&v| fmt_value(v)).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

pub fn to_text(model: &EmbeddingModel) -> String {
    let dims: Vec<String> = model.layer_dims().iter().map(|d| d.to_string()).collect();
    let mut out = format!("dims: {}\n", dims.join(","));
    for (i, layer) in model.layers().iter().enumerate() {
        let (rows, cols) = layer.weight.dim();
        out.push_str(&format!("weight {i} {rows}x{cols}\n"));
        for row in layer.weight.rows() {
            push_row(&mut out, row.iter());
        }
        out.push_str(&format!("bias {i} {}\n", layer.bias.len()));
        push_row(&mut out, layer.bias.iter());
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => Ok((i + 1, l.trim_end_matches('\r'))),
            None => Err(Error::Parse {
                path: self.path.to_path_buf(),
                line: 0,
                message: "unexpected end of model file".into(),
            }),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn values(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next()?;
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| self.err(n, format!("bad value {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(self.err(n, format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn header(&mut self, expected: &str) -> Result<()> {
        let (n, line) = self.next()?;
        if line.trim() != expected {
            return Err(self.err(n, format!("expected `{expected}`, found `{line}`")));
        }
        Ok(())
    }
}

/// Parses the text format. `path` is only used for error messages.
pub fn from_text(text: &str, path: &Path) -> Result<EmbeddingModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path,
    };
    let (n, first) = lines.next()?;
    let dims_str = first
        .strip_prefix("dims:")
        .ok_or_else(|| lines.err(n, "missing `dims:` header"))?;
    let dims = dims_str
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| lines.err(n, format!("bad dimension {t:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.len() < 2 {
        return Err(lines.err(n, "need at least two dimensions"));
    }

    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (i, w) in dims.windows(2).enumerate() {
        let (cols, rows) = (w[0], w[1]);
        lines.header(&format!("weight {i} {rows}x{cols}"))?;
        let mut flat = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            flat.extend(lines.values(cols)?);
        }
        let weight = Array2::from_shape_vec((rows, cols), flat).expect("row count checked");
        lines.header(&format!("bias {i} {rows}"))?;
        let bias = Array1::from(lines.values(rows)?);
        layers.push(Layer { weight, bias });
    }
    EmbeddingModel::from_layers(&dims, layers)
}

pub fn save_model(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}
