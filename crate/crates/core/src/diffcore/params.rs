use std::io::{BufRead, Write};

use crate::{Error, Result};

/// One named parameter array with its gradient slot and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    name: String,
    rows: usize,
    cols: usize,
    pub(crate) value: Vec<f64>,
    pub(crate) grad: Vec<f64>,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, value: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if value.len() != rows * cols {
            return Err(Error::Shape(format!(
                "parameter {name}: {} values for shape {rows}x{cols}",
                value.len()
            )));
        }
        let n = value.len();
        Ok(Self {
            name,
            rows,
            cols,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut [f64] {
        &mut self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// Ordered collection of named parameters for one network, plus the shared
/// optimizer step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, param: Param) -> Result<()> {
        if self.index_of(param.name()).is_some() {
            return Err(Error::Config(format!(
                "duplicate parameter {}",
                param.name()
            )));
        }
        self.params.push(param);
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Optimizer steps taken since initialization or the last reset.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    /// Mutable access to the `i`-th scalar in flat order.
    pub fn scalar_mut(&mut self, mut i: usize) -> &mut f64 {
        for p in &mut self.params {
            if i < p.value.len() {
                return &mut p.value[i];
            }
            i -= p.value.len();
        }
        panic!("scalar index out of range");
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape() == b.shape())
    }

    /// Copies values from `other`, leaving gradients and moments untouched.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Shape(
                "copy between stores of different layout".into(),
            ));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.copy_from_slice(&src.value);
        }
        Ok(())
    }

    /// Writes the text checkpoint section for this store.
    ///
    /// ```text
    /// store <name> <param count> <optimizer step>
    /// param <param name> <rows> <cols>
    /// value <rows*cols numbers>
    /// m <...>
    /// v <...>
    /// ```
    ///
    /// Numbers use Rust's shortest round-trip formatting, so reading a
    /// checkpoint back reproduces every bit.
    pub fn write_text<W: Write>(&self, label: &str, out: &mut W) -> Result<()> {
        writeln!(out, "store {label} {} {}", self.params.len(), self.step)?;
        for p in &self.params {
            writeln!(out, "param {} {} {}", p.name, p.rows, p.cols)?;
            for (tag, data) in [("value", &p.value), ("m", &p.m), ("v", &p.v)] {
                write!(out, "{tag}")?;
                for x in data.iter() {
                    write!(out, " {x:?}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Reads one section written by [`ParamStore::write_text`]; returns its label.
    pub fn read_text<R: BufRead>(input: &mut R) -> Result<(String, ParamStore)> {
        let header = next_line(input)?;
        let mut it = header.split_whitespace();
        if it.next() != Some("store") {
            return Err(Error::Parse(format!(
                "expected store header, got {header:?}"
            )));
        }
        let label = it
            .next()
            .ok_or_else(|| Error::Parse("missing store label".into()))?;
        let count: usize = parse_field(it.next(), "param count")?;
        let step: u64 = parse_field(it.next(), "optimizer step")?;
        let mut store = ParamStore {
            params: Vec::with_capacity(count),
            step,
        };
        for _ in 0..count {
            let line = next_line(input)?;
            let mut it = line.split_whitespace();
            if it.next() != Some("param") {
                return Err(Error::Parse(format!("expected param header, got {line:?}")));
            }
            let name = it
                .next()
                .ok_or_else(|| Error::Parse("missing param name".into()))?;
            let rows: usize = parse_field(it.next(), "rows")?;
            let cols: usize = parse_field(it.next(), "cols")?;
            let value = read_numbers(input, "value", rows * cols)?;
            let m = read_numbers(input, "m", rows * cols)?;
            let v = read_numbers(input, "v", rows * cols)?;
            let mut param = Param::new(name, rows, cols, value)?;
            param.m = m;
            param.v = v;
            store.push(param)?;
        }
        Ok((label.to_string(), store))
    }
}

fn next_line<R: BufRead>(input: &mut R) -> Result<String> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Err(Error::Parse("unexpected end of checkpoint".into()));
    }
    Ok(line.trim_end().to_string())
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad or missing {what}")))
}

fn read_numbers<R: BufRead>(input: &mut R, tag: &str, n: usize) -> Result<Vec<f64>> {
    let line = next_line(input)?;
    let mut it = line.split_whitespace();
    if it.next() != Some(tag) {
        return Err(Error::Parse(format!("expected {tag} row")));
    }
    let values: Vec<f64> = it
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad number {t:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != n {
        return Err(Error::Parse(format!(
            "{tag}: expected {n} numbers, got {}",
            values.len()
        )));
    }
    Ok(values)
}
