//! Fitted projection pairs and their binary file format.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field            | type                  |
//! |------------------|-----------------------|
//! | magic            | 8 bytes `VFUSEMDL`    |
//! | version          | u32 (= 1)             |
//! | method           | u8 (0 dccm, 1 dnccm)  |
//! | m, p, L, c       | 4 x u64               |
//! | ridge_x, ridge_y | 2 x f64               |
//! | x_mean           | m x f64               |
//! | y_mean           | p x f64               |
//! | spectrum         | L x f64               |
//! | degenerate       | L x u8 (0/1)          |
//! | trace_len        | u64                   |
//! | residual_trace   | trace_len x f64       |
//! | W_x              | m*L x f64, row-major  |
//! | W_y              | p*L x f64, row-major  |

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"VFUSEMDL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dccm,
    Dnccm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dccm => "dccm",
            Method::Dnccm => "dnccm",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dccm" => Ok(Method::Dccm),
            "dnccm" => Ok(Method::Dnccm),
            other => Err(Error::InvalidParameter(format!(
                "unknown method `{other}` (expected dccm or dnccm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub method: Method,
    /// `m x L`.
    pub w_x: DMatrix<f64>,
    /// `p x L`.
    pub w_y: DMatrix<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: DVector<f64>,
    /// Eigenvalue per column: GEV spectrum for dccm, per-step `lambda_t` for dnccm.
    pub spectrum: Vec<f64>,
    /// Columns whose step had nothing left to fit (zero target).
    pub degenerate: Vec<bool>,
    /// dnccm only: signed reconstruction error after each step.
    pub residual_trace: Vec<f64>,
    pub n_classes: usize,
    pub ridge_x: f64,
    pub ridge_y: f64,
}

impl ProjectionModel {
    pub fn code_length(&self) -> usize {
        self.w_x.ncols()
    }

    pub fn x_dim(&self) -> usize {
        self.w_x.nrows()
    }

    pub fn y_dim(&self) -> usize {
        self.w_y.nrows()
    }

    /// Keeps the first `len` columns. Both solvers produce columns in an order
    /// where this equals refitting with the shorter code length.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.code_length() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate a model of code length {} to {len}",
                self.code_length()
            )));
        }
        Ok(Self {
            w_x: self.w_x.columns(0, len).into_owned(),
            w_y: self.w_y.columns(0, len).into_owned(),
            spectrum: self.spectrum[..len].to_vec(),
            degenerate: self.degenerate[..len].to_vec(),
            residual_trace: self.residual_trace.iter().take(len).copied().collect(),
            ..self.clone()
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (m, p, l) = (self.x_dim(), self.y_dim(), self.code_length());
        let mut out = Vec::with_capacity(64 + 8 * (m + p) * (l + 1));
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.push(match self.method {
            Method::Dccm => 0,
            Method::Dnccm => 1,
        });
        for v in [m, p, l, self.n_classes] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        put(self.ridge_x);
        put(self.ridge_y);
        self.x_mean.iter().copied().for_each(&mut put);
        self.y_mean.iter().copied().for_each(&mut put);
        self.spectrum.iter().copied().for_each(&mut put);
        out.extend(self.degenerate.iter().map(|&d| d as u8));
        out.extend_from_slice(&(self.residual_trace.len() as u64).to_le_bytes());
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        self.residual_trace.iter().copied().for_each(&mut put);
        for w in [&self.w_x, &self.w_y] {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    put(w[(r, c)]);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic header".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let method = match r.take(1)?[0] {
            0 => Method::Dccm,
            1 => Method::Dnccm,
            t => return Err(Error::ModelFormat(format!("unknown method tag {t}"))),
        };
        let m = r.len()?;
        let p = r.len()?;
        let l = r.len()?;
        let n_classes = r.len()?;
        let ridge_x = r.f64()?;
        let ridge_y = r.f64()?;
        let x_mean = DVector::from_vec(r.f64s(m)?);
        let y_mean = DVector::from_vec(r.f64s(p)?);
        let spectrum = r.f64s(l)?;
        let degenerate = r.take(l)?.iter().map(|&b| b != 0).collect();
        let trace_len = r.len()?;
        let residual_trace = r.f64s(trace_len)?;
        let w_x = DMatrix::from_row_slice(m, l, &r.f64s(m * l)?);
        let w_y = DMatrix::from_row_slice(p, l, &r.f64s(p * l)?);
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            method,
            w_x,
            w_y,
            x_mean,
            y_mean,
            spectrum,
            degenerate,
            residual_trace,
            n_classes,
            ridge_x,
            ridge_y,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat(format!("implausible length {v}")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}
