//! Versioned binary model files.
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`.
//!
//! ```text
//! "SPDM" | version | kind
//! kind 1 (DNNC): negative_slope | n_sizes | sizes[n_sizes]
//!                | per layer: weights (row-major, out x in), bias[out]
//!                | M | mean[M] | std[M]
//! kind 2 (DBC):  q | M | threshold
//! kind 3 (KMC):  kappa | M | centroids (row-major, kappa x M) | threshold
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::benchmarks::{DbcModel, KmcModel, NormOrder};
use crate::detector::{Decision, DetectorModel, Standardizer};
use crate::error::{Error, Result};
use crate::neural::{DenseLayer, MlpParams};

pub const MAGIC: &[u8; 4] = b"SPDM";
pub const VERSION: u32 = 1;

const KIND_DNNC: u32 = 1;
const KIND_DBC: u32 = 2;
const KIND_KMC: u32 = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Dnnc(DetectorModel),
    Dbc(DbcModel),
    Kmc(KmcModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Dnnc(_) => "dnnc",
            SavedModel::Dbc(m) if m.order == NormOrder::L1 => "dbc1",
            SavedModel::Dbc(_) => "dbc2",
            SavedModel::Kmc(_) => "kmc",
        }
    }

    pub fn num_features(&self) -> usize {
        match self {
            SavedModel::Dnnc(m) => m.num_features(),
            SavedModel::Dbc(m) => m.num_features,
            SavedModel::Kmc(m) => m.num_features(),
        }
    }

    pub fn decide(&self, f: &[f64], f_prime: &[f64]) -> Result<Decision> {
        match self {
            SavedModel::Dnnc(m) => m.decide(f, f_prime),
            SavedModel::Dbc(m) => m.decide(f, f_prime),
            SavedModel::Kmc(m) => m.decide(f, f_prime),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        match self {
            SavedModel::Dnnc(m) => {
                w.u32(KIND_DNNC);
                w.f64(m.params.negative_slope);
                let sizes = m.params.sizes();
                w.usize(sizes.len());
                sizes.iter().for_each(|&s| w.usize(s));
                for layer in &m.params.layers {
                    layer.weights.iter().for_each(|&v| w.f64(v));
                    layer.bias.iter().for_each(|&v| w.f64(v));
                }
                w.usize(m.num_features());
                m.standardizer.mean.iter().for_each(|&v| w.f64(v));
                m.standardizer.std.iter().for_each(|&v| w.f64(v));
            }
            SavedModel::Dbc(m) => {
                w.u32(KIND_DBC);
                w.u32(m.order.q());
                w.usize(m.num_features);
                w.f64(m.threshold);
            }
            SavedModel::Kmc(m) => {
                w.u32(KIND_KMC);
                w.usize(m.centroids.len());
                w.usize(m.num_features());
                m.centroids.iter().flatten().for_each(|&v| w.f64(v));
                w.f64(m.threshold);
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("not a model file (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported model file version {version}"));
        }
        let model = match r.u32()? {
            KIND_DNNC => {
                let negative_slope = r.f64()?;
                let n = r.u32()? as usize;
                let sizes = (0..n)
                    .map(|_| r.u32().map(|v| v as usize))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if sizes.len() < 2 {
                    return Err("network needs at least two layer sizes".into());
                }
                let mut layers = Vec::with_capacity(sizes.len() - 1);
                for w in sizes.windows(2) {
                    let weights =
                        Array2::from_shape_vec((w[1], w[0]), r.f64s(w[0] * w[1])?).map_err(|e| e.to_string())?;
                    let bias = Array1::from(r.f64s(w[1])?);
                    layers.push(DenseLayer { weights, bias });
                }
                let m = r.u32()? as usize;
                let standardizer = Standardizer {
                    mean: r.f64s(m)?,
                    std: r.f64s(m)?,
                };
                let params = MlpParams { layers, negative_slope };
                SavedModel::Dnnc(DetectorModel::new(params, standardizer).map_err(|e| e.to_string())?)
            }
            KIND_DBC => {
                let order = NormOrder::from_q(r.u32()?).map_err(|e| e.to_string())?;
                let num_features = r.u32()? as usize;
                SavedModel::Dbc(DbcModel {
                    order,
                    threshold: r.f64()?,
                    num_features,
                })
            }
            KIND_KMC => {
                let kappa = r.u32()? as usize;
                let m = r.u32()? as usize;
                if kappa == 0 || m == 0 {
                    return Err("empty k-means model".into());
                }
                let centroids = (0..kappa)
                    .map(|_| r.f64s(m))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                SavedModel::Kmc(KmcModel {
                    centroids,
                    threshold: r.f64()?,
                })
            }
            other => return Err(format!("unknown model kind tag {other}")),
        };
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message,
        })
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("model dimension fits in u32"));
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated model file at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        (0..n).map(|_| self.f64()).collect()
    }
}
