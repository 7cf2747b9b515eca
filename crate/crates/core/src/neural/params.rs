use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::util::*;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn output_size(&self, input: usize) -> usize {
        if input < self.kernel {
            0
        } else {
            (input - self.kernel) / self.stride + 1
        }
    }
}

/// Layer sizes of the Conv-Conv-FC-LSTM network. The input is a single-channel square image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub fc: usize,
    pub lstm: usize,
    pub n_actions: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_size: 64,
            conv1: ConvSpec { filters: 16, kernel: 8, stride: 4 },
            conv2: ConvSpec { filters: 32, kernel: 4, stride: 2 },
            fc: 256,
            lstm: 128,
            n_actions: 5,
        }
    }
}

impl Architecture {
    /// 8×8 input, two filters per conv: small enough for exhaustive finite differences.
    pub fn tiny() -> Self {
        Architecture {
            input_size: 8,
            conv1: ConvSpec { filters: 2, kernel: 3, stride: 1 },
            conv2: ConvSpec { filters: 2, kernel: 2, stride: 2 },
            fc: 4,
            lstm: 3,
            n_actions: 5,
        }
    }

    /// Reduced network for desk-scale learning runs on a 24×24 raster.
    pub fn desk() -> Self {
        Architecture {
            input_size: 24,
            conv1: ConvSpec { filters: 8, kernel: 4, stride: 2 },
            conv2: ConvSpec { filters: 16, kernel: 3, stride: 2 },
            fc: 64,
            lstm: 32,
            n_actions: 5,
        }
    }

    pub fn conv1_out(&self) -> usize {
        self.conv1.output_size(self.input_size)
    }

    pub fn conv2_out(&self) -> usize {
        self.conv2.output_size(self.conv1_out())
    }

    pub fn flat_size(&self) -> usize {
        self.conv2.filters * self.conv2_out() * self.conv2_out()
    }

    pub fn lstm_input(&self) -> usize {
        self.fc + self.n_actions + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.input_size,
            self.conv1.filters,
            self.conv1.kernel,
            self.conv1.stride,
            self.conv2.filters,
            self.conv2.kernel,
            self.conv2.stride,
            self.fc,
            self.lstm,
            self.n_actions,
        ];
        if positive.contains(&0) {
            return Err(Error::Config("architecture sizes must be positive".into()));
        }
        if self.conv2_out() == 0 {
            return Err(Error::Config(format!(
                "input {}x{} too small for the conv stack",
                self.input_size, self.input_size
            )));
        }
        Ok(())
    }

    fn fields(&self) -> [usize; 10] {
        [
            self.input_size,
            self.conv1.filters,
            self.conv1.kernel,
            self.conv1.stride,
            self.conv2.filters,
            self.conv2.kernel,
            self.conv2.stride,
            self.fc,
            self.lstm,
            self.n_actions,
        ]
    }

    fn from_fields(f: [usize; 10]) -> Self {
        Architecture {
            input_size: f[0],
            conv1: ConvSpec { filters: f[1], kernel: f[2], stride: f[3] },
            conv2: ConvSpec { filters: f[4], kernel: f[5], stride: f[6] },
            fc: f[7],
            lstm: f[8],
            n_actions: f[9],
        }
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub conv1_w: Range<usize>,
    pub conv1_b: Range<usize>,
    pub conv2_w: Range<usize>,
    pub conv2_b: Range<usize>,
    pub fc_w: Range<usize>,
    pub fc_b: Range<usize>,
    /// Gate order i, f, g, o; rows are gate units, columns the LSTM input.
    pub lstm_wx: Range<usize>,
    pub lstm_wh: Range<usize>,
    pub lstm_b: Range<usize>,
    pub policy_w: Range<usize>,
    pub policy_b: Range<usize>,
    pub value_w: Range<usize>,
    pub value_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(a: &Architecture) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (k1, k2) = (a.conv1.kernel, a.conv2.kernel);
        let gates = 4 * a.lstm;
        let conv1_w = take(a.conv1.filters * k1 * k1);
        let conv1_b = take(a.conv1.filters);
        let conv2_w = take(a.conv2.filters * a.conv1.filters * k2 * k2);
        let conv2_b = take(a.conv2.filters);
        let fc_w = take(a.fc * a.flat_size());
        let fc_b = take(a.fc);
        let lstm_wx = take(gates * a.lstm_input());
        let lstm_wh = take(gates * a.lstm);
        let lstm_b = take(gates);
        let policy_w = take(a.n_actions * a.lstm);
        let policy_b = take(a.n_actions);
        let value_w = take(a.lstm);
        let value_b = take(1);
        Layout {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            fc_w,
            fc_b,
            lstm_wx,
            lstm_wh,
            lstm_b,
            policy_w,
            policy_b,
            value_w,
            value_b,
            total: at,
        }
    }

    /// Weight matrices and kernels (the L2-penalised part), excluding biases.
    pub fn weight_ranges(&self) -> [Range<usize>; 7] {
        [
            self.conv1_w.clone(),
            self.conv2_w.clone(),
            self.fc_w.clone(),
            self.lstm_wx.clone(),
            self.lstm_wh.clone(),
            self.policy_w.clone(),
            self.value_w.clone(),
        ]
    }

    /// Everything before the heads, shared by policy and value.
    pub fn shared(&self) -> Range<usize> {
        0..self.policy_w.start
    }

    pub fn policy_head(&self) -> Range<usize> {
        self.policy_w.start..self.policy_b.end
    }

    pub fn value_head(&self) -> Range<usize> {
        self.value_w.start..self.value_b.end
    }
}

/// All network weights in one flat `f64` vector.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    layout: Layout,
    pub data: Vec<f64>,
    /// Frozen parameters must not be updated (used for the shaping value network).
    pub frozen: bool,
}

impl NetworkParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        Ok(NetworkParams {
            arch,
            data: vec![0.0; layout.total],
            layout,
            frozen: false,
        })
    }

    /// Uniform fan-in initialisation, zero biases, forget-gate bias 1.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let a = arch;
        let l = p.layout.clone();
        let fan_ins = [
            (l.conv1_w.clone(), a.conv1.kernel * a.conv1.kernel),
            (l.conv2_w.clone(), a.conv1.filters * a.conv2.kernel * a.conv2.kernel),
            (l.fc_w.clone(), a.flat_size()),
            (l.lstm_wx.clone(), a.lstm_input() + a.lstm),
            (l.lstm_wh.clone(), a.lstm_input() + a.lstm),
            (l.policy_w.clone(), a.lstm),
            (l.value_w.clone(), a.lstm),
        ];
        for (range, fan_in) in fan_ins {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in &mut p.data[range] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        let h = a.lstm;
        for b in &mut p.data[l.lstm_b.start + h..l.lstm_b.start + 2 * h] {
            *b = 1.0;
        }
        Ok(p)
    }

    pub fn from_vec(arch: Architecture, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if data.len() != p.data.len() {
            return Err(Error::Shape {
                what: "parameter vector",
                expected: p.data.len().to_string(),
                actual: data.len().to_string(),
            });
        }
        p.data = data;
        Ok(p)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(dir) = path.as_ref().parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        write_u32(&mut w, CKPT_FORMAT_VERSION)?;
        for f in self.arch.fields() {
            write_u64(&mut w, f as u64)?;
        }
        write_u8(&mut w, self.frozen as u8)?;
        write_u64(&mut w, self.data.len() as u64)?;
        for &v in &self.data {
            write_f64(&mut w, v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, CKPT_MAGIC)?;
        let version = read_u32(&mut r)?;
        if version != CKPT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut fields = [0usize; 10];
        for f in &mut fields {
            *f = read_u64(&mut r)? as usize;
        }
        let arch = Architecture::from_fields(fields);
        let frozen = read_u8(&mut r)? != 0;
        let n = read_u64(&mut r)? as usize;
        let mut p = Self::zeros(arch)?;
        if n != p.data.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {n} values, architecture needs {}",
                p.data.len()
            )));
        }
        for v in &mut p.data {
            *v = read_f64(&mut r)?;
        }
        p.frozen = frozen;
        Ok(p)
    }
}

pub const CKPT_FORMAT_VERSION: u32 = 1;
const CKPT_MAGIC: &[u8] = b"BIMNET\0\0";

/// λ·Σw² over weights only, with gradient 2λw added into `grad`.
pub fn l2_penalty(params: &NetworkParams, lambda: f64, grad: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    for r in params.layout.weight_ranges() {
        total += params.data[r].iter().map(|w| w * w).sum::<f64>();
    }
    if let Some(g) = grad {
        for r in params.layout.weight_ranges() {
            for (gi, &w) in g[r.clone()].iter_mut().zip(&params.data[r]) {
                *gi += 2.0 * lambda * w;
            }
        }
    }
    lambda * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_dims() {
        let a = Architecture::default();
        assert_eq!(a.conv1_out(), 15);
        assert_eq!(a.conv2_out(), 6);
        assert_eq!(a.flat_size(), 1152);
        let l = Layout::new(&a);
        assert_eq!(l.total, l.value_b.end);
        assert_eq!(l.lstm_wx.len(), 4 * 128 * (256 + 6));
    }

    #[test]
    fn init_is_seeded_and_finite() {
        let a = Architecture::tiny();
        let p = NetworkParams::init(a, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let q = NetworkParams::init(a, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(p, q);
        assert!(p.is_finite());
        let l = p.layout();
        assert!(p.data[l.fc_b.clone()].iter().all(|&b| b == 0.0));
        assert!(p.data[l.lstm_b.start + a.lstm..l.lstm_b.start + 2 * a.lstm]
            .iter()
            .all(|&b| b == 1.0));
    }

    #[test]
    fn bad_architecture_rejected() {
        let mut a = Architecture::tiny();
        a.input_size = 3;
        assert!(NetworkParams::zeros(a).is_err());
    }

    #[test]
    fn l2_examples() {
        let a = Architecture::tiny();
        let mut p = NetworkParams::zeros(a).unwrap();
        let mut g = p.zeros_like();
        assert_eq!(l2_penalty(&p, 1.0, Some(&mut g)), 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let idx = p.layout().fc_w.start;
        p.data[idx] = 3.0;
        // biases are not penalised
        let b = p.layout().fc_b.start;
        p.data[b] = 10.0;
        let mut g = p.zeros_like();
        assert_eq!(l2_penalty(&p, 1.0, Some(&mut g)), 9.0);
        assert_eq!(g[idx], 6.0);
        assert_eq!(g[b], 0.0);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.net");
        let mut p = NetworkParams::init(Architecture::tiny(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        p.frozen = true;
        p.save(&path).unwrap();
        let q = NetworkParams::load(&path).unwrap();
        assert_eq!(q.arch(), p.arch());
        assert!(q.frozen);
        assert!(p.data.iter().zip(&q.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_checkpoint_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.net");
        NetworkParams::zeros(Architecture::tiny()).unwrap().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(NetworkParams::load(&path).is_err());
    }
}
