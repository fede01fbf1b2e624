//! Smooth decoders from latent space to per-position residue distributions.
//!
//! Three toy families stand in for trained generative decoders: an affine map
//! followed by a row softmax, a round sphere embedded in the ambient space,
//! and a two-layer tanh network. All are deterministic and `C^∞` in `z`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::peptide::{Peptide, ALPHABET_SIZE, PAD};
use crate::rng;

/// Log-probabilities are clamped below at `ln(1e-12)`.
pub const LOG_FLOOR: f64 = -27.631_021_115_928_547;
/// Default forward-difference step for decoder Jacobians.
pub const DEFAULT_EPS_FD: f64 = 0.05;
/// Logit margin used by the least-squares encoder of affine decoders.
pub const ENCODE_MARGIN: f64 = 6.0;
const ENCODE_ITERS: usize = 400;
const ENCODE_LR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    /// Row-softmax probabilities; rows sum to one.
    Probability,
    /// Raw outputs; no normalization.
    Logit,
}

/// An `L × A` decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrid {
    pub values: DMatrix<f64>,
    pub mode: OutputMode,
}

impl DecoderGrid {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Row-major flattening, index `l * A + a`.
    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_column_slice(self.values.transpose().as_slice())
    }

    pub fn from_flat(flat: &DVector<f64>, length: usize, mode: OutputMode) -> Self {
        let a = flat.len() / length;
        DecoderGrid {
            values: DMatrix::from_row_slice(length, a, flat.as_slice()),
            mode,
        }
    }

    /// Per-position argmax (lowest index wins ties), truncated at the first pad.
    pub fn argmax_peptide(&self) -> Peptide {
        let positions: Vec<u8> = (0..self.values.nrows())
            .map(|l| {
                let row = self.values.row(l);
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best as u8
            })
            .collect();
        Peptide::from_positions(&positions)
    }
}

/// One-hot grid of a peptide, flattened row-major; pad fills positions past the end.
pub fn onehot_flat(p: &Peptide, length: usize) -> DVector<f64> {
    let mut v = DVector::zeros(length * ALPHABET_SIZE);
    for (l, a) in p.padded(length).into_iter().enumerate() {
        v[l * ALPHABET_SIZE + a as usize] = 1.0;
    }
    v
}

/// Norm-dependent pad logit: position `l` gains `gain * (Σ_{i∈coords} z_i² − thresholds[l])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadGrowth {
    pub coords: Vec<usize>,
    pub gain: f64,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `softmax_rows(W z + b)` in probability mode, `W z + b` in logit mode.
    FlatLinear { weight: DMatrix<f64>, bias: DVector<f64> },
    /// Round 2-sphere in latitude/longitude coordinates `z = (λ, φ)`, embedded in
    /// the first three ambient coordinates around `offset`.
    Sphere { radius: f64, offset: DVector<f64> },
    /// `softmax_rows(W2 tanh(W1 z + b1) + b2 + pad growth)`.
    ToyMlp {
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
        pad_growth: Option<PadGrowth>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    pub latent_dim: usize,
    pub length: usize,
    pub alphabet: usize,
    pub seed: u64,
    pub output: OutputMode,
    pub kind: ModelKind,
}

struct Forward {
    pre: DVector<f64>,
    hidden: Option<DVector<f64>>,
}

/// A decoder evaluated in log space at one latent point.
pub struct Linearized {
    pub x: DVector<f64>,
    z: DVector<f64>,
    fwd: Forward,
    /// Unclamped log-probabilities and probabilities, for probability decoders.
    log_probs: Option<(DVector<f64>, DVector<f64>)>,
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

impl DecoderModel {
    pub fn flat_linear(weight: DMatrix<f64>, bias: DVector<f64>, length: usize, output: OutputMode) -> Result<Self> {
        let ambient = weight.nrows();
        if ambient != length * ALPHABET_SIZE || bias.len() != ambient {
            return Err(GeoError::MalformedModel(format!(
                "flat-linear weight is {}x{}, bias {}, expected {} rows",
                weight.nrows(),
                weight.ncols(),
                bias.len(),
                length * ALPHABET_SIZE
            )));
        }
        Ok(DecoderModel {
            latent_dim: weight.ncols(),
            length,
            alphabet: ALPHABET_SIZE,
            seed: 0,
            output,
            kind: ModelKind::FlatLinear { weight, bias },
        })
    }

    /// Gaussian affine decoder with entries `N(0, scale²)`.
    pub fn random_flat_linear(seed: u64, latent_dim: usize, length: usize, scale: f64, output: OutputMode) -> Self {
        let mut r = rng::seeded(seed);
        let ambient = length * ALPHABET_SIZE;
        let weight = gaussian_matrix(&mut r, ambient, latent_dim, scale);
        let bias = gaussian_vector(&mut r, ambient, scale);
        let mut m = Self::flat_linear(weight, bias, length, output).expect("consistent shapes");
        m.seed = seed;
        m
    }

    pub fn sphere(radius: f64, length: usize) -> Self {
        DecoderModel {
            latent_dim: 2,
            length,
            alphabet: ALPHABET_SIZE,
            seed: 0,
            output: OutputMode::Logit,
            kind: ModelKind::Sphere {
                radius,
                offset: DVector::zeros(length * ALPHABET_SIZE),
            },
        }
    }

    pub fn toy_mlp(
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
        length: usize,
        pad_growth: Option<PadGrowth>,
    ) -> Result<Self> {
        let ambient = length * ALPHABET_SIZE;
        let shapes_ok = w1.nrows() == b1.len()
            && w2.ncols() == w1.nrows()
            && w2.nrows() == ambient
            && b2.len() == ambient;
        if !shapes_ok {
            return Err(GeoError::MalformedModel("toy-mlp layer shapes are inconsistent".into()));
        }
        if let Some(pg) = &pad_growth {
            if pg.thresholds.len() != length || pg.coords.iter().any(|&c| c >= w1.ncols()) {
                return Err(GeoError::MalformedModel("pad growth does not match model dims".into()));
            }
        }
        Ok(DecoderModel {
            latent_dim: w1.ncols(),
            length,
            alphabet: ALPHABET_SIZE,
            seed: 0,
            output: OutputMode::Probability,
            kind: ModelKind::ToyMlp { w1, b1, w2, b2, pad_growth },
        })
    }

    /// Dense tanh network with Gaussian weights; `scale` sets the first-layer gain.
    pub fn random_toy_mlp(seed: u64, latent_dim: usize, hidden: usize, length: usize, scale: f64) -> Self {
        let mut r = rng::seeded(seed);
        let ambient = length * ALPHABET_SIZE;
        let w1 = gaussian_matrix(&mut r, hidden, latent_dim, scale / (latent_dim as f64).sqrt());
        let b1 = gaussian_vector(&mut r, hidden, 0.1);
        let w2 = gaussian_matrix(&mut r, ambient, hidden, 1.5 / (hidden as f64).sqrt());
        let b2 = gaussian_vector(&mut r, ambient, 0.5);
        let mut m = Self::toy_mlp(w1, b1, w2, b2, length, None).expect("consistent shapes");
        m.seed = seed;
        m
    }

    /// Toy network whose pad probability grows with `‖z‖`.
    ///
    /// Each position reads its own pair of latent coordinates through two tanh
    /// units, so a position saturated at pad stops contributing Jacobian rank.
    /// Latent coordinates beyond `2 * length` are never read (collapsed units).
    /// Pad thresholds decrease along the sequence, so larger norms decode to
    /// shorter peptides.
    pub fn pad_growing_mlp(seed: u64, latent_dim: usize, length: usize) -> Result<Self> {
        if latent_dim < 2 * length {
            return Err(GeoError::invalid("pad-growing decoder needs latent_dim >= 2 * length"));
        }
        let mut r = rng::seeded(seed);
        let hidden = 2 * length;
        let ambient = length * ALPHABET_SIZE;
        let mut w1 = DMatrix::zeros(hidden, latent_dim);
        let mut w2 = DMatrix::zeros(ambient, hidden);
        for l in 0..length {
            for u in 0..2 {
                let h = 2 * l + u;
                for c in 0..2 {
                    w1[(h, 2 * l + c)] = r.sample::<f64, _>(StandardNormal);
                }
                for a in 0..PAD as usize {
                    w2[(l * ALPHABET_SIZE + a, h)] = 2.0 * r.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let b1 = gaussian_vector(&mut r, hidden, 0.2);
        let mut b2 = gaussian_vector(&mut r, ambient, 0.3);
        for l in 0..length {
            b2[l * ALPHABET_SIZE + PAD as usize] = 0.0;
        }
        let active = 2 * length;
        let expected = active as f64;
        // Thresholds spread around the expected squared norm of the read coordinates.
        let thresholds = (0..length)
            .map(|l| {
                let frac = (l as f64 + 0.5) / length as f64;
                expected * (1.7 - 1.65 * frac)
            })
            .collect();
        let pad_growth = PadGrowth {
            coords: (0..active).collect(),
            gain: 6.0,
            thresholds,
        };
        let mut m = Self::toy_mlp(w1, b1, w2, b2, length, Some(pad_growth))?;
        m.seed = seed;
        Ok(m)
    }

    /// A decoder that ignores `z`.
    pub fn constant(latent_dim: usize, length: usize) -> Self {
        let ambient = length * ALPHABET_SIZE;
        Self::flat_linear(DMatrix::zeros(ambient, latent_dim), DVector::zeros(ambient), length, OutputMode::Probability)
            .expect("consistent shapes")
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::FlatLinear { .. } => "flat-linear",
            ModelKind::Sphere { .. } => "sphere",
            ModelKind::ToyMlp { .. } => "toy-mlp",
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.length * self.alphabet
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.latent_dim {
            return Err(GeoError::DimensionMismatch {
                expected: self.latent_dim,
                actual: z.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, z: &DVector<f64>) -> Forward {
        match &self.kind {
            ModelKind::FlatLinear { weight, bias } => Forward {
                pre: weight * z + bias,
                hidden: None,
            },
            ModelKind::Sphere { radius, offset } => {
                let (lat, lon) = (z[0], z[1]);
                let mut pre = offset.clone();
                pre[0] += radius * lat.cos() * lon.cos();
                pre[1] += radius * lat.cos() * lon.sin();
                pre[2] += radius * lat.sin();
                Forward { pre, hidden: None }
            }
            ModelKind::ToyMlp { w1, b1, w2, b2, pad_growth } => {
                let hidden = (w1 * z + b1).map(f64::tanh);
                let mut pre = w2 * &hidden + b2;
                if let Some(pg) = pad_growth {
                    let sq: f64 = pg.coords.iter().map(|&c| z[c] * z[c]).sum();
                    for (l, t) in pg.thresholds.iter().enumerate() {
                        pre[l * self.alphabet + PAD as usize] += pg.gain * (sq - t);
                    }
                }
                Forward {
                    pre,
                    hidden: Some(hidden),
                }
            }
        }
    }

    /// Jacobian of the pre-softmax output with respect to `z`.
    fn pre_jacobian(&self, z: &DVector<f64>, fwd: &Forward) -> DMatrix<f64> {
        match &self.kind {
            ModelKind::FlatLinear { weight, .. } => weight.clone(),
            ModelKind::Sphere { radius, .. } => {
                let (lat, lon) = (z[0], z[1]);
                let mut j = DMatrix::zeros(self.ambient_dim(), 2);
                j[(0, 0)] = -radius * lat.sin() * lon.cos();
                j[(1, 0)] = -radius * lat.sin() * lon.sin();
                j[(2, 0)] = radius * lat.cos();
                j[(0, 1)] = -radius * lat.cos() * lon.sin();
                j[(1, 1)] = radius * lat.cos() * lon.cos();
                j
            }
            ModelKind::ToyMlp { w1, w2, pad_growth, .. } => {
                let h = fwd.hidden.as_ref().expect("mlp forward keeps hidden state");
                let mut scaled = w1.clone();
                for (i, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= 1.0 - h[i] * h[i];
                }
                let mut j = w2 * scaled;
                if let Some(pg) = pad_growth {
                    for l in 0..self.length {
                        let r = l * self.alphabet + PAD as usize;
                        for &c in &pg.coords {
                            j[(r, c)] += 2.0 * pg.gain * z[c];
                        }
                    }
                }
                j
            }
        }
    }

    /// Vector-Jacobian product through the pre-softmax map: returns `Jᵀ g`.
    fn pre_vjp(&self, z: &DVector<f64>, fwd: &Forward, g: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ModelKind::FlatLinear { weight, .. } => weight.tr_mul(g),
            ModelKind::Sphere { .. } => self.pre_jacobian(z, fwd).tr_mul(g),
            ModelKind::ToyMlp { w1, w2, pad_growth, .. } => {
                let h = fwd.hidden.as_ref().expect("mlp forward keeps hidden state");
                let mut gh = w2.tr_mul(g);
                for i in 0..gh.len() {
                    gh[i] *= 1.0 - h[i] * h[i];
                }
                let mut gz = w1.tr_mul(&gh);
                if let Some(pg) = pad_growth {
                    let gpad: f64 = (0..self.length).map(|l| g[l * self.alphabet + PAD as usize]).sum();
                    for &c in &pg.coords {
                        gz[c] += 2.0 * pg.gain * z[c] * gpad;
                    }
                }
                gz
            }
        }
    }

    fn softmax_rows(&self, pre: &DVector<f64>) -> DVector<f64> {
        let a = self.alphabet;
        let mut out = DVector::zeros(pre.len());
        for l in 0..self.length {
            let row = &pre.as_slice()[l * a..(l + 1) * a];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (k, &x) in row.iter().enumerate() {
                let e = (x - m).exp();
                out[l * a + k] = e;
                s += e;
            }
            for k in 0..a {
                out[l * a + k] /= s;
            }
        }
        out
    }

    fn log_softmax_and_probs(&self, pre: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let a = self.alphabet;
        let mut lp = DVector::zeros(pre.len());
        let mut probs = DVector::zeros(pre.len());
        for l in 0..self.length {
            let row = &pre.as_slice()[l * a..(l + 1) * a];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (k, &x) in row.iter().enumerate() {
                let e = (x - m).exp();
                probs[l * a + k] = e;
                s += e;
            }
            let lse = m + s.ln();
            for (k, &x) in row.iter().enumerate() {
                lp[l * a + k] = x - lse;
                probs[l * a + k] /= s;
            }
        }
        (lp, probs)
    }

    fn output_of(&self, fwd: &Forward) -> DVector<f64> {
        match self.output {
            OutputMode::Probability => self.softmax_rows(&fwd.pre),
            OutputMode::Logit => fwd.pre.clone(),
        }
    }

    pub fn decode(&self, z: &DVector<f64>) -> Result<DecoderGrid> {
        Ok(DecoderGrid::from_flat(&self.decode_flat(z)?, self.length, self.output))
    }

    pub fn decode_flat(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        let out = self.output_of(&self.forward(z));
        if out.iter().all(|x| x.is_finite()) {
            Ok(out)
        } else {
            Err(GeoError::NonFinite("decoder output"))
        }
    }

    pub fn argmax_peptide(&self, z: &DVector<f64>) -> Result<Peptide> {
        Ok(self.decode(z)?.argmax_peptide())
    }

    /// Analytic Jacobian of `decode_flat`, `(L·A) × d`.
    pub fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(z)?;
        let fwd = self.forward(z);
        let jpre = self.pre_jacobian(z, &fwd);
        match self.output {
            OutputMode::Logit => Ok(jpre),
            OutputMode::Probability => {
                let p = self.softmax_rows(&fwd.pre);
                let a = self.alphabet;
                let mut j = jpre.clone();
                for l in 0..self.length {
                    let block = jpre.rows(l * a, a);
                    let pl = p.rows(l * a, a);
                    let mean = pl.tr_mul(&block);
                    for k in 0..a {
                        let row = (block.row(k) - mean.clone()) * pl[k];
                        j.row_mut(l * a + k).copy_from(&row);
                    }
                }
                Ok(j)
            }
        }
    }

    /// The ambient representation used by path energies: clamped log-probabilities
    /// for probability decoders, raw outputs for logit decoders.
    pub fn log_space(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.linearize(z)?.x)
    }

    /// `log_space(z)` together with the state needed for later vector-Jacobian products.
    pub fn linearize(&self, z: &DVector<f64>) -> Result<Linearized> {
        self.check_dim(z)?;
        let fwd = self.forward(z);
        let (x, log_probs) = match self.output {
            OutputMode::Logit => (fwd.pre.clone(), None),
            OutputMode::Probability => {
                let (lp, probs) = self.log_softmax_and_probs(&fwd.pre);
                (lp.map(|v| v.max(LOG_FLOOR)), Some((lp, probs)))
            }
        };
        if x.iter().all(|v| v.is_finite()) {
            Ok(Linearized {
                x,
                z: z.clone(),
                fwd,
                log_probs,
            })
        } else {
            Err(GeoError::NonFinite("log-space decoder output"))
        }
    }

    /// Gradient of `gᵀ log_space(z)` with respect to `z`.
    pub fn log_space_vjp(&self, z: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.linearized_vjp(&self.linearize(z)?, g))
    }

    pub fn linearized_vjp(&self, lin: &Linearized, g: &DVector<f64>) -> DVector<f64> {
        let gpre = match &lin.log_probs {
            None => g.clone(),
            Some((lp, probs)) => {
                let a = self.alphabet;
                let mut gp = g.clone();
                for l in 0..self.length {
                    let mut total = 0.0;
                    for k in 0..a {
                        let i = l * a + k;
                        if lp[i] < LOG_FLOOR {
                            gp[i] = 0.0;
                        }
                        total += gp[i];
                    }
                    for k in 0..a {
                        let i = l * a + k;
                        gp[i] -= probs[i] * total;
                    }
                }
                gp
            }
        };
        self.pre_vjp(&lin.z, &lin.fwd, &gpre)
    }

    /// Maps a peptide to a latent code whose decoding approximates it.
    ///
    /// Affine decoders are inverted in closed form by least squares against a
    /// margin-scaled centred one-hot target. Other decoders minimise
    /// `‖decode_flat(z) − onehot(p)‖²` with a fixed Adam schedule from `z = 0` and
    /// return the lowest-loss iterate, preferring those that decode to `p`.
    pub fn encode(&self, p: &Peptide) -> Result<DVector<f64>> {
        p.check_length(self.length)?;
        let z = match &self.kind {
            ModelKind::FlatLinear { weight, bias } => {
                let target = encode_target(p, self.length);
                let rhs = target - bias;
                let svd = weight.clone().svd(true, true);
                svd.solve(&rhs, 1e-10).map_err(|_| GeoError::SvdFailure)?
            }
            _ => self.encode_by_descent(p)?,
        };
        if z.iter().all(|v| v.is_finite()) {
            Ok(z)
        } else {
            Err(GeoError::NonFinite("encoder"))
        }
    }

    fn encode_by_descent(&self, p: &Peptide) -> Result<DVector<f64>> {
        let target = onehot_flat(p, self.length);
        let d = self.latent_dim;
        let mut z = DVector::zeros(d);
        let mut m = DVector::zeros(d);
        let mut v = DVector::<f64>::zeros(d);
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        // Lowest-loss iterate, preferring iterates that decode back to `p`.
        let mut best: Option<(bool, f64, DVector<f64>)> = None;
        for t in 0..=ENCODE_ITERS {
            let out = self.decode_flat(&z)?;
            let resid = &out - &target;
            let loss = resid.norm_squared();
            let exact = DecoderGrid::from_flat(&out, self.length, self.output).argmax_peptide() == *p;
            let better = match &best {
                None => true,
                Some((e, l, _)) => (exact && !e) || (exact == *e && loss < *l),
            };
            if better {
                best = Some((exact, loss, z.clone()));
            }
            if t == ENCODE_ITERS {
                break;
            }
            let grad = self.jacobian(&z)?.tr_mul(&resid) * 2.0;
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(GeoError::NonFinite("encoder gradient"));
            }
            m = m * b1 + &grad * (1.0 - b1);
            v = v * b2 + grad.component_mul(&grad) * (1.0 - b2);
            let bc1 = 1.0 - f64::powi(b1, t as i32 + 1);
            let bc2 = 1.0 - f64::powi(b2, t as i32 + 1);
            for i in 0..d {
                z[i] -= ENCODE_LR * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
        }
        Ok(best.expect("at least one iterate").2)
    }
}

/// Centred one-hot logits scaled by [`ENCODE_MARGIN`].
pub fn encode_target(p: &Peptide, length: usize) -> DVector<f64> {
    let base = -ENCODE_MARGIN / ALPHABET_SIZE as f64;
    onehot_flat(p, length).map(|x| base + ENCODE_MARGIN * x)
}

/// Forward-difference Jacobian of `decode_flat`; exactly `d + 1` decoder calls.
pub fn jacobian_fd(model: &DecoderModel, z: &DVector<f64>, eps_fd: f64) -> Result<DMatrix<f64>> {
    if !(eps_fd > 0.0) {
        return Err(GeoError::invalid("eps_fd must be positive"));
    }
    let base = model.decode_flat(z)?;
    let mut j = DMatrix::zeros(base.len(), z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        zp[i] += eps_fd;
        let col = (model.decode_flat(&zp)? - &base) / eps_fd;
        j.set_column(i, &col);
        zp[i] = z[i];
    }
    Ok(j)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl LayerFile {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        LayerFile {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn from_vector(v: &DVector<f64>) -> Self {
        LayerFile {
            rows: v.len(),
            cols: 1,
            data: v.as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(GeoError::MalformedModel(format!(
                "layer declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    fn to_vector(&self) -> Result<DVector<f64>> {
        let m = self.to_matrix()?;
        if m.ncols() != 1 {
            return Err(GeoError::MalformedModel("bias layer must have one column".into()));
        }
        Ok(m.column(0).into_owned())
    }
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: String,
    pub d: usize,
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "A")]
    pub alphabet: usize,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: OutputMode,
    pub layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_growth: Option<PadGrowth>,
}

fn default_output() -> OutputMode {
    OutputMode::Probability
}

impl From<&DecoderModel> for ModelFile {
    fn from(m: &DecoderModel) -> Self {
        let (layers, radius, pad_growth) = match &m.kind {
            ModelKind::FlatLinear { weight, bias } => {
                (vec![LayerFile::from_matrix(weight), LayerFile::from_vector(bias)], None, None)
            }
            ModelKind::Sphere { radius, offset } => (vec![LayerFile::from_vector(offset)], Some(*radius), None),
            ModelKind::ToyMlp { w1, b1, w2, b2, pad_growth } => (
                vec![
                    LayerFile::from_matrix(w1),
                    LayerFile::from_vector(b1),
                    LayerFile::from_matrix(w2),
                    LayerFile::from_vector(b2),
                ],
                None,
                pad_growth.clone(),
            ),
        };
        ModelFile {
            kind: m.kind_name().to_string(),
            d: m.latent_dim,
            length: m.length,
            alphabet: m.alphabet,
            seed: m.seed,
            output: m.output,
            layers,
            radius,
            pad_growth,
        }
    }
}

impl TryFrom<ModelFile> for DecoderModel {
    type Error = GeoError;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.alphabet != ALPHABET_SIZE {
            return Err(GeoError::MalformedModel(format!("alphabet size {} != {}", f.alphabet, ALPHABET_SIZE)));
        }
        let layer = |i: usize| {
            f.layers
                .get(i)
                .ok_or_else(|| GeoError::MalformedModel(format!("{} model is missing layer {i}", f.kind)))
        };
        let mut model = match f.kind.as_str() {
            "flat-linear" => {
                Self::flat_linear(layer(0)?.to_matrix()?, layer(1)?.to_vector()?, f.length, f.output)?
            }
            "sphere" => {
                let radius = f.radius.ok_or_else(|| GeoError::MalformedModel("sphere needs a radius".into()))?;
                let offset = layer(0)?.to_vector()?;
                if offset.len() != f.length * ALPHABET_SIZE || f.d != 2 {
                    return Err(GeoError::MalformedModel("sphere dims are inconsistent".into()));
                }
                DecoderModel {
                    latent_dim: 2,
                    length: f.length,
                    alphabet: ALPHABET_SIZE,
                    seed: 0,
                    output: OutputMode::Logit,
                    kind: ModelKind::Sphere { radius, offset },
                }
            }
            "toy-mlp" => Self::toy_mlp(
                layer(0)?.to_matrix()?,
                layer(1)?.to_vector()?,
                layer(2)?.to_matrix()?,
                layer(3)?.to_vector()?,
                f.length,
                f.pad_growth.clone(),
            )?,
            other => return Err(GeoError::MalformedModel(format!("unknown model kind {other:?}"))),
        };
        if model.latent_dim != f.d {
            return Err(GeoError::MalformedModel(format!("declared d = {} but layers imply {}", f.d, model.latent_dim)));
        }
        model.seed = f.seed;
        Ok(model)
    }
}

impl DecoderModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DecoderModel {
        DecoderModel::random_toy_mlp(42, 4, 8, 3, 1.0)
    }

    #[test]
    fn identity_flat_linear_at_origin_is_uniform() {
        let l = 2;
        let n = l * ALPHABET_SIZE;
        let m = DecoderModel::flat_linear(DMatrix::identity(n, n), DVector::zeros(n), l, OutputMode::Probability).unwrap();
        let grid = m.decode(&DVector::zeros(n)).unwrap();
        for v in grid.values.iter() {
            assert!((v - 1.0 / ALPHABET_SIZE as f64).abs() < 1e-15);
        }
        let flat = m.decode_flat(&DVector::zeros(n)).unwrap();
        assert!(flat.iter().all(|v| (v - 1.0 / 21.0).abs() < 1e-15));
    }

    #[test]
    fn decode_is_deterministic_and_normalized() {
        let m = toy();
        let mut z = DVector::zeros(4);
        z[0] = 1.0;
        let a = m.decode(&z).unwrap();
        let b = m.decode(&z).unwrap();
        assert_eq!(a, b);
        for row in a.values.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(a.flatten(), m.decode_flat(&z).unwrap());
        let back = DecoderGrid::from_flat(&a.flatten(), 3, OutputMode::Probability);
        assert_eq!(back, a);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = toy();
        assert!(matches!(
            m.decode(&DVector::zeros(3)),
            Err(GeoError::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn sphere_origin_lies_on_sphere() {
        let m = DecoderModel::sphere(1.7, 2);
        let x = m.decode_flat(&DVector::zeros(2)).unwrap();
        let ModelKind::Sphere { offset, radius } = &m.kind else { unreachable!() };
        assert!(((x - offset).norm() - radius).abs() < 1e-12);
    }

    fn grid_from_rows(rows: &[usize], length: usize) -> DecoderGrid {
        let mut v = DMatrix::zeros(length, ALPHABET_SIZE);
        for (l, &a) in rows.iter().enumerate() {
            v[(l, a)] = 1.0;
        }
        DecoderGrid {
            values: v,
            mode: OutputMode::Probability,
        }
    }

    #[test]
    fn argmax_reads_gtp_and_truncates() {
        // G=5, T=16, P=12
        let g = grid_from_rows(&[5, 16, 12, PAD as usize, 0], 5);
        assert_eq!(g.argmax_peptide().to_string(), "GTP");
        let g = grid_from_rows(&[PAD as usize, 3, 4], 3);
        assert!(g.argmax_peptide().is_empty());
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        let g = DecoderGrid {
            values: DMatrix::from_element(4, ALPHABET_SIZE, 1.0 / 21.0),
            mode: OutputMode::Probability,
        };
        assert_eq!(g.argmax_peptide().to_string(), "AAAA");
    }

    #[test]
    fn constant_decoder_has_zero_fd_jacobian() {
        let m = DecoderModel::constant(3, 2);
        let j = jacobian_fd(&m, &DVector::from_vec(vec![0.3, -1.0, 2.0]), 0.05).unwrap();
        assert_eq!(j.amax(), 0.0);
    }

    #[test]
    fn analytic_jacobians_match_central_differences() {
        let models = [
            toy(),
            DecoderModel::random_flat_linear(3, 4, 2, 0.7, OutputMode::Probability),
            DecoderModel::pad_growing_mlp(5, 6, 3).unwrap(),
        ];
        for m in &models {
            let z = DVector::from_fn(m.latent_dim, |i, _| 0.3 * i as f64 - 0.4);
            let j = m.jacobian(&z).unwrap();
            let h = 1e-6;
            for i in 0..m.latent_dim {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let col = (m.decode_flat(&zp).unwrap() - m.decode_flat(&zm).unwrap()) / (2.0 * h);
                assert!((col - j.column(i)).amax() < 1e-7, "{}", m.kind_name());
            }
        }
    }

    #[test]
    fn log_space_vjp_matches_central_differences() {
        let m = toy();
        let z = DVector::from_vec(vec![0.2, -0.5, 0.9, 0.1]);
        let g = DVector::from_fn(m.ambient_dim(), |i, _| ((i * 7) % 5) as f64 - 2.0);
        let grad = m.log_space_vjp(&z, &g).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let fd = (g.dot(&m.log_space(&zp).unwrap()) - g.dot(&m.log_space(&zm).unwrap())) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn json_round_trip_preserves_models() {
        for m in [
            toy(),
            DecoderModel::sphere(0.5, 2),
            DecoderModel::random_flat_linear(1, 3, 2, 1.0, OutputMode::Logit),
            DecoderModel::pad_growing_mlp(2, 8, 3).unwrap(),
        ] {
            let back = DecoderModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
        }
        assert!(DecoderModel::from_json(r#"{"kind":"cube","d":1,"L":1,"A":21,"seed":0,"layers":[]}"#).is_err());
    }

    #[test]
    fn encode_is_deterministic() {
        let m = toy();
        let p: Peptide = "GT".parse().unwrap();
        assert_eq!(m.encode(&p).unwrap(), m.encode(&p).unwrap());
        let too_long: Peptide = "GTPK".parse().unwrap();
        assert!(m.encode(&too_long).is_err());
    }
}
