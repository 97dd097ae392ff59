//! Layer stacks, the U-shaped SPD autoencoder, and their batched
//! forward/backward passes.

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ModelConfig, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::layers::spectral::{spectral_backward, symmetrize};
use crate::layers::{BiMapLayer, LogEigLayer, RbnCache, RbnLayer, ReEigLayer};
use crate::spd::{jacobi, EigenDecomposition, Mat};

pub type Logits = [f64; NUM_CLASSES];

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    BiMap(BiMapLayer),
    ReEig(ReEigLayer),
    Rbn(RbnLayer),
    LogEig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    BiMap,
    ReEig,
    Rbn,
    LogEig,
}

impl LayerKind {
    pub fn tag(self) -> u8 {
        match self {
            LayerKind::BiMap => 1,
            LayerKind::ReEig => 2,
            LayerKind::Rbn => 3,
            LayerKind::LogEig => 4,
        }
    }
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::BiMap(_) => LayerKind::BiMap,
            Layer::ReEig(_) => LayerKind::ReEig,
            Layer::Rbn(_) => LayerKind::Rbn,
            Layer::LogEig => LayerKind::LogEig,
        }
    }
}

/// How the optimizer treats a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Orthonormal-column weight updated by Riemannian SGD.
    Stiefel,
    /// Unconstrained parameter updated by Euclidean SGD.
    Euclidean,
}

enum Cache {
    BiMap(Vec<Mat>),
    ReEig(Vec<EigenDecomposition>),
    Rbn(RbnCache),
    LogEig(Vec<EigenDecomposition>),
}

#[derive(Default)]
pub(crate) struct SeqTape {
    caches: Vec<Cache>,
    /// Batch Karcher means of RBN layers, by layer index.
    batch_means: Vec<(usize, Mat)>,
}

fn seq_forward(layers: &[Layer], mut xs: Vec<Mat>, training: bool) -> Result<(Vec<Mat>, SeqTape)> {
    let mut tape = SeqTape::default();
    for (li, layer) in layers.iter().enumerate() {
        match layer {
            Layer::BiMap(l) => {
                let ys = xs.iter().map(|x| l.forward_mat(x)).collect::<Result<Vec<_>>>()?;
                tape.caches.push(Cache::BiMap(std::mem::replace(&mut xs, ys)));
            }
            Layer::ReEig(l) => {
                let mut eigs = Vec::with_capacity(xs.len());
                for x in xs.iter_mut() {
                    let (y, e) = l.forward_mat(x)?;
                    *x = y;
                    eigs.push(e);
                }
                tape.caches.push(Cache::ReEig(eigs));
            }
            Layer::Rbn(l) => {
                let (ys, cache, mean) = l.forward_mat(&xs, training)?;
                if let Some(m) = mean {
                    tape.batch_means.push((li, m));
                }
                xs = ys;
                tape.caches.push(Cache::Rbn(cache));
            }
            Layer::LogEig => {
                let mut eigs = Vec::with_capacity(xs.len());
                for x in xs.iter_mut() {
                    let (y, e) = LogEigLayer.forward_mat(x)?;
                    *x = y;
                    eigs.push(e);
                }
                tape.caches.push(Cache::LogEig(eigs));
            }
        }
    }
    Ok((xs, tape))
}

/// Returns input gradients and parameter gradients in forward parameter order.
fn seq_backward(layers: &[Layer], tape: &SeqTape, mut grads: Vec<Mat>) -> Result<(Vec<Mat>, Vec<Mat>)> {
    let mut params_rev = Vec::new();
    for (layer, cache) in layers.iter().zip(&tape.caches).rev() {
        match (layer, cache) {
            (Layer::BiMap(l), Cache::BiMap(inputs)) => {
                let mut gw = Mat::zeros(l.weight.nrows(), l.weight.ncols());
                for (g, x) in grads.iter_mut().zip(inputs) {
                    let (gx, gwi) = l.backward_mat(x, g)?;
                    gw += gwi;
                    *g = gx;
                }
                params_rev.push(gw);
            }
            (Layer::ReEig(l), Cache::ReEig(eigs)) => {
                for (g, e) in grads.iter_mut().zip(eigs) {
                    *g = l.backward_mat(e, g);
                }
            }
            (Layer::Rbn(l), Cache::Rbn(c)) => {
                let (gx, gb) = l.backward_mat(c, &grads)?;
                grads = gx;
                params_rev.push(gb);
            }
            (Layer::LogEig, Cache::LogEig(eigs)) => {
                for (g, e) in grads.iter_mut().zip(eigs) {
                    *g = LogEigLayer.backward_mat(e, g);
                }
            }
            _ => unreachable!("tape does not match layer stack"),
        }
    }
    params_rev.reverse();
    Ok((grads, params_rev))
}

fn seq_params_mut<'a>(layers: &'a mut [Layer], out: &mut Vec<(ParamKind, &'a mut Mat)>) {
    for layer in layers.iter_mut() {
        match layer {
            Layer::BiMap(l) => out.push((ParamKind::Stiefel, &mut l.weight)),
            Layer::Rbn(l) => out.push((ParamKind::Euclidean, &mut l.bias_log)),
            _ => {}
        }
    }
}

fn seq_update_running(layers: &mut [Layer], tape: &SeqTape) -> Result<()> {
    for (li, mean) in &tape.batch_means {
        if let Layer::Rbn(l) = &mut layers[*li] {
            l.update_running_mean(mean)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// tangent flattening and the linear head

/// Length of the upper-triangular flattening of an `n×n` symmetric matrix.
pub fn tangent_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Row-major upper triangle with off-diagonal entries scaled by √2, so the
/// Euclidean norm of the vector equals the Frobenius norm of the matrix.
pub fn tangent_flatten(s: &Mat) -> Vec<f64> {
    let n = s.nrows();
    let mut v = Vec::with_capacity(tangent_len(n));
    for i in 0..n {
        v.push(s[(i, i)]);
        for j in (i + 1)..n {
            v.push(std::f64::consts::SQRT_2 * s[(i, j)]);
        }
    }
    v
}

/// Symmetric-convention gradient of a function of `tangent_flatten(S)`.
pub fn tangent_unflatten_grad(g: &[f64], n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = g[k];
        k += 1;
        for j in (i + 1)..n {
            let v = g[k] / std::f64::consts::SQRT_2;
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    m
}

/// Affine map from the tangent vector to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `classes × features`.
    pub weight: Mat,
    /// `classes × 1`.
    pub bias: Mat,
}

impl Linear {
    pub fn random<R: Rng + ?Sized>(features: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (features as f64).sqrt();
        Linear {
            weight: Mat::from_fn(NUM_CLASSES, features, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
            bias: Mat::zeros(NUM_CLASSES, 1),
        }
    }

    pub fn features(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, v: &[f64]) -> Logits {
        let mut out = [0.0; NUM_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            let mut s = self.bias[(c, 0)];
            for (k, x) in v.iter().enumerate() {
                s += self.weight[(c, k)] * x;
            }
            *o = s;
        }
        out
    }

    /// Accumulates weight/bias gradients and returns the feature gradient.
    fn backward(&self, v: &[f64], g: &Logits, gw: &mut Mat, gb: &mut Mat) -> Vec<f64> {
        let mut gv = vec![0.0; v.len()];
        for c in 0..NUM_CLASSES {
            gb[(c, 0)] += g[c];
            for (k, x) in v.iter().enumerate() {
                gw[(c, k)] += g[c] * x;
                gv[k] += self.weight[(c, k)] * g[c];
            }
        }
        gv
    }
}

// ---------------------------------------------------------------------------
// plain stacks

/// BiMap/ReEig/RBN layers ending in LogEig, followed by a linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub classifier: Linear,
}

impl LayerStack {
    pub fn build<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let dims = config.spd_dims();
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            layers.push(Layer::BiMap(BiMapLayer::random(w[0], w[1], rng)?));
            if config.use_rbn {
                layers.push(Layer::Rbn(RbnLayer::new(w[1])));
            }
            layers.push(Layer::ReEig(ReEigLayer::new(config.reeig_epsilon)?));
        }
        layers.push(Layer::LogEig);
        let classifier = Linear::random(tangent_len(*dims.last().unwrap()), rng);
        let stack = LayerStack {
            input_dim: dims[0],
            layers,
            classifier,
        };
        stack.check()?;
        Ok(stack)
    }

    /// Adjacent dimensions agree and exactly one LogEig sits last.
    pub fn check(&self) -> Result<()> {
        let mut d = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::BiMap(l) => {
                    if l.d_in() != d {
                        return Err(Error::Config(format!("layer {i}: bimap expects {} but receives {d}", l.d_in())));
                    }
                    d = l.d_out();
                }
                Layer::Rbn(l) => {
                    if l.dim() != d {
                        return Err(Error::Config(format!("layer {i}: rbn dim {} but receives {d}", l.dim())));
                    }
                }
                Layer::LogEig if i + 1 != self.layers.len() => {
                    return Err(Error::Config("LogEig must be the last SPD layer".into()));
                }
                _ => {}
            }
        }
        if !matches!(self.layers.last(), Some(Layer::LogEig)) {
            return Err(Error::Config("stack must end in LogEig".into()));
        }
        if self.classifier.features() != tangent_len(d) {
            return Err(Error::Config(format!(
                "classifier takes {} features, tangent has {}",
                self.classifier.features(),
                tangent_len(d)
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::BiMap(b) => Some(b.d_out()),
                _ => None,
            })
            .last()
            .unwrap_or(self.input_dim)
    }
}

// ---------------------------------------------------------------------------
// U-SPDNet

/// U-shaped SPD autoencoder with a classification head on the bottleneck.
///
/// Encoder stages are BiMap(reduce)+ReEig pairs walking the TMD down to the
/// bottleneck; decoder stages are BiMap(expand)+ReEig pairs walking back up,
/// each expansion filling its complement with `decoder_fill · I`.
/// Every decoder output that has a matching encoder stage (other than the
/// input) is blended with it: `exp(w log up + (1 − w) log skip)`.
#[derive(Clone, Debug, PartialEq)]
pub struct USpdNet {
    pub dims: Vec<usize>,
    pub encoder: Vec<Vec<Layer>>,
    pub decoder: Vec<Vec<Layer>>,
    pub classifier: Linear,
    pub skip_combine_weight: f64,
    pub latent_dim: usize,
}

impl USpdNet {
    pub fn build<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let dims = config.spd_dims().to_vec();
        let mut encoder = Vec::new();
        for w in dims.windows(2) {
            encoder.push(vec![
                Layer::BiMap(BiMapLayer::random(w[0], w[1], rng)?),
                Layer::ReEig(ReEigLayer::new(config.reeig_epsilon)?),
            ]);
        }
        let mut decoder = Vec::new();
        for w in dims.windows(2).rev() {
            decoder.push(vec![
                Layer::BiMap(BiMapLayer::random(w[1], w[0], rng)?.with_complement(config.decoder_fill)),
                Layer::ReEig(ReEigLayer::new(config.reeig_epsilon)?),
            ]);
        }
        let classifier = Linear::random(tangent_len(*dims.last().unwrap()), rng);
        Ok(USpdNet {
            dims,
            encoder,
            decoder,
            classifier,
            skip_combine_weight: config.skip_combine_weight,
            latent_dim: config.latent_dim,
        })
    }

    pub fn stages(&self) -> usize {
        self.encoder.len()
    }

    fn latent_index(&self) -> usize {
        self.dims.iter().position(|&d| d == self.latent_dim).unwrap_or(self.dims.len() / 2)
    }

    fn skip_active(&self, dim_index: usize) -> bool {
        dim_index >= 1 && self.skip_combine_weight < 1.0
    }
}

struct BlendTape {
    up: EigenDecomposition,
    skip: EigenDecomposition,
    mixed: EigenDecomposition,
}

fn blend_forward(up: &Mat, skip: &Mat, w: f64) -> Result<(Mat, BlendTape)> {
    let eu = jacobi(up)?;
    let es = jacobi(skip)?;
    if eu.min_eigval() <= 0.0 || es.min_eigval() <= 0.0 {
        return Err(Error::Domain("skip blend of a non-SPD feature".into()));
    }
    let mixed = symmetrize(eu.map(f64::ln) * w + es.map(f64::ln) * (1.0 - w));
    let em = jacobi(&mixed)?;
    let out = em.map(f64::exp);
    Ok((
        out,
        BlendTape {
            up: eu,
            skip: es,
            mixed: em,
        },
    ))
}

fn blend_backward(tape: &BlendTape, grad: &Mat, w: f64) -> (Mat, Mat) {
    let gm = spectral_backward(&tape.mixed, grad, f64::exp, f64::exp);
    let gu = spectral_backward(&tape.up, &gm, f64::ln, |s| 1.0 / s) * w;
    let gs = spectral_backward(&tape.skip, &gm, f64::ln, |s| 1.0 / s) * (1.0 - w);
    (gu, gs)
}

// ---------------------------------------------------------------------------
// the model facade

#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    Stack(LayerStack),
    UNet(USpdNet),
}

/// A built model: its configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdModel {
    pub config: ModelConfig,
    pub network: Network,
}

/// Everything the backward pass needs from one batched forward pass.
pub struct Tape {
    inner: TapeInner,
}

enum TapeInner {
    Stack {
        seq: SeqTape,
        features: Vec<Vec<f64>>,
        out_dim: usize,
    },
    UNet {
        enc: Vec<SeqTape>,
        dec: Vec<SeqTape>,
        blends: Vec<Option<Vec<BlendTape>>>,
        head_eigs: Vec<EigenDecomposition>,
        features: Vec<Vec<f64>>,
    },
}

/// Batched forward results.
pub struct BatchOutput {
    pub logits: Vec<Logits>,
    /// U-SPDNet only.
    pub latent: Option<Vec<Mat>>,
    /// U-SPDNet only.
    pub reconstruction: Option<Vec<Mat>>,
    pub tape: Tape,
}

impl SpdModel {
    pub fn input_dim(&self) -> usize {
        match &self.network {
            Network::Stack(s) => s.input_dim,
            Network::UNet(u) => u.dims[0],
        }
    }

    pub fn is_unet(&self) -> bool {
        matches!(self.network, Network::UNet(_))
    }

    pub fn forward_batch(&self, xs: &[Mat], training: bool) -> Result<BatchOutput> {
        for x in xs {
            if x.nrows() != self.input_dim() || x.ncols() != self.input_dim() {
                return Err(Error::shape(
                    format!("{0}x{0} input", self.input_dim()),
                    format!("{}x{}", x.nrows(), x.ncols()),
                ));
            }
        }
        match &self.network {
            Network::Stack(s) => {
                let (tangents, seq) = seq_forward(&s.layers, xs.to_vec(), training)?;
                let features: Vec<Vec<f64>> = tangents.iter().map(tangent_flatten).collect();
                let logits = features.iter().map(|v| s.classifier.forward(v)).collect();
                Ok(BatchOutput {
                    logits,
                    latent: None,
                    reconstruction: None,
                    tape: Tape {
                        inner: TapeInner::Stack {
                            seq,
                            features,
                            out_dim: s.output_dim(),
                        },
                    },
                })
            }
            Network::UNet(u) => {
                let stages = u.stages();
                let mut feats: Vec<Vec<Mat>> = vec![xs.to_vec()];
                let mut enc_tapes = Vec::with_capacity(stages);
                for stage in &u.encoder {
                    let (y, t) = seq_forward(stage, feats.last().unwrap().clone(), training)?;
                    feats.push(y);
                    enc_tapes.push(t);
                }
                let mut head_eigs = Vec::with_capacity(xs.len());
                let mut features = Vec::with_capacity(xs.len());
                for b in &feats[stages] {
                    let (l, e) = LogEigLayer.forward_mat(b)?;
                    features.push(tangent_flatten(&l));
                    head_eigs.push(e);
                }
                let logits = features.iter().map(|v| u.classifier.forward(v)).collect();

                let mut up = feats[stages].clone();
                let mut dec_tapes = Vec::with_capacity(stages);
                let mut blends = Vec::with_capacity(stages);
                for (j, stage) in u.decoder.iter().enumerate() {
                    let (d, t) = seq_forward(stage, up, training)?;
                    dec_tapes.push(t);
                    let k = stages - j - 1;
                    if u.skip_active(k) {
                        let mut out = Vec::with_capacity(d.len());
                        let mut bt = Vec::with_capacity(d.len());
                        for (a, s) in d.iter().zip(&feats[k]) {
                            let (y, t) = blend_forward(a, s, u.skip_combine_weight)?;
                            out.push(y);
                            bt.push(t);
                        }
                        blends.push(Some(bt));
                        up = out;
                    } else {
                        blends.push(None);
                        up = d;
                    }
                }
                let latent = feats[u.latent_index()].clone();
                Ok(BatchOutput {
                    logits,
                    latent: Some(latent),
                    reconstruction: Some(up),
                    tape: Tape {
                        inner: TapeInner::UNet {
                            enc: enc_tapes,
                            dec: dec_tapes,
                            blends,
                            head_eigs,
                            features,
                        },
                    },
                })
            }
        }
    }

    /// Parameter gradients (forward parameter order) given the loss gradient
    /// with respect to each sample's logits and, for U-SPDNet, reconstruction.
    pub fn backward_batch(&self, tape: &Tape, grad_logits: &[Logits], grad_recon: Option<&[Mat]>) -> Result<Vec<Mat>> {
        match (&self.network, &tape.inner) {
            (Network::Stack(s), TapeInner::Stack { seq, features, out_dim }) => {
                let mut gw = Mat::zeros(s.classifier.weight.nrows(), s.classifier.weight.ncols());
                let mut gb = Mat::zeros(NUM_CLASSES, 1);
                let mut grads = Vec::with_capacity(features.len());
                for (v, g) in features.iter().zip(grad_logits) {
                    let gv = s.classifier.backward(v, g, &mut gw, &mut gb);
                    grads.push(tangent_unflatten_grad(&gv, *out_dim));
                }
                let (_, mut params) = seq_backward(&s.layers, seq, grads)?;
                params.push(gw);
                params.push(gb);
                Ok(params)
            }
            (
                Network::UNet(u),
                TapeInner::UNet {
                    enc,
                    dec,
                    blends,
                    head_eigs,
                    features,
                },
            ) => {
                let stages = u.stages();
                let n = grad_logits.len();
                let w = u.skip_combine_weight;
                let mut skip_grads: Vec<Option<Vec<Mat>>> = vec![None; stages + 1];

                let mut g_up: Vec<Mat> = match grad_recon {
                    Some(g) => g.to_vec(),
                    None => vec![Mat::zeros(u.dims[0], u.dims[0]); n],
                };
                let mut dec_params: Vec<Vec<Mat>> = vec![Vec::new(); stages];
                for j in (0..stages).rev() {
                    let k = stages - j - 1;
                    if let Some(bt) = &blends[j] {
                        let mut ga = Vec::with_capacity(n);
                        let mut gs = Vec::with_capacity(n);
                        for (t, g) in bt.iter().zip(&g_up) {
                            let (a, s) = blend_backward(t, g, w);
                            ga.push(a);
                            gs.push(s);
                        }
                        skip_grads[k] = Some(gs);
                        g_up = ga;
                    }
                    let (gin, p) = seq_backward(&u.decoder[j], &dec[j], g_up)?;
                    dec_params[j] = p;
                    g_up = gin;
                }

                let mut gw = Mat::zeros(u.classifier.weight.nrows(), u.classifier.weight.ncols());
                let mut gb = Mat::zeros(NUM_CLASSES, 1);
                let bdim = u.dims[stages];
                for i in 0..n {
                    let gv = u.classifier.backward(&features[i], &grad_logits[i], &mut gw, &mut gb);
                    let gl = tangent_unflatten_grad(&gv, bdim);
                    g_up[i] += LogEigLayer.backward_mat(&head_eigs[i], &gl);
                }

                let mut enc_params: Vec<Vec<Mat>> = vec![Vec::new(); stages];
                let mut g = g_up;
                for s in (0..stages).rev() {
                    let (mut gin, p) = seq_backward(&u.encoder[s], &enc[s], g)?;
                    enc_params[s] = p;
                    if let Some(extra) = &skip_grads[s] {
                        for (a, b) in gin.iter_mut().zip(extra) {
                            *a += b;
                        }
                    }
                    g = gin;
                }

                let mut params: Vec<Mat> = enc_params.into_iter().flatten().collect();
                params.extend(dec_params.into_iter().flatten());
                params.push(gw);
                params.push(gb);
                Ok(params)
            }
            _ => Err(Error::Config("tape was produced by a different network".into())),
        }
    }

    /// Trainable parameters in the canonical order shared by
    /// [`SpdModel::backward_batch`] and the checkpoint format.
    pub fn params_mut(&mut self) -> Vec<(ParamKind, &mut Mat)> {
        let mut out = Vec::new();
        match &mut self.network {
            Network::Stack(s) => {
                seq_params_mut(&mut s.layers, &mut out);
                out.push((ParamKind::Euclidean, &mut s.classifier.weight));
                out.push((ParamKind::Euclidean, &mut s.classifier.bias));
            }
            Network::UNet(u) => {
                for stage in u.encoder.iter_mut() {
                    seq_params_mut(stage, &mut out);
                }
                for stage in u.decoder.iter_mut() {
                    seq_params_mut(stage, &mut out);
                }
                out.push((ParamKind::Euclidean, &mut u.classifier.weight));
                out.push((ParamKind::Euclidean, &mut u.classifier.bias));
            }
        }
        out
    }

    /// Folds batch statistics from a training-mode forward into running means.
    pub fn update_running_stats(&mut self, tape: &Tape) -> Result<()> {
        match (&mut self.network, &tape.inner) {
            (Network::Stack(s), TapeInner::Stack { seq, .. }) => seq_update_running(&mut s.layers, seq),
            (Network::UNet(u), TapeInner::UNet { enc, dec, .. }) => {
                for (stage, t) in u.encoder.iter_mut().zip(enc) {
                    seq_update_running(stage, t)?;
                }
                for (stage, t) in u.decoder.iter_mut().zip(dec) {
                    seq_update_running(stage, t)?;
                }
                Ok(())
            }
            _ => Err(Error::Config("tape was produced by a different network".into())),
        }
    }

    /// Layer kinds in execution order (U-SPDNet: encoder, head LogEig,
    /// decoder).
    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        match &self.network {
            Network::Stack(s) => s.layers.iter().map(Layer::kind).collect(),
            Network::UNet(u) => {
                let mut k: Vec<LayerKind> = u.encoder.iter().flatten().map(Layer::kind).collect();
                k.push(LayerKind::LogEig);
                k.extend(u.decoder.iter().flatten().map(Layer::kind));
                k
            }
        }
    }

    /// RBN running means, in layer order.
    pub fn running_means_mut(&mut self) -> Vec<&mut Mat> {
        let layers: Vec<&mut Layer> = match &mut self.network {
            Network::Stack(s) => s.layers.iter_mut().collect(),
            Network::UNet(u) => u.encoder.iter_mut().chain(u.decoder.iter_mut()).flatten().collect(),
        };
        layers
            .into_iter()
            .filter_map(|l| match l {
                Layer::Rbn(r) => Some(&mut r.running_mean),
                _ => None,
            })
            .collect()
    }
}
