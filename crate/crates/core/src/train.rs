//! Joint objective over encoder, self-expression matrix and decoder, with
//! full-batch Adam training.
//!
//! The loss for windows `W`, codes `Z = f(W)` and reconstruction
//! `Ŵ = g(Z·Θ)` is
//!
//! ```text
//! ½‖W − Ŵ‖²_F + λ1‖Θ‖₁ + λ2‖Z − ZΘ‖²_F + λ3‖ΘR‖₁,₂
//! ```

use ndarray::{Array, Array2, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::WindowMatrix;
use crate::net::{self, Activation, MlpParams};
use crate::selfexpr::{self, DifferenceMatrix, SelfExprMatrix, DEFAULT_EPSILON};

const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub zero_diagonal: bool,
    pub epsilon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 1.0,
            lambda3: 0.5,
            learning_rate: 1e-2,
            epochs: 500,
            pretrain_epochs: 1000,
            seed: 0,
            latent_dim: 16,
            hidden: Vec::new(),
            activation: Activation::Tanh,
            zero_diagonal: true,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("epsilon", self.epsilon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.latent_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }

    /// `[m, hidden…, k]`.
    pub fn encoder_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.latent_dim);
        dims
    }

    /// `[k, hidden reversed…, m]`.
    pub fn decoder_dims(&self, output_dim: usize) -> Vec<usize> {
        let mut dims = vec![self.latent_dim];
        dims.extend(self.hidden.iter().rev());
        dims.push(output_dim);
        dims
    }
}

/// The four addends of the objective, multipliers already applied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub recon: f64,
    pub l1: f64,
    pub selfexpr: f64,
    pub smooth: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.recon + self.l1 + self.selfexpr + self.smooth
    }

    fn is_finite(&self) -> bool {
        [self.recon, self.l1, self.selfexpr, self.smooth]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Autoencoder only, self-expression layer bypassed.
    Pretrain,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub phase: Phase,
    pub total: f64,
    #[serde(flatten)]
    pub terms: LossTerms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: MlpParams,
    pub theta: Array2<f64>,
    pub decoder: MlpParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// One entry per epoch, loss at the parameters before that epoch's update.
    pub loss_history: Vec<EpochLoss>,
    /// Objective at the returned parameters.
    pub final_losses: LossTerms,
    pub encoder: MlpParams,
    pub theta: SelfExprMatrix,
    pub decoder: MlpParams,
    pub converged: bool,
}

fn check_shapes(w: &WindowMatrix, enc: &MlpParams, theta: &SelfExprMatrix, dec: &MlpParams) -> Result<()> {
    if enc.input_dim() != w.rows() {
        return Err(Error::shape("encoder input", w.rows(), enc.input_dim()));
    }
    if dec.input_dim() != enc.output_dim() {
        return Err(Error::shape("decoder input", enc.output_dim(), dec.input_dim()));
    }
    if dec.output_dim() != w.rows() {
        return Err(Error::shape("decoder output", w.rows(), dec.output_dim()));
    }
    if theta.order() != w.count() {
        return Err(Error::shape("self-expression order", w.count(), theta.order()));
    }
    Ok(())
}

/// Objective value and, optionally, its gradients in a single pass.
fn evaluate(
    w: &WindowMatrix,
    enc: &MlpParams,
    theta: &SelfExprMatrix,
    dec: &MlpParams,
    hp: &Hyperparams,
    with_grads: bool,
) -> Result<(LossTerms, Option<Gradients>)> {
    check_shapes(w, enc, theta, dec)?;
    let diff_op = DifferenceMatrix::build(w.count())?;

    let (z, enc_tape) = net::encode(enc, w)?;
    let z_hat = selfexpr::self_expression(&z, theta)?;
    let (w_hat, dec_tape) = net::decode(dec, &z_hat)?;

    let residual = &w_hat - w.data();
    let recon = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
    let (l1, l1_grad) = selfexpr::l1_value_and_subgrad(theta);
    let expr_err = &z.z - &z_hat.z;
    let selfexpr_sq = expr_err.iter().map(|v| v * v).sum::<f64>();
    let (smooth, smooth_grad) = selfexpr::smoothness_term(theta, &diff_op, hp.epsilon)?;

    let terms = LossTerms {
        recon,
        l1: hp.lambda1 * l1,
        selfexpr: hp.lambda2 * selfexpr_sq,
        smooth: hp.lambda3 * smooth,
    };
    if !with_grads {
        return Ok((terms, None));
    }

    // reconstruction path: W → Z → ZΘ → Ŵ
    let (dec_grad, d_zhat) = net::backward(dec, &dec_tape, residual.view())?;
    let mut d_theta = z.z.t().dot(&d_zhat);
    let mut d_z = d_zhat.dot(&theta.theta().t());

    // λ2‖Z(I − Θ)‖²
    let scaled_err = expr_err.mapv(|v| 2.0 * hp.lambda2 * v);
    d_theta -= &z.z.t().dot(&scaled_err);
    d_z += &scaled_err;
    d_z -= &scaled_err.dot(&theta.theta().t());

    d_theta.scaled_add(hp.lambda1, &l1_grad);
    d_theta.scaled_add(hp.lambda3, &smooth_grad);
    theta.project_gradient(&mut d_theta);

    let (enc_grad, _) = net::backward(enc, &enc_tape, d_z.view())?;
    Ok((
        terms,
        Some(Gradients {
            encoder: enc_grad,
            theta: d_theta,
            decoder: dec_grad,
        }),
    ))
}

/// Objective value and its four terms.
pub fn total_loss(
    w: &WindowMatrix,
    enc: &MlpParams,
    theta: &SelfExprMatrix,
    dec: &MlpParams,
    hp: &Hyperparams,
) -> Result<(f64, LossTerms)> {
    let (terms, _) = evaluate(w, enc, theta, dec, hp, false)?;
    if !terms.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    Ok((terms.total(), terms))
}

/// Exact gradients of the objective (ε-guarded at zero difference columns).
pub fn loss_gradients(
    w: &WindowMatrix,
    enc: &MlpParams,
    theta: &SelfExprMatrix,
    dec: &MlpParams,
    hp: &Hyperparams,
) -> Result<Gradients> {
    let (terms, grads) = evaluate(w, enc, theta, dec, hp, true)?;
    if !terms.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    Ok(grads.expect("requested gradients"))
}

/// `½‖W − g(f(W))‖²` and gradients, the self-expression layer bypassed.
pub fn reconstruction_gradients(
    w: &WindowMatrix,
    enc: &MlpParams,
    dec: &MlpParams,
) -> Result<(f64, MlpParams, MlpParams)> {
    let (z, enc_tape) = net::encode(enc, w)?;
    let (w_hat, dec_tape) = net::decode(dec, &z)?;
    let residual = &w_hat - w.data();
    let loss = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
    let (dec_grad, d_z) = net::backward(dec, &dec_tape, residual.view())?;
    let (enc_grad, _) = net::backward(enc, &enc_tape, d_z.view())?;
    Ok((loss, enc_grad, dec_grad))
}

#[derive(Debug, Clone, Copy)]
struct AdamConfig {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamConfig {
    fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments<D: Dimension> {
    m: Array<f64, D>,
    v: Array<f64, D>,
}

impl<D: Dimension> Moments<D> {
    fn like(param: &Array<f64, D>) -> Self {
        Self {
            m: Array::zeros(param.raw_dim()),
            v: Array::zeros(param.raw_dim()),
        }
    }

    fn step(&mut self, param: &mut Array<f64, D>, grad: &Array<f64, D>, cfg: &AdamConfig, t: i32) {
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            });
    }
}

/// Adam state for every tensor of one network.
#[derive(Debug, Clone)]
struct NetMoments {
    layers: Vec<(Moments<ndarray::Ix2>, Moments<ndarray::Ix1>)>,
}

impl NetMoments {
    fn like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers()
                .iter()
                .map(|l| (Moments::like(&l.weight), Moments::like(&l.bias)))
                .collect(),
        }
    }

    fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, cfg: &AdamConfig, t: i32) {
        for ((mw, mb), (p, g)) in self
            .layers
            .iter_mut()
            .zip(params.layers_mut().iter_mut().zip(grads.layers()))
        {
            mw.step(&mut p.weight, &g.weight, cfg, t);
            mb.step(&mut p.bias, &g.bias, cfg, t);
        }
    }
}

/// Fit the autoencoder alone with Adam. Returns the loss before each update.
pub fn train_autoencoder(
    w: &WindowMatrix,
    enc: &mut MlpParams,
    dec: &mut MlpParams,
    epochs: usize,
    learning_rate: f64,
) -> Result<Vec<f64>> {
    let cfg = AdamConfig::new(learning_rate);
    let mut enc_m = NetMoments::like(enc);
    let mut dec_m = NetMoments::like(dec);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, enc_g, dec_g) = reconstruction_gradients(w, enc, dec)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        losses.push(loss);
        let t = epoch as i32 + 1;
        enc_m.step(enc, &enc_g, &cfg, t);
        dec_m.step(dec, &dec_g, &cfg, t);
    }
    Ok(losses)
}

/// Initialise networks from the seed, pretrain the autoencoder, then train
/// all parameters jointly. Deterministic for a fixed `hp`.
pub fn fit(w: &WindowMatrix, hp: &Hyperparams) -> Result<TrainReport> {
    hp.validate()?;
    if w.count() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 windows, got {}",
            w.count()
        )));
    }
    let m = w.rows();
    let mut encoder = net::init_params(&hp.encoder_dims(m), hp.activation, hp.seed)?;
    let mut decoder = net::init_params(&hp.decoder_dims(m), hp.activation, hp.seed ^ 0x9e37_79b9_7f4a_7c15)?
        .with_linear_output();
    let mut theta = SelfExprMatrix::zeros(w.count(), hp.zero_diagonal)?;

    let mut history = Vec::with_capacity(hp.pretrain_epochs + hp.epochs);
    let pre_losses = train_autoencoder(w, &mut encoder, &mut decoder, hp.pretrain_epochs, hp.learning_rate)?;
    history.extend(pre_losses.into_iter().enumerate().map(|(epoch, recon)| EpochLoss {
        epoch,
        phase: Phase::Pretrain,
        total: recon,
        terms: LossTerms {
            recon,
            ..LossTerms::default()
        },
    }));

    let cfg = AdamConfig::new(hp.learning_rate);
    let mut enc_m = NetMoments::like(&encoder);
    let mut dec_m = NetMoments::like(&decoder);
    let mut theta_m = Moments::like(theta.theta());
    for step in 0..hp.epochs {
        let epoch = hp.pretrain_epochs + step;
        let (terms, grads) = evaluate(w, &encoder, &theta, &decoder, hp, true)?;
        if !terms.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(EpochLoss {
            epoch,
            phase: Phase::Joint,
            total: terms.total(),
            terms,
        });
        let grads = grads.expect("requested gradients");
        let t = step as i32 + 1;
        enc_m.step(&mut encoder, &grads.encoder, &cfg, t);
        dec_m.step(&mut decoder, &grads.decoder, &cfg, t);
        theta_m.step(theta.theta_mut(), &grads.theta, &cfg, t);
        theta.project();
    }

    let (final_losses, _) = evaluate(w, &encoder, &theta, &decoder, hp, false)?;
    let final_epoch = hp.pretrain_epochs + hp.epochs;
    if !final_losses.is_finite() || !encoder.is_finite() || !decoder.is_finite() {
        return Err(Error::Diverged { epoch: final_epoch });
    }
    let last = history.last().map(|e| e.total).unwrap_or(f64::NAN);
    let converged = (final_losses.total() - last).abs() < CONVERGENCE_TOL * last.abs().max(f64::MIN_POSITIVE);

    Ok(TrainReport {
        loss_history: history,
        final_losses,
        encoder,
        theta,
        decoder,
        converged,
    })
}
