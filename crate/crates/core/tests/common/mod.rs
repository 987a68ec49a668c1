#![allow(dead_code)]

use cosegment::ingest::WindowMatrix;
use cosegment::net::{self, Activation, MlpParams};
use cosegment::selfexpr::SelfExprMatrix;
use cosegment::synth::{self, SynthResult, SynthSpec};
use cosegment::train::{self, Hyperparams};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A small random problem for gradient checks.
pub struct Instance {
    pub w: WindowMatrix,
    pub enc: MlpParams,
    pub theta: SelfExprMatrix,
    pub dec: MlpParams,
    pub hp: Hyperparams,
}

/// Magnitude below which a coefficient counts as sitting on the ℓ1 kink.
const KINK_MARGIN: f64 = 0.05;

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(3..=8);
    let m = rng.random_range(2..=10);
    let k = rng.random_range(1..=4);
    let hidden: Vec<usize> = if rng.random_bool(0.5) {
        vec![rng.random_range(2..=6)]
    } else {
        Vec::new()
    };
    let hp = Hyperparams {
        lambda1: rng.random_range(0.05..1.0),
        lambda2: rng.random_range(0.05..1.0),
        lambda3: rng.random_range(0.05..1.0),
        latent_dim: k,
        hidden,
        activation: Activation::Tanh,
        zero_diagonal: false,
        seed: rng.random(),
        ..Hyperparams::default()
    };
    let data = Array2::from_shape_simple_fn((m, n), || rng.random_range(-1.5..1.5));
    let w = WindowMatrix::from_columns(data, (0..n).collect(), 1).unwrap();
    let mut enc = net::init_params(&hp.encoder_dims(m), hp.activation, rng.random()).unwrap();
    let mut dec = net::init_params(&hp.decoder_dims(m), hp.activation, rng.random())
        .unwrap()
        .with_linear_output();
    for layer in enc.layers_mut().iter_mut().chain(dec.layers_mut()) {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    let raw = Array2::from_shape_simple_fn((n, n), || {
        let magnitude = rng.random_range(KINK_MARGIN..0.6);
        if rng.random_bool(0.5) {
            magnitude
        } else {
            -magnitude
        }
    });
    let theta = SelfExprMatrix::from_array(raw, false).unwrap();
    Instance { w, enc, theta, dec, hp }
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-6)
}

fn loss(inst: &Instance, enc: &MlpParams, theta: &SelfExprMatrix, dec: &MlpParams) -> f64 {
    train::total_loss(&inst.w, enc, theta, dec, &inst.hp).unwrap().0
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter of the instance.
pub fn max_gradient_error(inst: &Instance, h: f64) -> f64 {
    let grads = train::loss_gradients(&inst.w, &inst.enc, &inst.theta, &inst.dec, &inst.hp).unwrap();
    let mut worst = 0.0f64;

    let n = inst.theta.order();
    for i in 0..n {
        for j in 0..n {
            let mut plus = inst.theta.clone();
            plus.theta_mut()[[i, j]] += h;
            let mut minus = inst.theta.clone();
            minus.theta_mut()[[i, j]] -= h;
            let fd = (loss(inst, &inst.enc, &plus, &inst.dec) - loss(inst, &inst.enc, &minus, &inst.dec))
                / (2.0 * h);
            worst = worst.max(rel_err(grads.theta[[i, j]], fd));
        }
    }

    for (is_encoder, params, grad) in [(true, &inst.enc, &grads.encoder), (false, &inst.dec, &grads.decoder)] {
        for (l, (layer, g)) in params.layers().iter().zip(grad.layers()).enumerate() {
            let coords = layer
                .weight
                .indexed_iter()
                .map(|((r, c), _)| (Some((r, c)), r))
                .chain((0..layer.bias.len()).map(|r| (None, r)));
            for (weight_at, r) in coords {
                let perturbed = |delta: f64| {
                    let mut p = params.clone();
                    let layer = &mut p.layers_mut()[l];
                    match weight_at {
                        Some(rc) => layer.weight[rc] += delta,
                        None => layer.bias[r] += delta,
                    }
                    if is_encoder {
                        loss(inst, &p, &inst.theta, &inst.dec)
                    } else {
                        loss(inst, &inst.enc, &inst.theta, &p)
                    }
                };
                let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                let analytic = match weight_at {
                    Some(rc) => g.weight[rc],
                    None => g.bias[r],
                };
                worst = worst.max(rel_err(analytic, fd));
            }
        }
    }
    worst
}

/// The standard synthetic fixture: three concepts, four regimes.
pub fn synthetic(seed: u64) -> (SynthSpec, SynthResult) {
    let spec = SynthSpec {
        seed,
        ..SynthSpec::default()
    };
    let result = synth::generate(&spec).unwrap();
    (spec, result)
}

/// Brute-force ARI over all pairs, written independently of the library.
pub fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += u64::from(sa && sb);
            only_a += u64::from(sa);
            only_b += u64::from(sb);
        }
    }
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    if pairs == 0.0 {
        return 1.0;
    }
    let expected = only_a as f64 * only_b as f64 / pairs;
    let max = 0.5 * (only_a + only_b) as f64;
    if max == expected {
        return 1.0;
    }
    (both as f64 - expected) / (max - expected)
}
