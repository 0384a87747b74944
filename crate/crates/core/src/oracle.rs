//! Closed-form reference of the binarized backpropagation model.
//!
//! Computes, in plain integer arithmetic, exactly what the gated circuit
//! computes step by step: the binary forward pass, the start/stop condition
//! masks, the sign-split local gradients, and the saturating `±2` weight
//! updates. Every threshold comparison is strict and in integer weight units
//! (one ANN unit = 1024), so the two routes agree bit for bit.

use crate::quant::{QuantMatrix, WeightRole};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Firing threshold; also the weight-unit scale of one ANN unit.
pub const V_THR: i32 = 1024;
/// Half threshold; the binary activation's 0.5 offset in weight units.
pub const HALF_THR: i32 = V_THR / 2;
/// Initialization truncation bound in weight units.
pub const INIT_TRUNC: f64 = 240.0;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("input has {got} bits; the first layer expects {want}")]
    InputLength { got: usize, want: usize },
    #[error("target has {got} entries; the output layer expects {want}")]
    TargetLength { got: usize, want: usize },
}

/// The two-layer integer network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleNet {
    pub w1: QuantMatrix,
    pub w2: QuantMatrix,
}

impl OracleNet {
    pub fn n_in(&self) -> usize {
        self.w1.cols()
    }

    pub fn n_hid(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_out(&self) -> usize {
        self.w2.rows()
    }
}

/// Forward activations and condition masks, all binary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Forward {
    /// Hidden activation: first-layer input strictly above half threshold.
    pub h: Vec<u8>,
    /// Output activation.
    pub o: Vec<u8>,
    /// Hidden start condition: input strictly positive.
    pub h_start: Vec<u8>,
    /// Hidden stop condition: input strictly above threshold.
    pub h_stop: Vec<u8>,
    /// Hidden box mask: start and not stop.
    pub b_h: Vec<u8>,
    pub o_start: Vec<u8>,
    pub o_stop: Vec<u8>,
}

/// Sign-split local gradients with their gating masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradientBundle {
    /// Output gradient, positive part: target fired, output did not, box open.
    pub d2_plus: Vec<u8>,
    /// Output gradient, negative part.
    pub d2_minus: Vec<u8>,
    /// Backpropagated hidden gradient before the box mask (what the gradient
    /// carrier layer fires).
    pub d1_plus_raw: Vec<u8>,
    pub d1_minus_raw: Vec<u8>,
    /// Masked hidden gradients (what actually drives the first-layer update).
    pub d1_plus: Vec<u8>,
    pub d1_minus: Vec<u8>,
}

impl GradientBundle {
    pub fn is_zero(&self) -> bool {
        self.d2_plus.iter().all(|&v| v == 0) && self.d2_minus.iter().all(|&v| v == 0)
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Zero-mean Gaussian with std `sqrt(2 / (fan_in + fan_out))` in ANN
    /// units.
    GaussianFan,
    /// Uniform on `[-g, g]` with `g = sqrt(1.5 / (fan_in + fan_out))`.
    GlorotUniform,
}

impl InitScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian-fan" => Some(InitScheme::GaussianFan),
            "glorot-uniform" => Some(InitScheme::GlorotUniform),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::GaussianFan => "gaussian-fan",
            InitScheme::GlorotUniform => "glorot-uniform",
        }
    }
}

/// Initialization configuration.
#[derive(Clone, Copy, Debug)]
pub struct InitConfig {
    pub scheme: InitScheme,
    pub seed: u64,
}

/// Samples both matrices: ANN-unit draw, scale by the threshold, truncate to
/// `[-240, 240]`, then round toward zero onto the even grid.
pub fn init(config: &InitConfig, n_in: usize, n_hid: usize, n_out: usize) -> OracleNet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let w1 = init_matrix(&mut rng, config.scheme, n_hid, n_in);
    let w2 = init_matrix(&mut rng, config.scheme, n_out, n_hid);
    OracleNet { w1, w2 }
}

fn init_matrix(rng: &mut ChaCha8Rng, scheme: InitScheme, rows: usize, cols: usize) -> QuantMatrix {
    let fan = (cols + rows) as f64;
    let mut draw: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match scheme {
        InitScheme::GaussianFan => {
            let normal = Normal::new(0.0, (2.0 / fan).sqrt()).expect("valid std");
            Box::new(move |r| normal.sample(r))
        }
        InitScheme::GlorotUniform => {
            let g = (1.5 / fan).sqrt();
            let uniform = Uniform::new_inclusive(-g, g);
            Box::new(move |r| uniform.sample(r))
        }
    };
    let data: Vec<i16> = (0..rows * cols)
        .map(|_| quantize_weight(draw(rng) * V_THR as f64))
        .collect();
    QuantMatrix::from_data(rows, cols, data, WeightRole::Forward).expect("quantized in range")
}

/// Truncates to `[-240, 240]` then rounds toward zero to the even grid.
pub fn quantize_weight(w: f64) -> i16 {
    let clamped = w.clamp(-INIT_TRUNC, INIT_TRUNC);
    (2.0 * (clamped / 2.0).trunc()) as i16
}

/// Integer first-layer potentials for a binary input.
fn potentials(w: &QuantMatrix, active: &[usize]) -> Vec<i32> {
    let mut out = vec![0i32; w.rows()];
    for (j, acc) in out.iter_mut().enumerate() {
        let row = w.row(j);
        let mut s = 0i32;
        for &i in active {
            s += row[i] as i32;
        }
        *acc = s;
    }
    out
}

fn active_indices(bits: &[u8]) -> Vec<usize> {
    bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect()
}

fn threshold(v: &[i32], above: i32) -> Vec<u8> {
    v.iter().map(|&x| u8::from(x > above)).collect()
}

/// The inference pass with the start/stop masks computed alongside.
pub fn forward(net: &OracleNet, x: &[u8]) -> Result<Forward, OracleError> {
    if x.len() != net.n_in() {
        return Err(OracleError::InputLength { got: x.len(), want: net.n_in() });
    }
    let a1 = potentials(&net.w1, &active_indices(x));
    let h = threshold(&a1, HALF_THR);
    let h_start = threshold(&a1, 0);
    let h_stop = threshold(&a1, V_THR);
    let b_h: Vec<u8> = h_start.iter().zip(&h_stop).map(|(&s, &p)| s & !p).collect();
    let a2 = potentials(&net.w2, &active_indices(&h));
    let o = threshold(&a2, HALF_THR);
    let o_start = threshold(&a2, 0);
    let o_stop = threshold(&a2, V_THR);
    Ok(Forward { h, o, h_start, h_stop, b_h, o_start, o_stop })
}

/// Local gradients for a one-hot target, given the forward results.
pub fn gradients(
    net: &OracleNet,
    fwd: &Forward,
    target: &[u8],
) -> Result<GradientBundle, OracleError> {
    if target.len() != net.n_out() {
        return Err(OracleError::TargetLength { got: target.len(), want: net.n_out() });
    }
    let n_out = net.n_out();
    let mut d2_plus = vec![0u8; n_out];
    let mut d2_minus = vec![0u8; n_out];
    for k in 0..n_out {
        let box_open = fwd.o_start[k] == 1 && fwd.o_stop[k] == 0;
        if box_open {
            d2_plus[k] = u8::from(target[k] == 1 && fwd.o[k] == 0);
            d2_minus[k] = u8::from(fwd.o[k] == 1 && target[k] == 0);
        }
    }
    // Backpropagated signed sum through the transposed weights.
    let n_hid = net.n_hid();
    let mut s = vec![0i32; n_hid];
    for k in 0..n_out {
        let sign = d2_plus[k] as i32 - d2_minus[k] as i32;
        if sign != 0 {
            let row = net.w2.row(k);
            for (j, acc) in s.iter_mut().enumerate() {
                *acc += sign * row[j] as i32;
            }
        }
    }
    let d1_plus_raw = threshold(&s, 0);
    let d1_minus_raw: Vec<u8> = s.iter().map(|&v| u8::from(v < 0)).collect();
    let d1_plus: Vec<u8> =
        d1_plus_raw.iter().zip(&fwd.b_h).map(|(&d, &m)| d & m).collect();
    let d1_minus: Vec<u8> =
        d1_minus_raw.iter().zip(&fwd.b_h).map(|(&d, &m)| d & m).collect();
    Ok(GradientBundle { d2_plus, d2_minus, d1_plus_raw, d1_minus_raw, d1_plus, d1_minus })
}

/// Applies the saturating `±2` updates in place.
pub fn update(net: &mut OracleNet, x: &[u8], fwd: &Forward, bundle: &GradientBundle) {
    let h_active = active_indices(&fwd.h);
    for (k, (&p, &m)) in bundle.d2_plus.iter().zip(&bundle.d2_minus).enumerate() {
        let delta = 2 * (p as i16 - m as i16);
        if delta != 0 {
            for &j in &h_active {
                net.w2.saturating_add(k, j, delta);
            }
        }
    }
    let x_active = active_indices(x);
    for (j, (&p, &m)) in bundle.d1_plus.iter().zip(&bundle.d1_minus).enumerate() {
        let delta = 2 * (p as i16 - m as i16);
        if delta != 0 {
            for &i in &x_active {
                net.w1.saturating_add(j, i, delta);
            }
        }
    }
}

/// Squared-error loss between binary output and target.
pub fn loss(o: &[u8], t: &[u8]) -> f64 {
    debug_assert_eq!(o.len(), t.len());
    0.5 * o
        .iter()
        .zip(t)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
}

/// Binary activation in ANN units: 1 when strictly above one half.
pub fn f_binary(x: f64) -> f64 {
    if x > 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Straight-through surrogate: the unit-truncated ReLU.
pub fn f_surrogate(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Box derivative of the surrogate: 1 strictly inside (0, 1).
pub fn f_box(x: f64) -> f64 {
    if x > 0.0 && x < 1.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{QuantMatrix, WeightRole};

    fn net_from(w1: Vec<i16>, w2: Vec<i16>, dims: (usize, usize, usize)) -> OracleNet {
        let (n_in, n_hid, n_out) = dims;
        OracleNet {
            w1: QuantMatrix::from_data(n_hid, n_in, w1, WeightRole::Forward).unwrap(),
            w2: QuantMatrix::from_data(n_out, n_hid, w2, WeightRole::Forward).unwrap(),
        }
    }

    #[test]
    fn zero_weights_silent() {
        let net = net_from(vec![0; 6], vec![0; 6], (3, 2, 3));
        let fwd = forward(&net, &[1, 1, 1]).unwrap();
        assert!(fwd.h.iter().all(|&v| v == 0));
        assert!(fwd.o.iter().all(|&v| v == 0));
        assert!(fwd.h_start.iter().all(|&v| v == 0));
        assert!(fwd.h_stop.iter().all(|&v| v == 0));
    }

    #[test]
    fn threshold_boundaries() {
        // Single hidden unit fed 514: above half threshold, start on, stop
        // off (box open).
        let net = net_from(vec![254, 254, 6], vec![0], (3, 1, 1));
        let fwd = forward(&net, &[1, 1, 1]).unwrap();
        assert_eq!((fwd.h[0], fwd.h_start[0], fwd.h_stop[0], fwd.b_h[0]), (1, 1, 0, 1));

        // 1026: above threshold, stop condition active, box closed.
        let net = net_from(vec![254, 254, 254, 254, 10], vec![0], (5, 1, 1));
        let fwd = forward(&net, &[1, 1, 1, 1, 1]).unwrap();
        assert_eq!((fwd.h[0], fwd.h_start[0], fwd.h_stop[0], fwd.b_h[0]), (1, 1, 1, 0));

        // Exactly 512 and exactly 1024 stay below the strict comparisons.
        let net = net_from(vec![254, 254, 4], vec![0], (3, 1, 1));
        let fwd = forward(&net, &[1, 1, 1]).unwrap();
        assert_eq!((fwd.h[0], fwd.h_start[0], fwd.h_stop[0]), (0, 1, 0));
        let net = net_from(vec![254, 254, 254, 254, 8], vec![0], (5, 1, 1));
        let fwd = forward(&net, &[1, 1, 1, 1, 1]).unwrap();
        assert_eq!((fwd.h[0], fwd.h_start[0], fwd.h_stop[0], fwd.b_h[0]), (1, 1, 0, 1));
    }

    #[test]
    fn gradients_zero_when_output_matches_target() {
        let net = net_from(
            vec![254, 254, 254, 254, 254, 254, 254, 254, 254],
            vec![254, 254, 254, 0, 0, 0],
            (3, 3, 2),
        );
        let x = [1, 1, 1];
        let fwd = forward(&net, &x).unwrap();
        assert_eq!(fwd.o, vec![1, 0]);
        let bundle = gradients(&net, &fwd, &[1, 0]).unwrap();
        assert!(bundle.is_zero());
        assert!(bundle.d1_plus_raw.iter().all(|&v| v == 0));
        assert!(bundle.d1_minus.iter().all(|&v| v == 0));
    }

    #[test]
    fn gradient_gated_off_when_box_closed() {
        // Output potential 5 * 254 = 1270 above threshold: start and stop
        // both fire, the box closes, and the error is gated away even though
        // output and target disagree.
        let net = net_from(vec![254; 15], vec![254; 5], (3, 5, 1));
        let fwd = forward(&net, &[1, 1, 1]).unwrap();
        assert_eq!((fwd.o[0], fwd.o_start[0], fwd.o_stop[0]), (1, 1, 1));
        let bundle = gradients(&net, &fwd, &[0]).unwrap();
        assert_eq!(bundle.d2_minus, vec![0]);
        assert!(bundle.is_zero());
        assert!(bundle.d1_plus_raw.iter().all(|&v| v == 0));
    }

    #[test]
    fn gradient_single_spike_when_target_missed_and_box_open() {
        let net = net_from(vec![254; 15], vec![60; 5], (3, 5, 1));
        let fwd = forward(&net, &[1, 1, 1]).unwrap();
        // potential 300: silent output, start on, stop off.
        assert_eq!((fwd.o[0], fwd.o_start[0], fwd.o_stop[0]), (0, 1, 0));
        let bundle = gradients(&net, &fwd, &[1]).unwrap();
        assert_eq!(bundle.d2_plus, vec![1]);
        assert_eq!(bundle.d2_minus, vec![0]);
        // All five hidden units backpropagate a positive sum through the
        // uniform weights, and all five boxes are open.
        assert_eq!(bundle.d1_plus, vec![1; 5]);
        assert_eq!(bundle.d1_minus, vec![0; 5]);
    }

    #[test]
    fn d2_sides_disjoint_exhaustively() {
        // Over all binary (o, t, start, stop) combinations the two error
        // sides never fire together.
        for o in [0u8, 1] {
            for t in [0u8, 1] {
                for (start, stop) in [(0u8, 0u8), (1, 0), (1, 1)] {
                    let open = start == 1 && stop == 0;
                    let p = u8::from(open && t == 1 && o == 0);
                    let m = u8::from(open && o == 1 && t == 0);
                    assert_eq!(p & m, 0);
                }
            }
        }
    }

    #[test]
    fn update_directions() {
        let mut net = net_from(vec![0; 4], vec![0; 4], (2, 2, 2));
        let fwd = Forward {
            h: vec![1, 0],
            o: vec![0, 0],
            h_start: vec![1, 1],
            h_stop: vec![0, 0],
            b_h: vec![1, 1],
            o_start: vec![1, 1],
            o_stop: vec![0, 0],
        };
        let bundle = GradientBundle {
            d2_plus: vec![1, 0],
            d2_minus: vec![0, 0],
            d1_plus_raw: vec![0, 1],
            d1_minus_raw: vec![0, 0],
            d1_plus: vec![0, 1],
            d1_minus: vec![0, 0],
        };
        update(&mut net, &[1, 1], &fwd, &bundle);
        // d2+ at output 0 with h = [1, 0]: W2[0,0] += 2 only.
        assert_eq!(net.w2.get(0, 0), 2);
        assert_eq!(net.w2.get(0, 1), 0);
        assert_eq!(net.w2.get(1, 0), 0);
        // d1+ at hidden 1 with x = [1, 1]: W1[1, :] += 2.
        assert_eq!(net.w1.get(1, 0), 2);
        assert_eq!(net.w1.get(1, 1), 2);
        assert_eq!(net.w1.get(0, 0), 0);
    }

    #[test]
    fn update_depression_side() {
        let mut net = net_from(vec![0; 4], vec![0; 4], (2, 2, 2));
        let fwd = Forward {
            h: vec![0, 1],
            o: vec![0, 0],
            h_start: vec![1, 1],
            h_stop: vec![0, 0],
            b_h: vec![1, 1],
            o_start: vec![1, 1],
            o_stop: vec![0, 0],
        };
        let bundle = GradientBundle {
            d2_plus: vec![0, 0],
            d2_minus: vec![0, 1],
            d1_plus_raw: vec![0, 0],
            d1_minus_raw: vec![1, 0],
            d1_plus: vec![0, 0],
            d1_minus: vec![1, 0],
        };
        update(&mut net, &[0, 1], &fwd, &bundle);
        assert_eq!(net.w2.get(1, 1), -2);
        assert_eq!(net.w1.get(0, 1), -2);
        assert_eq!(net.w1.get(0, 0), 0);
    }

    #[test]
    fn all_zero_bundle_is_identity() {
        let mut net = net_from(vec![2, 4, -6, 8], vec![10, -12, 14, 0], (2, 2, 2));
        let before = net.clone();
        let fwd = forward(&net, &[1, 1]).unwrap();
        let n_out = net.n_out();
        let n_hid = net.n_hid();
        let bundle = GradientBundle {
            d2_plus: vec![0; n_out],
            d2_minus: vec![0; n_out],
            d1_plus_raw: vec![0; n_hid],
            d1_minus_raw: vec![0; n_hid],
            d1_plus: vec![0; n_hid],
            d1_minus: vec![0; n_hid],
        };
        update(&mut net, &[1, 1], &fwd, &bundle);
        assert_eq!(net, before);
    }

    #[test]
    fn init_mapping_examples() {
        // 0.25 ANN -> 256 -> truncated to 240.
        assert_eq!(quantize_weight(0.25 * 1024.0), 240);
        // -0.003 ANN -> -3.072 -> toward zero on the even grid: -2.
        assert_eq!(quantize_weight(-0.003 * 1024.0), -2);
        assert_eq!(quantize_weight(3.9), 2);
        assert_eq!(quantize_weight(-3.9), -2);
        assert_eq!(quantize_weight(1e9), 240);
        assert_eq!(quantize_weight(-1e9), -240);
    }

    #[test]
    fn init_deterministic_and_in_range() {
        for scheme in [InitScheme::GaussianFan, InitScheme::GlorotUniform] {
            let config = InitConfig { scheme, seed: 99 };
            let a = init(&config, 20, 15, 4);
            let b = init(&config, 20, 15, 4);
            assert_eq!(a, b);
            assert!(a.w1.is_valid() && a.w2.is_valid());
            assert!(a.w1.as_slice().iter().any(|&v| v != 0));
            assert!(a.w1.as_slice().iter().all(|&v| (-240..=240).contains(&v)));
            let c = init(&InitConfig { scheme, seed: 100 }, 20, 15, 4);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[1, 0, 0], &[1, 0, 0]), 0.0);
        assert_eq!(loss(&[0, 0, 0], &[0, 1, 0]), 0.5);
        assert_eq!(loss(&[1, 0, 0], &[0, 1, 0]), 1.0);
    }

    /// The box derivative matches the central finite difference of the
    /// surrogate away from the kinks at 0 and 1.
    #[test]
    fn surrogate_finite_difference() {
        let eps = 1e-3;
        let mut x: f64 = -2.0;
        while x <= 3.0 {
            let off_edge = (x - 0.0).abs() > 10.0 * eps && (x - 1.0).abs() > 10.0 * eps;
            if off_edge {
                let fd = (f_surrogate(x + eps) - f_surrogate(x - eps)) / (2.0 * eps);
                assert!(
                    (fd - f_box(x)).abs() < 1e-6,
                    "x={x}: fd={fd} box={}",
                    f_box(x)
                );
            }
            x += 0.0137;
        }
    }

    /// Oracle forward equals a direct evaluation of the model equations for
    /// every input of a fixed tiny net.
    #[test]
    fn exhaustive_small_instance_equivalence() {
        let net = net_from(
            vec![254, 254, 254, 254, 254, 254, -254, 240, 240, -120, 60, 8],
            vec![254, 254, 254, 254, -254, 100],
            (4, 3, 2),
        );
        for pattern in 0..16u32 {
            let x: Vec<u8> = (0..4).map(|i| ((pattern >> i) & 1) as u8).collect();
            let fwd = forward(&net, &x).unwrap();
            // Independent route: floating-point ANN-unit evaluation of
            // o = f(W2 f(W1 x)) with f(x) = [x > 0.5].
            let h_ref: Vec<f64> = (0..3)
                .map(|j| {
                    let acc: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(i, &xi)| net.w1.get(j, i) as f64 / 1024.0 * xi as f64)
                        .sum();
                    f_binary(acc)
                })
                .collect();
            let o_ref: Vec<f64> = (0..2)
                .map(|k| {
                    let acc: f64 = h_ref
                        .iter()
                        .enumerate()
                        .map(|(j, &hj)| net.w2.get(k, j) as f64 / 1024.0 * hj)
                        .sum();
                    f_binary(acc)
                })
                .collect();
            let h_int: Vec<f64> = fwd.h.iter().map(|&v| v as f64).collect();
            let o_int: Vec<f64> = fwd.o.iter().map(|&v| v as f64).collect();
            assert_eq!(h_int, h_ref, "hidden mismatch for input {pattern:04b}");
            assert_eq!(o_int, o_ref, "output mismatch for input {pattern:04b}");
        }
    }
}
