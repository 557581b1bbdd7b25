//! Brute-force oracles for the verification suites. Test support only:
//! nothing here is used by the pipeline itself, and the implementations
//! deliberately avoid the algebra used by the production code paths.

use ndarray::Array2;

use crate::signature::{AugmentedPath, SignatureTensor};

const GL_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

/// A piecewise-linear path with knots at integer parameters, evaluated by
/// direct numerical integration of the signature definition.
pub struct PwLinearPath {
    /// `n x d` knot coordinates.
    pub points: Vec<Vec<f64>>,
}

impl PwLinearPath {
    pub fn n_segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn channels(&self) -> usize {
        self.points[0].len()
    }

    fn deriv(&self, seg: usize, channel: usize) -> f64 {
        self.points[seg + 1][channel] - self.points[seg][channel]
    }

    /// `I_w(t) = int_0^t I_{w'}(s) dv^{last}(s)` by recursive Gauss-Legendre
    /// quadrature split at the knots. Exact (up to rounding) for the
    /// piecewise-polynomial integrands that arise from piecewise-linear
    /// paths at low truncation levels.
    pub fn iterated_integral(&self, word: &[usize], t: f64) -> f64 {
        let Some((&last, prefix)) = word.split_last() else {
            return 1.0;
        };
        let mut acc = 0.0f64;
        for seg in 0..self.n_segments() {
            let lo = seg as f64;
            let hi = ((seg + 1) as f64).min(t);
            if hi <= lo {
                break;
            }
            let slope = self.deriv(seg, last);
            if slope == 0.0 {
                continue;
            }
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let mut seg_acc = 0.0f64;
            for (node, weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                let s = center + half * node;
                seg_acc += weight * self.iterated_integral(prefix, s);
            }
            acc += seg_acc * half * slope;
        }
        acc
    }

    /// Full truncated signature by brute-force integration of every word.
    pub fn signature_by_quadrature(&self, level: usize) -> SignatureTensor {
        let d = self.channels();
        let t_end = self.n_segments() as f64;
        let mut sig = SignatureTensor::trivial(d, level);
        let mut flat = 1usize;
        for k in 1..=level {
            for idx in 0..d.pow(k as u32) {
                let mut word = vec![0usize; k];
                let mut rem = idx;
                for pos in (0..k).rev() {
                    word[pos] = rem % d;
                    rem /= d;
                }
                sig.coeffs[flat] = self.iterated_integral(&word, t_end);
                flat += 1;
            }
        }
        sig
    }

    pub fn as_augmented(&self) -> AugmentedPath {
        let n = self.points.len();
        let d = self.channels();
        let mut arr = Array2::<f64>::zeros((n, d));
        for (i, p) in self.points.iter().enumerate() {
            for (j, &x) in p.iter().enumerate() {
                arr[(i, j)] = x;
            }
        }
        AugmentedPath {
            times: (0..n).map(|i| i as f64).collect(),
            points: arr,
        }
    }
}
