//! Adaptive Gauss-Kronrod (7/15) quadrature.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
// Gauss weights for the odd Kronrod nodes 1, 3, 5, 7
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Integrates `f` over `[a, b]` until the summed Kronrod-Gauss error estimate
/// drops below `max(abs_tol, rel_tol * |value|)`, bisecting the worst piece.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_pieces: usize,
) -> QuadratureResult {
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e });
    let (mut total, mut err) = (v, e);
    let mut evaluations = 15;
    while err > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_pieces {
        let worst = heap.pop().expect("nonempty");
        let m = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: worst.b, value: v2, error: e2 });
    }
    // re-sum to shed accumulated cancellation in the running totals
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum::<f64>();
    QuadratureResult {
        value,
        error,
        evaluations,
        converged: error <= abs_tol.max(rel_tol * f64::abs(value)),
    }
}

/// `1 / (beta cosh(2 pi t / beta))`, whose integral over the real line is 1/2.
pub fn cosh_weight(t: f64, beta: f64) -> f64 {
    let x = 2.0 * std::f64::consts::PI * t / beta;
    if x.abs() > 700.0 {
        return 0.0;
    }
    1.0 / (beta * x.cosh())
}

/// Half-width `T` such that `C * (2/pi) exp(-2 pi T / beta) <= tail_tol`, which
/// bounds the weighted tail `int_{|t|>T} C w(t) dt` of a function bounded by `C`.
pub fn tail_cutoff(bound: f64, beta: f64, tail_tol: f64) -> f64 {
    let b = bound.max(f64::MIN_POSITIVE);
    let t = beta / (2.0 * std::f64::consts::PI) * ((2.0 * b / std::f64::consts::PI) / tail_tol).ln();
    t.max(beta)
}

/// Upper bound on `int_{|t|>T} w(t) dt` for the cosh weight.
pub fn tail_mass(t_cut: f64, beta: f64) -> f64 {
    2.0 / std::f64::consts::PI * (-2.0 * std::f64::consts::PI * t_cut / beta).exp()
}
