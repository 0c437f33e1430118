#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transduce_core::dataset::LabeledSet;
use transduce_core::nets::Parameters;

pub fn flat<P: Parameters + ?Sized>(p: &P) -> Vec<f64> {
    p.blocks().into_iter().flat_map(|(_, b)| b.to_vec()).collect()
}

fn nudge<P: Parameters>(p: &mut P, i: usize, by: f64) {
    let mut i = i;
    for block in p.blocks_mut() {
        if i < block.len() {
            block[i] += by;
            return;
        }
        i -= block.len();
    }
    panic!("coordinate out of range");
}

/// Largest per-coordinate relative error between `analytic` and central
/// differences of `loss`. The denominator is floored so coordinates whose
/// true gradient is zero are judged on absolute error.
pub fn max_fd_error<P, F>(params: &P, analytic: &[f64], h: f64, loss: F) -> (f64, usize)
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let n = analytic.len();
    assert_eq!(n, params.n_params());
    let mut worst = (0.0, 0);
    for i in 0..n {
        let mut plus = params.clone();
        nudge(&mut plus, i, h);
        let mut minus = params.clone();
        nudge(&mut minus, i, -h);
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        let err = (analytic[i] - numeric).abs() / denom;
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}

pub fn random_set(n: usize, d: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let y = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    LabeledSet::new((0..n).map(|i| format!("p{i:04}")).collect(), x, y).unwrap()
}

/// `x in {0..9}` (ids sorted by x), `y = 2x`.
pub fn line_set(xs: &[f64]) -> LabeledSet {
    let x = Array2::from_shape_fn((xs.len(), 1), |(i, _)| xs[i]);
    LabeledSet::new(
        (0..xs.len()).map(|i| format!("x{i:02}")).collect(),
        x,
        xs.iter().map(|v| 2.0 * v).collect(),
    )
    .unwrap()
}
