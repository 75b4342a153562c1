mod common;

use common::rng;
use fairmtl::mc::mc_predict;
use fairmtl::nn::{Activation, DropoutSpec, NetworkParams};
use fairmtl::Matrix;
use rand::Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median over samples of `|p_T - p_2T|`, averaged over seeds. The two estimates use
/// disjoint seeds so they are independent draws.
fn gap(net: &NetworkParams, x: &Matrix, t: usize, seeds: u64) -> f64 {
    (0..seeds)
        .map(|s| {
            let a = mc_predict(net, x, t, 2 * s).unwrap();
            let b = mc_predict(net, x, 2 * t, 2 * s + 1).unwrap();
            median(
                a.posterior_mean
                    .iter()
                    .zip(&b.posterior_mean)
                    .map(|(p, q)| (p - q).abs())
                    .collect(),
            )
        })
        .sum::<f64>()
        / seeds as f64
}

#[test]
fn posterior_mean_converges_as_passes_grow() {
    let dropout = DropoutSpec::new(0.3, vec![0, 1], 0).unwrap();
    let net = NetworkParams::mlp(5, &[16, 8], Some((1, Activation::Sigmoid)), dropout, 7).unwrap();
    let mut r = rng(3);
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..5).map(|_| r.gen_range(-2.0..2.0)).collect())
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let gaps: Vec<f64> = [10, 100, 1000].iter().map(|&t| gap(&net, &x, t, 8)).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn variance_matches_alternate_formula() {
    // E[x^2] - E[x]^2 computed independently of the library's two-pass routine.
    let dropout = DropoutSpec::new(0.5, vec![0], 0).unwrap();
    let net = NetworkParams::mlp(3, &[10], Some((1, Activation::Sigmoid)), dropout, 1).unwrap();
    let x = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.5, 0.5, -0.5]]).unwrap();
    let res = mc_predict(&net, &x, 200, 9).unwrap();
    for i in 0..res.len() {
        let row = res.outputs.row(i);
        let t = row.len() as f64;
        let m = row.iter().sum::<f64>() / t;
        let m2 = row.iter().map(|v| v * v).sum::<f64>() / t;
        assert!((res.uncertainty[i] - (m2 - m * m)).abs() < 1e-12);
        assert!((res.posterior_mean[i] - m).abs() < 1e-12);
    }
}
