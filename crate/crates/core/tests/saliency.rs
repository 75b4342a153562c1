mod common;

use common::{fd_scalar_input_gradient, rel_err, rng, safe_inputs};
use fairmtl::data::{generate_synthetic, SyntheticSpec, SYNTHETIC_PROTECTED};
use fairmtl::mtl::{build_single_task, train_mtl, MtlArch, MtlTrainConfig};
use fairmtl::nn::{Activation, DropoutSpec, MaskMode, NetworkParams};
use fairmtl::saliency::{mtl_target_saliency, saliency_map, SaliencyTarget};
use fairmtl::Matrix;

fn score(net: &NetworkParams, x: &[f64]) -> f64 {
    let (_, cache) = net.forward(x, MaskMode::Off).unwrap();
    cache.pre_activation(net.layers().len() - 1)[0]
}

#[test]
fn two_layer_saliency_matches_finite_differences() {
    let mut r = rng(5);
    for seed in 0..20 {
        let net = NetworkParams::mlp(4, &[6], Some((1, Activation::Sigmoid)), DropoutSpec::none(), seed).unwrap();
        let rows = safe_inputs(&net, &mut r, 5, None);
        let x = Matrix::from_rows(&rows).unwrap();
        let score_grads = saliency_map(&net, &x, SaliencyTarget::Score).unwrap();
        let prob_grads = saliency_map(&net, &x, SaliencyTarget::Probability).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let numeric = fd_scalar_input_gradient(|v| score(&net, v), row);
            for (a, n) in score_grads.row(i).iter().zip(&numeric) {
                assert!(rel_err(*a, *n) < 1e-4, "score: analytic {a} numeric {n}");
            }
            let numeric = fd_scalar_input_gradient(|v| net.forward(v, MaskMode::Off).unwrap().0, row);
            for (a, n) in prob_grads.row(i).iter().zip(&numeric) {
                assert!(rel_err(*a, *n) < 1e-4, "probability: analytic {a} numeric {n}");
            }
        }
    }
}

#[test]
fn composed_model_saliency_equals_mtl_target_path() {
    let data = generate_synthetic(&SyntheticSpec {
        n_samples: 500,
        bias_strength: 0.5,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .0;
    let cfg = MtlTrainConfig {
        arch: MtlArch {
            hidden: vec![8, 4],
            ..MtlArch::default()
        },
        epochs: 3,
        summary_passes: 3,
        ..MtlTrainConfig::new(SYNTHETIC_PROTECTED)
    };
    let set = train_mtl(&data, &cfg).unwrap();
    for snap in &set.snapshots {
        let single = build_single_task(&snap.network).unwrap();
        for target in [SaliencyTarget::Score, SaliencyTarget::Probability] {
            let a = saliency_map(&single, data.features(), target).unwrap();
            let b = mtl_target_saliency(&snap.network, data.features(), target).unwrap();
            assert_eq!(a, b);
        }
    }
}
