mod common;

use common::{check_network, random_network, rng};
use fairmtl::nn::LossSpec;

#[test]
fn bce_gradients_match_central_differences() {
    let mut r = rng(11);
    for _ in 0..30 {
        let net = random_network(&mut r);
        let c = check_network(&net, &mut r, &LossSpec::bce(), false);
        assert!(c.max_param_rel < 1e-4, "param rel err {}", c.max_param_rel);
        assert!(c.max_input_rel < 1e-4, "input rel err {}", c.max_input_rel);
    }
}

#[test]
fn focal_gradients_match_central_differences_under_dropout() {
    let mut r = rng(12);
    let spec = LossSpec::focal(2.0, 4.0).with_sample_weights(vec![1.0, 0.5, 2.0, 1.5]);
    for _ in 0..30 {
        let net = random_network(&mut r);
        let c = check_network(&net, &mut r, &spec, true);
        assert!(c.max_param_rel < 1e-4, "param rel err {}", c.max_param_rel);
        assert!(c.max_input_rel < 1e-4, "input rel err {}", c.max_input_rel);
    }
}
