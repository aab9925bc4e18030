#![allow(dead_code)]

use defuzz::predictor::{loss_and_grad, Dims, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Largest relative error, per tensor, between analytic gradients and
/// central differences with step `eps`. Entries where both are below
/// `floor` in magnitude compare against `floor`.
pub fn gradient_check(eps: f64, floor: f64) -> Vec<(String, f64)> {
    let dims = Dims { vocab: 9, embed: 4, hidden: 4, attn: 4, max_len: 8 };
    let mut params = ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(21));
    let batch = vec![(vec![2, 5, 3, 8, 1, 0, 0, 0], true), (vec![7, 4, 4, 6, 2, 3, 0, 0], false)];
    let w_pos = 2.5;
    let (_, grads) = loss_and_grad(&params, &batch, w_pos).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.data.clone())).collect();
    let mut out = Vec::new();
    for (k, (name, g)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let orig = params.tensors_mut()[k].data[i];
            params.tensors_mut()[k].data[i] = orig + eps;
            let up = loss_and_grad(&params, &batch, w_pos).unwrap().0;
            params.tensors_mut()[k].data[i] = orig - eps;
            let down = loss_and_grad(&params, &batch, w_pos).unwrap().0;
            params.tensors_mut()[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - g[i]).abs() / numeric.abs().max(g[i].abs()).max(floor);
            worst = worst.max(rel);
        }
        out.push((name.clone(), worst));
    }
    out
}
