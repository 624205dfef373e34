//! Oracles shared by the integration tests.
#![allow(dead_code)]

use fw_merge::toy::{CalibrationBatch, MlpArch, MultiTaskObjective, TaskSpec};
use fw_merge::{Objective, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Architectures the gradient check runs over.
pub fn arch_matrix() -> Vec<MlpArch> {
    vec![
        MlpArch::new(3, vec![], 2),
        MlpArch::new(4, vec![5], 3),
        MlpArch::new(6, vec![8, 7], 4),
        MlpArch::new(16, vec![32, 32], 4),
    ]
}

/// Largest relative error between the analytic gradient and central finite
/// differences over `samples` random coordinates.
pub fn max_fd_relative_error(obj: &impl Objective, theta: &ParamSet, samples: usize, seed: u64, h: f64) -> f64 {
    let (_, grad) = obj.loss_and_grad(theta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.random_range(0..theta.total_dim());
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        let x = theta.get_flat(i).unwrap();
        plus.set_flat(i, x + h);
        minus.set_flat(i, x - h);
        let fd = (obj.loss(&plus).unwrap() - obj.loss(&minus).unwrap()) / (2.0 * h);
        let an = grad.get_flat(i).unwrap();
        let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

/// A small multi-task objective with random (non-zero) parameters for `arch`.
pub fn random_instance(arch: &MlpArch, seed: u64) -> (MultiTaskObjective, ParamSet) {
    let batches: Vec<CalibrationBatch> = (0..2)
        .map(|t| {
            let spec = TaskSpec::new(format!("g{t}"), seed * 10 + t, arch.input_dim, arch.num_classes);
            spec.generate().unwrap().0.head(12)
        })
        .collect();
    let mut theta = arch.init(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // non-zero biases so every parameter carries gradient
    for i in 0..theta.total_dim() {
        let x = theta.get_flat(i).unwrap();
        theta.set_flat(i, x + 0.1 * (rng.random::<f64>() - 0.5));
    }
    (MultiTaskObjective::new(arch.clone(), batches).unwrap(), theta)
}

pub fn random_params(rng: &mut ChaCha8Rng, layers: &[(&str, usize)], scale: f64) -> ParamSet {
    ParamSet::from_layers(
        layers
            .iter()
            .map(|(n, d)| (*n, vec![*d], (0..*d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect())),
    )
    .unwrap()
}
