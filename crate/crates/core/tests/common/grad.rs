use drone_marl::gridworld::ActionMask;
use drone_marl::qlearn::{batch_loss, batch_loss_and_gradient, Adam, Experience, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SHAPES: [&[usize]; 4] = [
    &[3, 4, 10],
    &[5, 8, 6, 10],
    &[8, 16, 16, 10],
    &[2, 3, 3, 10],
];

pub fn random_batch(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> (Vec<Experience>, Vec<f64>) {
    let batch: Vec<Experience> = (0..n)
        .map(|_| Experience {
            state: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: rng.gen_range(0..10),
            reward: rng.gen_range(-1.0..1.0),
            next_state: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminal: rng.gen_bool(0.3),
            next_legal: ActionMask::ALL,
        })
        .collect();
    let targets = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (batch, targets)
}

/// Worst relative error between backprop and central differences.
pub fn finite_difference_error(dims: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(dims, &mut rng).unwrap();
    // nonzero biases so every parameter class is exercised
    let mut params = net.params().to_vec();
    for p in &mut params {
        *p += rng.gen_range(-0.05..0.05);
    }
    let net = Mlp::from_parts(dims, params).unwrap();
    let (batch, targets) = random_batch(&mut rng, dims[0], 4);
    let (_, grad) = batch_loss_and_gradient(&net, &batch, &targets).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let numeric = (batch_loss(&plus, &batch, &targets).unwrap()
            - batch_loss(&minus, &batch, &targets).unwrap())
            / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[i] - numeric).abs() / scale);
    }
    worst
}

/// Adam losses while fitting one random sample to a fixed target.
pub fn overfit_losses(steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(&[6, 16, 16, 10], &mut rng).unwrap();
    let (batch, _) = random_batch(&mut rng, 6, 1);
    let targets = vec![3.0];
    let mut adam = Adam::new(net.params().len(), 1e-3);
    let mut losses = Vec::new();
    for _ in 0..steps {
        let (loss, grad) = batch_loss_and_gradient(&net, &batch, &targets).unwrap();
        losses.push(loss);
        adam.step(net.params_mut(), &grad);
    }
    losses.push(batch_loss(&net, &batch, &targets).unwrap());
    losses
}
