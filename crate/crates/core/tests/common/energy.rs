use drone_marl::energy::{forward_power, hover_power, solve_induced_velocity};
use drone_marl::PhysicalParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Right-hand side of the induced-velocity equation, written out from the
/// raw parameters.
pub fn rhs(p: &PhysicalParams, v_s: f64) -> f64 {
    let t = p.mass * p.gravity + p.drag_force;
    let a = p.speed * p.pitch_angle.cos();
    let b = p.speed * p.pitch_angle.sin() + v_s;
    2.0 * t
        / (PI
            * f64::from(p.rotor_count)
            * p.rotor_diameter.powi(2)
            * p.air_density
            * (a * a + b * b).sqrt())
}

/// Root of `v - rhs(v)` by bisection. The residual is increasing in `v`,
/// negative at 0 and positive at `rhs(0)`.
pub fn bisect(p: &PhysicalParams) -> f64 {
    let (mut lo, mut hi) = (0.0, rhs(p, 0.0) + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid - rhs(p, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn direct_forward(p: &PhysicalParams, v_s: f64) -> f64 {
    (p.mass * p.gravity + p.drag_force) * (p.speed * p.pitch_angle.sin() + v_s)
        / p.battery_efficiency
}

pub fn direct_hover(p: &PhysicalParams) -> f64 {
    let t = p.mass * p.gravity + p.drag_force;
    t.powf(1.5)
        / (p.battery_efficiency
            * (0.5 * PI * f64::from(p.rotor_count) * p.rotor_diameter.powi(2) * p.air_density)
                .sqrt())
}

pub fn random_params(rng: &mut ChaCha8Rng) -> PhysicalParams {
    PhysicalParams {
        rotor_diameter: rng.gen_range(0.1..0.6),
        rotor_count: rng.gen_range(1..=8),
        mass: rng.gen_range(0.5..10.0),
        gravity: 9.81,
        speed: rng.gen_range(1.0..20.0),
        pitch_angle: rng.gen_range(0.0..0.5),
        battery_efficiency: rng.gen_range(0.3..1.0),
        air_density: rng.gen_range(0.9..1.4),
        drag_force: rng.gen_range(0.0..5.0),
    }
}

/// Worst induced-velocity residual and worst relative power errors over
/// `n` random parameter sets.
pub fn worst_errors(n: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut residual, mut forward, mut hover) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let p = random_params(&mut rng);
        let v_s = solve_induced_velocity(&p).unwrap();
        let oracle = bisect(&p);
        residual = residual
            .max((v_s - oracle).abs() / oracle)
            .max((v_s - rhs(&p, v_s)).abs() / v_s);
        let pf = direct_forward(&p, v_s);
        forward = forward.max((forward_power(&p, v_s) - pf).abs() / pf);
        let ph = direct_hover(&p);
        hover = hover.max((hover_power(&p) - ph).abs() / ph);
    }
    (residual, forward, hover)
}
