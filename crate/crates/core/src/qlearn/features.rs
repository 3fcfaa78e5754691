use crate::gridworld::{EnvState, Mission, ACTION_COUNT};

/// Input width for a fleet of `k` drones and `k` tasks.
pub fn feature_dim(k: usize) -> usize {
    7 * k
}

/// Encodes the joint state from `drone`'s point of view.
///
/// Layout: `(x, y, τ/τ_max)` per task in task order, then drone positions,
/// last actions and battery fractions, each rotated so that `drone` comes
/// first. Everything lies in `[0, 1]` except battery fractions, which go
/// negative once a drone overdraws.
pub fn encode_state(state: &EnvState, drone: usize, mission: &Mission) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_dim(state.drones.len()));
    encode_state_into(state, drone, mission, &mut out);
    out
}

pub(crate) fn encode_state_into(
    state: &EnvState,
    drone: usize,
    mission: &Mission,
    out: &mut Vec<f64>,
) {
    let grid = mission.grid();
    let sx = 1.0 / (grid.width - 1) as f64;
    let sy = 1.0 / (grid.height - 1) as f64;
    let tau_scale = 1.0 / f64::from(mission.config().max_task_length());
    let capacity = mission.battery_capacity();
    let k = state.drones.len();
    out.clear();

    for task in &state.tasks {
        let (x, y) = grid.coords(task.location);
        out.extend([
            x as f64 * sx,
            y as f64 * sy,
            f64::from(task.remaining) * tau_scale,
        ]);
    }
    let order = || (0..k).map(|i| (drone + i) % k);
    for j in order() {
        let (x, y) = grid.coords(state.drones[j].location);
        out.extend([x as f64 * sx, y as f64 * sy]);
    }
    let action_scale = 1.0 / (ACTION_COUNT - 1) as f64;
    out.extend(order().map(|j| state.last_actions[j].index() as f64 * action_scale));
    out.extend(order().map(|j| state.drones[j].battery / capacity));
}
