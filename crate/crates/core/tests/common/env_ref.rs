//! A stand-alone interpreter for a 2×2 grid with one drone and one task.

use drone_marl::gridworld::{mission_complete, LayoutTask, LengthPolicy, Placement};
use drone_marl::reward::individual_reward;
use drone_marl::{
    Action, EnvState, EpisodeStatus, Mission, MissionConfig, PowerRates, RewardMode, RewardParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PF: f64 = 2.5;
pub const PH: f64 = 4.0;
pub const PE: f64 = 3.0;
pub const CUTOFF: u32 = 5;

#[derive(Debug, Clone, Copy)]
pub struct Ref {
    x: i64,
    y: i64,
    battery: f64,
    task: (i64, i64),
    remaining: u32,
    time: u32,
}

pub const DELTAS: [(i64, i64); 8] = [
    (0, 1),
    (0, -1),
    (1, 0),
    (-1, 0),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-1, -1),
];

/// `None` for an off-grid move, else the next state and the reward.
pub fn ref_step(s: Ref, a: usize, capacity: f64) -> Option<(Ref, f64)> {
    let mut n = s;
    let mut progress = 0.0;
    match a {
        0..=7 => {
            let (dx, dy) = DELTAS[a];
            let (x, y) = (s.x + dx, s.y + dy);
            if !(0..2).contains(&x) || !(0..2).contains(&y) {
                return None;
            }
            n.x = x;
            n.y = y;
            n.battery -= if dx != 0 && dy != 0 {
                PF
            } else {
                PF / 2f64.sqrt() + PH * (1.0 - 1.0 / 2f64.sqrt())
            };
        }
        8 => {
            if (s.x, s.y) != (0, 0) {
                n.battery -= PH;
            }
        }
        _ => {
            n.battery -= PH + PE;
            if (s.x, s.y) == s.task && s.remaining > 0 {
                n.remaining -= 1;
                progress = 1.0;
            }
        }
    }
    n.time += 1;
    let mut reward = progress;
    if n.remaining == 0 {
        let need = PF * (((n.x * n.x + n.y * n.y) as f64) / 2.0).sqrt();
        reward += if n.battery >= need {
            10.0 * n.battery / capacity
        } else {
            -5.0
        };
    }
    Some((n, reward))
}

pub fn ref_status(s: &Ref) -> EpisodeStatus {
    if s.remaining == 0 {
        EpisodeStatus::Done
    } else if s.time >= CUTOFF {
        EpisodeStatus::TimedOut
    } else {
        EpisodeStatus::Running
    }
}

pub fn check(m: &Mission, st: &EnvState, r: &Ref) {
    let (x, y) = m.grid().coords(st.drones[0].location);
    assert_eq!((x as i64, y as i64), (r.x, r.y));
    assert!(
        (st.drones[0].battery - r.battery).abs() < 1e-9,
        "{} vs {}",
        st.drones[0].battery,
        r.battery
    );
    assert_eq!(st.tasks[0].remaining, r.remaining);
    assert_eq!(st.time_step, r.time);
    assert_eq!(m.status(st), ref_status(r));
    assert_eq!(mission_complete(st), r.remaining == 0);
    if r.remaining == 0 {
        let need = PF * (((r.x * r.x + r.y * r.y) as f64) / 2.0).sqrt();
        assert_eq!(m.mission_success(st).unwrap(), r.battery >= need);
    } else {
        assert!(m.mission_success(st).is_err());
    }
}

pub fn dfs(
    m: &Mission,
    st: &EnvState,
    r: Ref,
    depth: usize,
    params: &RewardParams,
    visited: &mut usize,
) {
    *visited += 1;
    check(m, st, &r);
    if depth == 0 || mission_complete(st) {
        return;
    }
    for a in 0..10 {
        let action = Action::from_index(a).unwrap();
        let legal = m.legal_actions(st, 0).unwrap().contains(action);
        match ref_step(r, a, m.battery_capacity()) {
            None => {
                assert!(!legal);
                assert!(m.apply_action(st, 0, action).is_err());
            }
            Some((next_ref, ref_reward)) => {
                assert!(legal);
                let (mut next, outcome) = m.apply_action(st, 0, action).unwrap();
                let reward = individual_reward(st, &next, 0, params, m).unwrap();
                assert!(
                    (reward - ref_reward).abs() < 1e-9,
                    "{reward} vs {ref_reward}"
                );
                assert_eq!(outcome.mission_done, next_ref.remaining == 0);
                m.advance_clock(&mut next);
                dfs(m, &next, next_ref, depth - 1, params, visited);
            }
        }
    }
}

/// Walks every action sequence up to length six on each 2×2 layout and
/// returns the number of states compared.
pub fn enumerate_all() -> usize {
    let params = RewardParams {
        mode: RewardMode::Individual,
        alpha: 10.0,
        beta: 5.0,
    };
    let mut visited = 0;
    for (tx, ty) in [(1, 0), (0, 1), (1, 1)] {
        for battery in [40.0, 1800.0] {
            let config = MissionConfig {
                grid: drone_marl::GridSpec::new(2, 2).unwrap(),
                task_count: 1,
                placement: Placement::Fixed(vec![LayoutTask {
                    x: tx,
                    y: ty,
                    length: 2,
                }]),
                lengths: LengthPolicy::Layout,
                battery_capacity: battery,
                episode_cutoff: CUTOFF,
            };
            let m = Mission::new(config, PowerRates::simulation()).unwrap();
            let st = m.reset(&mut ChaCha8Rng::seed_from_u64(0));
            let r = Ref {
                x: 0,
                y: 0,
                battery,
                task: (tx as i64, ty as i64),
                remaining: 2,
                time: 0,
            };
            dfs(&m, &st, r, 6, &params, &mut visited);
        }
    }
    visited
}
