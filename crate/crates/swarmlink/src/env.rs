//! Planar multi-UAV world: double-integrator kinematics with wind
//! perturbation, destination/collision rewards, event detection, and the
//! episode lifecycle. Agents fly at a fixed altitude; arrived agents freeze
//! in place for the rest of the episode but keep contributing to the other
//! agents' proximity penalty.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Distance floor that keeps the proximity penalty finite on coincident
/// positions.
pub const DISTANCE_FLOOR_M: f64 = 1e-3;

/// Per-agent planar state at fixed altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    /// Position in meters, within the region after clamping.
    pub position: [f64; 2],
    /// Velocity in meters/second, magnitude clipped to the configured limit.
    pub velocity: [f64; 2],
    /// Constant flight altitude in meters (kept for path-loss geometry).
    pub altitude: f64,
}

impl UavState {
    pub fn at(position: [f64; 2], altitude: f64) -> Self {
        Self { position, velocity: [0.0, 0.0], altitude }
    }

    pub fn distance_to(&self, other: &UavState) -> f64 {
        let dx = self.position[0] - other.position[0];
        let dy = self.position[1] - other.position[1];
        (dx * dx + dy * dy).sqrt()
    }
}

/// Planar acceleration command, magnitude clipped to the configured limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub acceleration: [f64; 2],
}

impl ControlAction {
    pub fn new(acceleration: [f64; 2]) -> Self {
        Self { acceleration }
    }

    pub fn zero() -> Self {
        Self { acceleration: [0.0, 0.0] }
    }
}

/// World geometry, limits, and reward constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_agents: usize,
    /// Side of the square region, meters; positions live in [0, side]^2.
    pub region_side_m: f64,
    pub altitude_m: f64,
    /// Common destination (planar projection of the goal state), meters.
    pub destination_m: [f64; 2],
    /// Cap on the destination reward.
    pub goal_reward_cap: f64,
    pub collision_radius_m: f64,
    pub goal_radius_m: f64,
    /// Std. dev. of the zero-mean Gaussian acceleration perturbation, m/s^2.
    pub wind_std: f64,
    pub a_max: f64,
    pub v_max: f64,
    pub max_episode_steps: usize,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_agents < 2 {
            return Err("n_agents: must be >= 2".into());
        }
        for (name, v) in [
            ("region_side_m", self.region_side_m),
            ("altitude_m", self.altitude_m),
            ("collision_radius_m", self.collision_radius_m),
            ("goal_radius_m", self.goal_radius_m),
            ("a_max", self.a_max),
            ("v_max", self.v_max),
        ] {
            if v <= 0.0 {
                return Err(format!("{name}: must be positive"));
            }
        }
        if self.goal_reward_cap <= 0.0 {
            return Err("goal_reward_cap: must be positive".into());
        }
        if self.wind_std < 0.0 {
            return Err("wind_std: must be non-negative".into());
        }
        if self.max_episode_steps == 0 {
            return Err("max_episode_steps: must be positive".into());
        }
        Ok(())
    }
}

/// Result of stepping the whole swarm by one control interval.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_states: Vec<UavState>,
    /// Per-agent reward: destination term plus proximity penalty.
    pub rewards: Vec<f64>,
    /// Unordered collided pairs (i < j), reported symmetrically.
    pub collided_pairs: Vec<(usize, usize)>,
    /// Per-agent arrival flags (within the goal radius now or earlier).
    pub arrived: Vec<bool>,
    /// True once the episode hit its step limit.
    pub episode_over: bool,
}

/// Uniform initial placement, zero velocities; deterministic for a seed.
pub fn reset(rng_seed: u64, cfg: &WorldConfig) -> Vec<UavState> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..cfg.n_agents)
        .map(|_| UavState {
            position: [
                rng.gen_range(0.0..cfg.region_side_m),
                rng.gen_range(0.0..cfg.region_side_m),
            ],
            velocity: [0.0, 0.0],
            altitude: cfg.altitude_m,
        })
        .collect()
}

/// Double-integrator update with magnitude clipping:
/// `v' = clip(v + (a + wind) dt)`, `p' = clip(p + v dt + (a + wind) dt^2 / 2)`.
/// The action is clipped to `a_max` before wind is added; out-of-range
/// inputs are clipped, never rejected.
pub fn step_dynamics(
    state: &UavState,
    action: &ControlAction,
    wind: [f64; 2],
    dt: f64,
    cfg: &WorldConfig,
) -> UavState {
    debug_assert!(dt > 0.0);
    let a = clip_magnitude(action.acceleration, cfg.a_max);
    let ax = a[0] + wind[0];
    let ay = a[1] + wind[1];
    let v = [
        state.velocity[0] + ax * dt,
        state.velocity[1] + ay * dt,
    ];
    let v = clip_magnitude(v, cfg.v_max);
    let p = [
        (state.position[0] + state.velocity[0] * dt + 0.5 * ax * dt * dt)
            .clamp(0.0, cfg.region_side_m),
        (state.position[1] + state.velocity[1] * dt + 0.5 * ay * dt * dt)
            .clamp(0.0, cfg.region_side_m),
    ];
    UavState { position: p, velocity: v, altitude: state.altitude }
}

fn clip_magnitude(v: [f64; 2], max: f64) -> [f64; 2] {
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if norm > max {
        let s = max / norm;
        [v[0] * s, v[1] * s]
    } else {
        v
    }
}

/// Destination reward `min(1 / sqrt(||p - g||), r_g)`; the cap removes the
/// singularity at the goal.
pub fn positive_reward(state: &UavState, cfg: &WorldConfig) -> f64 {
    let dx = state.position[0] - cfg.destination_m[0];
    let dy = state.position[1] - cfg.destination_m[1];
    let d = (dx * dx + dy * dy).sqrt();
    if d == 0.0 {
        return cfg.goal_reward_cap;
    }
    (1.0 / d.sqrt()).min(cfg.goal_reward_cap)
}

/// Proximity penalty `-(1/N) sum_{m != n} 1 / sqrt(||p_n - p_m||)`, with
/// distances floored at [`DISTANCE_FLOOR_M`] to stay finite.
pub fn negative_reward(agent: usize, states: &[UavState], cfg: &WorldConfig) -> f64 {
    let n = cfg.n_agents as f64;
    let mut sum = 0.0;
    for (m, other) in states.iter().enumerate() {
        if m == agent {
            continue;
        }
        let d = states[agent].distance_to(other).max(DISTANCE_FLOOR_M);
        sum += 1.0 / d.sqrt();
    }
    -sum / n
}

/// Collision pairs (distance below the collision radius) and arrival flags
/// (within the goal radius).
pub fn detect_events(states: &[UavState], cfg: &WorldConfig) -> (Vec<(usize, usize)>, Vec<bool>) {
    let mut pairs = Vec::new();
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            if states[i].distance_to(&states[j]) < cfg.collision_radius_m {
                pairs.push((i, j));
            }
        }
    }
    let arrived = states
        .iter()
        .map(|s| {
            let dx = s.position[0] - cfg.destination_m[0];
            let dy = s.position[1] - cfg.destination_m[1];
            (dx * dx + dy * dy).sqrt() <= cfg.goal_radius_m
        })
        .collect();
    (pairs, arrived)
}

/// Zero-mean isotropic Gaussian acceleration perturbation, resampled each
/// control step per agent.
pub fn sample_wind(rng: &mut impl Rng, cfg: &WorldConfig) -> [f64; 2] {
    if cfg.wind_std == 0.0 {
        return [0.0, 0.0];
    }
    let normal = Normal::new(0.0, cfg.wind_std).expect("wind_std validated non-negative");
    [normal.sample(rng), normal.sample(rng)]
}

/// Mutable episode state: owns the RNG stream for wind, tracks arrivals and
/// the step count.
pub struct World {
    pub cfg: WorldConfig,
    pub states: Vec<UavState>,
    pub arrived: Vec<bool>,
    /// Simulated seconds since reset (sum of control intervals).
    pub time_s: f64,
    /// Per-agent arrival time in seconds; episode duration if never arrived.
    pub arrival_time_s: Vec<Option<f64>>,
    pub step_count: usize,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(cfg: WorldConfig, seed: u64) -> Self {
        use rand::SeedableRng;
        let states = reset(seed, &cfg);
        let n = cfg.n_agents;
        // The placement RNG is separate so wind draws cannot shift layouts.
        let rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77_69_6e_64);
        let mut world = Self {
            cfg,
            states,
            arrived: vec![false; n],
            time_s: 0.0,
            arrival_time_s: vec![None; n],
            step_count: 0,
            rng,
        };
        // Agents that happen to start inside the goal ring count as arrived
        // at t = 0.
        let (_, arrived) = detect_events(&world.states, &world.cfg);
        for i in 0..n {
            if arrived[i] {
                world.arrived[i] = true;
                world.arrival_time_s[i] = Some(0.0);
            }
        }
        world
    }

    pub fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    /// Advance the swarm one control interval. Arrived agents ignore their
    /// actions and stay frozen; everyone still appears in rewards and
    /// collision checks. The initial reward (before any step) is zero by
    /// definition; rewards returned here are for t >= 1.
    pub fn step(&mut self, actions: &[ControlAction], dt: f64) -> StepOutcome {
        assert_eq!(actions.len(), self.cfg.n_agents);
        let mut next = Vec::with_capacity(self.states.len());
        for (i, state) in self.states.iter().enumerate() {
            if self.arrived[i] {
                next.push(*state);
            } else {
                let wind = sample_wind(&mut self.rng, &self.cfg);
                next.push(step_dynamics(state, &actions[i], wind, dt, &self.cfg));
            }
        }
        self.states = next;
        self.time_s += dt;
        self.step_count += 1;

        let (collided_pairs, arrived_now) = detect_events(&self.states, &self.cfg);
        for i in 0..self.cfg.n_agents {
            if arrived_now[i] && !self.arrived[i] {
                self.arrived[i] = true;
                self.arrival_time_s[i] = Some(self.time_s);
            }
        }
        let rewards: Vec<f64> = (0..self.cfg.n_agents)
            .map(|i| {
                positive_reward(&self.states[i], &self.cfg)
                    + negative_reward(i, &self.states, &self.cfg)
            })
            .collect();
        StepOutcome {
            next_states: self.states.clone(),
            rewards,
            collided_pairs,
            arrived: self.arrived.clone(),
            episode_over: self.step_count >= self.cfg.max_episode_steps,
        }
    }

    /// Travel time per agent: arrival time, or the episode duration so far
    /// for agents that never arrived.
    pub fn travel_times(&self) -> Vec<f64> {
        self.arrival_time_s
            .iter()
            .map(|t| t.unwrap_or(self.time_s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_cfg() -> WorldConfig {
        WorldConfig {
            n_agents: 4,
            region_side_m: 1000.0,
            altitude_m: 50.0,
            destination_m: [0.0, 0.0],
            goal_reward_cap: 1.0,
            collision_radius_m: 5.0,
            goal_radius_m: 10.0,
            wind_std: 0.2,
            a_max: 5.0,
            v_max: 30.0,
            max_episode_steps: 100,
        }
    }

    #[test]
    fn reset_in_range_zero_velocity() {
        let cfg = test_cfg();
        let states = reset(7, &cfg);
        assert_eq!(states.len(), 4);
        for s in &states {
            assert!(s.position.iter().all(|p| (0.0..=1000.0).contains(p)));
            assert_eq!(s.velocity, [0.0, 0.0]);
            assert_eq!(s.altitude, 50.0);
        }
    }

    #[test]
    fn reset_deterministic_per_seed() {
        let cfg = test_cfg();
        assert_eq!(reset(7, &cfg), reset(7, &cfg));
        let a = reset(7, &cfg);
        let b = reset(8, &cfg);
        assert!(a.iter().zip(&b).any(|(x, y)| x.position != y.position));
    }

    #[test]
    fn dynamics_rest_stays_at_rest() {
        let cfg = test_cfg();
        let s = UavState::at([0.0, 0.0], 50.0);
        let s2 = step_dynamics(&s, &ControlAction::zero(), [0.0, 0.0], 0.1, &cfg);
        assert_eq!(s2.position, [0.0, 0.0]);
        assert_eq!(s2.velocity, [0.0, 0.0]);
    }

    #[test]
    fn dynamics_uniform_motion() {
        let cfg = test_cfg();
        let s = UavState { position: [0.0, 0.0], velocity: [10.0, 0.0], altitude: 50.0 };
        let s2 = step_dynamics(&s, &ControlAction::zero(), [0.0, 0.0], 0.1, &cfg);
        assert!((s2.position[0] - 1.0).abs() < 1e-12);
        assert_eq!(s2.velocity, [10.0, 0.0]);
    }

    #[test]
    fn dynamics_accelerated_from_rest() {
        let cfg = test_cfg();
        let s = UavState::at([0.0, 0.0], 50.0);
        let s2 = step_dynamics(&s, &ControlAction::new([2.0, 0.0]), [0.0, 0.0], 0.1, &cfg);
        assert!((s2.velocity[0] - 0.2).abs() < 1e-12);
        assert!((s2.position[0] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn dynamics_clips_action_velocity_and_region() {
        let cfg = test_cfg();
        let s = UavState { position: [999.0, 0.0], velocity: [29.0, 0.0], altitude: 50.0 };
        // over-limit action gets clipped to a_max before integrating
        let s2 = step_dynamics(&s, &ControlAction::new([100.0, 0.0]), [0.0, 0.0], 1.0, &cfg);
        let vmag = (s2.velocity[0].powi(2) + s2.velocity[1].powi(2)).sqrt();
        assert!(vmag <= cfg.v_max + 1e-12);
        assert!(s2.position[0] <= cfg.region_side_m);
    }

    #[test]
    fn positive_reward_examples() {
        let cfg = test_cfg();
        // at distance 1, 1/sqrt(1) = cap
        let s = UavState::at([1.0, 0.0], 50.0);
        assert_eq!(positive_reward(&s, &cfg), 1.0);
        // exactly at the goal the cap dominates the singularity
        let s = UavState::at([0.0, 0.0], 50.0);
        assert_eq!(positive_reward(&s, &cfg), 1.0);
        // at distance 4, 1/sqrt(4) = 0.5
        let s = UavState::at([4.0, 0.0], 50.0);
        assert!((positive_reward(&s, &cfg) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn positive_reward_bounded_and_monotone() {
        let cfg = test_cfg();
        let mut prev = f64::INFINITY;
        for d in [0.5, 1.0, 2.0, 10.0, 500.0, 1e6] {
            let s = UavState::at([d, 0.0], 50.0);
            let r = positive_reward(&s, &cfg);
            assert!(r > 0.0 && r <= cfg.goal_reward_cap);
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn negative_reward_examples() {
        let mut cfg = test_cfg();
        cfg.n_agents = 2;
        let states = vec![UavState::at([0.0, 0.0], 50.0), UavState::at([1.0, 0.0], 50.0)];
        assert!((negative_reward(0, &states, &cfg) + 0.5).abs() < 1e-12);

        let states = vec![UavState::at([0.0, 0.0], 50.0), UavState::at([1e6, 0.0], 50.0)];
        let r = negative_reward(0, &states, &cfg);
        assert!((r + 5e-4).abs() < 1e-6);

        let mut cfg4 = test_cfg();
        cfg4.n_agents = 4;
        let states = vec![
            UavState::at([0.0, 0.0], 50.0),
            UavState::at([4.0, 0.0], 50.0),
            UavState::at([0.0, 4.0], 50.0),
            UavState::at([-4.0, 0.0], 50.0),
        ];
        assert!((negative_reward(0, &states, &cfg4) + 0.375).abs() < 1e-12);
    }

    #[test]
    fn negative_reward_floors_coincident_positions() {
        let mut cfg = test_cfg();
        cfg.n_agents = 2;
        let states = vec![UavState::at([5.0, 5.0], 50.0), UavState::at([5.0, 5.0], 50.0)];
        let r = negative_reward(0, &states, &cfg);
        assert!(r.is_finite());
        assert!((r + 0.5 / DISTANCE_FLOOR_M.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn negative_reward_permutation_invariant() {
        let cfg = test_cfg();
        let states = vec![
            UavState::at([0.0, 0.0], 50.0),
            UavState::at([3.0, 1.0], 50.0),
            UavState::at([9.0, 2.0], 50.0),
            UavState::at([1.0, 7.0], 50.0),
        ];
        let mut permuted = states.clone();
        permuted.swap(1, 3);
        assert!(
            (negative_reward(0, &states, &cfg) - negative_reward(0, &permuted, &cfg)).abs()
                < 1e-15
        );
    }

    #[test]
    fn detect_events_examples() {
        let cfg = test_cfg();
        // identical positions collide
        let states = vec![
            UavState::at([100.0, 100.0], 50.0),
            UavState::at([100.0, 100.0], 50.0),
            UavState::at([500.0, 500.0], 50.0),
            UavState::at([900.0, 900.0], 50.0),
        ];
        let (pairs, _) = detect_events(&states, &cfg);
        assert_eq!(pairs, vec![(0, 1)]);

        // all far apart: empty
        let states = vec![
            UavState::at([0.0, 0.0], 50.0),
            UavState::at([1000.0, 0.0], 50.0),
            UavState::at([0.0, 1000.0], 50.0),
            UavState::at([1000.0, 1000.0], 50.0),
        ];
        let (pairs, arrived) = detect_events(&states, &cfg);
        assert!(pairs.is_empty());
        assert_eq!(arrived, vec![true, false, false, false]); // (0,0) is the goal

        // three mutually close agents: three pairs, brute-force enumerable
        let states = vec![
            UavState::at([500.0, 500.0], 50.0),
            UavState::at([502.0, 500.0], 50.0),
            UavState::at([500.0, 502.0], 50.0),
            UavState::at([900.0, 100.0], 50.0),
        ];
        let (pairs, _) = detect_events(&states, &cfg);
        assert_eq!(pairs.len(), 3);
        let mut expected = vec![];
        for i in 0..4usize {
            for j in (i + 1)..4 {
                if states[i].distance_to(&states[j]) < cfg.collision_radius_m {
                    expected.push((i, j));
                }
            }
        }
        assert_eq!(pairs, expected);
    }

    #[test]
    fn detect_events_relabel_invariant() {
        let cfg = test_cfg();
        let states = vec![
            UavState::at([10.0, 10.0], 50.0),
            UavState::at([12.0, 10.0], 50.0),
            UavState::at([400.0, 400.0], 50.0),
            UavState::at([402.0, 401.0], 50.0),
        ];
        let (pairs, _) = detect_events(&states, &cfg);
        let perm = [2usize, 3, 0, 1];
        let permuted: Vec<UavState> = perm.iter().map(|&i| states[i]).collect();
        let (pairs_p, _) = detect_events(&permuted, &cfg);
        // map permuted pairs back through the relabeling
        let mut mapped: Vec<(usize, usize)> = pairs_p
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (perm[i], perm[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        mapped.sort_unstable();
        let mut orig = pairs.clone();
        orig.sort_unstable();
        assert_eq!(orig, mapped);
    }

    #[test]
    fn wind_zero_std_is_zero() {
        use rand::SeedableRng;
        let mut cfg = test_cfg();
        cfg.wind_std = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_wind(&mut rng, &cfg), [0.0, 0.0]);
        }
    }

    #[test]
    fn wind_monte_carlo_moments() {
        use rand::SeedableRng;
        let cfg = test_cfg(); // wind_std = 0.2
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut sum = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        for _ in 0..n {
            let w = sample_wind(&mut rng, &cfg);
            for k in 0..2 {
                sum[k] += w[k];
                sumsq[k] += w[k] * w[k];
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let std = (sumsq[k] / n as f64 - mean * mean).sqrt();
            // mean within 3 sigma / sqrt(n), std within 2%
            assert!(mean.abs() < 3.0 * cfg.wind_std / (n as f64).sqrt());
            assert!((std - cfg.wind_std).abs() / cfg.wind_std < 0.02);
        }
    }

    #[test]
    fn episode_rollout_reproducible() {
        let cfg = test_cfg();
        let run = |seed: u64| {
            let mut world = World::new(cfg.clone(), seed);
            let mut log = Vec::new();
            for step in 0..50 {
                let actions: Vec<ControlAction> = (0..4)
                    .map(|i| ControlAction::new([((step + i) % 3) as f64 - 1.0, 0.5]))
                    .collect();
                let out = world.step(&actions, 0.1);
                log.push(out.next_states.clone());
                log.last().unwrap().iter().for_each(|s| {
                    assert!(s.position.iter().all(|p| p.is_finite()));
                });
                assert!(out.rewards.iter().all(|r| r.is_finite()));
            }
            log
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn arrived_agents_freeze() {
        let mut cfg = test_cfg();
        cfg.n_agents = 2;
        let mut world = World::new(cfg.clone(), 3);
        // force agent 0 inside the goal ring
        world.states[0] = UavState::at([1.0, 1.0], 50.0);
        let out = world.step(&[ControlAction::new([5.0, 5.0]); 2], 0.1);
        assert!(out.arrived[0]);
        let frozen = world.states[0];
        world.step(&[ControlAction::new([5.0, 5.0]); 2], 0.1);
        assert_eq!(world.states[0], frozen);
        assert_eq!(world.arrival_time_s[0], Some(0.1));
    }
}
