//! Agent-helper wireless link model: LOS urban-micro path loss, Shannon-style
//! rate, UL/DL delays with a staleness rule, payload sizing per mechanism,
//! and transmission energy accounting.
//!
//! The link is deterministic: one path-loss formula, no fading, orthogonal
//! per-agent bands (each link gets the full bandwidth), computing delays
//! ignored.

use serde::{Deserialize, Serialize};

use crate::env::UavState;

/// Static channel parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Bandwidth per link, Hz.
    pub bandwidth_hz: f64,
    /// UAV transmit power for the uplink, watts.
    pub tx_power_uav_w: f64,
    /// Helper transmit power for the downlink, watts (swept in experiments).
    pub tx_power_helper_w: f64,
    /// Noise spectral density, watts/Hz.
    pub noise_density_w_per_hz: f64,
    /// Carrier frequency, Hz.
    pub carrier_freq_hz: f64,
    /// Helper (ground base-station) position, meters, 3-vector.
    pub helper_position: [f64; 3],
    /// Maximum tolerated delay per leg; also the control-interval cap, seconds.
    pub delay_limit_s: f64,
    /// Wire width of one message scalar, bits.
    pub float_width_bits: u64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.bandwidth_hz <= 0.0 {
            return Err("bandwidth_hz: must be positive".into());
        }
        if self.tx_power_uav_w <= 0.0 || self.tx_power_helper_w <= 0.0 {
            return Err("tx_power: must be positive".into());
        }
        if self.noise_density_w_per_hz <= 0.0 {
            return Err("noise_density_w_per_hz: must be positive".into());
        }
        if self.carrier_freq_hz <= 0.0 {
            return Err("carrier_freq_hz: must be positive".into());
        }
        if self.delay_limit_s <= 0.0 {
            return Err("delay_limit_s: must be positive".into());
        }
        if self.float_width_bits == 0 {
            return Err("float_width_bits: must be positive".into());
        }
        Ok(())
    }
}

/// Which message-generation method sizes the downlink payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    Mha { heads: usize },
    Isha { iterations: usize },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Vanilla => "vanilla".into(),
            Method::Mha { heads } => format!("mha{heads}"),
            Method::Isha { iterations } => format!("isha{iterations}"),
        }
    }
}

/// Message geometry used for payload accounting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub method: Method,
    pub embedding_dim: u64,
    pub sub_message_dim: u64,
    pub n_agents: u64,
    pub float_width_bits: u64,
}

impl PayloadSpec {
    pub fn new(method: Method, n_agents: usize) -> Self {
        Self {
            method,
            embedding_dim: 63,
            sub_message_dim: 21,
            n_agents: n_agents as u64,
            float_width_bits: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Bits on the wire for one agent's leg in the given direction.
pub fn payload_bits(spec: &PayloadSpec, direction: Direction) -> u64 {
    let w = spec.float_width_bits;
    match direction {
        Direction::Uplink => spec.embedding_dim * w,
        Direction::Downlink => match spec.method {
            Method::Isha { iterations } => iterations as u64 * spec.sub_message_dim * w,
            Method::Mha { .. } => spec.embedding_dim * w,
            Method::Vanilla => (spec.n_agents - 1) * spec.embedding_dim * w,
        },
    }
}

/// LOS urban-micro aerial path loss in dB.
///
/// `L = 30.9 + (22.25 - 0.5 log10 h) log10 d + 20 log10 f_GHz`, with `h` the
/// UAV altitude in meters, `d` the 3D distance in meters (clamped to >= 1),
/// and `f` in GHz.
pub fn path_loss(uav_pos: [f64; 3], helper_pos: [f64; 3], carrier_freq_hz: f64) -> f64 {
    let d = {
        let dx = uav_pos[0] - helper_pos[0];
        let dy = uav_pos[1] - helper_pos[1];
        let dz = uav_pos[2] - helper_pos[2];
        (dx * dx + dy * dy + dz * dz).sqrt().max(1.0)
    };
    let h = uav_pos[2];
    let f_ghz = carrier_freq_hz / 1e9;
    30.9 + (22.25 - 0.5 * h.log10()) * d.log10() + 20.0 * f_ghz.log10()
}

/// `R = B log2(1 + P_T / (P_N B) * 10^(-L/10))`, bits/second.
pub fn data_rate(path_loss_db: f64, tx_power_w: f64, cfg: &ChannelConfig) -> f64 {
    let snr = tx_power_w / (cfg.noise_density_w_per_hz * cfg.bandwidth_hz)
        * 10f64.powf(-path_loss_db / 10.0);
    cfg.bandwidth_hz * (1.0 + snr).log2()
}

/// One agent's link outcome for a communication round.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    pub path_loss_db: f64,
    pub ul_rate_bps: f64,
    pub dl_rate_bps: f64,
    pub ul_delay_s: f64,
    pub dl_delay_s: f64,
    pub stale_ul: bool,
    pub stale_dl: bool,
    /// UL + DL transmit energy for the round, joules.
    pub energy_j: f64,
}

/// Energy spent on one leg: power times airtime, where a stale leg is
/// charged for the whole delay window.
pub fn tx_energy(delay_s: f64, tx_power_w: f64, delay_limit_s: f64) -> f64 {
    tx_power_w * delay_s.min(delay_limit_s)
}

/// Per-agent delays, staleness flags, and energy for one TDD round.
pub fn round_delays(states: &[UavState], spec: &PayloadSpec, cfg: &ChannelConfig) -> Vec<LinkBudget> {
    let ul_bits = payload_bits(spec, Direction::Uplink) as f64;
    let dl_bits = payload_bits(spec, Direction::Downlink) as f64;
    states
        .iter()
        .map(|s| {
            let loss = path_loss(
                [s.position[0], s.position[1], s.altitude],
                cfg.helper_position,
                cfg.carrier_freq_hz,
            );
            let ul_rate = data_rate(loss, cfg.tx_power_uav_w, cfg);
            let dl_rate = data_rate(loss, cfg.tx_power_helper_w, cfg);
            let ul_delay = ul_bits / ul_rate;
            let dl_delay = dl_bits / dl_rate;
            let energy = tx_energy(ul_delay, cfg.tx_power_uav_w, cfg.delay_limit_s)
                + tx_energy(dl_delay, cfg.tx_power_helper_w, cfg.delay_limit_s);
            LinkBudget {
                path_loss_db: loss,
                ul_rate_bps: ul_rate,
                dl_rate_bps: dl_rate,
                ul_delay_s: ul_delay,
                dl_delay_s: dl_delay,
                stale_ul: ul_delay > cfg.delay_limit_s,
                stale_dl: dl_delay > cfg.delay_limit_s,
                energy_j: energy,
            }
        })
        .collect()
}

/// Realized control interval for a round: the slowest agent's UL+DL time,
/// capped at the delay limit.
pub fn control_interval(budgets: &[LinkBudget], delay_limit_s: f64) -> f64 {
    budgets
        .iter()
        .map(|b| b.ul_delay_s + b.dl_delay_s)
        .fold(0.0, f64::max)
        .min(delay_limit_s)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// Watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_cfg() -> ChannelConfig {
        ChannelConfig {
            bandwidth_hz: 5e6,
            tx_power_uav_w: 0.1,
            tx_power_helper_w: 1.0,
            noise_density_w_per_hz: 1e-13,
            carrier_freq_hz: 2e9,
            helper_position: [1000.0, 1000.0, 10.0],
            delay_limit_s: 1.0,
            float_width_bits: 32,
        }
    }

    #[test]
    fn path_loss_at_unit_distance() {
        // d = 1 makes the distance term vanish: L = 30.9 + 20 log10(2).
        let l = path_loss([0.0, 0.0, 50.0], [0.0, 0.0, 50.0], 2e9);
        let expected = 30.9 + 20.0 * 2f64.log10();
        assert!((l - expected).abs() < 1e-9, "{l} vs {expected}");
        assert!((l - 36.92).abs() < 0.01);
    }

    #[test]
    fn path_loss_distance_slope() {
        let h = 50.0;
        let l10 = path_loss([10.0, 0.0, h], [0.0, 0.0, h], 2e9);
        let l100 = path_loss([100.0, 0.0, h], [0.0, 0.0, h], 2e9);
        let slope = 22.25 - 0.5 * h.log10();
        assert!((l100 - l10 - slope).abs() < 1e-9);
    }

    #[test]
    fn path_loss_frequency_term() {
        let l2 = path_loss([30.0, 40.0, 50.0], [0.0, 0.0, 0.0], 2e9);
        let l4 = path_loss([30.0, 40.0, 50.0], [0.0, 0.0, 0.0], 4e9);
        assert!((l4 - l2 - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn path_loss_clamps_below_one_meter() {
        let a = path_loss([0.2, 0.0, 50.0], [0.0, 0.0, 50.0], 2e9);
        let b = path_loss([1.0, 0.0, 50.0], [0.0, 0.0, 50.0], 2e9);
        assert_eq!(a, b);
    }

    #[test]
    fn rate_equals_bandwidth_at_unit_snr() {
        let mut cfg = test_cfg();
        cfg.tx_power_uav_w = cfg.noise_density_w_per_hz * cfg.bandwidth_hz;
        let r = data_rate(0.0, cfg.tx_power_uav_w, &cfg);
        assert!((r - cfg.bandwidth_hz).abs() / cfg.bandwidth_hz < 1e-12);
    }

    #[test]
    fn rate_monotone_in_loss_and_power() {
        let cfg = test_cfg();
        let r1 = data_rate(80.0, 1.0, &cfg);
        let r2 = data_rate(90.0, 1.0, &cfg);
        assert!(r1 > r2);
        assert!(data_rate(80.0, 2.0, &cfg) > r1);
    }

    #[test]
    fn payload_bits_match_per_method_sizes() {
        let n = 4;
        for (method, dl_per_agent) in [
            (Method::Isha { iterations: 1 }, 672),
            (Method::Isha { iterations: 3 }, 2016),
            (Method::Mha { heads: 3 }, 2016),
            (Method::Vanilla, 6048),
        ] {
            let spec = PayloadSpec::new(method, n);
            assert_eq!(payload_bits(&spec, Direction::Uplink), 2016);
            assert_eq!(payload_bits(&spec, Direction::Downlink), dl_per_agent);
        }
    }

    #[test]
    fn vanilla_to_isha1_downlink_ratio_is_nine() {
        let v = payload_bits(&PayloadSpec::new(Method::Vanilla, 4), Direction::Downlink);
        let i = payload_bits(
            &PayloadSpec::new(Method::Isha { iterations: 1 }, 4),
            Direction::Downlink,
        );
        assert_eq!(v, 9 * i);
    }

    #[test]
    fn stale_flag_set_exactly_when_delay_exceeds_limit() {
        let mut cfg = test_cfg();
        cfg.tx_power_uav_w = 1e-6; // force the uplink over the limit
        let states = vec![UavState::at([500.0, 500.0], 50.0)];
        let spec = PayloadSpec::new(Method::Isha { iterations: 1 }, 4);
        let budgets = round_delays(&states, &spec, &cfg);
        assert_eq!(budgets.len(), 1);
        assert!(budgets[0].ul_delay_s > cfg.delay_limit_s);
        assert!(budgets[0].stale_ul);
        assert_eq!(budgets[0].stale_dl, budgets[0].dl_delay_s > cfg.delay_limit_s);
    }

    #[test]
    fn near_helper_huge_power_interval_well_below_limit() {
        let mut cfg = test_cfg();
        cfg.tx_power_uav_w = 100.0;
        cfg.tx_power_helper_w = 100.0;
        let states = vec![UavState::at([1000.0, 1000.0], 50.0)];
        let spec = PayloadSpec::new(Method::Vanilla, 4);
        let budgets = round_delays(&states, &spec, &cfg);
        let interval = control_interval(&budgets, cfg.delay_limit_s);
        assert!(!budgets[0].stale_ul && !budgets[0].stale_dl);
        assert!(interval < 0.1 * cfg.delay_limit_s);
    }

    #[test]
    fn downlink_delay_ratio_matches_payload_ratio() {
        let cfg = test_cfg();
        let states = vec![UavState::at([300.0, 700.0], 50.0)];
        let d_v = round_delays(&states, &PayloadSpec::new(Method::Vanilla, 4), &cfg);
        let d_i = round_delays(
            &states,
            &PayloadSpec::new(Method::Isha { iterations: 1 }, 4),
            &cfg,
        );
        let ratio = d_v[0].dl_delay_s / d_i[0].dl_delay_s;
        assert!((ratio - 9.0).abs() < 1e-12);
    }

    #[test]
    fn energy_linear_in_airtime_and_capped_when_stale() {
        assert!((tx_energy(0.01, 1.0, 1.0) - 0.01).abs() < 1e-15);
        // stale leg: charged for the whole window
        assert_eq!(tx_energy(5.0, 2.0, 1.0), 2.0);
        // doubling payload at fixed rate doubles energy below the limit
        let e1 = tx_energy(0.2, 1.5, 1.0);
        let e2 = tx_energy(0.4, 1.5, 1.0);
        assert!((e2 - 2.0 * e1).abs() < 1e-12);
    }

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-12);
        assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
        assert!((dbm_to_watts(-100.0) - 1e-13).abs() < 1e-27);
    }
}
