//! Learning-rate decay and the constraint activation gate.

use super::config::TrainConfig;

/// Constant at `lr_initial`, then linear to zero between
/// `total_epochs * decay_start_fraction` and `total_epochs`.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    let total = config.total_epochs as f64;
    let e = epoch as f64;
    if e >= total {
        return 0.0;
    }
    let start = total * config.decay_start_fraction;
    if e < start || total <= start {
        config.lr_initial
    } else {
        config.lr_initial * (total - e) / (total - start)
    }
}

/// False exactly while `epoch < total_epochs * robust_gate_fraction`.
pub fn robust_loss_active(config: &TrainConfig, epoch: usize) -> bool {
    (epoch as f64) >= config.total_epochs as f64 * config.robust_gate_fraction
}

/// Multiplier on the constraint term: 0 before the gate, 1 after (default),
/// or a linear climb over a gate-sized window when `robust_ramp` is set.
pub fn robust_factor(config: &TrainConfig, epoch: usize) -> f64 {
    if !robust_loss_active(config, epoch) {
        return 0.0;
    }
    if !config.robust_ramp {
        return 1.0;
    }
    let gate = config.total_epochs as f64 * config.robust_gate_fraction;
    if gate <= 0.0 {
        return 1.0;
    }
    (((epoch as f64) - gate + 1.0) / gate).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(total: usize) -> TrainConfig {
        TrainConfig {
            total_epochs: total,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn lr_follows_paper_schedule() {
        let c = cfg(400);
        assert_eq!(lr_at(&c, 0), 2e-4);
        assert_eq!(lr_at(&c, 199), 2e-4);
        // Midpoint of the decay segment.
        assert!((lr_at(&c, 300) - 1e-4).abs() < 1e-18);
        assert_eq!(lr_at(&c, 400), 0.0);
    }

    #[test]
    fn lr_handles_degenerate_totals() {
        let c = cfg(0);
        assert_eq!(lr_at(&c, 0), 0.0);
        let mut c = cfg(10);
        c.decay_start_fraction = 1.0;
        assert_eq!(lr_at(&c, 9), c.lr_initial);
        assert_eq!(lr_at(&c, 10), 0.0);
    }

    #[test]
    fn quarter_gate_boundaries() {
        let c = cfg(400);
        assert!(!robust_loss_active(&c, 99));
        assert!(robust_loss_active(&c, 100));
        let c = cfg(20);
        assert!(!robust_loss_active(&c, 4));
        assert!(robust_loss_active(&c, 5));
    }

    #[test]
    fn zero_gate_always_active() {
        let mut c = cfg(100);
        c.robust_gate_fraction = 0.0;
        assert!(robust_loss_active(&c, 0));
        assert_eq!(robust_factor(&c, 0), 1.0);
    }

    #[test]
    fn ramp_climbs_linearly_after_gate() {
        let mut c = cfg(400);
        c.robust_ramp = true;
        assert_eq!(robust_factor(&c, 99), 0.0);
        assert!((robust_factor(&c, 100) - 0.01).abs() < 1e-15);
        assert!((robust_factor(&c, 149) - 0.5).abs() < 1e-15);
        assert_eq!(robust_factor(&c, 199), 1.0);
        assert_eq!(robust_factor(&c, 300), 1.0);
    }

    #[test]
    fn hard_gate_is_all_or_nothing() {
        let c = cfg(400);
        assert_eq!(robust_factor(&c, 99), 0.0);
        assert_eq!(robust_factor(&c, 100), 1.0);
    }
}
