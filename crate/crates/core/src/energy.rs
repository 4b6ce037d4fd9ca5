//! Closed-form energy kernels and the weighted-sum objective.
//!
//! Every per-slot energy is one of two separable shapes:
//!
//! * CPU execution (local or MEC): `zeta * C^3 * d^3 / tau^2`, from running
//!   `C * d` cycles at the constant rate `f = C * d / tau`.
//! * Offloading: `tau * sigma^2 * (2^(d / (tau * B)) - 1) / |h|^2`, the
//!   transmit energy needed to push `d` bits through a slot at Shannon rate.
//!
//! [`EnergyTerm`] carries the coefficients of one slot so the convex solver
//! can evaluate values, gradients and curvatures from the same formulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnergyBreakdown, Scenario, Schedule};

/// Energy of a single slot as a function of the bits processed in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnergyTerm {
    /// `coef * d^3`
    Cubic { coef: f64 },
    /// `scale * (2^(rate * d) - 1)`
    Exp2 { scale: f64, rate: f64 },
}

impl EnergyTerm {
    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        match *self {
            EnergyTerm::Cubic { coef } => coef * d * d * d,
            EnergyTerm::Exp2 { scale, rate } => scale * (rate * d * std::f64::consts::LN_2).exp_m1(),
        }
    }

    #[inline]
    pub fn grad(&self, d: f64) -> f64 {
        match *self {
            EnergyTerm::Cubic { coef } => 3.0 * coef * d * d,
            EnergyTerm::Exp2 { scale, rate } => scale * rate * std::f64::consts::LN_2 * (rate * d).exp2(),
        }
    }

    #[inline]
    pub fn hess(&self, d: f64) -> f64 {
        match *self {
            EnergyTerm::Cubic { coef } => 6.0 * coef * d,
            EnergyTerm::Exp2 { scale, rate } => {
                let k = rate * std::f64::consts::LN_2;
                scale * k * k * (rate * d).exp2()
            }
        }
    }

    /// `(value, grad, hess)` in one call.
    #[inline]
    pub fn eval(&self, d: f64) -> (f64, f64, f64) {
        match *self {
            EnergyTerm::Cubic { coef } => (coef * d * d * d, 3.0 * coef * d * d, 6.0 * coef * d),
            EnergyTerm::Exp2 { scale, rate } => {
                let p = (rate * d).exp2();
                let k = rate * std::f64::consts::LN_2;
                (scale * (k * d).exp_m1(), scale * k * p, scale * k * k * p)
            }
        }
    }

    /// `value(d + step) - value(d)` without cancellation.
    #[inline]
    pub fn delta(&self, d: f64, step: f64) -> f64 {
        match *self {
            EnergyTerm::Cubic { coef } => coef * step * (3.0 * d * d + 3.0 * d * step + step * step),
            EnergyTerm::Exp2 { scale, rate } => {
                scale * (rate * d).exp2() * (rate * step * std::f64::consts::LN_2).exp_m1()
            }
        }
    }

    /// Same energy expressed with bits measured in `bit_unit` bits and
    /// energy in `energy_unit` Joules.
    pub fn rescaled(&self, bit_unit: f64, energy_unit: f64) -> EnergyTerm {
        match *self {
            EnergyTerm::Cubic { coef } => EnergyTerm::Cubic {
                coef: coef * bit_unit.powi(3) / energy_unit,
            },
            EnergyTerm::Exp2 { scale, rate } => EnergyTerm::Exp2 {
                scale: scale / energy_unit,
                rate: rate * bit_unit,
            },
        }
    }

    /// Multiplies the energy by a weight.
    pub fn weighted(&self, w: f64) -> EnergyTerm {
        match *self {
            EnergyTerm::Cubic { coef } => EnergyTerm::Cubic { coef: coef * w },
            EnergyTerm::Exp2 { scale, rate } => EnergyTerm::Exp2 { scale: scale * w, rate },
        }
    }
}

/// Per-slot term for CPU execution with capacitance `zeta` and `cycles` per bit.
pub fn cpu_term(zeta: f64, cycles: f64, tau: f64) -> EnergyTerm {
    EnergyTerm::Cubic { coef: zeta * cycles.powi(3) / (tau * tau) }
}

/// Per-slot term for offloading over a channel with power gain `gain`.
pub fn offload_term(gain: f64, bandwidth: f64, tau: f64, noise_power: f64) -> EnergyTerm {
    EnergyTerm::Exp2 { scale: tau * noise_power / gain, rate: 1.0 / (tau * bandwidth) }
}

fn check_bits(d: &[f64]) -> Result<()> {
    match d.iter().position(|&x| !(x >= 0.0)) {
        Some(i) => Err(Error::Domain(format!("bit count d[{i}] = {} is negative", d[i]))),
        None => Ok(()),
    }
}

/// Local computing energy of one WD over its slots (Joules).
pub fn local_energy(d: &[f64], zeta: f64, cycles: f64, tau: f64) -> Result<f64> {
    check_bits(d)?;
    let term = cpu_term(zeta, cycles, tau);
    Ok(d.iter().map(|&x| term.value(x)).sum())
}

/// Gradient of [`local_energy`] with respect to each slot's bits.
pub fn local_energy_grad(d: &[f64], zeta: f64, cycles: f64, tau: f64) -> Result<Vec<f64>> {
    check_bits(d)?;
    let term = cpu_term(zeta, cycles, tau);
    Ok(d.iter().map(|&x| term.grad(x)).collect())
}

fn check_channel(gain: &[f64], bandwidth: &[f64], d: &[f64]) -> Result<()> {
    if gain.len() != d.len() || bandwidth.len() != d.len() {
        return Err(Error::Dimension(format!(
            "offload vectors have lengths {}, {}, {}",
            d.len(),
            gain.len(),
            bandwidth.len()
        )));
    }
    if let Some(i) = gain.iter().position(|&h| !(h > 0.0)) {
        return Err(Error::Domain(format!("channel gain[{i}] must be > 0")));
    }
    if let Some(i) = bandwidth.iter().position(|&b| !(b > 0.0)) {
        return Err(Error::Domain(format!("bandwidth[{i}] must be > 0")));
    }
    Ok(())
}

/// Offloading energy over a sequence of slots (Joules).
pub fn offload_energy(d: &[f64], gain: &[f64], bandwidth: &[f64], tau: f64, noise_power: f64) -> Result<f64> {
    check_bits(d)?;
    check_channel(gain, bandwidth, d)?;
    Ok(d.iter()
        .zip(gain)
        .zip(bandwidth)
        .map(|((&x, &h), &b)| offload_term(h, b, tau, noise_power).value(x))
        .sum())
}

/// Gradient of [`offload_energy`], `sigma^2 ln2 / (B |h|^2) * 2^(d / (tau B))` per slot.
pub fn offload_energy_grad(
    d: &[f64],
    gain: &[f64],
    bandwidth: &[f64],
    tau: f64,
    noise_power: f64,
) -> Result<Vec<f64>> {
    check_bits(d)?;
    check_channel(gain, bandwidth, d)?;
    Ok(d.iter()
        .zip(gain)
        .zip(bandwidth)
        .map(|((&x, &h), &b)| offload_term(h, b, tau, noise_power).grad(x))
        .collect())
}

/// MEC execution energy (Joules) and the CPU rate `C0 * d / tau` of each slot.
pub fn mec_energy(d: &[f64], zeta0: f64, cycles0: f64, tau: f64) -> Result<(f64, Vec<f64>)> {
    check_bits(d)?;
    let term = cpu_term(zeta0, cycles0, tau);
    let energy = d.iter().map(|&x| term.value(x)).sum();
    let rates = d.iter().map(|&x| cycles0 * x / tau).collect();
    Ok((energy, rates))
}

/// Gradient of the MEC execution energy.
pub fn mec_energy_grad(d: &[f64], zeta0: f64, cycles0: f64, tau: f64) -> Result<Vec<f64>> {
    check_bits(d)?;
    let term = cpu_term(zeta0, cycles0, tau);
    Ok(d.iter().map(|&x| term.grad(x)).collect())
}

/// Weighted-sum energy of a schedule and its per-term breakdown.
pub fn objective(s: &Scenario, sched: &Schedule) -> Result<(f64, EnergyBreakdown)> {
    let p = &s.params;
    let dims_ok = sched.caching_offload.len() == p.caching_slots
        && sched.caching_mec.len() == p.caching_slots
        && sched.local.len() == p.num_wds
        && sched.offload.len() == p.num_wds
        && sched.mec.len() == p.slots
        && sched.local.iter().all(|r| r.len() == p.slots)
        && sched.offload.iter().all(|r| r.len() == p.slots);
    if !dims_ok {
        return Err(Error::Dimension("schedule does not match scenario dimensions".into()));
    }
    let tau = p.slot_len;
    let ko = s.offload_wd;

    let offload_caching = offload_energy(
        &sched.caching_offload,
        &s.channels.caching_gain,
        &p.caching_bandwidth,
        tau,
        p.noise_power,
    )?;
    let (mec_caching, _) = mec_energy(&sched.caching_mec, p.mec_capacitance, p.mec_cycles_per_bit, tau)?;
    let (mec_execution, _) = mec_energy(&sched.mec, p.mec_capacitance, p.mec_cycles_per_bit, tau)?;

    let mut local = Vec::with_capacity(p.num_wds);
    let mut offload = Vec::with_capacity(p.num_wds);
    for k in 0..p.num_wds {
        local.push(local_energy(&sched.local[k], p.wd_capacitance[k], p.wd_cycles_per_bit[k], tau)?);
        offload.push(offload_energy(
            &sched.offload[k],
            &s.channels.gain[k],
            &p.bandwidth[k],
            tau,
            p.noise_power,
        )?);
    }
    debug_assert!(ko < p.num_wds);

    let breakdown = EnergyBreakdown { mec_caching, offload_caching, mec_execution, local, offload };
    Ok((breakdown.weighted(p), breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use crate::scenario::{generate, GenConfig};

    #[test]
    fn local_examples() {
        assert_eq!(local_energy(&[0.0; 5], 1e-28, 3000.0, 0.1).unwrap(), 0.0);
        assert_relative_eq!(local_energy(&[1000.0], 1e-28, 3000.0, 0.1).unwrap(), 2.7e-7, max_relative = 1e-12);
        let one = local_energy(&[700.0, 300.0], 1e-28, 3000.0, 0.1).unwrap();
        let two = local_energy(&[1400.0, 300.0], 1e-28, 3000.0, 0.1).unwrap();
        let tail = local_energy(&[300.0], 1e-28, 3000.0, 0.1).unwrap();
        assert_relative_eq!(two - tail, 8.0 * (one - tail), max_relative = 1e-12);
        assert!(local_energy(&[1.0, -1.0], 1e-28, 3000.0, 0.1).is_err());
    }

    #[test]
    fn offload_examples() {
        assert_eq!(offload_energy(&[0.0, 0.0], &[1e-10; 2], &[2e6; 2], 0.1, 1e-8).unwrap(), 0.0);
        assert_relative_eq!(
            offload_energy(&[2e5], &[1e-10], &[2e6], 0.1, 1e-8).unwrap(),
            10.0,
            max_relative = 1e-12
        );
        let f = |d: f64| offload_energy(&[d], &[1e-10], &[2e6], 0.1, 1e-8).unwrap();
        assert!(f(1e5) < 0.5 * (f(0.0) + f(2e5)));
        assert!(offload_energy(&[1.0], &[0.0], &[2e6], 0.1, 1e-8).is_err());
        assert!(offload_energy(&[1.0], &[1e-10], &[-2e6], 0.1, 1e-8).is_err());
        assert!(offload_energy(&[1.0, 2.0], &[1e-10], &[2e6], 0.1, 1e-8).is_err());
    }

    #[test]
    fn mec_examples() {
        let (e, rates) = mec_energy(&[0.0], 1e-29, 1000.0, 0.1).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(rates, vec![0.0]);
        let (e, rates) = mec_energy(&[1e4], 1e-29, 1000.0, 0.1).unwrap();
        assert_relative_eq!(e, 1e-6, max_relative = 1e-12);
        assert_relative_eq!(rates[0], 1e8, max_relative = 1e-12);
        let (split, _) = mec_energy(&[5e3, 5e3], 1e-29, 1000.0, 0.1).unwrap();
        assert_relative_eq!(split, e / 4.0, max_relative = 1e-12);
    }

    fn small_scenario() -> Scenario {
        let mut cfg = GenConfig::default();
        cfg.num_wds = 2;
        cfg.num_tasks = 3;
        cfg.caching_slots = 2;
        cfg.slots = 4;
        generate(&cfg).unwrap()
    }

    #[test]
    fn objective_examples() {
        let s = small_scenario();
        let zero = Schedule::zeros(&s.params);
        assert_eq!(objective(&s, &zero).unwrap().0, 0.0);

        let mut one = zero.clone();
        one.local[0][0] = 1000.0;
        let (obj, b) = objective(&s, &one).unwrap();
        assert_relative_eq!(obj, 0.9 * 2.7e-7, max_relative = 1e-12);
        assert_relative_eq!(b.local[0], 2.7e-7, max_relative = 1e-12);

        let mut bad = zero;
        bad.mec.pop();
        assert!(matches!(objective(&s, &bad), Err(Error::Dimension(_))));
    }

    fn random_schedule(s: &Scenario, seed: u64) -> Schedule {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut sched = Schedule::zeros(&s.params);
        let mut fill = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.random_range(0.0..5000.0));
        fill(&mut sched.caching_offload);
        fill(&mut sched.caching_mec);
        fill(&mut sched.mec);
        for k in 0..s.params.num_wds {
            fill(&mut sched.local[k]);
            fill(&mut sched.offload[k]);
        }
        sched
    }

    #[test]
    fn objective_recomposes_from_breakdown() {
        let s = small_scenario();
        for seed in 0..20 {
            let sched = random_schedule(&s, seed);
            let (obj, b) = objective(&s, &sched).unwrap();
            let p = &s.params;
            let manual = p.w_mec * (b.mec_caching + b.mec_execution)
                + p.w_wd * (b.offload_caching + b.local.iter().sum::<f64>() + b.offload.iter().sum::<f64>());
            assert_relative_eq!(obj, manual, max_relative = 1e-12);
            assert_relative_eq!(obj, b.caching_phase(p) + b.execution_phase(p), max_relative = 1e-12);
        }
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn local_grad_matches_fd(d in 1.0f64..6000.0, zeta in 1e-29f64..1e-27, c in 500.0f64..5000.0) {
            let g = local_energy_grad(&[d], zeta, c, 0.1).unwrap()[0];
            let fd = central_diff(|x| local_energy(&[x], zeta, c, 0.1).unwrap(), d, 1e-3);
            prop_assert!((g - fd).abs() <= 1e-5 * g.abs());
        }

        #[test]
        fn offload_grad_matches_fd(d in 0.0f64..2e5, h2 in 1e-13f64..1e-9, b in 1e6f64..4e6) {
            let g = offload_energy_grad(&[d], &[h2], &[b], 0.1, 1e-8).unwrap()[0];
            let fd = central_diff(|x| offload_term(h2, b, 0.1, 1e-8).value(x), d, 1e-3);
            prop_assert!((g - fd).abs() <= 1e-5 * g.abs());
        }

        #[test]
        fn kernels_are_convex(
            x in prop::collection::vec(0.0f64..8000.0, 3),
            y in prop::collection::vec(0.0f64..8000.0, 3),
            lambda in 0.0f64..1.0,
        ) {
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let gains = [5e-12, 1e-11, 3e-12];
            let bw = [2e6; 3];
            let fs: [&dyn Fn(&[f64]) -> f64; 3] = [
                &|d| local_energy(d, 1e-28, 3000.0, 0.1).unwrap(),
                &|d| offload_energy(d, &gains, &bw, 0.1, 1e-8).unwrap(),
                &|d| mec_energy(d, 1e-29, 1000.0, 0.1).unwrap().0,
            ];
            for f in fs {
                let lhs = f(&mid);
                let rhs = lambda * f(&x) + (1.0 - lambda) * f(&y);
                prop_assert!(lhs <= rhs + 1e-12 + 1e-12 * rhs.abs());
            }
        }

        #[test]
        fn rescaled_term_is_same_energy(d in 0.0f64..9000.0, h2 in 1e-12f64..1e-9) {
            for term in [cpu_term(1e-28, 3000.0, 0.1), offload_term(h2, 2e6, 0.1, 1e-8)] {
                let scaled = term.rescaled(1e3, 1e-3);
                let a = term.value(d);
                let b = scaled.value(d / 1e3) * 1e-3;
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }
    }
}
