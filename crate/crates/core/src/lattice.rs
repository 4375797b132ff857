//! Continuous-time random walk of cells on a 1D lattice with a prescribed
//! signal. Per-particle jump rates follow one of three transition kernels;
//! time is advanced by binomial tau-leaping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{q_unchecked, Field, Grid, Sensitivity};

/// Largest allowed `dt · max_rate`.
pub const LEAP_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `T_i^± = q(ũ_{i±1}) (α + β(τ(v_{i±1}) - τ(v_i)))`
    VolumeFilling,
    /// `T_i^± = q(ũ_i) (α + β(τ(v_{i±1}) - τ(v_i)))`
    Pushing,
    /// `T_i^± = q(ũ_i) (α + β(z_i)(τ(v_{i±1}) - τ(v_i)))`
    QuorumPushing,
}

/// Signal-sensing mechanism `τ(v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalTransform {
    Identity,
    /// Receptor saturation `v / (k + v)`.
    Saturating(f64),
}

impl SignalTransform {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            SignalTransform::Identity => v,
            SignalTransform::Saturating(k) => v / (k + v),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LatticeState {
    pub occupancy: Vec<u64>,
    pub u_max: u64,
    pub spacing: f64,
    pub origin: f64,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub alpha: f64,
    /// Constant sensitivity used by the pushing and volume-filling kernels.
    pub beta: f64,
    /// Quorum sensitivity `β(z)`; when absent the quorum kernel uses `beta`.
    pub beta_of_z: Option<Sensitivity>,
    pub tau_of_v: SignalTransform,
    pub kernel: Kernel,
    pub m: f64,
    pub t: f64,
    /// Site-steps on which occupancy exceeded `4 · u_max`.
    pub overflow_events: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl LatticeState {
    /// Flat signal, zero quorum field, identity sensing, `β = 0`.
    pub fn new(occupancy: Vec<u64>, u_max: u64, spacing: f64, kernel: Kernel, m: f64, alpha: f64, seed: u64) -> Result<Self> {
        if occupancy.len() < 2 {
            return Err(Error::param("occupancy", "lattice needs at least two sites"));
        }
        if u_max == 0 {
            return Err(Error::param("u_max", "capacity must be positive"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::param("spacing", "must be positive"));
        }
        if !(m > 1.0) {
            return Err(Error::param("m", "m must exceed 1"));
        }
        if !(alpha > 0.0) {
            return Err(Error::param("alpha", "dispersion must be positive"));
        }
        let n = occupancy.len();
        Ok(LatticeState {
            occupancy,
            u_max,
            spacing,
            origin: 0.0,
            v: vec![0.0; n],
            z: vec![0.0; n],
            alpha,
            beta: 0.0,
            beta_of_z: None,
            tau_of_v: SignalTransform::Identity,
            kernel,
            m,
            t: 0.0,
            overflow_events: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sites(&self) -> usize {
        self.occupancy.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same lattice restarted from a different random stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.seed = seed;
        s.rng = ChaCha8Rng::seed_from_u64(seed);
        s
    }

    pub fn total(&self) -> u64 {
        self.occupancy.iter().sum()
    }

    pub fn overflow_cap(&self) -> u64 {
        4 * self.u_max
    }

    pub fn relative_density(&self, i: usize) -> f64 {
        self.occupancy[i] as f64 / self.u_max as f64
    }

    fn check_signals(&self) -> Result<()> {
        let n = self.sites();
        if self.v.len() != n || self.z.len() != n {
            return Err(Error::param("v/z", format!("signal arrays must have {n} entries")));
        }
        Ok(())
    }

    /// Per-particle jump rates `(left, right)` out of site `i`, scaled by
    /// `1/h²` and clamped at zero. Jumps across the lattice ends have rate 0.
    pub fn transition_rates(&self, i: usize) -> (f64, f64) {
        let n = self.sites();
        let scale = 1.0 / (self.spacing * self.spacing);
        let tau_i = self.tau_of_v.apply(self.v[i]);
        let beta = match (self.kernel, &self.beta_of_z) {
            (Kernel::QuorumPushing, Some(b)) => b.eval(self.z[i]),
            _ => self.beta,
        };
        let rate_to = |j: usize| {
            let q = match self.kernel {
                Kernel::VolumeFilling => q_unchecked(self.relative_density(j), self.m),
                Kernel::Pushing | Kernel::QuorumPushing => q_unchecked(self.relative_density(i), self.m),
            };
            let bracket = self.alpha + beta * (self.tau_of_v.apply(self.v[j]) - tau_i);
            (scale * q * bracket).max(0.0)
        };
        let left = if i > 0 { rate_to(i - 1) } else { 0.0 };
        let right = if i + 1 < n { rate_to(i + 1) } else { 0.0 };
        (left, right)
    }

    fn all_rates(&self) -> Vec<(f64, f64)> {
        (0..self.sites()).map(|i| self.transition_rates(i)).collect()
    }

    /// Largest total per-particle exit rate over occupied sites.
    pub fn max_rate(&self) -> f64 {
        (0..self.sites())
            .filter(|&i| self.occupancy[i] > 0)
            .map(|i| {
                let (l, r) = self.transition_rates(i);
                l + r
            })
            .fold(0.0, f64::max)
    }

    /// One binomial tau-leap. Rates are frozen at the start of the step, each
    /// site splits its particles into left movers, right movers and stayers.
    pub fn step_tau_leap(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("step must be positive, got {dt}")));
        }
        self.check_signals()?;
        let rates = self.all_rates();
        let max_rate = rates
            .iter()
            .zip(&self.occupancy)
            .filter(|(_, &n)| n > 0)
            .map(|(&(l, r), _)| l + r)
            .fold(0.0, f64::max);
        if dt * max_rate > LEAP_LIMIT * (1.0 + 1e-12) {
            return Err(Error::LeapCondition(dt * max_rate));
        }
        let n = self.sites();
        let mut next = self.occupancy.clone();
        for i in 0..n {
            let count = self.occupancy[i];
            let (rl, rr) = rates[i];
            if count == 0 || rl + rr == 0.0 {
                continue;
            }
            let pl = rl * dt;
            let pr = rr * dt;
            let left = sample_binomial(&mut self.rng, count, pl)?;
            let right = sample_binomial(&mut self.rng, count - left, pr / (1.0 - pl))?;
            next[i] -= left + right;
            if left > 0 {
                next[i - 1] += left;
            }
            if right > 0 {
                next[i + 1] += right;
            }
        }
        let cap = self.overflow_cap();
        self.overflow_events += next.iter().filter(|&&c| c > cap).count() as u64;
        self.occupancy = next;
        self.t += dt;
        Ok(())
    }

    /// Leaps with `dt = leap / max_rate` until `t_end`, shortening the last step.
    pub fn advance_to(&mut self, t_end: f64, leap: f64) -> Result<usize> {
        if !(leap > 0.0 && leap <= LEAP_LIMIT) {
            return Err(Error::param("leap", format!("must lie in (0, {LEAP_LIMIT}]")));
        }
        let mut steps = 0;
        while self.t < t_end {
            let remaining = t_end - self.t;
            let max_rate = self.max_rate();
            if max_rate == 0.0 {
                self.t = t_end;
                break;
            }
            let dt = (leap / max_rate).min(remaining);
            self.step_tau_leap(dt)?;
            if dt == remaining {
                self.t = t_end;
            }
            steps += 1;
        }
        Ok(steps)
    }

    /// Relative density averaged over bins of `cells_per_bin` sites.
    pub fn coarse_density(&self, cells_per_bin: usize) -> Result<Field> {
        let n = self.sites();
        if cells_per_bin == 0 || !n.is_multiple_of(cells_per_bin) {
            return Err(Error::param(
                "cells_per_bin",
                format!("{n} sites are not divisible into bins of {cells_per_bin}"),
            ));
        }
        let bins = n / cells_per_bin;
        let grid = Grid::new_1d(self.origin, n as f64 * self.spacing, bins)?;
        let values = self
            .occupancy
            .chunks(cells_per_bin)
            .map(|c| c.iter().sum::<u64>() as f64 / (cells_per_bin as f64 * self.u_max as f64))
            .collect();
        Field::from_values(grid, values)
    }
}

fn sample_binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    if p >= 1.0 {
        return Ok(n);
    }
    let dist = Binomial::new(n, p).map_err(|e| Error::Domain(format!("binomial({n}, {p}): {e}")))?;
    Ok(dist.sample(rng))
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub seeds: Vec<u64>,
    /// Coarse density of each member at the final time, in seed order.
    pub members: Vec<Field>,
    pub mean: Field,
    pub overflow_events: u64,
    pub steps: Vec<usize>,
}

/// Runs `template` reseeded with each seed to `t_end` in parallel and
/// averages the coarse densities.
pub fn run_ensemble(template: &LatticeState, seeds: &[u64], t_end: f64, leap: f64, cells_per_bin: usize) -> Result<EnsembleResult> {
    if seeds.is_empty() {
        return Err(Error::param("seeds", "ensemble needs at least one seed"));
    }
    let runs: Vec<(Field, u64, usize)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = template.reseeded(seed);
            let steps = s.advance_to(t_end, leap)?;
            Ok((s.coarse_density(cells_per_bin)?, s.overflow_events, steps))
        })
        .collect::<Result<_>>()?;
    let grid = *runs[0].0.grid();
    let mut mean = vec![0.0; grid.len()];
    for (f, _, _) in &runs {
        for (acc, x) in mean.iter_mut().zip(f.values()) {
            *acc += x / runs.len() as f64;
        }
    }
    Ok(EnsembleResult {
        seeds: seeds.to_vec(),
        overflow_events: runs.iter().map(|r| r.1).sum(),
        steps: runs.iter().map(|r| r.2).collect(),
        members: runs.into_iter().map(|r| r.0).collect(),
        mean: Field::from_values(grid, mean)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(occ: Vec<u64>, u_max: u64, kernel: Kernel) -> LatticeState {
        LatticeState::new(occ, u_max, 1.0, kernel, 2.0, 1.0, 7).unwrap()
    }

    #[test]
    fn rate_examples() {
        let s = lattice(vec![2, 1, 2], 2, Kernel::Pushing);
        assert_eq!(s.transition_rates(1), (0.5, 0.5));
        let s = lattice(vec![2, 0, 2], 2, Kernel::Pushing);
        assert_eq!(s.transition_rates(1), (0.0, 0.0));
        let s = lattice(vec![2, 1, 0], 2, Kernel::VolumeFilling);
        assert_eq!(s.transition_rates(1), (1.0, 0.0));
    }

    #[test]
    fn boundary_sites_reflect() {
        let s = lattice(vec![2, 2, 2], 2, Kernel::Pushing);
        assert_eq!(s.transition_rates(0).0, 0.0);
        assert_eq!(s.transition_rates(2).1, 0.0);
    }

    #[test]
    fn gradient_bias_and_clamp() {
        let mut s = lattice(vec![2, 2, 2], 2, Kernel::Pushing);
        s.beta = 1.0;
        s.v = vec![0.0, 0.0, 0.5];
        assert_eq!(s.transition_rates(1), (1.0, 1.5));
        s.v = vec![0.0, 0.0, -3.0];
        assert_eq!(s.transition_rates(1).1, 0.0);
    }

    #[test]
    fn quorum_kernel_scales_gradient_by_beta_of_z() {
        let mut s = lattice(vec![2, 2, 2], 2, Kernel::QuorumPushing);
        s.v = vec![0.0, 0.0, 0.5];
        s.z = vec![0.0, 0.25, 0.0];
        s.beta_of_z = Some(Sensitivity::linear_switch(1.0).unwrap());
        let (_, r) = s.transition_rates(1);
        let b = Sensitivity::linear_switch(1.0).unwrap().eval(0.25);
        assert!((r - (1.0 + b * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn kernels_agree_when_q_is_constant() {
        // q(ũ) = ũ^{m-1} is constant on a uniformly loaded lattice.
        let mut a = lattice(vec![3; 6], 4, Kernel::Pushing);
        a.beta = 0.7;
        a.v = vec![0.0, 0.1, 0.4, 0.2, 0.9, 0.3];
        let mut b = a.clone();
        b.kernel = Kernel::VolumeFilling;
        for i in 0..6 {
            assert_eq!(a.transition_rates(i), b.transition_rates(i));
        }
    }

    #[test]
    fn frozen_and_empty_lattices_do_not_move() {
        let mut s = lattice(vec![0; 8], 4, Kernel::Pushing);
        s.step_tau_leap(0.01).unwrap();
        assert_eq!(s.occupancy, vec![0; 8]);
        // Volume filling with every neighbour empty: all rates vanish.
        let mut vf = lattice(vec![0, 5, 0, 0, 5, 0], 4, Kernel::VolumeFilling);
        vf.step_tau_leap(0.01).unwrap();
        assert_eq!(vf.occupancy, vec![0, 5, 0, 0, 5, 0]);
    }

    #[test]
    fn leap_condition_is_enforced() {
        let mut s = lattice(vec![4; 8], 4, Kernel::Pushing);
        assert!(matches!(s.step_tau_leap(0.2), Err(Error::LeapCondition(_))));
        assert!(s.step_tau_leap(0.05).is_ok());
    }

    #[test]
    fn coarse_density_examples() {
        let s = lattice(vec![3; 8], 4, Kernel::Pushing);
        assert!(s.coarse_density(2).unwrap().values().iter().all(|&x| x == 0.75));
        let s = lattice(vec![0, 2, 0, 2, 0, 2, 0, 2], 2, Kernel::Pushing);
        assert_eq!(s.coarse_density(1).unwrap().values(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(s.coarse_density(2).unwrap().values().iter().all(|&x| x == 0.5));
        assert!(s.coarse_density(3).is_err());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mut occ = vec![0; 40];
        occ[20] = 5000;
        let mut a = LatticeState::new(occ, 100, 0.1, Kernel::Pushing, 2.0, 1.0, 11).unwrap();
        let mut b = a.clone();
        a.advance_to(0.01, 0.1).unwrap();
        b.advance_to(0.01, 0.1).unwrap();
        assert_eq!(a.occupancy, b.occupancy);
        let mut c = b.reseeded(12);
        c.t = 0.0;
        let mut d = a.reseeded(12);
        d.t = 0.0;
        c.advance_to(0.01, 0.1).unwrap();
        d.advance_to(0.01, 0.1).unwrap();
        assert_eq!(c.occupancy, d.occupancy);
    }

    #[test]
    fn symmetric_load_stays_symmetric_on_average() {
        let n = 40;
        let mut occ = vec![0; n];
        occ[19] = 2000;
        occ[20] = 2000;
        let base = LatticeState::new(occ, 100, 0.1, Kernel::Pushing, 2.0, 1.0, 0).unwrap();
        let seeds: Vec<u64> = (0..12).collect();
        let ens = run_ensemble(&base, &seeds, 0.02, 0.1, 1).unwrap();
        let k = seeds.len() as f64;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let diffs: Vec<f64> = ens.members.iter().map(|f| f.values()[i] - f.values()[j]).collect();
            let mean = diffs.iter().sum::<f64>() / k;
            let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let se = (var / k).sqrt();
            assert!(mean.abs() <= 3.0 * se + 1e-12, "site {i}: {mean} vs se {se}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn leaping_conserves_particles(
                occ in proptest::collection::vec(0u64..500, 4..24),
                v in proptest::collection::vec(0.0f64..1.0, 24),
                beta in -2.0f64..2.0,
                kernel in prop_oneof![Just(Kernel::Pushing), Just(Kernel::VolumeFilling), Just(Kernel::QuorumPushing)],
                seed in any::<u64>(),
            ) {
                let n = occ.len();
                let mut s = LatticeState::new(occ, 100, 0.5, kernel, 2.0, 1.0, seed).unwrap();
                s.beta = beta;
                s.v = v[..n].to_vec();
                let total = s.total();
                for _ in 0..20 {
                    let r = s.max_rate();
                    if r == 0.0 { break; }
                    s.step_tau_leap(0.1 / r).unwrap();
                    prop_assert_eq!(s.total(), total);
                }
            }
        }
    }
}
