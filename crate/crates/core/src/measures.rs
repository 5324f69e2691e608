//! Binned state distributions and total-variation diagnostics.
//!
//! Laws of `x_n` and invariant measures are approximated by histograms on a
//! fixed grid over a box, plus one overflow cell for everything outside.
//! Binned TV is `Σ_cells |p − q|` and never exceeds the true TV, so checks of
//! upper bounds against it are one-sided. Monte Carlo error is absorbed by
//! the noise floor `3·√(cells / samples)`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, Policy, StateVector};
use crate::quantizer::{quantize_policy, Codebook};
use crate::simulate::{check_inputs, walk, InitialState, RunSeed};

/// Samples per parallel work item; chunk counts are merged by integer addition.
const CHUNK: usize = 4096;

/// Regular grid of `bins` cells per axis over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    bins: usize,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: usize) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidBox("grid corners must have equal, nonzero dimension".into()));
        }
        if bins == 0 {
            return Err(Error::InvalidParameter("bins per axis must be >= 1".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::InvalidBox(format!("grid needs finite lo < hi, got {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi, bins })
    }

    /// `[-half_width, half_width]` in one dimension.
    pub fn interval(half_width: f64, bins: usize) -> Result<Self> {
        Self::new(vec![-half_width], vec![half_width], bins)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Number of in-box cells (the overflow cell not included).
    pub fn cells(&self) -> usize {
        self.bins.pow(self.dim() as u32)
    }

    /// Cell index of `x`, or `cells()` for the overflow cell.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for ((&l, &h), &v) in self.lo.iter().zip(&self.hi).zip(x) {
            if !(v >= l && v <= h) {
                return self.cells();
            }
            let b = (((v - l) / (h - l)) * self.bins as f64).floor() as usize;
            idx = idx * self.bins + b.min(self.bins - 1);
        }
        idx
    }

    /// Per-axis `(lo, hi)` edges of an in-box cell.
    pub fn cell_bounds(&self, cell: usize) -> Vec<(f64, f64)> {
        let mut rem = cell;
        let mut out = vec![(0.0, 0.0); self.dim()];
        for j in (0..self.dim()).rev() {
            let b = rem % self.bins;
            rem /= self.bins;
            let w = (self.hi[j] - self.lo[j]) / self.bins as f64;
            out[j] = (self.lo[j] + b as f64 * w, self.lo[j] + (b + 1) as f64 * w);
        }
        out
    }
}

/// `3·√(cells / samples)`.
pub fn noise_floor(cells: usize, samples: usize) -> f64 {
    3.0 * (cells as f64 / samples as f64).sqrt()
}

/// Normalized histogram with an overflow cell (last entry of `mass`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedMeasure {
    grid: Grid,
    mass: Vec<f64>,
}

impl BinnedMeasure {
    pub fn from_counts(grid: Grid, counts: &[u64]) -> Result<Self> {
        if counts.len() != grid.cells() + 1 {
            return Err(Error::GridMismatch);
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidParameter("histogram has no samples".into()));
        }
        let mass = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { grid, mass })
    }

    /// Explicit masses (in-box cells then overflow); must sum to 1.
    pub fn from_masses(grid: Grid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.cells() + 1 {
            return Err(Error::GridMismatch);
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidParameter("masses must be nonnegative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { grid, mass })
    }

    pub fn from_states<'a>(grid: Grid, states: impl IntoIterator<Item = &'a StateVector>) -> Result<Self> {
        let mut counts = vec![0u64; grid.cells() + 1];
        for x in states {
            counts[grid.cell_of(x)] += 1;
        }
        Self::from_counts(grid, &counts)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn overflow(&self) -> f64 {
        *self.mass.last().expect("overflow cell")
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// CSV with one row per cell: index, per-axis edges, mass.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell");
        for j in 0..self.grid.dim() {
            let _ = write!(out, ",lo_{j},hi_{j}");
        }
        out.push_str(",mass\n");
        for (cell, m) in self.mass.iter().enumerate() {
            if cell == self.grid.cells() {
                let _ = write!(out, "overflow");
                for _ in 0..self.grid.dim() {
                    out.push_str(",,");
                }
            } else {
                let _ = write!(out, "{cell}");
                for (l, h) in self.grid.cell_bounds(cell) {
                    let _ = write!(out, ",{l},{h}");
                }
            }
            let _ = writeln!(out, ",{m}");
        }
        out
    }
}

/// `Σ_cells |p − q|`, range `[0, 2]`.
pub fn tv_distance(p: &BinnedMeasure, q: &BinnedMeasure) -> Result<f64> {
    if p.grid != q.grid {
        return Err(Error::GridMismatch);
    }
    Ok(p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum())
}

/// Histograms of `x_0, …, x_{n_max}` over `n_samples` independent rollouts.
///
/// Sample `i` uses stream `i`, so two policies evaluated with the same seed
/// share their noise.
pub fn marginals_by_stage(
    model: &MdpModel,
    policy: &Policy,
    x0: &InitialState,
    n_max: usize,
    n_samples: usize,
    grid: &Grid,
    seed: RunSeed,
) -> Result<Vec<BinnedMeasure>> {
    check_inputs(model, policy, x0)?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    if grid.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            actual: grid.dim(),
            context: "grid dimension",
        });
    }
    let width = grid.cells() + 1;
    let chunks = n_samples.div_ceil(CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; (n_max + 1) * width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let mut rng = seed.stream(i as u64);
                walk(model, policy, x0, n_max, &mut rng, |t, x, _| {
                    counts[t * width + grid.cell_of(x)] += 1;
                });
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; (n_max + 1) * width];
    for p in partial {
        for (acc, c) in counts.iter_mut().zip(p) {
            *acc += c;
        }
    }
    counts
        .chunks(width)
        .map(|row| BinnedMeasure::from_counts(grid.clone(), row))
        .collect()
}

/// Histogram of `x_n` from `n_samples` independent realizations.
pub fn empirical_marginal(
    model: &MdpModel,
    policy: &Policy,
    x0: &InitialState,
    n: usize,
    n_samples: usize,
    grid: &Grid,
    seed: RunSeed,
) -> Result<BinnedMeasure> {
    Ok(marginals_by_stage(model, policy, x0, n, n_samples, grid, seed)?
        .pop()
        .expect("n + 1 stages"))
}

/// Long-chain sampling plan for invariant-measure estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSampling {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
}

impl ChainSampling {
    pub fn new(burn_in: usize, n_samples: usize, thinning: usize) -> Self {
        Self {
            burn_in,
            n_samples,
            thinning,
        }
    }
}

/// States `x_{B}, x_{B+τ}, x_{B+2τ}, …` of one long chain.
pub fn invariant_samples(
    model: &MdpModel,
    policy: &Policy,
    x0: &InitialState,
    plan: ChainSampling,
    seed: RunSeed,
) -> Result<Vec<StateVector>> {
    check_inputs(model, policy, x0)?;
    if plan.thinning == 0 || plan.n_samples == 0 {
        return Err(Error::InvalidParameter("thinning and n_samples must be >= 1".into()));
    }
    let last = plan.burn_in + (plan.n_samples - 1) * plan.thinning;
    let mut out = Vec::with_capacity(plan.n_samples);
    let mut rng = seed.stream(u64::MAX);
    walk(model, policy, x0, last, &mut rng, |t, x, _| {
        if t >= plan.burn_in && (t - plan.burn_in).is_multiple_of(plan.thinning) {
            out.push(x.clone());
        }
    });
    Ok(out)
}

/// Histogram estimate of the invariant measure `ν_π` of the induced kernel.
#[allow(clippy::too_many_arguments)]
pub fn estimate_invariant_measure(
    model: &MdpModel,
    policy: &Policy,
    x0: &InitialState,
    burn_in: usize,
    n_samples: usize,
    thinning: usize,
    grid: &Grid,
    seed: RunSeed,
) -> Result<BinnedMeasure> {
    let states = invariant_samples(model, policy, x0, ChainSampling::new(burn_in, n_samples, thinning), seed)?;
    BinnedMeasure::from_states(grid.clone(), &states)
}

/// Least-squares fit of `tv_n ≈ C κⁿ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricFit {
    pub c: f64,
    pub kappa: f64,
    pub points: usize,
}

/// Fits `ln tv_n = ln C + n ln κ` over entries above `floor` (`tv[0]` is `n = 1`).
pub fn fit_geometric(tv_by_n: &[f64], floor: f64) -> Option<GeometricFit> {
    let pts: Vec<(f64, f64)> = tv_by_n
        .iter()
        .enumerate()
        .filter(|(_, &tv)| tv > floor)
        .map(|(i, &tv)| ((i + 1) as f64, tv.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let kappa = slope.exp();
    let c = (my - slope * mx).exp();
    (kappa > 0.0 && kappa < 1.0 && c.is_finite()).then_some(GeometricFit {
        c,
        kappa,
        points: pts.len(),
    })
}

/// `TV(λ̂_n, ν̂)` for `n = 1 … n_max` with a fitted geometric envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityProfile {
    pub tv_by_n: Vec<f64>,
    pub noise_floor: f64,
    /// `None` when fewer than two entries clear the noise floor.
    pub fit: Option<GeometricFit>,
}

impl ErgodicityProfile {
    /// CSV columns `n,tv,bound`; the bound column is `C κⁿ` when given.
    pub fn to_csv(&self, bound: Option<(f64, f64)>) -> String {
        let mut out = String::from("n,tv,bound\n");
        for (i, tv) in self.tv_by_n.iter().enumerate() {
            let n = i + 1;
            let b = bound.map(|(c, k)| format!("{}", c * k.powi(n as i32))).unwrap_or_default();
            let _ = writeln!(out, "{n},{tv},{b}");
        }
        out
    }
}

/// Measures how fast the law of `x_n` from `x0` approaches the invariant measure.
#[allow(clippy::too_many_arguments)]
pub fn ergodicity_profile(
    model: &MdpModel,
    policy: &Policy,
    x0: StateVector,
    n_max: usize,
    per_n_samples: usize,
    grid: &Grid,
    invariant: ChainSampling,
    seed: RunSeed,
) -> Result<ErgodicityProfile> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("n_max must be >= 2".into()));
    }
    let start = InitialState::Point(x0);
    let nu = estimate_invariant_measure(
        model,
        policy,
        &start,
        invariant.burn_in,
        invariant.n_samples,
        invariant.thinning,
        grid,
        seed.child(1),
    )?;
    let marginals = marginals_by_stage(model, policy, &start, n_max, per_n_samples, grid, seed.child(2))?;
    let tv_by_n = marginals[1..]
        .iter()
        .map(|m| tv_distance(m, &nu))
        .collect::<Result<Vec<_>>>()?;
    let floor = noise_floor(grid.cells(), per_n_samples.min(invariant.n_samples));
    Ok(ErgodicityProfile {
        fit: fit_geometric(&tv_by_n, floor),
        tv_by_n,
        noise_floor: floor,
    })
}

/// One stage of the marginal-TV check against `αK₂(2n − 1)(1/k)^{1/d}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvBoundRow {
    pub n: usize,
    pub tv: f64,
    pub bound: f64,
    pub noise_floor: f64,
    pub pass: bool,
}

/// Slack, in noise floors, allowed above the marginal-TV bound.
pub const TV_BOUND_FLOOR_MULTIPLIER: f64 = 3.0;

/// Compares binned marginals of `π` and `π^k` with the marginal-TV bound.
///
/// Both policies start from the model's initial law and share streams.
#[allow(clippy::too_many_arguments)]
pub fn check_marginal_tv_bound(
    model: &MdpModel,
    policy: &Policy,
    codebook: Arc<Codebook>,
    n_list: &[usize],
    per_n_samples: usize,
    grid: &Grid,
    alpha: f64,
    k2: f64,
    k: usize,
    d: usize,
    seed: RunSeed,
) -> Result<Vec<TvBoundRow>> {
    if !matches!(policy, Policy::Deterministic(_)) {
        return Err(Error::NotDeterministic);
    }
    let quantized = quantize_policy(policy, codebook)?;
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let exact = marginals_by_stage(model, policy, &InitialState::Sample, n_max, per_n_samples, grid, seed)?;
    let approx = marginals_by_stage(model, &quantized, &InitialState::Sample, n_max, per_n_samples, grid, seed)?;
    let floor = noise_floor(grid.cells(), per_n_samples);
    let rate = (1.0 / k as f64).powf(1.0 / d as f64);
    n_list
        .iter()
        .map(|&n| {
            let tv = tv_distance(&exact[n], &approx[n])?;
            let bound = alpha * k2 * (2.0 * n as f64 - 1.0) * rate;
            Ok(TvBoundRow {
                n,
                tv,
                bound,
                noise_floor: floor,
                pass: tv <= bound + TV_BOUND_FLOOR_MULTIPLIER * floor,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionBox, ActionVector, CostFunction, DeterministicMap};
    use crate::systems::make_bounded_drift;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn two_cells() -> Grid {
        Grid::new(vec![0.0], vec![2.0], 2).unwrap()
    }

    fn hold_policy() -> Policy {
        Policy::Deterministic(DeterministicMap::constant(1, ActionVector::from(vec![0.0])))
    }

    fn iid_gaussian() -> MdpModel {
        let b = ActionBox::symmetric(1, 1.0).unwrap();
        make_bounded_drift(1.0, 1.0, |_, _| 0.0, b, CostFunction::positive_indicator().unwrap()).unwrap()
    }

    /// Exact binned N(0, 1) on a grid.
    fn gaussian_bins(grid: &Grid) -> BinnedMeasure {
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut mass: Vec<f64> = (0..grid.cells())
            .map(|c| {
                let (l, h) = grid.cell_bounds(c)[0];
                n.cdf(h) - n.cdf(l)
            })
            .collect();
        let inside: f64 = mass.iter().sum();
        mass.push(1.0 - inside);
        BinnedMeasure::from_masses(grid.clone(), mass).unwrap()
    }

    #[test]
    fn tv_examples() {
        let p = BinnedMeasure::from_masses(two_cells(), vec![0.5, 0.5, 0.0]).unwrap();
        let q = BinnedMeasure::from_masses(two_cells(), vec![0.75, 0.25, 0.0]).unwrap();
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert!((tv_distance(&p, &q).unwrap() - 0.5).abs() < 1e-15);
        let a = BinnedMeasure::from_masses(two_cells(), vec![1.0, 0.0, 0.0]).unwrap();
        let b = BinnedMeasure::from_masses(two_cells(), vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), 2.0);
        let other = BinnedMeasure::from_masses(Grid::new(vec![0.0], vec![2.0], 1).unwrap(), vec![1.0, 0.0]).unwrap();
        assert_eq!(tv_distance(&a, &other).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn cell_lookup_and_overflow() {
        let g = Grid::new(vec![-1.0, 0.0], vec![1.0, 1.0], 4).unwrap();
        assert_eq!(g.cells(), 16);
        assert_eq!(g.cell_of(&[-1.0, 0.0]), 0);
        assert_eq!(g.cell_of(&[1.0, 1.0]), 15);
        assert_eq!(g.cell_of(&[-0.4, 0.6]), 6);
        assert_eq!(g.cell_of(&[1.5, 0.5]), 16);
        assert_eq!(g.cell_of(&[f64::NAN, 0.5]), 16);
        assert_eq!(g.cell_bounds(6), vec![(-0.5, 0.0), (0.5, 0.75)]);
    }

    #[test]
    fn stage_zero_point_mass() {
        let g = Grid::interval(5.0, 50).unwrap();
        let m = empirical_marginal(
            &iid_gaussian(),
            &hold_policy(),
            &InitialState::Point(StateVector::from(vec![0.0])),
            0,
            100,
            &g,
            RunSeed::new(0),
        )
        .unwrap();
        assert_eq!(m.mass()[g.cell_of(&[0.0])], 1.0);
    }

    #[test]
    fn one_step_marginal_is_standard_normal() {
        let g = Grid::interval(5.0, 50).unwrap();
        let m = empirical_marginal(
            &iid_gaussian(),
            &hold_policy(),
            &InitialState::Point(StateVector::from(vec![3.0])),
            1,
            100_000,
            &g,
            RunSeed::new(4),
        )
        .unwrap();
        let tv = tv_distance(&m, &gaussian_bins(&g)).unwrap();
        assert!(tv < 0.05, "tv = {tv}");
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn action_independent_kernel_ignores_policy() {
        let g = Grid::interval(5.0, 50).unwrap();
        let other = Policy::Deterministic(DeterministicMap::identity(1));
        let x0 = InitialState::Point(StateVector::from(vec![1.0]));
        let a = empirical_marginal(&iid_gaussian(), &hold_policy(), &x0, 1, 10_000, &g, RunSeed::new(1)).unwrap();
        let b = empirical_marginal(&iid_gaussian(), &other, &x0, 1, 10_000, &g, RunSeed::new(1)).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn invariant_measure_of_iid_chain() {
        let g = Grid::interval(5.0, 50).unwrap();
        let model = iid_gaussian();
        let nu = |x: f64, seed| {
            estimate_invariant_measure(
                &model,
                &hold_policy(),
                &InitialState::Point(StateVector::from(vec![x])),
                100,
                100_000,
                2,
                &g,
                RunSeed::new(seed),
            )
            .unwrap()
        };
        let (a, b) = (nu(-5.0, 1), nu(5.0, 2));
        assert!(tv_distance(&a, &gaussian_bins(&g)).unwrap() < 0.05);
        assert!(tv_distance(&a, &b).unwrap() < 0.05);
    }

    #[test]
    fn contraction_concentrates_near_zero() {
        let model = MdpModel::builder(1, 1)
            .transition(|x, _, rng| {
                use rand::Rng;
                StateVector::from(vec![0.5 * x[0] + 1e-6 * (rng.random::<f64>() - 0.5)])
            })
            .cost(CostFunction::constant(0.0).unwrap())
            .initial_point(StateVector::from(vec![10.0]))
            .build()
            .unwrap();
        let g = Grid::interval(1.0, 100).unwrap();
        let nu = estimate_invariant_measure(
            &model,
            &hold_policy(),
            &InitialState::Point(StateVector::from(vec![10.0])),
            100,
            1_000,
            1,
            &g,
            RunSeed::new(0),
        )
        .unwrap();
        let near_zero = nu.mass()[g.cell_of(&[0.0])] + nu.mass()[g.cell_of(&[-1e-9])];
        assert_eq!(near_zero, 1.0);
    }

    #[test]
    fn invariant_measure_is_a_fixed_point() {
        let b = ActionBox::symmetric(1, 1.0).unwrap();
        let model = make_bounded_drift(1.0, 1.0, |x, _| x.tanh(), b, CostFunction::positive_indicator().unwrap()).unwrap();
        let g = Grid::interval(6.0, 50).unwrap();
        let n = 100_000;
        let states = invariant_samples(
            &model,
            &hold_policy(),
            &InitialState::Point(StateVector::from(vec![0.0])),
            ChainSampling::new(500, n, 5),
            RunSeed::new(3),
        )
        .unwrap();
        let before = BinnedMeasure::from_states(g.clone(), &states).unwrap();
        let seed = RunSeed::new(77);
        let pushed: Vec<StateVector> = states
            .iter()
            .enumerate()
            .map(|(i, x)| model.step(x, &ActionVector::from(vec![0.0]), &mut seed.stream(i as u64)))
            .collect();
        let after = BinnedMeasure::from_states(g.clone(), &pushed).unwrap();
        assert!(tv_distance(&before, &after).unwrap() <= 2.0 * noise_floor(g.cells(), n));
    }

    #[test]
    fn fit_recovers_exact_geometric_sequence() {
        let tv: Vec<f64> = (1..=20).map(|n| 1.5 * 0.8f64.powi(n)).collect();
        let fit = fit_geometric(&tv, 0.0).unwrap();
        assert!((fit.kappa - 0.8).abs() < 1e-12);
        assert!((fit.c - 1.5).abs() < 1e-10);
        assert!(fit_geometric(&[0.01, 0.02, 0.01], 0.05).is_none());
        assert!(fit_geometric(&[0.5, 0.6], 0.0).is_none());
    }

    #[test]
    fn iid_chain_profile_is_unresolved() {
        let p = ergodicity_profile(
            &iid_gaussian(),
            &hold_policy(),
            StateVector::from(vec![10.0]),
            5,
            20_000,
            &Grid::interval(6.0, 50).unwrap(),
            ChainSampling::new(10, 20_000, 1),
            RunSeed::new(0),
        )
        .unwrap();
        assert!(p.tv_by_n.iter().all(|&tv| tv <= p.noise_floor), "{p:?}");
        assert!(p.fit.is_none());
        assert!(p.to_csv(Some((2.0, 0.9))).starts_with("n,tv,bound\n1,"));
    }

    #[test]
    fn marginal_bound_with_zero_radius_and_zero_k2() {
        let model = iid_gaussian();
        let g = Grid::interval(5.0, 50).unwrap();
        let f = Policy::Deterministic(DeterministicMap::clamped_identity(ActionBox::symmetric(1, 1.0).unwrap()));
        let cb = Arc::new(crate::quantizer::build_uniform_net(&ActionBox::symmetric(1, 1.0).unwrap(), 16).unwrap());
        let rows = check_marginal_tv_bound(&model, &f, cb, &[1, 2, 3], 20_000, &g, 2.0, 0.0, 16, 1, RunSeed::new(0)).unwrap();
        for r in rows {
            assert_eq!(r.bound, 0.0);
            assert!(r.tv <= r.noise_floor && r.pass);
        }
    }

    #[test]
    fn measure_csv_layout() {
        let p = BinnedMeasure::from_masses(two_cells(), vec![0.5, 0.25, 0.25]).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cell,lo_0,hi_0,mass");
        assert_eq!(lines[1], "0,0,1,0.5");
        assert_eq!(lines[3], "overflow,,,0.25");
    }

    fn measure_strategy() -> impl Strategy<Value = BinnedMeasure> {
        prop::collection::vec(0u64..50, 9).prop_filter_map("empty", |counts| {
            BinnedMeasure::from_counts(Grid::interval(1.0, 8).unwrap(), &counts).ok()
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(p in measure_strategy(), q in measure_strategy(), r in measure_strategy()) {
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
            prop_assert!(tv_distance(&p, &p).unwrap() < 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&pq));
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
            if pq < 1e-12 {
                prop_assert_eq!(p.mass(), q.mass());
            }
        }

        #[test]
        fn histograms_are_normalized(xs in prop::collection::vec(-3.0f64..3.0, 1..500)) {
            let states: Vec<StateVector> = xs.iter().map(|&x| StateVector::from(vec![x])).collect();
            let m = BinnedMeasure::from_states(Grid::interval(2.0, 10).unwrap(), &states).unwrap();
            prop_assert!((m.total_mass() - 1.0).abs() < 1e-12);
        }
    }
}
