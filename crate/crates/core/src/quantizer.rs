//! Finite action nets and nearest-neighbor quantized policies.
//!
//! A [`Codebook`] is a finite level set `Λ ⊂ ℝᵈ` in a fixed order. The
//! uniform net places `m = ⌊k^{1/d}⌋` cells per axis of the action box and
//! puts one level at each cell center, so every box point is within half a
//! cell diagonal of some level. Quantizing a policy composes it with the
//! nearest-level map; ties go to the smallest index.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{check_dim, euclidean, ActionBox, ActionVector, DeterministicMap, Policy};

#[derive(Clone, Debug, PartialEq, Serialize)]
struct GridLayout {
    lo: Vec<f64>,
    step: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
}

impl GridLayout {
    fn new(action_box: &ActionBox, m: usize) -> Self {
        let counts: Vec<usize> = action_box
            .sides()
            .iter()
            .map(|&s| if s > 0.0 { m } else { 1 })
            .collect();
        let step = action_box
            .sides()
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let mut strides = vec![1; counts.len()];
        for j in (0..counts.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * counts[j + 1];
        }
        Self {
            lo: action_box.lo().to_vec(),
            step,
            counts,
            strides,
        }
    }

    fn len(&self) -> usize {
        self.counts.iter().product()
    }

    fn center(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * self.step[axis]
    }

    /// Levels in lexicographic order (first axis most significant).
    fn levels(&self) -> Vec<ActionVector> {
        let d = self.counts.len();
        (0..self.len())
            .map(|idx| {
                let coords = (0..d)
                    .map(|j| self.center(j, (idx / self.strides[j]) % self.counts[j]))
                    .collect::<Vec<_>>();
                ActionVector::from(coords)
            })
            .collect()
    }

    /// Search window per axis: the cell containing `a` and its two neighbors.
    fn window(&self, a: &[f64]) -> Vec<(usize, usize)> {
        a.iter()
            .enumerate()
            .map(|(j, &x)| {
                let last = self.counts[j] - 1;
                let c = if self.step[j] > 0.0 {
                    ((x - self.lo[j]) / self.step[j]).floor().clamp(0.0, last as f64) as usize
                } else {
                    0
                };
                (c.saturating_sub(1), (c + 1).min(last))
            })
            .collect()
    }
}

/// Finite action set `Λ` with its covering radius and rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Codebook {
    levels: Vec<ActionVector>,
    #[serde(rename = "box")]
    action_box: ActionBox,
    covering_radius: Option<f64>,
    rate_bits: f64,
    #[serde(skip)]
    layout: Option<GridLayout>,
}

impl Codebook {
    /// Codebook from explicit levels; the box is their bounding box.
    ///
    /// The covering radius is computed exactly in one dimension and left
    /// unknown otherwise.
    pub fn from_levels(levels: Vec<ActionVector>) -> Result<Self> {
        let first = levels.first().ok_or(Error::EmptyCodebook)?;
        let d = first.dim();
        for (i, l) in levels.iter().enumerate() {
            check_dim(d, l.dim(), "codebook level")?;
            if !l.is_finite() {
                return Err(Error::NonFinite("codebook level"));
            }
            if levels[..i].contains(l) {
                return Err(Error::InvalidParameter(format!("duplicate level {:?}", l.as_slice())));
            }
        }
        let lo = (0..d)
            .map(|j| levels.iter().map(|l| l[j]).fold(f64::INFINITY, f64::min))
            .collect();
        let hi = (0..d)
            .map(|j| levels.iter().map(|l| l[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let action_box = ActionBox::new(lo, hi)?;
        let covering_radius = (d == 1).then(|| {
            let mut xs: Vec<f64> = levels.iter().map(|l| l[0]).collect();
            xs.sort_by(f64::total_cmp);
            xs.windows(2).map(|w| (w[1] - w[0]) / 2.0).fold(0.0, f64::max)
        });
        let rate_bits = (levels.len() as f64).log2();
        Ok(Self {
            levels,
            action_box,
            covering_radius,
            rate_bits,
            layout: None,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.action_box.dim()
    }

    pub fn levels(&self) -> &[ActionVector] {
        &self.levels
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    /// Exact `max_{a ∈ box} min_λ ‖a − λ‖`, when known.
    pub fn covering_radius(&self) -> Option<f64> {
        self.covering_radius
    }

    pub fn rate_bits(&self) -> f64 {
        self.rate_bits
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        self.levels.iter().any(|l| l.as_slice() == a)
    }

    /// Nearest level; equidistant candidates resolve to the smallest index.
    pub fn nearest_unchecked(&self, a: &[f64]) -> (usize, &ActionVector) {
        let idx = match &self.layout {
            Some(layout) => self.nearest_in_window(layout, a),
            None => self.nearest_brute(a),
        };
        (idx, &self.levels[idx])
    }

    fn nearest_brute(&self, a: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, l) in self.levels.iter().enumerate() {
            let d = sq_dist(l, a);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    fn nearest_in_window(&self, layout: &GridLayout, a: &[f64]) -> usize {
        let window = layout.window(a);
        let d = window.len();
        let mut cursor: Vec<usize> = window.iter().map(|w| w.0).collect();
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        // Odometer over the window in increasing (lexicographic) index order.
        loop {
            let idx: usize = cursor.iter().zip(&layout.strides).map(|(c, s)| c * s).sum();
            let dist = sq_dist(&self.levels[idx], a);
            if dist < best_d {
                best = idx;
                best_d = dist;
            }
            let mut j = d;
            loop {
                if j == 0 {
                    return if best == usize::MAX { self.nearest_brute(a) } else { best };
                }
                j -= 1;
                if cursor[j] < window[j].1 {
                    cursor[j] += 1;
                    break;
                }
                cursor[j] = window[j].0;
            }
        }
    }

    /// Plain-text form: one level per line, comma-separated coordinates.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.levels {
            let line = l.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(",");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let levels = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|line| {
                line.split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::InvalidParameter(format!("bad coordinate {c:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .and_then(ActionVector::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_levels(levels)
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest `m` with `mᵈ ≤ k`.
pub fn cells_per_axis(k: usize, d: usize) -> usize {
    let mut m = (k as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    let fits = |m: usize| (m as u128).checked_pow(d as u32).is_some_and(|p| p <= k as u128);
    while m > 1 && !fits(m) {
        m -= 1;
    }
    while fits(m + 1) {
        m += 1;
    }
    m
}

/// Cell-centered uniform grid with at most `k` levels on `action_box`.
pub fn build_uniform_net(action_box: &ActionBox, k: usize) -> Result<Codebook> {
    if k < 1 {
        return Err(Error::InvalidParameter("level count k must be >= 1".into()));
    }
    let m = cells_per_axis(k, action_box.dim());
    let layout = GridLayout::new(action_box, m);
    let levels = layout.levels();
    let covering_radius = 0.5
        * layout
            .step
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt();
    Ok(Codebook {
        rate_bits: (levels.len() as f64).log2(),
        levels,
        action_box: action_box.clone(),
        covering_radius: Some(covering_radius),
        layout: Some(layout),
    })
}

/// Index and value of the level closest to `a`.
pub fn nearest_level<'c>(codebook: &'c Codebook, a: &[f64]) -> Result<(usize, &'c ActionVector)> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    check_dim(codebook.dim(), a.len(), "action to quantize")?;
    if a.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("action to quantize"));
    }
    Ok(codebook.nearest_unchecked(a))
}

/// `q_k(x) = argmin_{λ ∈ Λ} ‖f(x) − λ‖`.
pub fn quantize_policy(policy: &Policy, codebook: Arc<Codebook>) -> Result<Policy> {
    check_dim(policy.action_dim(), codebook.dim(), "codebook dimension")?;
    let base = match policy {
        Policy::Deterministic(f) => f.clone(),
        Policy::Quantized { .. } => {
            let inner = policy.clone();
            DeterministicMap::new(policy.label(), policy.state_dim(), policy.action_dim(), move |x| {
                inner.act(x, 0.0)
            })
        }
        Policy::Randomized(_) => return Err(Error::NotDeterministic),
    };
    Ok(Policy::Quantized { base, codebook })
}

/// `log₂ |Λ|`.
pub fn rate(codebook: &Codebook) -> f64 {
    codebook.rate_bits()
}

/// Largest distance from `a` to its quantization, over a set of points.
pub fn max_quantization_error<'a>(codebook: &Codebook, points: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    points
        .into_iter()
        .map(|a| euclidean(codebook.nearest_unchecked(a).1, a))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::StateVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn av(v: &[f64]) -> ActionVector {
        ActionVector::new(v.to_vec()).unwrap()
    }

    fn three() -> Codebook {
        Codebook::from_levels(vec![av(&[-1.0]), av(&[0.0]), av(&[1.0])]).unwrap()
    }

    #[test]
    fn uniform_net_on_interval() {
        let b = ActionBox::new(vec![-1.0], vec![1.0]).unwrap();
        let cb = build_uniform_net(&b, 4).unwrap();
        let got: Vec<f64> = cb.levels().iter().map(|l| l[0]).collect();
        assert_eq!(got, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(cb.covering_radius(), Some(0.25));
        assert_eq!(cb.rate_bits(), 2.0);
    }

    #[test]
    fn degenerate_box_gives_single_level() {
        let b = ActionBox::new(vec![0.0], vec![0.0]).unwrap();
        for k in [1, 7, 100] {
            let cb = build_uniform_net(&b, k).unwrap();
            assert_eq!(cb.levels(), &[av(&[0.0])]);
            assert_eq!(cb.covering_radius(), Some(0.0));
        }
    }

    #[test]
    fn square_net_radius() {
        let b = ActionBox::symmetric(2, 1.0).unwrap();
        let cb = build_uniform_net(&b, 9).unwrap();
        assert_eq!(cb.len(), 9);
        assert!((cb.covering_radius().unwrap() - 2f64.sqrt() / 3.0).abs() < 1e-15);
        // lexicographic order
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(cb.levels()[1].as_slice(), &[-2.0 / 3.0, 0.0]));
        assert!(close(cb.levels()[3].as_slice(), &[0.0, -2.0 / 3.0]));
    }

    #[test]
    fn k_zero_is_rejected() {
        let b = ActionBox::symmetric(1, 1.0).unwrap();
        assert!(build_uniform_net(&b, 0).is_err());
    }

    #[test]
    fn cells_per_axis_handles_exact_powers() {
        assert_eq!(cells_per_axis(8, 3), 2);
        assert_eq!(cells_per_axis(27, 3), 3);
        assert_eq!(cells_per_axis(26, 3), 2);
        assert_eq!(cells_per_axis(1_000_000, 2), 1000);
        assert_eq!(cells_per_axis(999_999, 2), 999);
        assert_eq!(cells_per_axis(1, 5), 1);
    }

    #[test]
    fn nearest_level_examples() {
        let cb = three();
        assert_eq!(nearest_level(&cb, &[0.4]).unwrap(), (1, &av(&[0.0])));
        assert_eq!(nearest_level(&cb, &[0.5]).unwrap(), (1, &av(&[0.0])));
        assert_eq!(nearest_level(&cb, &[2.7]).unwrap(), (2, &av(&[1.0])));
        assert!(nearest_level(&cb, &[0.1, 0.2]).is_err());
        assert!(nearest_level(&cb, &[f64::NAN]).is_err());
    }

    #[test]
    fn grid_tie_goes_to_lower_index() {
        let b = ActionBox::new(vec![-1.0], vec![1.0]).unwrap();
        let cb = build_uniform_net(&b, 4).unwrap();
        assert_eq!(nearest_level(&cb, &[0.0]).unwrap().0, 1);
        assert_eq!(nearest_level(&cb, &[-0.5]).unwrap().0, 0);
        assert_eq!(nearest_level(&cb, &[0.5]).unwrap().0, 2);
    }

    #[test]
    fn quantize_identity_examples() {
        let f = Policy::Deterministic(DeterministicMap::identity(1));
        let x = StateVector::new(vec![0.4]).unwrap();
        let q = quantize_policy(&f, Arc::new(three())).unwrap();
        assert_eq!(q.policy_action(&x, None).unwrap(), av(&[0.0]));

        let b = ActionBox::new(vec![-1.0], vec![1.0]).unwrap();
        let q4 = quantize_policy(&f, Arc::new(build_uniform_net(&b, 4).unwrap())).unwrap();
        let x = StateVector::new(vec![0.1]).unwrap();
        assert_eq!(q4.policy_action(&x, None).unwrap(), av(&[0.25]));

        let single = Codebook::from_levels(vec![av(&[3.0])]).unwrap();
        let qs = quantize_policy(&f, Arc::new(single)).unwrap();
        for v in [-10.0, 0.0, 99.0] {
            let x = StateVector::new(vec![v]).unwrap();
            assert_eq!(qs.policy_action(&x, None).unwrap(), av(&[3.0]));
        }
    }

    #[test]
    fn quantize_rejects_randomized_and_mismatched() {
        let spec = crate::randomized::from_finite_mixture(&[1.0], vec![DeterministicMap::identity(1)]).unwrap();
        assert_eq!(
            quantize_policy(&Policy::Randomized(spec), Arc::new(three())).unwrap_err(),
            Error::NotDeterministic
        );
        let f = Policy::Deterministic(DeterministicMap::identity(2));
        assert!(quantize_policy(&f, Arc::new(three())).is_err());
    }

    #[test]
    fn rate_examples() {
        let b = ActionBox::symmetric(1, 1.0).unwrap();
        assert_eq!(rate(&build_uniform_net(&b, 8).unwrap()), 3.0);
        assert!((rate(&three()) - 3f64.log2()).abs() < 1e-15);
        assert!((rate(&three()) - 1.584962500721156).abs() < 1e-12);
        assert_eq!(rate(&build_uniform_net(&b, 1).unwrap()), 0.0);
    }

    #[test]
    fn text_round_trip() {
        let b = ActionBox::symmetric(2, 1.0).unwrap();
        let cb = build_uniform_net(&b, 4).unwrap();
        let text = cb.to_text();
        assert_eq!(text.lines().next(), Some("-0.5,-0.5"));
        let back = Codebook::from_text(&text).unwrap();
        assert_eq!(back.levels(), cb.levels());
        assert!(Codebook::from_text("1,x\n").is_err());
        assert!(Codebook::from_text("").is_err());
    }

    #[test]
    fn from_levels_radius_in_one_dimension() {
        assert_eq!(three().covering_radius(), Some(0.5));
        assert!(Codebook::from_levels(vec![av(&[0.0]), av(&[0.0])]).is_err());
    }

    #[test]
    fn window_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (d, k) in [(1, 37), (2, 50), (3, 64), (2, 1)] {
            let b = ActionBox::new(vec![-1.0; d], (0..d).map(|j| 1.0 + j as f64).collect()).unwrap();
            let cb = build_uniform_net(&b, k).unwrap();
            for _ in 0..2_000 {
                let a: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..6.0)).collect();
                assert_eq!(cb.nearest_unchecked(&a).0, cb.nearest_brute(&a));
            }
            // exact cell boundaries
            for l in cb.levels() {
                let a: Vec<f64> = l.iter().zip(cb.action_box().sides()).map(|(c, s)| c + s / (2.0 * cells_per_axis(k, d) as f64)).collect();
                assert_eq!(cb.nearest_unchecked(&a).0, cb.nearest_brute(&a));
            }
        }
    }
}
