//! Dyadic martingale layer: conditional expectations over the grid's dyadic
//! cubes, martingale differences, the cube-sup square function and maximal
//! function, pooled good-λ decay statistics, and the probes that compare the
//! dyadic square function against semigroup data (block maximal domination,
//! difference decay across scales).

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::calculus::{
    apply_multiplier, multiplier_norm, u_blocks, CalculusError, PsiTransform,
    SquareFunctionOptions,
};
use crate::operator::{OperatorError, SpectralOperator};
use crate::space::{build_dyadic, hl_maximal, DyadicSystem, Measure, SpaceError, WeightedGrid};
use crate::util::{linear_fit, weighted_quantile};

#[derive(Debug, Error)]
pub enum MartingaleError {
    #[error("martingale depth {depth} exceeds the resolution of {m} nodes")]
    BadDepth { depth: usize, m: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("level {level} outside stack depth {depth}")]
    BadLevel { level: usize, depth: usize },
    #[error("no sample functions supplied")]
    EmptySample,
    #[error("bad exponent: {what}")]
    BadExponent { what: String },
    #[error("weight must be positive and finite, offending index {index}")]
    BadWeight { index: usize },
    #[error("degenerate distribution: {what}")]
    DegenerateDistribution { what: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// A dyadic filtration over the grid's node axis together with the measure
/// that conditional expectations average against.
pub struct MartingaleStack<'a> {
    grid: &'a WeightedGrid,
    nu: Measure,
    system: DyadicSystem,
    depth: usize,
}

impl<'a> MartingaleStack<'a> {
    pub fn new(
        grid: &'a WeightedGrid,
        nu: Measure,
        depth: usize,
    ) -> Result<Self, MartingaleError> {
        if nu.len() != grid.m {
            return Err(MartingaleError::LengthMismatch { expected: grid.m, got: nu.len() });
        }
        if depth == 0 || depth >= usize::BITS as usize || (1usize << depth) > grid.m {
            return Err(MartingaleError::BadDepth { depth, m: grid.m });
        }
        let system = build_dyadic(grid, 0, depth as i32)?;
        Ok(Self { grid, nu, system, depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn grid(&self) -> &WeightedGrid {
        self.grid
    }

    pub fn nu(&self) -> &Measure {
        &self.nu
    }

    pub fn system(&self) -> &DyadicSystem {
        &self.system
    }

    fn check_level(&self, level: usize) -> Result<(), MartingaleError> {
        if level > self.depth {
            return Err(MartingaleError::BadLevel { level, depth: self.depth });
        }
        Ok(())
    }

    fn check_len(&self, f: &[f64]) -> Result<(), MartingaleError> {
        if f.len() != self.grid.m {
            return Err(MartingaleError::LengthMismatch {
                expected: self.grid.m,
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Measure-weighted average of f over the whole axis.
    pub fn mean(&self, f: &[f64]) -> Result<f64, MartingaleError> {
        self.check_len(f)?;
        let total = self.nu.total();
        let acc: f64 = f.iter().zip(0..self.grid.m).map(|(&v, i)| v * self.nu.cell[i]).sum();
        Ok(acc / total)
    }

    /// ν-weighted squared norm.
    pub fn norm_sq(&self, f: &[f64]) -> Result<f64, MartingaleError> {
        self.check_len(f)?;
        Ok(f.iter().zip(0..self.grid.m).map(|(&v, i)| v * v * self.nu.cell[i]).sum())
    }

    /// Conditional expectation at a level: cube averages against ν, replicated
    /// to nodes. Cubes of zero ν-mass take the value 0 (see
    /// `empty_cube_count` for the flag).
    pub fn conditional_expectation(
        &self,
        level: usize,
        f: &[f64],
    ) -> Result<Vec<f64>, MartingaleError> {
        self.check_level(level)?;
        self.check_len(f)?;
        let mut out = vec![0.0; self.grid.m];
        for c in 0..self.system.cubes_at(level) {
            let (lo, hi) = self.system.node_range(level, c);
            let mass = self.nu.range_mass(lo, hi);
            if mass <= 0.0 {
                continue;
            }
            let avg: f64 = (lo..hi).map(|i| f[i] * self.nu.cell[i]).sum::<f64>() / mass;
            out[lo..hi].fill(avg);
        }
        Ok(out)
    }

    /// Number of zero-mass cubes whose conditional expectation defaults to 0.
    pub fn empty_cube_count(&self, level: usize) -> usize {
        (0..self.system.cubes_at(level))
            .filter(|&c| {
                let (lo, hi) = self.system.node_range(level, c);
                self.nu.range_mass(lo, hi) <= 0.0
            })
            .count()
    }

    /// Martingale difference E_{level+1} - E_level; `level < depth`.
    pub fn difference(&self, level: usize, f: &[f64]) -> Result<Vec<f64>, MartingaleError> {
        if level + 1 > self.depth {
            return Err(MartingaleError::BadLevel { level, depth: self.depth });
        }
        let fine = self.conditional_expectation(level + 1, f)?;
        let coarse = self.conditional_expectation(level, f)?;
        Ok(fine.iter().zip(&coarse).map(|(a, b)| a - b).collect())
    }

    /// Assign to every node the sup of |values| over its level-cube.
    pub fn level_sup(&self, level: usize, values: &[f64]) -> Result<Vec<f64>, MartingaleError> {
        self.check_level(level)?;
        self.check_len(values)?;
        let mut out = vec![0.0; self.grid.m];
        for c in 0..self.system.cubes_at(level) {
            let (lo, hi) = self.system.node_range(level, c);
            let sup = values[lo..hi].iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            out[lo..hi].fill(sup);
        }
        Ok(out)
    }

    /// Cube-sup square function S(f)(x) = (Σ_k sup_{Q_k(x)} |D_k f|²)^{1/2}.
    pub fn square_function(&self, f: &[f64]) -> Result<Vec<f64>, MartingaleError> {
        self.check_len(f)?;
        let mut acc = vec![0.0; self.grid.m];
        for k in 0..self.depth {
            let d = self.difference(k, f)?;
            let sup = self.level_sup(k, &d)?;
            for (a, s) in acc.iter_mut().zip(&sup) {
                *a += s * s;
            }
        }
        Ok(acc.iter().map(|a| a.sqrt()).collect())
    }

    /// Martingale maximal function M*(f)(x) = sup_k |E_k(f - mean)(x)|.
    pub fn maximal_function(&self, f: &[f64]) -> Result<Vec<f64>, MartingaleError> {
        self.check_len(f)?;
        let mean = self.mean(f)?;
        let g: Vec<f64> = f.iter().map(|&v| v - mean).collect();
        let mut out = vec![0.0f64; self.grid.m];
        for k in 0..=self.depth {
            let e = self.conditional_expectation(k, &g)?;
            for (o, v) in out.iter_mut().zip(&e) {
                *o = (*o).max(v.abs());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodLambdaReport {
    pub epsilons: Vec<f64>,
    /// Pooled ratio ν{M* > 2λ, S ≤ ελ} / ν{M* > λ}, summed over the sample
    /// functions and the λ grid before dividing.
    pub ratios: Vec<f64>,
    /// True where the numerator was empty and the ratio sits at the floor.
    pub floored: Vec<bool>,
    /// Slope of ln(ratio) against 1/ε² (negative = sub-gaussian decay).
    pub slope: f64,
    pub r_squared: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub lambda_points: usize,
    pub floor: f64,
}

/// Pooled good-λ statistics for the maximal/square-function pair over a
/// family of sample functions. The λ grid is geometric between the pooled
/// ν-weighted 50th and 99.5th percentiles of M*. Empty numerators are floored
/// at half the smallest node mass (one constant across ε, so flooring cannot
/// manufacture spurious decay). An optional weight multiplies the node
/// masses; `None` behaves exactly like the constant weight 1.
///
/// Finite depth puts a hard ceiling M*/S ≤ √depth on every path, so bins with
/// 2/ε above that ceiling are provably empty and will sit at the floor.
pub fn good_lambda(
    stack: &MartingaleStack<'_>,
    fs: &[Vec<f64>],
    weight: Option<&[f64]>,
    epsilons: &[f64],
) -> Result<GoodLambdaReport, MartingaleError> {
    if fs.is_empty() {
        return Err(MartingaleError::EmptySample);
    }
    if epsilons.is_empty() {
        return Err(MartingaleError::EmptySample);
    }
    for (i, &e) in epsilons.iter().enumerate() {
        if !(e > 0.0 && e < 1.0) {
            return Err(MartingaleError::BadExponent {
                what: format!("epsilon[{i}] = {e}, need 0 < ε < 1"),
            });
        }
    }
    let m = stack.grid().m;
    if let Some(w) = weight {
        if w.len() != m {
            return Err(MartingaleError::LengthMismatch { expected: m, got: w.len() });
        }
        if let Some(i) = w.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(MartingaleError::BadWeight { index: i });
        }
    }
    // Always multiply by the weight so the ω ≡ 1 run is bit-identical to the
    // unweighted one.
    let mass: Vec<f64> = (0..m)
        .map(|i| stack.nu().cell[i] * weight.map_or(1.0, |w| w[i]))
        .collect();

    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(fs.len());
    let mut pooled_values = Vec::with_capacity(fs.len() * m);
    let mut pooled_weights = Vec::with_capacity(fs.len() * m);
    for f in fs {
        let mstar = stack.maximal_function(f)?;
        let s = stack.square_function(f)?;
        pooled_values.extend_from_slice(&mstar);
        pooled_weights.extend_from_slice(&mass);
        pairs.push((mstar, s));
    }
    let lo = weighted_quantile(&pooled_values, &pooled_weights, 0.5);
    let hi = weighted_quantile(&pooled_values, &pooled_weights, 0.995);
    if !(lo > 0.0) || !(hi > lo) {
        return Err(MartingaleError::DegenerateDistribution {
            what: format!("maximal-function percentiles collapsed: q50 = {lo}, q99.5 = {hi}"),
        });
    }
    // Dense enough that a live (S/ε, M*/2) window of a few percent relative
    // width cannot fall between adjacent geometric grid points.
    let points = 64usize;
    let lambdas: Vec<f64> = (0..points)
        .map(|j| lo * (hi / lo).powf(j as f64 / (points - 1) as f64))
        .collect();

    let mut den_total = 0.0f64;
    let mut num = vec![0.0f64; epsilons.len()];
    for (mstar, s) in &pairs {
        for x in 0..m {
            let a = mass[x];
            if a == 0.0 {
                continue;
            }
            for &l in &lambdas {
                if mstar[x] > l {
                    den_total += a;
                } else {
                    break;
                }
            }
            for &l in &lambdas {
                if mstar[x] > 2.0 * l {
                    for (ei, &eps) in epsilons.iter().enumerate() {
                        if s[x] <= eps * l {
                            num[ei] += a;
                        }
                    }
                } else {
                    break;
                }
            }
        }
    }
    if den_total <= 0.0 {
        return Err(MartingaleError::DegenerateDistribution {
            what: "empty denominator across the whole λ grid".into(),
        });
    }
    let min_mass = mass.iter().copied().filter(|&v| v > 0.0).fold(f64::MAX, f64::min);
    let floor_num = 0.5 * min_mass;
    let mut ratios = Vec::with_capacity(epsilons.len());
    let mut floored = Vec::with_capacity(epsilons.len());
    for &n in &num {
        floored.push(n < floor_num);
        ratios.push(n.max(floor_num) / den_total);
    }
    let xs: Vec<f64> = epsilons.iter().map(|&e| 1.0 / (e * e)).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let (_, slope, r_squared) = linear_fit(&xs, &ys);
    Ok(GoodLambdaReport {
        epsilons: epsilons.to_vec(),
        ratios,
        floored,
        slope,
        r_squared,
        lambda_lo: lo,
        lambda_hi: hi,
        lambda_points: points,
        floor: floor_num / den_total,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub sup_ratio: f64,
    pub mean_ratio: f64,
    pub samples: usize,
    /// Sup of |m| over the spectrum, the size constant on the majorant side.
    pub b_constant: f64,
}

/// Compare the dyadic square function of h⁻¹ m(L)(h f) against the block
/// maximal majorant B (Σ_j M_r[h⁻¹ U_j(h f)]²)^{1/2}, where M_r is the
/// power-mean maximal operator over ν-balls. Requires 1 < r < 2 and block
/// weight smoothness s₀ > n/r.
pub fn domination_probe(
    stack: &MartingaleStack<'_>,
    op: &SpectralOperator,
    h: &[f64],
    m_symbol: impl Fn(f64) -> f64,
    f: &[f64],
    r: f64,
    s0: f64,
    dim_n: f64,
) -> Result<DominationReport, MartingaleError> {
    if !(r > 1.0 && r < 2.0) {
        return Err(MartingaleError::BadExponent { what: format!("need 1 < r < 2, got r = {r}") });
    }
    if !(s0 > dim_n / r) {
        return Err(MartingaleError::BadExponent {
            what: format!("need s₀ > n/r = {:.3}, got s₀ = {s0}", dim_n / r),
        });
    }
    let m = op.m();
    if stack.grid().m != m {
        return Err(MartingaleError::LengthMismatch { expected: m, got: stack.grid().m });
    }
    if h.len() != m || f.len() != m {
        return Err(MartingaleError::LengthMismatch {
            expected: m,
            got: if h.len() != m { h.len() } else { f.len() },
        });
    }
    if let Some(i) = h.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(MartingaleError::BadWeight { index: i });
    }

    let lifted: Vec<f64> = h.iter().zip(f).map(|(&hv, &fv)| hv * fv).collect();
    let transformed = apply_multiplier(op, &m_symbol, &lifted)?;
    let back: Vec<f64> = transformed.iter().zip(h).map(|(&v, &hv)| v / hv).collect();
    let lhs = stack.square_function(&back)?;
    let (b_constant, _) = multiplier_norm(op, &m_symbol)?;

    let opts = SquareFunctionOptions {
        weight_exponent: 2.0 * s0,
        points_per_block: 8,
        j_range: None,
    };
    let blocks = u_blocks(op, PsiTransform::shared(), &lifted, &opts)?;
    let mut rhs_sq = vec![0.0f64; m];
    for block in &blocks.blocks {
        let scaled: Vec<f64> = block.iter().zip(h).map(|(&v, &hv)| v / hv).collect();
        let maximal = hl_maximal(stack.grid(), stack.nu(), &scaled, r)?;
        for (acc, v) in rhs_sq.iter_mut().zip(&maximal) {
            *acc += v * v;
        }
    }
    let rhs: Vec<f64> = rhs_sq.iter().map(|v| b_constant * v.sqrt()).collect();
    let rhs_peak = rhs.iter().cloned().fold(0.0f64, f64::max);
    if rhs_peak <= 0.0 {
        return Err(MartingaleError::DegenerateDistribution {
            what: "majorant vanished identically".into(),
        });
    }
    let mut sup_ratio = 0.0f64;
    let mut sum_ratio = 0.0f64;
    let mut samples = 0usize;
    for (l, rv) in lhs.iter().zip(&rhs) {
        if *rv > 1e-12 * rhs_peak {
            let ratio = l / rv;
            sup_ratio = sup_ratio.max(ratio);
            sum_ratio += ratio;
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(MartingaleError::DegenerateDistribution {
            what: "no node had a usable majorant value".into(),
        });
    }
    Ok(DominationReport {
        sup_ratio,
        mean_ratio: sum_ratio / samples as f64,
        samples,
        b_constant,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    /// Fitted exponent of the 2^{-γ|j-k|} envelope, from the slope of
    /// ln(envelope) against |j - k|.
    pub gamma: f64,
    pub r_squared: f64,
    /// Distinct |j - k| distances that contributed, ascending.
    pub distances: Vec<f64>,
    /// Per-distance maximum of the ratio over all (scale, level, member)
    /// triples at that distance.
    pub envelope: Vec<f64>,
    /// Number of (scale, level, member) triples with a usable ratio.
    pub pairs: usize,
}

/// Probe the off-diagonal decay of martingale differences of semigroup
/// data: for scale index j and filtration level k, compute
/// sup_x sup_{Q_k(x)} |D_k[h⁻¹ t_j L e^{-t_j L}(h f)]| / M_q f(x) over the
/// family `fs`, take the per-distance maximum over triples with the same
/// |j - k|, and regress the log of that envelope against |j - k|.
///
/// The heat time is t_j = (side_j / 8)² where side_j is the level-j cube
/// side: D_k responds to features of the child-cube width side_k/2, and
/// t L e^{-t L} concentrates its kernel at feature width ≈ 4√t, so this
/// normalization puts the empirically largest ratios on the diagonal
/// k = j and the fit is anchored at the scale-matched pairs. The envelope
/// (rather than every triple) is fitted because the decay is one-sided
/// sharp: coarse levels k ≪ j cancel super-exponentially and would
/// otherwise dominate the residuals without weakening the bound.
///
/// `level_range` restricts k to levels whose cubes the mesh and the
/// diffusion window actually resolve.
pub fn decay_probe(
    stack: &MartingaleStack<'_>,
    op: &SpectralOperator,
    h: &[f64],
    fs: &[Vec<f64>],
    scale_levels: &[i32],
    q: f64,
    level_range: Option<(usize, usize)>,
) -> Result<DecayReport, MartingaleError> {
    let m = op.m();
    if stack.grid().m != m {
        return Err(MartingaleError::LengthMismatch { expected: m, got: stack.grid().m });
    }
    if h.len() != m {
        return Err(MartingaleError::LengthMismatch { expected: m, got: h.len() });
    }
    if let Some(bad) = fs.iter().find(|f| f.len() != m) {
        return Err(MartingaleError::LengthMismatch { expected: m, got: bad.len() });
    }
    if let Some(i) = h.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(MartingaleError::BadWeight { index: i });
    }
    if scale_levels.is_empty() || fs.is_empty() {
        return Err(MartingaleError::EmptySample);
    }
    let (k_lo, k_hi) = level_range.unwrap_or((0, stack.depth()));
    if k_lo >= k_hi || k_hi > stack.depth() {
        return Err(MartingaleError::BadLevel { level: k_hi, depth: stack.depth() });
    }
    let span = stack.grid().span();
    let mut best: BTreeMap<i64, f64> = BTreeMap::new();
    let mut pairs = 0usize;
    for f in fs {
        let guide = hl_maximal(stack.grid(), stack.nu(), f, q)?;
        let guide_peak = guide.iter().cloned().fold(0.0f64, f64::max);
        if guide_peak <= 0.0 {
            return Err(MartingaleError::DegenerateDistribution {
                what: "maximal guide vanished identically".into(),
            });
        }
        let lifted: Vec<f64> = h.iter().zip(f).map(|(&hv, &fv)| hv * fv).collect();
        for &j in scale_levels {
            let t = span * span * 0.25f64.powi(j + 3);
            let smoothed = op.apply_spectral(|l| (t * l) * (-t * l).exp(), &lifted);
            let back: Vec<f64> = smoothed.iter().zip(h).map(|(&v, &hv)| v / hv).collect();
            for k in k_lo..k_hi {
                let d = stack.difference(k, &back)?;
                let sup = stack.level_sup(k, &d)?;
                let mut ratio = 0.0f64;
                for (s, g) in sup.iter().zip(&guide) {
                    if *g > 1e-12 * guide_peak {
                        ratio = ratio.max(s / g);
                    }
                }
                if ratio > 0.0 {
                    let dist = (i64::from(j) - k as i64).abs();
                    let slot = best.entry(dist).or_insert(0.0);
                    *slot = slot.max(ratio);
                    pairs += 1;
                }
            }
        }
    }
    if best.len() < 4 {
        return Err(MartingaleError::DegenerateDistribution {
            what: format!("only {} distinct |j - k| distances", best.len()),
        });
    }
    let distances: Vec<f64> = best.keys().map(|&d| d as f64).collect();
    let envelope: Vec<f64> = best.values().copied().collect();
    let env_max = envelope.iter().cloned().fold(f64::MIN, f64::max);
    let env_min = envelope.iter().cloned().fold(f64::MAX, f64::min);
    if env_max / env_min < 2.0 {
        return Err(MartingaleError::DegenerateDistribution {
            what: format!(
                "envelope dynamic range {:.3} too small to fit a decay exponent",
                env_max / env_min
            ),
        });
    }
    let ys: Vec<f64> = envelope.iter().map(|v| v.ln()).collect();
    let (_, slope, r_squared) = linear_fit(&distances, &ys);
    Ok(DecayReport {
        gamma: -slope / std::f64::consts::LN_2,
        r_squared,
        distances,
        envelope,
        pairs,
    })
}
