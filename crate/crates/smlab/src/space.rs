//! Discrete metric measure spaces: uniform 1-D grids carrying a power-law
//! measure density, balls, dyadic cube systems, Muckenhoupt weights, and
//! Hardy–Littlewood maximal operators.
//!
//! Everything downstream (operators, square functions, martingales) lives on a
//! [`WeightedGrid`]: nodes `x_1 < … < x_M` with constant spacing, a density
//! `w(x_i)`, and midpoint quadrature weights `w(x_i)·Δx`. The midpoint rule is
//! deliberate — it keeps the weighted inner product exactly diagonal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{linear_fit, Cumulative};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("grid too coarse: {m} nodes (need at least 16)")]
    GridTooCoarse { m: usize },
    #[error("measure exponent {alpha} not integrable at the origin (need alpha > -1)")]
    BadMeasureExponent { alpha: f64 },
    #[error("domain half-width must be positive, got {x_max}")]
    BadDomainSize { x_max: f64 },
    #[error("full-line grids carry Lebesgue measure only (alpha = 0), got alpha = {alpha}")]
    FullLineWeight { alpha: f64 },
    #[error("node-indexed array has length {got}, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weight must be strictly positive at every node (violated at index {index})")]
    NonpositiveWeight { index: usize },
    #[error("measure cells must be nonnegative with positive total")]
    DegenerateMeasure,
    #[error("exponent out of range: {what}")]
    InvalidExponent { what: String },
    #[error("dyadic level range [{k_min}, {k_max}] is empty or inverted")]
    BadLevelRange { k_min: i32, k_max: i32 },
    #[error("dyadic depth {depth} exceeds grid resolution ({m} nodes)")]
    DepthExceedsResolution { depth: usize, m: usize },
    #[error("fit failed: {what}")]
    FitFailure { what: String },
}

/// Which 1-D domain the grid discretizes, and the boundary behavior operators
/// should impose on its left edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// (0, x_max] with an absorbing wall at 0.
    HalfLineDirichlet,
    /// [-x_max, x_max] truncated with absorbing walls at both ends.
    FullLine,
    /// (0, x_max] with a zero-flux left edge (Bessel-type operators).
    HalfLineNeumannlike,
}

impl DomainKind {
    pub fn is_half_line(self) -> bool {
        !matches!(self, DomainKind::FullLine)
    }
}

/// JSON-facing grid description; nodes are implicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub domain_kind: DomainKind,
    pub m: usize,
    pub x_max: f64,
    pub alpha: f64,
}

/// Uniform 1-D quadrature grid with measure density |x|^alpha.
#[derive(Debug, Clone)]
pub struct WeightedGrid {
    pub domain_kind: DomainKind,
    pub m: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub dx: f64,
    pub nodes: Vec<f64>,
    pub density: Vec<f64>,
    /// Measure of the cell at node i: density * dx.
    pub quad_weights: Vec<f64>,
    cum_weights: Cumulative,
}

/// Build a grid. Half-line grids place nodes at `i·Δx`, `Δx = x_max/M`, so the
/// last node sits at `x_max`; full-line grids place `M` nodes symmetrically
/// strictly inside `(-x_max, x_max)`.
pub fn build_grid(
    domain_kind: DomainKind,
    m: usize,
    x_max: f64,
    alpha: f64,
) -> Result<WeightedGrid, SpaceError> {
    if m < 16 {
        return Err(SpaceError::GridTooCoarse { m });
    }
    if !(x_max > 0.0) {
        return Err(SpaceError::BadDomainSize { x_max });
    }
    if !(alpha > -1.0) {
        return Err(SpaceError::BadMeasureExponent { alpha });
    }
    if domain_kind == DomainKind::FullLine && alpha != 0.0 {
        return Err(SpaceError::FullLineWeight { alpha });
    }
    let (dx, x0) = match domain_kind {
        DomainKind::HalfLineDirichlet | DomainKind::HalfLineNeumannlike => (x_max / m as f64, 0.0),
        DomainKind::FullLine => (2.0 * x_max / (m as f64 + 1.0), -x_max),
    };
    let nodes: Vec<f64> = (1..=m).map(|i| x0 + i as f64 * dx).collect();
    let density: Vec<f64> = nodes.iter().map(|&x| x.abs().powf(alpha)).collect();
    let quad_weights: Vec<f64> = density.iter().map(|&w| w * dx).collect();
    let cum_weights = Cumulative::new(&quad_weights);
    Ok(WeightedGrid {
        domain_kind,
        m,
        x_max,
        alpha,
        dx,
        nodes,
        density,
        quad_weights,
        cum_weights,
    })
}

impl WeightedGrid {
    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            domain_kind: self.domain_kind,
            m: self.m,
            x_max: self.x_max,
            alpha: self.alpha,
        }
    }

    pub fn from_descriptor(d: &GridDescriptor) -> Result<Self, SpaceError> {
        build_grid(d.domain_kind, d.m, d.x_max, d.alpha)
    }

    /// Coordinate of the absorbing wall on each side. The left wall is the
    /// domain edge; the right wall sits one spacing beyond the last node.
    pub fn left_wall(&self) -> f64 {
        match self.domain_kind {
            DomainKind::FullLine => -self.x_max,
            _ => 0.0,
        }
    }

    pub fn right_wall(&self) -> f64 {
        match self.domain_kind {
            DomainKind::FullLine => self.x_max,
            _ => self.x_max + self.dx,
        }
    }

    /// Physical span covered by the node cells.
    pub fn span(&self) -> f64 {
        self.right_wall() - self.left_wall()
    }

    /// Half-open index range of nodes strictly inside the open ball.
    pub fn ball_range(&self, center: f64, radius: f64) -> (usize, usize) {
        if radius <= 0.0 {
            return (0, 0);
        }
        let lo = self.nodes.partition_point(|&x| x <= center - radius);
        let hi = self.nodes.partition_point(|&x| x < center + radius);
        (lo, hi)
    }

    /// Measure of the open ball B(center, radius) against the grid measure.
    pub fn ball_measure(&self, center: f64, radius: f64) -> f64 {
        let (lo, hi) = self.ball_range(center, radius);
        self.cum_weights.range(lo, hi)
    }

    pub fn total_measure(&self) -> f64 {
        self.cum_weights.total()
    }

    pub fn measure_range(&self, lo: usize, hi: usize) -> f64 {
        self.cum_weights.range(lo, hi)
    }

    /// Weighted inner product <f, g> = sum f_i g_i w_i dx.
    pub fn weighted_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.m);
        debug_assert_eq!(g.len(), self.m);
        f.iter()
            .zip(g)
            .zip(&self.quad_weights)
            .map(|((&a, &b), &w)| a * b * w)
            .sum()
    }

    pub fn weighted_norm(&self, f: &[f64]) -> f64 {
        self.weighted_inner(f, f).sqrt()
    }

    /// Nodes farther than `left_margin` from the left wall and `right_margin`
    /// from the right wall.
    pub fn interior_mask(&self, left_margin: f64, right_margin: f64) -> Vec<bool> {
        let (lw, rw) = (self.left_wall(), self.right_wall());
        self.nodes
            .iter()
            .map(|&x| x - lw > left_margin && rw - x > right_margin)
            .collect()
    }

    pub fn check_len(&self, arr: &[f64]) -> Result<(), SpaceError> {
        if arr.len() != self.m {
            return Err(SpaceError::LengthMismatch { expected: self.m, got: arr.len() });
        }
        Ok(())
    }
}

/// A (possibly reweighted) measure on the grid's cells, with prefix sums for
/// O(1) range masses.
#[derive(Debug, Clone)]
pub struct Measure {
    pub tag: String,
    pub cell: Vec<f64>,
    cum: Cumulative,
}

impl Measure {
    pub fn from_cells(tag: &str, cell: Vec<f64>) -> Result<Self, SpaceError> {
        if cell.iter().any(|&c| !(c >= 0.0)) || !(cell.iter().sum::<f64>() > 0.0) {
            return Err(SpaceError::DegenerateMeasure);
        }
        let cum = Cumulative::new(&cell);
        Ok(Self { tag: tag.to_string(), cell, cum })
    }

    /// The grid's own measure.
    pub fn mu(grid: &WeightedGrid) -> Self {
        Self::from_cells("mu", grid.quad_weights.clone()).expect("grid measure is valid")
    }

    /// Pointwise reweighting: cell_i = factor_i * (grid cell mass).
    pub fn reweighted(grid: &WeightedGrid, tag: &str, factor: &[f64]) -> Result<Self, SpaceError> {
        grid.check_len(factor)?;
        let cell: Vec<f64> =
            factor.iter().zip(&grid.quad_weights).map(|(&f, &w)| f * w).collect();
        Self::from_cells(tag, cell)
    }

    pub fn range_mass(&self, lo: usize, hi: usize) -> f64 {
        self.cum.range(lo, hi)
    }

    pub fn total(&self) -> f64 {
        self.cum.total()
    }

    pub fn len(&self) -> usize {
        self.cell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell.is_empty()
    }
}

/// Least-squares fit of the volume-doubling law
/// `measure(B(x, lambda r)) <= C lambda^n measure(B(x, r))`.
#[derive(Debug, Clone, Serialize)]
pub struct DoublingFit {
    /// Fitted homogeneity exponent.
    pub n: f64,
    /// Constant from the regression intercept.
    pub c_fit: f64,
    /// Smallest constant that makes the bound hold over every sample.
    pub c_envelope: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Doubling fit over an explicit (center, radius, dilation) sweep.
pub fn doubling_profile_at(
    grid: &WeightedGrid,
    centers: &[f64],
    radii: &[f64],
    lambdas: &[f64],
) -> Result<DoublingFit, SpaceError> {
    let mut log_lambda = Vec::new();
    let mut log_ratio = Vec::new();
    for &x in centers {
        for &r in radii {
            let base = grid.ball_measure(x, r);
            if base <= 0.0 {
                continue;
            }
            for &l in lambdas {
                let big = grid.ball_measure(x, l * r);
                if big <= 0.0 {
                    continue;
                }
                log_lambda.push(l.ln());
                log_ratio.push((big / base).ln());
            }
        }
    }
    if log_lambda.len() < 2 {
        return Err(SpaceError::FitFailure {
            what: "doubling sweep produced fewer than two usable samples".into(),
        });
    }
    let (intercept, slope, r2) = linear_fit(&log_lambda, &log_ratio);
    let mut c_env: f64 = 1.0;
    for (ll, lr) in log_lambda.iter().zip(&log_ratio) {
        c_env = c_env.max((lr - slope * ll).exp());
    }
    Ok(DoublingFit {
        n: slope,
        c_fit: intercept.exp(),
        c_envelope: c_env,
        r_squared: r2,
        samples: log_lambda.len(),
    })
}

/// Default deterministic doubling sweep: interior centers, ball radii well
/// above the grid scale, dilations that keep every ball inside the domain.
pub fn doubling_profile(grid: &WeightedGrid) -> Result<DoublingFit, SpaceError> {
    let lw = grid.left_wall();
    let span = grid.span();
    let centers: Vec<f64> = [0.35, 0.5, 0.65].iter().map(|f| lw + f * span).collect();
    let radii: Vec<f64> = [8.0, 16.0, 32.0].iter().map(|k| k * grid.dx).collect();
    let lambdas = [2.0, 3.0, 4.0];
    doubling_profile_at(grid, &centers, &radii, &lambdas)
}

/// Binary dyadic cube system over the node index range: at depth d the range
/// splits into 2^d contiguous blocks with boundaries floor(c·M / 2^d).
///
/// Depth d corresponds to generation label k = k_min + d; the splitting ratio
/// is fixed at 1/2 so nesting, partitioning, and parent/child arithmetic are
/// exact integer facts rather than floating-point ones.
#[derive(Debug, Clone)]
pub struct DyadicSystem {
    pub delta: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub m: usize,
    boundaries: Vec<Vec<usize>>,
}

pub fn build_dyadic(grid: &WeightedGrid, k_min: i32, k_max: i32) -> Result<DyadicSystem, SpaceError> {
    if k_max < k_min {
        return Err(SpaceError::BadLevelRange { k_min, k_max });
    }
    let depth = (k_max - k_min) as usize;
    if depth >= usize::BITS as usize || (1usize << depth) > grid.m {
        return Err(SpaceError::DepthExceedsResolution { depth, m: grid.m });
    }
    let m = grid.m;
    let boundaries = (0..=depth)
        .map(|d| (0..=(1usize << d)).map(|c| (c * m) >> d).collect())
        .collect();
    Ok(DyadicSystem { delta: 0.5, k_min, k_max, m, boundaries })
}

impl DyadicSystem {
    /// Deepest depth index (root is depth 0).
    pub fn max_depth(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn level_count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn cubes_at(&self, depth: usize) -> usize {
        1 << depth
    }

    /// Half-open node index range of cube `c` at `depth`.
    pub fn node_range(&self, depth: usize, cube: usize) -> (usize, usize) {
        let b = &self.boundaries[depth];
        (b[cube], b[cube + 1])
    }

    pub fn cube_len(&self, depth: usize, cube: usize) -> usize {
        let (lo, hi) = self.node_range(depth, cube);
        hi - lo
    }

    /// Index of the depth-`depth` cube containing node `i`.
    pub fn cube_of(&self, depth: usize, node: usize) -> usize {
        debug_assert!(node < self.m);
        ((node + 1) * (1usize << depth) - 1) / self.m
    }

    pub fn parent(&self, depth: usize, cube: usize) -> Option<(usize, usize)> {
        (depth > 0).then(|| (depth - 1, cube >> 1))
    }

    pub fn children(&self, depth: usize, cube: usize) -> Option<[(usize, usize); 2]> {
        (depth < self.max_depth()).then(|| [(depth + 1, 2 * cube), (depth + 1, 2 * cube + 1)])
    }

    /// Physical extent of a cube including the half-cells of its edge nodes.
    pub fn cube_extent(&self, grid: &WeightedGrid, depth: usize, cube: usize) -> (f64, f64) {
        debug_assert_eq!(grid.m, self.m, "dyadic system built on a different grid");
        let (lo, hi) = self.node_range(depth, cube);
        debug_assert!(lo < hi, "empty cube has no extent");
        (grid.nodes[lo] - 0.5 * grid.dx, grid.nodes[hi - 1] + 0.5 * grid.dx)
    }

    /// Nominal side length at a depth: span * 2^-depth.
    pub fn side_scale(&self, grid: &WeightedGrid, depth: usize) -> f64 {
        grid.span() * 0.5f64.powi(depth as i32)
    }
}

/// Fit of the small-boundary-layer law
/// `measure{x in Q : dist(x, Q^c) <= t side(Q)} <= C t^rho measure(Q)`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryLayerFit {
    pub rho: f64,
    pub c: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Measure the boundary-layer mass fraction over all cubes with at least 32
/// nodes and a ladder of layer widths, then fit the power law.
pub fn boundary_layer_fit(
    grid: &WeightedGrid,
    sys: &DyadicSystem,
    measure: &Measure,
) -> Result<BoundaryLayerFit, SpaceError> {
    if measure.len() != grid.m {
        return Err(SpaceError::LengthMismatch { expected: grid.m, got: measure.len() });
    }
    let thicknesses = [0.5, 0.25, 0.125, 0.0625, 0.03125];
    let mut log_t = Vec::new();
    let mut log_frac = Vec::new();
    for depth in 0..=sys.max_depth() {
        if grid.m >> depth < 32 {
            break;
        }
        for cube in 0..sys.cubes_at(depth) {
            let (lo, hi) = sys.node_range(depth, cube);
            let total = measure.range_mass(lo, hi);
            if total <= 0.0 {
                continue;
            }
            let (left, right) = sys.cube_extent(grid, depth, cube);
            let side = right - left;
            for &t in &thicknesses {
                let width = t * side;
                let mut mass = 0.0;
                for i in lo..hi {
                    let d = (grid.nodes[i] - left).min(right - grid.nodes[i]);
                    if d <= width {
                        mass += measure.cell[i];
                    }
                }
                if mass > 0.0 {
                    log_t.push(t.ln());
                    log_frac.push((mass / total).ln());
                }
            }
        }
    }
    if log_t.len() < 4 {
        return Err(SpaceError::FitFailure {
            what: "boundary-layer sweep produced too few usable samples".into(),
        });
    }
    let (intercept, slope, r2) = linear_fit(&log_t, &log_frac);
    Ok(BoundaryLayerFit { rho: slope, c: intercept.exp(), r_squared: r2, samples: log_t.len() })
}

/// One ball of the deterministic test family, with its node index range.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Ball {
    pub center: f64,
    pub radius: f64,
    #[serde(skip)]
    pub lo: usize,
    #[serde(skip)]
    pub hi: usize,
}

/// The deterministic ball family used for A_p characteristics and maximal
/// operators: every node as a center with radii {2^j Δx} (the smallest is a
/// singleton), plus each dyadic cube's circumscribed ball (whose node set is
/// exactly the cube).
pub fn standard_ball_family(grid: &WeightedGrid) -> Vec<Ball> {
    let mut balls = Vec::new();
    let span = grid.span();
    for (i, &x) in grid.nodes.iter().enumerate() {
        let mut r = grid.dx;
        loop {
            let (lo, hi) = grid.ball_range(x, r);
            balls.push(Ball { center: x, radius: r, lo, hi });
            if (lo, hi) == (0, grid.m) || r > 2.0 * span {
                break;
            }
            r *= 2.0;
        }
        let _ = i;
    }
    let depth = grid.m.ilog2() as i32;
    let sys = build_dyadic(grid, 0, depth).expect("full-depth system fits by construction");
    for d in 0..=sys.max_depth() {
        for c in 0..sys.cubes_at(d) {
            let (lo, hi) = sys.node_range(d, c);
            let center = 0.5 * (grid.nodes[lo] + grid.nodes[hi - 1]);
            let radius = 0.5 * (hi - lo) as f64 * grid.dx;
            balls.push(Ball { center, radius, lo, hi });
        }
    }
    balls
}

#[derive(Debug, Clone, Serialize)]
pub struct BallValue {
    pub center: f64,
    pub radius: f64,
    pub value: f64,
}

/// Muckenhoupt characteristic report over the deterministic ball family.
#[derive(Debug, Clone, Serialize)]
pub struct ApReport {
    pub p: f64,
    pub characteristic: f64,
    pub base_measure_tag: String,
    pub per_ball: Vec<BallValue>,
}

/// A_p characteristic of `weight` against the grid measure.
pub fn ap_characteristic(
    grid: &WeightedGrid,
    weight: &[f64],
    p: f64,
) -> Result<ApReport, SpaceError> {
    ap_characteristic_with_measure(grid, weight, p, &Measure::mu(grid))
}

/// A_p characteristic of `weight` against an arbitrary base measure:
/// sup over balls of (avg_B w dσ) · (avg_B w^{-1/(p-1)} dσ)^{p-1}.
pub fn ap_characteristic_with_measure(
    grid: &WeightedGrid,
    weight: &[f64],
    p: f64,
    base: &Measure,
) -> Result<ApReport, SpaceError> {
    grid.check_len(weight)?;
    if base.len() != grid.m {
        return Err(SpaceError::LengthMismatch { expected: grid.m, got: base.len() });
    }
    if !(p > 1.0) {
        return Err(SpaceError::InvalidExponent { what: format!("A_p needs p > 1, got {p}") });
    }
    if let Some(i) = weight.iter().position(|&w| !(w > 0.0)) {
        return Err(SpaceError::NonpositiveWeight { index: i });
    }
    let dual_pow = -1.0 / (p - 1.0);
    let w_mass: Vec<f64> = weight.iter().zip(&base.cell).map(|(&w, &s)| w * s).collect();
    let dual_mass: Vec<f64> =
        weight.iter().zip(&base.cell).map(|(&w, &s)| w.powf(dual_pow) * s).collect();
    let cum_w = Cumulative::new(&w_mass);
    let cum_dual = Cumulative::new(&dual_mass);

    let mut per_ball = Vec::new();
    let mut characteristic: f64 = 0.0;
    for b in standard_ball_family(grid) {
        let sigma = base.range_mass(b.lo, b.hi);
        if sigma <= 0.0 {
            continue;
        }
        let avg_w = cum_w.range(b.lo, b.hi) / sigma;
        let avg_dual = cum_dual.range(b.lo, b.hi) / sigma;
        let value = avg_w * avg_dual.powf(p - 1.0);
        characteristic = characteristic.max(value);
        per_ball.push(BallValue { center: b.center, radius: b.radius, value });
    }
    Ok(ApReport { p, characteristic, base_measure_tag: base.tag.clone(), per_ball })
}

/// Hardy–Littlewood maximal operator with power mean exponent `r >= 1`:
/// sup over family balls containing x of (avg_B |f|^r dσ)^{1/r}.
pub fn hl_maximal(
    grid: &WeightedGrid,
    measure: &Measure,
    f: &[f64],
    r: f64,
) -> Result<Vec<f64>, SpaceError> {
    grid.check_len(f)?;
    if measure.len() != grid.m {
        return Err(SpaceError::LengthMismatch { expected: grid.m, got: measure.len() });
    }
    if !(r >= 1.0) {
        return Err(SpaceError::InvalidExponent {
            what: format!("maximal power mean needs r >= 1, got {r}"),
        });
    }
    let pow_mass: Vec<f64> = f
        .iter()
        .zip(&measure.cell)
        .map(|(&v, &s)| if r == 1.0 { v.abs() * s } else { v.abs().powf(r) * s })
        .collect();
    let cum = Cumulative::new(&pow_mass);
    let mut out = vec![0.0; grid.m];
    for b in standard_ball_family(grid) {
        let sigma = measure.range_mass(b.lo, b.hi);
        if sigma <= 0.0 {
            continue;
        }
        let mean = cum.range(b.lo, b.hi) / sigma;
        let value = if r == 1.0 { mean } else { mean.powf(1.0 / r) };
        for slot in &mut out[b.lo..b.hi] {
            if *slot < value {
                *slot = value;
            }
        }
    }
    Ok(out)
}

/// Twice-iterated maximal operator M_r(M_r(f)).
pub fn hl_maximal_iterated(
    grid: &WeightedGrid,
    measure: &Measure,
    f: &[f64],
    r: f64,
) -> Result<Vec<f64>, SpaceError> {
    let once = hl_maximal(grid, measure, f, r)?;
    hl_maximal(grid, measure, &once, r)
}
