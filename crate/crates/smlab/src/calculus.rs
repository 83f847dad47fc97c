//! Functional calculus for discretized operators: multiplier application with
//! symbol validation, the odd mother wavelet and its sine transform, scale-block
//! square functions, the Bochner–Riesz family with its differentiated square
//! function, and Plancherel/pointwise-control probes.

use std::io::Read;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::operator::SpectralOperator;
use crate::space::SpaceError;
use crate::util::simpson;

#[derive(Debug, Error)]
pub enum CalculusError {
    #[error("symbol is not finite at eigenvalue {lambda}")]
    SymbolUndefined { lambda: f64 },
    #[error("Riesz order must exceed -1, got {delta}")]
    BadRieszOrder { delta: f64 },
    #[error("square-function Riesz order must exceed -1/2, got {delta}")]
    BadSteinOrder { delta: f64 },
    #[error("positive scale required: {what}")]
    BadScale { what: String },
    #[error("spectrum has no positive eigenvalue; scale ladders are undefined")]
    DegenerateSpectrum,
    #[error("smoothness parameters out of range: {what}")]
    BadSmoothness { what: String },
    #[error("symbol table rejected: {what}")]
    SymbolTable { what: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Apply m(L) f through the eigenexpansion after checking the symbol is finite
/// on the whole spectrum.
pub fn apply_multiplier(
    op: &SpectralOperator,
    m: impl Fn(f64) -> f64,
    f: &[f64],
) -> Result<Vec<f64>, CalculusError> {
    op.grid().check_len(f)?;
    for &l in op.eigenvalues() {
        if !m(l).is_finite() {
            return Err(CalculusError::SymbolUndefined { lambda: l });
        }
    }
    Ok(op.apply_spectral(m, f))
}

/// L²(dμ) → L²(dμ) operator norm of m(L): the symbol's max modulus over the
/// spectrum, together with the index of an eigenvalue attaining it.
pub fn multiplier_norm(
    op: &SpectralOperator,
    m: impl Fn(f64) -> f64,
) -> Result<(f64, usize), CalculusError> {
    let mut best = (0.0f64, 0usize);
    for (i, &l) in op.eigenvalues().iter().enumerate() {
        let v = m(l);
        if !v.is_finite() {
            return Err(CalculusError::SymbolUndefined { lambda: l });
        }
        if v.abs() > best.0 {
            best = (v.abs(), i);
        }
    }
    Ok(best)
}

/// Odd mother wavelet: a normalized multiple of d/du exp(-1/(1-u²)),
/// supported in [-1, 1], with vanishing integral by oddness.
pub fn psi_bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let s = 1.0 - u * u;
    // sign chosen so the profile is positive on (0, 1); peak normalized below.
    let raw = 2.0 * u / (s * s) * (-1.0 / s).exp();
    raw / PSI_PEAK
}

// sup of |2u/(1-u²)² e^{-1/(1-u²)}| on (0,1), located numerically once
// (attained near u = 0.75984).
const PSI_PEAK: f64 = 0.798_429_751_833_599_5;

#[cfg(test)]
fn psi_peak_unnormalized() -> f64 {
    let mut best = 0.0f64;
    for k in 1..200_000 {
        let u = k as f64 / 200_000.0;
        let s = 1.0 - u * u;
        best = best.max((2.0 * u / (s * s) * (-1.0 / s).exp()).abs());
    }
    best
}

const XI_TABLE_LEN: usize = 32_768;
const XI_TABLE_MAX: f64 = 1000.0;
const U_INTERVALS: usize = 8192;

/// Sine transform Ψ(ξ) = 2∫₀¹ ψ(u) sin(ξu) du of the odd mother wavelet,
/// tabulated on [0, 1000] and normalized to sup |Ψ| = 1. Odd, vanishing
/// linearly at 0, decaying superpolynomially; evaluations beyond the table
/// return 0 (the true value is below double-precision relevance there).
pub struct PsiTransform {
    table: Vec<f64>,
    step: f64,
}

static PSI_SHARED: OnceLock<PsiTransform> = OnceLock::new();

impl PsiTransform {
    pub fn new() -> Self {
        // Simpson weights on the u-grid, folded into the ψ samples.
        let du = 1.0 / U_INTERVALS as f64;
        let mut wpsi = vec![0.0f64; U_INTERVALS + 1];
        for (k, w) in wpsi.iter_mut().enumerate() {
            let simpson_w = if k == 0 || k == U_INTERVALS {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            *w = psi_bump(k as f64 * du) * simpson_w * du / 3.0;
        }
        let step = XI_TABLE_MAX / (XI_TABLE_LEN - 1) as f64;
        let mut table = vec![0.0f64; XI_TABLE_LEN];
        for (j, entry) in table.iter_mut().enumerate() {
            let xi = j as f64 * step;
            // sin(xi * k du) by recurrence over k: one trig pair per ξ.
            let (mut s_prev, mut s_cur) = (0.0f64, (xi * du).sin());
            let two_cos = 2.0 * (xi * du).cos();
            let mut acc = 0.0f64; // k = 0 term vanishes (sin 0 = 0)
            for &w in wpsi.iter().skip(1) {
                acc += w * s_cur;
                let s_next = two_cos * s_cur - s_prev;
                s_prev = s_cur;
                s_cur = s_next;
            }
            *entry = 2.0 * acc;
        }
        let sup = table.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(sup > 0.0, "sine transform identically zero");
        for v in &mut table {
            *v /= sup;
        }
        PsiTransform { table, step }
    }

    /// Process-wide shared instance (the table build is ~1 s).
    pub fn shared() -> &'static PsiTransform {
        PSI_SHARED.get_or_init(PsiTransform::new)
    }

    /// Ψ(ξ), extended oddly; zero beyond the tabulated range.
    pub fn eval(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a >= XI_TABLE_MAX {
            return 0.0;
        }
        let pos = a / self.step;
        let idx = pos as usize;
        let frac = pos - idx as f64;
        let v = if idx + 1 < self.table.len() {
            self.table[idx] * (1.0 - frac) + self.table[idx + 1] * frac
        } else {
            self.table[idx]
        };
        if xi < 0.0 { -v } else { v }
    }

    /// Discrete vertical energy Σ_k |Ψ(t_k √λ)|² Δln t over a shared geometric
    /// t-grid covering all requested eigenvalues. The continuum integral is
    /// λ-independent, so the returned per-λ values agree up to quadrature.
    pub fn vertical_profile(
        &self,
        lambdas: &[f64],
        per_octave: usize,
    ) -> Result<Vec<f64>, CalculusError> {
        let pos_min = lambdas.iter().cloned().filter(|&l| l > 0.0).fold(f64::MAX, f64::min);
        let max = lambdas.iter().cloned().fold(0.0f64, f64::max);
        if !(pos_min.is_finite() && max > 0.0) {
            return Err(CalculusError::DegenerateSpectrum);
        }
        let (xi_lo, xi_hi) = (1e-4, 200.0);
        let t_lo = xi_lo / max.sqrt();
        let t_hi = xi_hi / pos_min.sqrt();
        let octaves = (t_hi / t_lo).log2();
        let n = ((octaves * per_octave as f64).ceil() as usize).max(2);
        let dln = (t_hi / t_lo).ln() / n as f64;
        let mut out = Vec::with_capacity(lambdas.len());
        for &l in lambdas {
            if l <= 0.0 {
                out.push(0.0);
                continue;
            }
            let rl = l.sqrt();
            let mut acc = 0.0;
            for k in 0..n {
                let t = t_lo * ((k as f64 + 0.5) * dln).exp();
                let v = self.eval(t * rl);
                acc += v * v * dln;
            }
            out.push(acc);
        }
        Ok(out)
    }
}

impl Default for PsiTransform {
    fn default() -> Self {
        Self::new()
    }
}

/// Options for the scale-block square function.
#[derive(Debug, Clone)]
pub struct SquareFunctionOptions {
    /// Exponent p in the off-diagonal weight (t/(t+d))^p; take p above the
    /// measure's doubling dimension for summability.
    pub weight_exponent: f64,
    /// Geometric t-points per dyadic block.
    pub points_per_block: usize,
    /// Explicit dyadic block range; None derives one from the spectrum.
    pub j_range: Option<(i32, i32)>,
}

impl Default for SquareFunctionOptions {
    fn default() -> Self {
        Self { weight_exponent: 4.0, points_per_block: 16, j_range: None }
    }
}

/// Per-block pieces U_j of the square function; G² = Σ_j U_j².
#[derive(Debug, Clone)]
pub struct UBlocks {
    pub j_min: i32,
    /// blocks[k] holds U_{j_min + k} per node.
    pub blocks: Vec<Vec<f64>>,
}

fn auto_j_range(op: &SpectralOperator) -> Result<(i32, i32), CalculusError> {
    let pos_min = op
        .eigenvalues()
        .iter()
        .cloned()
        .filter(|&l| l > 0.0)
        .fold(f64::MAX, f64::min);
    if pos_min == f64::MAX {
        return Err(CalculusError::DegenerateSpectrum);
    }
    let j_min = (1.0 / op.lambda_max().sqrt()).log2().floor() as i32 - 1;
    let j_max = (200.0 / pos_min.sqrt()).log2().ceil() as i32;
    Ok((j_min, j_max.min(j_min + 40)))
}

/// Compute the blocks U_j(f)(x)² = ∫_{2^j}^{2^{j+1}} Σ_y w_t(d(x,y))
/// |Ψ(t√L)f(y)|² μ_y / μ(B(x,t)) dt/t with w_t(d) = (t/(t+d))^p.
pub fn u_blocks(
    op: &SpectralOperator,
    psi: &PsiTransform,
    f: &[f64],
    opts: &SquareFunctionOptions,
) -> Result<UBlocks, CalculusError> {
    let grid = op.grid();
    grid.check_len(f)?;
    if opts.weight_exponent <= 0.0 {
        return Err(CalculusError::BadSmoothness {
            what: format!("weight exponent must be positive, got {}", opts.weight_exponent),
        });
    }
    let (j_min, j_max) = match opts.j_range {
        Some((a, b)) if a <= b => (a, b),
        Some((a, b)) => {
            return Err(CalculusError::BadScale { what: format!("block range [{a}, {b}]") })
        }
        None => auto_j_range(op)?,
    };
    let m = grid.m;
    let ppb = opts.points_per_block.max(1);
    let dln = std::f64::consts::LN_2 / ppb as f64;
    let mut blocks = Vec::with_capacity((j_max - j_min + 1) as usize);
    for j in j_min..=j_max {
        let base: f64 = (j as f64).exp2();
        let mut usq = vec![0.0f64; m];
        for i in 0..ppb {
            let t = base * ((i as f64 + 0.5) / ppb as f64).exp2();
            let g = op.apply_spectral(|l| psi.eval(t * l.sqrt()), f);
            // Off-diagonal weight as a |i-j| lookup (uniform mesh).
            let w: Vec<f64> = (0..m)
                .map(|k| (t / (t + k as f64 * grid.dx)).powf(opts.weight_exponent))
                .collect();
            for x in 0..m {
                let mut s = 0.0;
                for (y, &gy) in g.iter().enumerate() {
                    s += w[x.abs_diff(y)] * gy * gy * grid.quad_weights[y];
                }
                let ball = grid.ball_measure(grid.nodes[x], t).max(f64::MIN_POSITIVE);
                usq[x] += s / ball * dln;
            }
        }
        blocks.push(usq.iter().map(|&v| v.sqrt()).collect());
    }
    Ok(UBlocks { j_min, blocks })
}

/// Combine blocks into G = (Σ_j U_j²)^{1/2}. `g_square_function` routes
/// through this same accumulation, so the two agree bitwise.
pub fn g_from_blocks(blocks: &UBlocks) -> Vec<f64> {
    let m = blocks.blocks.first().map_or(0, Vec::len);
    let mut acc = vec![0.0f64; m];
    for b in &blocks.blocks {
        for (a, &v) in acc.iter_mut().zip(b) {
            *a += v * v;
        }
    }
    acc.iter().map(|&v| v.sqrt()).collect()
}

pub fn g_square_function(
    op: &SpectralOperator,
    psi: &PsiTransform,
    f: &[f64],
    opts: &SquareFunctionOptions,
) -> Result<Vec<f64>, CalculusError> {
    Ok(g_from_blocks(&u_blocks(op, psi, f, opts)?))
}

/// Bochner–Riesz symbol (1 - λ/R²)₊^δ.
pub fn bochner_riesz(delta: f64, r: f64) -> Result<impl Fn(f64) -> f64, CalculusError> {
    if delta <= -1.0 {
        return Err(CalculusError::BadRieszOrder { delta });
    }
    if !(r > 0.0) {
        return Err(CalculusError::BadScale { what: format!("Riesz scale R = {r}") });
    }
    let r2 = r * r;
    Ok(move |l: f64| {
        let v = 1.0 - l / r2;
        if v > 0.0 {
            v.powf(delta)
        } else {
            0.0
        }
    })
}

/// Continuum vertical energy of the differentiated Riesz symbol:
/// ∫₀^∞ |R ∂_R (1-λ/R²)₊^{δ+1}|² dR/R = (δ+1)/(2δ+1) for every λ > 0.
pub fn stein_energy(delta: f64) -> f64 {
    (delta + 1.0) / (2.0 * delta + 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct SteinReport {
    pub values: Vec<f64>,
    pub c_delta: f64,
    pub r_points: usize,
    pub r_lo: f64,
    pub r_hi: f64,
}

/// Square function of the differentiated Bochner–Riesz means,
/// S_δ f = c_δ (Σ_R |R ∂_R (1-L/R²)₊^{δ+1} f|² Δln R)^{1/2}, over a geometric
/// R-grid spanning the spectrum; c_δ normalizes single-frequency input to
/// (approximately) unit pass-through.
pub fn stein_square(
    op: &SpectralOperator,
    f: &[f64],
    delta: f64,
    per_octave: usize,
) -> Result<SteinReport, CalculusError> {
    if delta <= -0.5 {
        return Err(CalculusError::BadSteinOrder { delta });
    }
    op.grid().check_len(f)?;
    let pos_min = op
        .eigenvalues()
        .iter()
        .cloned()
        .filter(|&l| l > 0.0)
        .fold(f64::MAX, f64::min);
    if pos_min == f64::MAX {
        return Err(CalculusError::DegenerateSpectrum);
    }
    let r_lo = pos_min.sqrt() / 4.0;
    let r_hi = 2.0 * op.lambda_max().sqrt();
    let n = ((r_hi / r_lo).log2() * per_octave.max(1) as f64).ceil() as usize + 1;
    let dln = (r_hi / r_lo).ln() / (n - 1) as f64;
    let c_delta = 1.0 / stein_energy(delta).sqrt();
    let m = op.m();
    let mut acc = vec![0.0f64; m];
    for k in 0..n {
        let r = r_lo * (k as f64 * dln).exp();
        let r2 = r * r;
        let g = op.apply_spectral(
            |l| {
                let v = 1.0 - l / r2;
                if v > 0.0 {
                    (delta + 1.0) * (2.0 * l / r2) * v.powf(delta)
                } else {
                    0.0
                }
            },
            f,
        );
        let w = if k == 0 || k == n - 1 { 0.5 * dln } else { dln };
        for (a, &gv) in acc.iter_mut().zip(&g) {
            *a += gv * gv * w;
        }
    }
    Ok(SteinReport {
        values: acc.iter().map(|&v| c_delta * v.sqrt()).collect(),
        c_delta,
        r_points: n,
        r_lo,
        r_hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QNorm {
    L2,
    LInf,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlancherelReport {
    /// Σ_m m(√λ_m)² v_m(y)².
    pub spectral_sum: f64,
    /// ∫ |K_{m(√L)}(x, y)|² dμ(x), via the synthesized kernel row.
    pub kernel_integral: f64,
    /// ‖m(R·)‖_q² / μ(B(y, 1/R)).
    pub scale_bound: f64,
    pub ratio: f64,
}

/// Compare the L²(dμ) mass of the kernel column of m(√L) at a node against
/// the scale-normalized symbol size ‖m(R·)‖_q² / μ(B(y, 1/R)).
pub fn plancherel_probe(
    op: &SpectralOperator,
    m_of_k: impl Fn(f64) -> f64,
    y_idx: usize,
    r: f64,
    q: QNorm,
) -> Result<PlancherelReport, CalculusError> {
    if !(r > 0.0) {
        return Err(CalculusError::BadScale { what: format!("frequency scale R = {r}") });
    }
    let grid = op.grid();
    let mm = op.m();
    assert!(y_idx < mm, "node index {y_idx} out of range for M = {mm}");
    let mut spectral_sum = 0.0;
    let mut coef = vec![0.0f64; mm];
    for i in 0..mm {
        let v = m_of_k(op.eigenvalues()[i].sqrt());
        if !v.is_finite() {
            return Err(CalculusError::SymbolUndefined { lambda: op.eigenvalues()[i] });
        }
        let vy = op.basis()[(y_idx, i)];
        spectral_sum += v * v * vy * vy;
        coef[i] = v * vy;
    }
    let row = op.synthesize(&coef);
    let kernel_integral: f64 =
        row.iter().zip(&grid.quad_weights).map(|(&v, &w)| v * v * w).sum();

    // Symbol size at scale R over the spectrum-relevant band.
    let k_hi = (2.0 * op.lambda_max().sqrt() / r).max(1e-12);
    let samples = 4097;
    let h = k_hi / (samples - 1) as f64;
    let norm_sq = match q {
        QNorm::LInf => {
            let mut sup = 0.0f64;
            for i in 0..samples {
                sup = sup.max(m_of_k(r * i as f64 * h).abs());
            }
            sup * sup
        }
        QNorm::L2 => {
            let vals: Vec<f64> = (0..samples)
                .map(|i| {
                    let v = m_of_k(r * i as f64 * h);
                    v * v
                })
                .collect();
            simpson(&vals, h)
        }
    };
    let ball = grid.ball_measure(grid.nodes[y_idx], 1.0 / r);
    let scale_bound = norm_sq / ball;
    Ok(PlancherelReport {
        spectral_sum,
        kernel_integral,
        scale_bound,
        ratio: spectral_sum / scale_bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PointwiseControlReport {
    pub sup_ratio: f64,
    pub per_t: Vec<(f64, f64)>,
}

/// Probe the pointwise domination of (t²L)^k e^{-t²L} Ψ(t√L) m(L) f by the
/// weighted Ψ-average of f at the same scale: reports sup_x lhs/rhs per t.
/// Requires s0 > n/2 and k > s0/2 + 1 (n = doubling dimension of the measure).
#[allow(clippy::too_many_arguments)]
pub fn pointwise_control_probe(
    op: &SpectralOperator,
    psi: &PsiTransform,
    m: impl Fn(f64) -> f64,
    f: &[f64],
    t_grid: &[f64],
    s0: f64,
    k: u32,
    dim_n: f64,
) -> Result<PointwiseControlReport, CalculusError> {
    if s0 <= dim_n / 2.0 {
        return Err(CalculusError::BadSmoothness {
            what: format!("need s0 > n/2, got s0 = {s0}, n = {dim_n}"),
        });
    }
    if (k as f64) <= s0 / 2.0 + 1.0 {
        return Err(CalculusError::BadSmoothness {
            what: format!("need k > s0/2 + 1, got k = {k}, s0 = {s0}"),
        });
    }
    let grid = op.grid();
    grid.check_len(f)?;
    for &l in op.eigenvalues() {
        if !m(l).is_finite() {
            return Err(CalculusError::SymbolUndefined { lambda: l });
        }
    }
    let mm = grid.m;
    let mut per_t = Vec::with_capacity(t_grid.len());
    let mut sup_ratio = 0.0f64;
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(CalculusError::BadScale { what: format!("probe time t = {t}") });
        }
        let t2 = t * t;
        let lhs = op.apply_spectral(
            |l| (t2 * l).powi(k as i32) * (-t2 * l).exp() * psi.eval(t * l.sqrt()) * m(l),
            f,
        );
        let g = op.apply_spectral(|l| psi.eval(t * l.sqrt()), f);
        let w: Vec<f64> = (0..mm)
            .map(|d| (t / (t + d as f64 * grid.dx)).powf(2.0 * s0))
            .collect();
        let mut t_ratio = 0.0f64;
        for x in 0..mm {
            let mut s = 0.0;
            for (y, &gy) in g.iter().enumerate() {
                s += w[x.abs_diff(y)] * gy * gy * grid.quad_weights[y];
            }
            let ball = grid.ball_measure(grid.nodes[x], t).max(f64::MIN_POSITIVE);
            let rhs = (s / ball).sqrt();
            if rhs > 0.0 {
                t_ratio = t_ratio.max(lhs[x].abs() / rhs);
            }
        }
        per_t.push((t, t_ratio));
        sup_ratio = sup_ratio.max(t_ratio);
    }
    Ok(PointwiseControlReport { sup_ratio, per_t })
}

/// Octave-localized bump: e·exp(-1/(1-(log₂ λ)²)) on [1/2, 2], peak 1 at λ=1.
pub fn octave_bump(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let u = lambda.log2();
    if u.abs() >= 1.0 {
        return 0.0;
    }
    (1.0 - 1.0 / (1.0 - u * u)).exp()
}

/// Named symbols usable from configuration files and the CLI.
pub fn named_symbol(name: &str) -> Option<fn(f64) -> f64> {
    match name {
        "one" => Some(|_| 1.0),
        "heat" => Some(|l| (-l).exp()),
        // Vanishes linearly at 0, so m(s)/s stays smooth there — the natural
        // test symbol for the Mellin-norm domination machinery.
        "heat_flux" => Some(|l| l * (-l).exp()),
        "octave_bump" => Some(octave_bump),
        _ => None,
    }
}

/// Symbol read from a two-column CSV of (λ, m(λ)) rows, evaluated by linear
/// interpolation; endpoint values extend beyond the tabulated range.
#[derive(Debug, Clone)]
pub struct TabulatedSymbol {
    lambda: Vec<f64>,
    value: Vec<f64>,
}

impl TabulatedSymbol {
    pub fn eval(&self, l: f64) -> f64 {
        match self.lambda.binary_search_by(|probe| probe.partial_cmp(&l).unwrap()) {
            Ok(i) => self.value[i],
            Err(0) => self.value[0],
            Err(i) if i == self.lambda.len() => *self.value.last().unwrap(),
            Err(i) => {
                let (l0, l1) = (self.lambda[i - 1], self.lambda[i]);
                let frac = (l - l0) / (l1 - l0);
                self.value[i - 1] * (1.0 - frac) + self.value[i] * frac
            }
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Parse a symbol table from CSV. A non-numeric first row is treated as a
/// header; rows must have at least two fields, strictly increasing finite λ,
/// and finite values; at least two rows are required.
pub fn parse_symbol_csv<R: Read>(reader: R) -> Result<TabulatedSymbol, CalculusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut lambda = Vec::new();
    let mut value = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(CalculusError::SymbolTable {
                what: format!("row {} has {} fields, need 2", row_idx + 1, record.len()),
            });
        }
        let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        match (parse(&record[0]), parse(&record[1])) {
            (Some(l), Some(v)) => {
                if let Some(&prev) = lambda.last() {
                    if l <= prev {
                        return Err(CalculusError::SymbolTable {
                            what: format!("lambda not strictly increasing at row {}", row_idx + 1),
                        });
                    }
                }
                lambda.push(l);
                value.push(v);
            }
            _ if row_idx == 0 && lambda.is_empty() => continue, // header row
            _ => {
                return Err(CalculusError::SymbolTable {
                    what: format!("row {} is not numeric", row_idx + 1),
                })
            }
        }
    }
    if lambda.len() < 2 {
        return Err(CalculusError::SymbolTable {
            what: format!("need at least 2 data rows, got {}", lambda.len()),
        });
    }
    Ok(TabulatedSymbol { lambda, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{assemble, OperatorKind};
    use crate::space::{build_grid, DomainKind, WeightedGrid};
    use crate::util::splitmix64;

    fn rand_vec(m: usize, seed: u64) -> Vec<f64> {
        (0..m)
            .map(|i| {
                let u = splitmix64(seed.wrapping_add(i as u64 * 0x9E37));
                (u as f64 / u64::MAX as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn dirichlet_op(m: usize) -> (WeightedGrid, SpectralOperator) {
        let g = build_grid(DomainKind::HalfLineDirichlet, m, 16.0, 0.0).unwrap();
        let op = assemble(OperatorKind::DirichletLaplacian, &g).unwrap();
        (g, op)
    }

    #[test]
    fn psi_bump_is_odd_compactly_supported_and_mean_zero() {
        assert_eq!(psi_bump(1.0), 0.0);
        assert_eq!(psi_bump(-1.3), 0.0);
        for &u in &[0.1, 0.35, 0.7, 0.95] {
            assert_eq!(psi_bump(-u), -psi_bump(u), "profile must be odd");
            assert!(psi_bump(u) > 0.0);
        }
        let n = 4097;
        let h = 2.0 / (n - 1) as f64;
        let vals: Vec<f64> = (0..n).map(|i| psi_bump(-1.0 + i as f64 * h)).collect();
        assert!(simpson(&vals, h).abs() < 1e-14, "odd profile must integrate to zero");
        // frozen peak constant matches a fresh numerical search
        assert!((psi_peak_unnormalized() - PSI_PEAK).abs() < 1e-9);
        let peak = (0..2000).map(|i| psi_bump(i as f64 / 2000.0)).fold(0.0f64, f64::max);
        assert!((peak - 1.0).abs() < 1e-6, "normalized profile peak {peak}");
    }

    #[test]
    fn sine_transform_is_odd_normalized_and_decaying() {
        let psi = PsiTransform::shared();
        assert_eq!(psi.eval(0.0), 0.0);
        for &xi in &[0.3, 1.7, 12.0] {
            assert_eq!(psi.eval(-xi), -psi.eval(xi));
        }
        let sup = (0..20_000).map(|i| psi.eval(i as f64 * 0.005).abs()).fold(0.0f64, f64::max);
        assert!(sup <= 1.0 + 1e-12, "normalized table cannot exceed 1, got {sup}");
        assert!(sup > 1.0 - 1e-5, "table must be sup-normalized, got {sup}");
        assert!(psi.eval(150.0).abs() < 1e-4, "transform must decay fast");
        assert!(psi.eval(400.0).abs() < 1e-7, "transform must keep decaying");
        assert_eq!(psi.eval(1234.0), 0.0, "beyond-table evaluations are zero");
        // linear vanishing at the origin: eval(eps)/eps stabilizes
        let r1 = psi.eval(1e-3) / 1e-3;
        let r2 = psi.eval(2e-3) / 2e-3;
        assert!((r1 - r2).abs() / r1.abs() < 1e-3, "Ψ must vanish linearly at 0");
    }

    #[test]
    fn vertical_energy_is_scale_invariant() {
        let psi = PsiTransform::shared();
        let profile = psi.vertical_profile(&[0.5, 3.0, 47.0, 311.0], 32).unwrap();
        let (lo, hi) = profile
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo - 1.0 < 0.01, "vertical energies spread too much: {profile:?}");
        assert!(lo > 0.0);
    }

    #[test]
    fn multiplier_application_is_a_homomorphism() {
        let (g, op) = dirichlet_op(128);
        let f = rand_vec(128, 3);
        let m1 = |l: f64| (-0.02 * l).exp();
        let m2 = |l: f64| 1.0 / (1.0 + l);
        let product = apply_multiplier(&op, |l| m1(l) * m2(l), &f).unwrap();
        let composed = apply_multiplier(&op, m1, &apply_multiplier(&op, m2, &f).unwrap()).unwrap();
        let scale = g.weighted_norm(&f);
        let diff: Vec<f64> = product.iter().zip(&composed).map(|(a, b)| a - b).collect();
        assert!(g.weighted_norm(&diff) / scale < 1e-9);
    }

    #[test]
    fn multiplier_is_self_adjoint() {
        let g = build_grid(DomainKind::HalfLineNeumannlike, 96, 16.0, 2.0).unwrap();
        let op = assemble(OperatorKind::Bessel { alpha: 2.0 }, &g).unwrap();
        let f = rand_vec(96, 4);
        let h = rand_vec(96, 5);
        let m = |l: f64| (1.0 + l).recip().sqrt();
        let lhs = g.weighted_inner(&apply_multiplier(&op, m, &f).unwrap(), &h);
        let rhs = g.weighted_inner(&f, &apply_multiplier(&op, m, &h).unwrap());
        assert!((lhs - rhs).abs() / lhs.abs().max(1e-30) < 1e-9);
    }

    #[test]
    fn multiplier_norm_attained_on_extremal_eigenfunction() {
        let (g, op) = dirichlet_op(96);
        let m = |l: f64| l * (-0.05 * l).exp();
        let (norm, arg) = multiplier_norm(&op, m).unwrap();
        let extremal = op.eigenfunction(arg);
        let image = apply_multiplier(&op, m, &extremal).unwrap();
        let ratio = g.weighted_norm(&image) / g.weighted_norm(&extremal);
        assert!((ratio - norm).abs() / norm < 1e-12, "extremal ratio {ratio} vs norm {norm}");
        for seed in 0..4 {
            let f = rand_vec(96, 100 + seed);
            let r = g.weighted_norm(&apply_multiplier(&op, m, &f).unwrap()) / g.weighted_norm(&f);
            assert!(r <= norm * (1.0 + 1e-12), "operator norm exceeded: {r} > {norm}");
        }
    }

    #[test]
    fn undefined_symbols_are_rejected() {
        let (_, op) = dirichlet_op(64);
        let f = vec![1.0; 64];
        let err = apply_multiplier(&op, |l| (l - 1.0).sqrt(), &f).unwrap_err();
        assert!(matches!(err, CalculusError::SymbolUndefined { .. }));
        let err = apply_multiplier(&op, |l| 1.0 / (l - op.eigenvalues()[3]), &f).unwrap_err();
        assert!(matches!(err, CalculusError::SymbolUndefined { .. }));
    }

    #[test]
    fn riesz_symbol_shape_and_validation() {
        assert!(matches!(
            bochner_riesz(-1.0, 1.0),
            Err(CalculusError::BadRieszOrder { .. })
        ));
        assert!(matches!(bochner_riesz(0.5, 0.0), Err(CalculusError::BadScale { .. })));
        let s = bochner_riesz(2.0, 3.0).unwrap();
        assert_eq!(s(0.0), 1.0);
        assert_eq!(s(9.0), 0.0);
        assert_eq!(s(100.0), 0.0);
        let v = s(4.5);
        assert!((v - 0.25).abs() < 1e-15, "(1 - 1/2)^2 = 1/4, got {v}");
    }

    #[test]
    fn stein_energy_matches_quadrature_of_continuum_integrand() {
        for &delta in &[0.0, 0.5, 1.0, 2.0] {
            // I(δ) = 2(δ+1)² ∫₀¹ v (1-v)^{2δ} dv, computed independently.
            let n = 200_001;
            let h = 1.0 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n)
                .map(|i| {
                    let v = i as f64 * h;
                    2.0 * (delta + 1.0) * (delta + 1.0) * v * (1.0 - v).max(0.0).powf(2.0 * delta)
                })
                .collect();
            let quad = simpson(&vals, h);
            let closed = stein_energy(delta);
            assert!(
                (quad - closed).abs() / closed < 1e-6,
                "delta={delta}: quadrature {quad} vs closed form {closed}"
            );
        }
    }

    #[test]
    fn stein_square_is_exact_on_single_eigenfunctions() {
        let (_, op) = dirichlet_op(128);
        let delta = 1.0;
        let per_octave = 16;
        for &idx in &[5usize, 40, 100] {
            let f = op.eigenfunction(idx);
            let report = stein_square(&op, &f, delta, per_octave).unwrap();
            // Independent 1-D sum over the same R-grid for this eigenvalue.
            let l = op.eigenvalues()[idx];
            let n = report.r_points;
            let dln = (report.r_hi / report.r_lo).ln() / (n - 1) as f64;
            let mut acc = 0.0;
            for k in 0..n {
                let r = report.r_lo * (k as f64 * dln).exp();
                let v = 1.0 - l / (r * r);
                let sym = if v > 0.0 {
                    (delta + 1.0) * (2.0 * l / (r * r)) * v.powf(delta)
                } else {
                    0.0
                };
                let w = if k == 0 || k == n - 1 { 0.5 * dln } else { dln };
                acc += sym * sym * w;
            }
            let expected = report.c_delta * acc.sqrt();
            for (i, &val) in report.values.iter().enumerate() {
                let want = expected * f[i].abs();
                assert!(
                    (val - want).abs() <= 1e-12 * expected.max(1.0),
                    "node {i}: {val} vs {want}"
                );
            }
        }
    }

    #[test]
    fn stein_ratio_is_stable_across_random_inputs() {
        let (g, op) = dirichlet_op(256);
        for &delta in &[0.0, 1.0] {
            let mut ratios = Vec::new();
            for seed in 0..32 {
                let f = rand_vec(256, 1000 + seed);
                let report = stein_square(&op, &f, delta, 16).unwrap();
                ratios.push(g.weighted_norm(&report.values) / g.weighted_norm(&f));
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / ratios.len() as f64;
            let cv = var.sqrt() / mean;
            assert!(cv < 0.02, "delta={delta}: coefficient of variation {cv}");
            assert!((mean - 1.0).abs() < 0.2, "delta={delta}: mean pass-through {mean}");
        }
    }

    #[test]
    fn stein_rejects_divergent_orders() {
        let (_, op) = dirichlet_op(64);
        let f = vec![1.0; 64];
        assert!(matches!(
            stein_square(&op, &f, -0.5, 8),
            Err(CalculusError::BadSteinOrder { .. })
        ));
    }

    #[test]
    fn plancherel_indicator_recovers_quadrature_weight() {
        let (g, op) = dirichlet_op(128);
        let r = 4.0 * op.lambda_max().sqrt();
        let y = 57;
        let report = plancherel_probe(&op, |_k| 1.0, y, r, QNorm::LInf).unwrap();
        let expect = 1.0 / g.quad_weights[y];
        assert!(
            (report.spectral_sum - expect).abs() / expect < 1e-10,
            "completeness: {} vs {expect}",
            report.spectral_sum
        );
        assert!(
            (report.kernel_integral - report.spectral_sum).abs() / expect < 1e-10,
            "kernel route must agree with the spectral route"
        );
        assert!((report.ratio - 1.0).abs() < 1e-10, "indicator ratio {}", report.ratio);
    }

    #[test]
    fn plancherel_heat_symbol_ratio_is_order_one() {
        let (_, op) = dirichlet_op(256);
        let r = 8.0; // resolvable frequency scale well inside the spectrum
        let report =
            plancherel_probe(&op, |k| (-(k * k) / (r * r)).exp(), 128, r, QNorm::L2).unwrap();
        assert!(
            report.ratio > 0.3 && report.ratio < 1.5,
            "scale-normalized ratio should be order one: {report:?}"
        );
        assert!(
            (report.kernel_integral - report.spectral_sum).abs() / report.spectral_sum < 1e-10
        );
    }

    #[test]
    fn block_square_function_recombines_bitwise() {
        let (_, op) = dirichlet_op(96);
        let psi = PsiTransform::shared();
        let f = rand_vec(96, 8);
        let opts = SquareFunctionOptions::default();
        let blocks = u_blocks(&op, psi, &f, &opts).unwrap();
        let g1 = g_from_blocks(&blocks);
        let g2 = g_square_function(&op, psi, &f, &opts).unwrap();
        assert_eq!(g1, g2, "block recombination must be bitwise reproducible");
        assert!(g1.iter().all(|v| v.is_finite()));
        assert!(g1.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn block_energy_localizes_at_the_matching_scale() {
        let (_, op) = dirichlet_op(128);
        let psi = PsiTransform::shared();
        // eigenfunction with sqrt(lambda) near 2 => energy near t ~ 1/2
        let idx = op
            .eigenvalues()
            .iter()
            .position(|&l| l.sqrt() >= 2.0)
            .expect("spectrum reaches 2");
        let f = op.eigenfunction(idx);
        let blocks = u_blocks(&op, psi, &f, &SquareFunctionOptions::default()).unwrap();
        let sums: Vec<f64> = blocks
            .blocks
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .collect();
        let best = sums
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as i32
            + blocks.j_min;
        let expected = (1.0 / op.eigenvalues()[idx].sqrt()).log2().round() as i32;
        assert!(
            (best - expected).abs() <= 3,
            "dominant block {best} should sit near scale {expected}"
        );
    }

    #[test]
    fn pointwise_control_validates_and_scales() {
        let (_, op) = dirichlet_op(96);
        let psi = PsiTransform::shared();
        let f = rand_vec(96, 12);
        let ts = [0.1, 0.4];
        let err =
            pointwise_control_probe(&op, psi, |_| 1.0, &f, &ts, 0.4, 9, 1.0).unwrap_err();
        assert!(matches!(err, CalculusError::BadSmoothness { .. }), "s0 <= n/2 must fail");
        let err =
            pointwise_control_probe(&op, psi, |_| 1.0, &f, &ts, 2.0, 2, 1.0).unwrap_err();
        assert!(matches!(err, CalculusError::BadSmoothness { .. }), "k too small must fail");
        let report =
            pointwise_control_probe(&op, psi, |l| (-0.1 * l).exp(), &f, &ts, 2.0, 3, 1.0)
                .unwrap();
        assert!(report.sup_ratio.is_finite() && report.sup_ratio > 0.0);
        let scaled: Vec<f64> = f.iter().map(|v| 7.5 * v).collect();
        let report2 =
            pointwise_control_probe(&op, psi, |l| (-0.1 * l).exp(), &scaled, &ts, 2.0, 3, 1.0)
                .unwrap();
        assert!(
            (report.sup_ratio - report2.sup_ratio).abs() / report.sup_ratio < 1e-12,
            "ratio must be invariant under input scaling"
        );
    }

    #[test]
    fn octave_bump_shape() {
        assert_eq!(octave_bump(0.5), 0.0);
        assert_eq!(octave_bump(2.0), 0.0);
        assert_eq!(octave_bump(-3.0), 0.0);
        assert!((octave_bump(1.0) - 1.0).abs() < 1e-15, "peak must be 1 at λ = 1");
        assert!(octave_bump(0.7) > 0.0 && octave_bump(0.7) < 1.0);
        assert!(octave_bump(1.8) > 0.0 && octave_bump(1.8) < 1.0);
    }

    #[test]
    fn named_symbols_resolve() {
        assert!(named_symbol("one").is_some());
        assert!(named_symbol("heat").is_some());
        assert!(named_symbol("octave_bump").is_some());
        assert!(named_symbol("nope").is_none());
        assert_eq!(named_symbol("heat").unwrap()(0.0), 1.0);
    }

    #[test]
    fn symbol_csv_parses_interpolates_and_validates() {
        let t = parse_symbol_csv("lambda,value\n0,1\n1,0.5\n4,0.25\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.eval(0.0), 1.0);
        assert!((t.eval(2.0) - (0.5 + (0.25 - 0.5) / 3.0)).abs() < 1e-15);
        assert_eq!(t.eval(-5.0), 1.0, "clamps below the table");
        assert_eq!(t.eval(9.0), 0.25, "clamps above the table");

        let headerless = parse_symbol_csv("0,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(headerless.len(), 2);

        assert!(matches!(
            parse_symbol_csv("0,1\n0,2\n".as_bytes()),
            Err(CalculusError::SymbolTable { .. })
        ));
        assert!(matches!(
            parse_symbol_csv("0,1\nbad,2\n".as_bytes()),
            Err(CalculusError::SymbolTable { .. })
        ));
        assert!(matches!(
            parse_symbol_csv("lambda,value\n1,1\n".as_bytes()),
            Err(CalculusError::SymbolTable { .. })
        ));
        assert!(matches!(
            parse_symbol_csv("0,1\n2,inf\n".as_bytes()),
            Err(CalculusError::SymbolTable { .. })
        ));
    }
}
