//! Small numeric helpers shared across modules: prefix sums, least squares,
//! weighted quantiles, counter-based mixing, and a complex log-gamma.

use num_complex::Complex64;

/// Prefix sums over a node-indexed array, for O(1) range totals.
#[derive(Debug, Clone)]
pub struct Cumulative {
    partial: Vec<f64>,
}

impl Cumulative {
    pub fn new(values: &[f64]) -> Self {
        let mut partial = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        partial.push(0.0);
        for &v in values {
            acc += v;
            partial.push(acc);
        }
        Self { partial }
    }

    /// Sum over the half-open index range `lo..hi`.
    pub fn range(&self, lo: usize, hi: usize) -> f64 {
        debug_assert!(lo <= hi && hi < self.partial.len());
        self.partial[hi] - self.partial[lo]
    }

    pub fn total(&self) -> f64 {
        *self.partial.last().unwrap()
    }
}

/// Ordinary least squares line fit `y = intercept + slope * x`.
///
/// Returns `(intercept, slope, r_squared)`. Degenerate designs (fewer than two
/// distinct x) return a flat fit with `r_squared = 0`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len(), "fit needs matching sample lengths");
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (ys.first().copied().unwrap_or(0.0), 0.0, 0.0);
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return (my, 0.0, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (intercept, slope, r2)
}

/// Quantile of a weighted sample (weights nonnegative, not all zero).
///
/// `q` in [0,1]; returns the smallest value v such that the weight of
/// `{x <= v}` reaches `q` times the total weight.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    assert_eq!(values.len(), weights.len());
    assert!(!values.is_empty(), "quantile of empty sample");
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN in quantile input"));
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "quantile needs positive total weight");
    let target = q.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= target {
            return values[i];
        }
    }
    values[*idx.last().unwrap()]
}

/// SplitMix64 step: mixes a 64-bit state into a well-distributed word.
///
/// Used to derive independent stream seeds from (base seed, index) pairs so
/// that every random family is reproducible and order-independent.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a sequence of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(base ^ 0xA076_1D64_78BD_642F);
    for &p in path {
        s = splitmix64(s ^ p.wrapping_mul(0xE703_7ED1_A0B4_28DB));
    }
    s
}

/// Complex log-gamma via the Lanczos approximation (g = 7, 9 coefficients).
///
/// Accurate to roughly 1e-13 on the right half plane; the reflection formula
/// extends it to Re z < 1/2.
pub fn ln_gamma_complex(z: Complex64) -> Complex64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z.re < 0.5 {
        // Gamma(z) Gamma(1-z) = pi / sin(pi z)
        let pi = std::f64::consts::PI;
        let log_pi = Complex64::new(pi.ln(), 0.0);
        let s = (Complex64::new(pi, 0.0) * z).sin();
        return log_pi - s.ln() - ln_gamma_complex(Complex64::new(1.0, 0.0) - z);
    }
    let zm1 = z - Complex64::new(1.0, 0.0);
    let mut x = Complex64::new(COEF[0], 0.0);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x += Complex64::new(c, 0.0) / (zm1 + Complex64::new(i as f64, 0.0));
    }
    let t = zm1 + Complex64::new(G + 0.5, 0.0);
    let half_log_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    Complex64::new(half_log_two_pi, 0.0) + (zm1 + Complex64::new(0.5, 0.0)) * t.ln() - t + x.ln()
}

/// |Gamma(x + iy)| computed from the complex log-gamma.
#[cfg(test)]
pub fn gamma_abs(z: Complex64) -> f64 {
    ln_gamma_complex(z).re.exp()
}

/// Composite Simpson rule over uniformly spaced samples (odd length).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    assert!(values.len() >= 3 && values.len() % 2 == 1, "Simpson needs an odd sample count >= 3");
    let mut s = values[0] + values[values.len() - 1];
    for (i, &v) in values.iter().enumerate().skip(1).take(values.len() - 2) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_matches_direct_sums() {
        let v = [1.0, 2.0, 3.0, 4.5];
        let c = Cumulative::new(&v);
        assert_eq!(c.range(0, 4), 10.5);
        assert_eq!(c.range(1, 3), 5.0);
        assert_eq!(c.range(2, 2), 0.0);
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (b, a, r2) = linear_fit(&xs, &ys);
        assert!((b - 1.0).abs() < 1e-12 && (a - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_quantile_respects_masses() {
        let v = [10.0, 20.0, 30.0];
        let w = [1.0, 1.0, 2.0];
        assert_eq!(weighted_quantile(&v, &w, 0.25), 10.0);
        assert_eq!(weighted_quantile(&v, &w, 0.5), 20.0);
        assert_eq!(weighted_quantile(&v, &w, 0.9), 30.0);
    }

    #[test]
    fn derive_seed_is_order_sensitive_and_stable() {
        let a = derive_seed(42, &[1, 2]);
        let b = derive_seed(42, &[2, 1]);
        assert_ne!(a, b, "paths must map to distinct streams");
        assert_eq!(a, derive_seed(42, &[1, 2]), "derivation must be pure");
    }

    #[test]
    fn gamma_abs_matches_closed_forms() {
        // |Gamma(it)|^2 = pi / (t sinh(pi t))
        for &t in &[0.3, 1.0, 2.5] {
            let got = gamma_abs(Complex64::new(0.0, t));
            let exact = (std::f64::consts::PI / (t * (std::f64::consts::PI * t).sinh())).sqrt();
            assert!(
                (got - exact).abs() / exact < 1e-10,
                "|Gamma(i{t})| = {got}, closed form {exact}"
            );
        }
        // Gamma(1/2) = sqrt(pi)
        let half = gamma_abs(Complex64::new(0.5, 0.0));
        assert!((half - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        // Recurrence |Gamma(z+1)| = |z| |Gamma(z)| off the real axis
        let z = Complex64::new(-1.3, 0.7);
        let lhs = gamma_abs(z + Complex64::new(1.0, 0.0));
        let rhs = z.norm() * gamma_abs(z);
        assert!((lhs - rhs).abs() / rhs < 1e-10);
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        // int_0^1 x^3 dx = 1/4; Simpson is exact on cubics.
        let n = 9;
        let h = 1.0 / (n as f64 - 1.0);
        let vals: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&vals, h) - 0.25).abs() < 1e-14);
    }
}
