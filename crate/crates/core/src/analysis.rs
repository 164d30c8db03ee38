//! Closed-form security analysis of Eve's incoherent probe attack.
//!
//! Eve's probe pair ends up in `|y,n>` or `|n,y>` depending on the key bit.
//! Her information is bounded by the Holevo quantity of that ensemble, while
//! the disturbance she causes lowers the interference visibility and raises
//! the raw-key error rate. The key rate is `K = I_BC − χ` and the attack is
//! tolerable while `K > 0`.

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use crate::error::check_range;
use crate::photonics::{self, Complex};
use crate::{Error, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// `x log₂ x` with the `x → 0` limit made explicit.
fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Shannon binary entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_range("x", x, 0.0, 1.0, "[0, 1]")?;
    Ok(binary_entropy_unchecked(x))
}

pub(crate) fn binary_entropy_unchecked(x: f64) -> f64 {
    -xlog2x(x) - xlog2x(1.0 - x)
}

/// Von Neumann entropy (bits) of a spectrum. Round-off negatives count as zero.
pub fn spectrum_entropy(eigenvalues: &[f64]) -> f64 {
    -eigenvalues.iter().map(|&v| xlog2x(v)).sum::<f64>()
}

/// Von Neumann entropy of a Hermitian matrix of any size.
pub fn von_neumann_entropy(m: &DMatrix<Complex>) -> Result<f64> {
    let eig = m
        .clone()
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNonConvergence)?;
    Ok(spectrum_entropy(eig.eigenvalues.as_slice()))
}

/// `|v><v|`.
pub fn projector(v: &[Complex]) -> DMatrix<Complex> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

/// Eve's reduced probe state on `{|y,y>, |y,y⊥>, |y⊥,y>}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix3(pub Matrix3<Complex>);

impl DensityMatrix3 {
    pub fn trace(&self) -> Complex {
        self.0.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `ρ_E = ½ [[2c², cs, cs], [cs, s², 0], [cs, 0, s²]]`.
pub fn build_rho_e(theta: f64) -> Result<DensityMatrix3> {
    photonics::check_theta(theta)?;
    let (s, c) = theta.sin_cos();
    let r = |x: f64| Complex::new(0.5 * x, 0.0);
    Ok(DensityMatrix3(Matrix3::new(
        r(2.0 * c * c),
        r(c * s),
        r(c * s),
        r(c * s),
        r(s * s),
        r(0.0),
        r(c * s),
        r(0.0),
        r(s * s),
    )))
}

/// Eigenvalues of `ρ_E`: `e1 ≤ e2` are the two that survive, `e3` the
/// (numerically) vanishing one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl Spectrum {
    pub fn entropy(&self) -> f64 {
        spectrum_entropy(&[self.e1, self.e2, self.e3])
    }
}

pub fn rho_e_spectrum(m: &DensityMatrix3) -> Result<Spectrum> {
    let eig = m
        .0
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNonConvergence)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let (e3, a, b) = (v[0], v[1], v[2]);
    Ok(Spectrum {
        e1: a.min(b),
        e2: a.max(b),
        e3,
    })
}

/// Closed-form non-vanishing eigenvalues `((1 − cos 2θ)/4, (3 + cos 2θ)/4)`.
pub fn rho_e_eigenvalues_closed_form(theta: f64) -> (f64, f64) {
    let c2 = (2.0 * theta).cos();
    ((1.0 - c2) / 4.0, (3.0 + c2) / 4.0)
}

/// Holevo bound on Eve's information per sifted bit, `H((1 − cos 2θ)/4)`.
pub fn holevo_chi(theta: f64) -> Result<f64> {
    photonics::check_theta(theta)?;
    Ok(binary_entropy_unchecked(rho_e_eigenvalues_closed_form(theta).0))
}

/// The same quantity from first principles: `S(ρ̄) − ½[S(Π_yn) + S(Π_ny)]`
/// with every entropy taken from an eigensolver on the full probe space.
pub fn holevo_chi_numeric(theta: f64) -> Result<f64> {
    photonics::check_theta(theta)?;
    let (yn, ny) = photonics::branch_probes(theta);
    let p_yn = projector(&yn);
    let p_ny = projector(&ny);
    let mixture = (&p_yn + &p_ny) * Complex::new(0.5, 0.0);
    Ok(von_neumann_entropy(&mixture)? - 0.5 * (von_neumann_entropy(&p_yn)? + von_neumann_entropy(&p_ny)?))
}

/// Raw-key error rate under Eve's attack, `sin²θ / (1 + sin²θ)`.
pub fn error_rate_theory(theta: f64) -> Result<f64> {
    photonics::check_theta(theta)?;
    let s2 = theta.sin().powi(2);
    Ok(s2 / (1.0 + s2))
}

/// Visibility under Eve's attack, `(1 + cos 2θ)/2`.
pub fn visibility_theory(theta: f64) -> Result<f64> {
    photonics::check_theta(theta)?;
    Ok((1.0 + (2.0 * theta).cos()) / 2.0)
}

/// Error rate implied by a visibility in a lossless channel.
pub fn error_rate_from_visibility(v: f64) -> f64 {
    (1.0 - v) / (2.0 - v)
}

/// Visibility implied by an error rate; inverse of [`error_rate_from_visibility`].
pub fn visibility_from_error_rate(e: f64) -> f64 {
    (1.0 - 2.0 * e) / (1.0 - e)
}

/// Key rate `1 − H(e) − H(sin²θ/2)` with the probe strength inferred from
/// an observed error rate through `sin²θ = e/(1 − e)`.
pub fn key_rate_from_error_rate(e: f64) -> Result<f64> {
    check_range("e", e, 0.0, 0.5, "[0, 1/2]")?;
    let s2 = e / (1.0 - e);
    Ok(1.0 - binary_entropy_unchecked(e) - binary_entropy_unchecked(s2 / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityPoint {
    pub theta: f64,
    pub e: f64,
    pub visibility: f64,
    pub e1: f64,
    pub e2: f64,
    pub chi: f64,
    pub i_bc: f64,
    pub key_rate: f64,
}

pub fn key_rate(theta: f64) -> Result<SecurityPoint> {
    let e = error_rate_theory(theta)?;
    let (e1, e2) = rho_e_eigenvalues_closed_form(theta);
    let chi = binary_entropy_unchecked(e1);
    let i_bc = 1.0 - binary_entropy_unchecked(e);
    Ok(SecurityPoint {
        theta,
        e,
        visibility: visibility_theory(theta)?,
        e1,
        e2,
        chi,
        i_bc,
        key_rate: i_bc - chi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub theta: f64,
    pub e: f64,
    pub iterations: usize,
}

/// Largest tolerable probe strength: the root of `K(θ)` on `[0, π/2]`,
/// located by bisection to width `tol`.
pub fn security_threshold(tol: f64) -> Result<Threshold> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain {
            name: "tol",
            value: tol,
            domain: "(0, inf)",
        });
    }
    let k = |t: f64| key_rate(t).map(|p| p.key_rate);
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    let (k_lo, k_hi) = (k(lo)?, k(hi)?);
    if !(k_lo > 0.0 && k_hi < 0.0) {
        return Err(Error::BracketFailure { lo: k_lo, hi: k_hi });
    }
    let mut iterations = 0;
    while hi - lo > tol && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if k(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let theta = 0.5 * (lo + hi);
    Ok(Threshold {
        theta,
        e: error_rate_theory(theta)?,
        iterations,
    })
}

/// Information curves over a grid of probe strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityCurve {
    pub points: Vec<SecurityPoint>,
}

pub const CURVE_CSV_HEADER: &str = "theta,e,visibility,e1,chi,i_bc,key_rate";

impl SecurityCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.points.len() + 1));
        out.push_str(CURVE_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let fields = [p.theta, p.e, p.visibility, p.e1, p.chi, p.i_bc, p.key_rate];
            let row: Vec<String> = fields.iter().map(|&x| format_significant(x, 12)).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Indices `i` where `I_BC − χ` changes sign between points `i` and `i+1`
    /// (a zero at a grid point counts once, on its left interval).
    pub fn crossings(&self) -> Vec<usize> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                let a = w[0].i_bc - w[0].chi;
                let b = w[1].i_bc - w[1].chi;
                (a > 0.0 && b <= 0.0) || (a < 0.0 && b >= 0.0)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Evenly spaced grid of `points` values on `[0, π/2]`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|k| FRAC_PI_2 * k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn sweep_curves(grid: &[f64]) -> Result<SecurityCurve> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("theta grid must be sorted".into()));
    }
    let points = grid.par_iter().map(|&t| key_rate(t)).collect::<Result<Vec<_>>>()?;
    Ok(SecurityCurve { points })
}

/// Formats `x` with `digits` significant digits, plain notation for moderate
/// magnitudes and scientific otherwise.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", digits.saturating_sub(1), x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    /// Independent oracle: natural-log series for `−x ln x − (1−x) ln(1−x)`
    /// via `ln(1−u) = −Σ uᵏ/k`, converted to bits.
    fn entropy_series(x: f64) -> f64 {
        let ln1m = |u: f64| -(1..2000).map(|k| u.powi(k) / k as f64).sum::<f64>();
        // ln x = ln(1 − (1 − x))
        let nats = -x * ln1m(1.0 - x) - (1.0 - x) * ln1m(x);
        nats / std::f64::consts::LN_2
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        let h = binary_entropy(0.25).unwrap();
        assert!((h - entropy_series(0.25)).abs() < 1e-12);
        assert!((h - 0.811278).abs() < 1e-6);
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn rho_e_limits() {
        let m = build_rho_e(0.0).unwrap();
        assert_eq!(m.0[(0, 0)].re, 1.0);
        assert_eq!(m.0.iter().map(|z| z.norm()).sum::<f64>(), 1.0);

        let m = build_rho_e(FRAC_PI_2).unwrap();
        assert!((m.0[(0, 0)].re).abs() < 1e-15);
        assert!((m.0[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!((m.0[(2, 2)].re - 0.5).abs() < 1e-15);
        assert!(m.0[(0, 1)].norm() < 1e-15 && m.0[(1, 2)].norm() < 1e-15);

        assert!(build_rho_e(-1e-3).is_err());
    }

    #[test]
    fn rho_e_matches_partial_trace_of_probe_ensemble() {
        // ρ_E = ½(|y,n><y,n| + |n,y><n,y|) restricted to the first three basis states
        for theta in [0.1, 0.42, 1.0, 1.5] {
            let (yn, ny) = photonics::branch_probes(theta);
            let full = (projector(&yn) + projector(&ny)) * Complex::new(0.5, 0.0);
            let m = build_rho_e(theta).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((full[(i, j)] - m.0[(i, j)]).norm() < 1e-15);
                }
            }
            for k in 0..4 {
                assert!(full[(3, k)].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn spectrum_known_points() {
        let s = rho_e_spectrum(&build_rho_e(0.0).unwrap()).unwrap();
        assert!(s.e1.abs() < 1e-12 && (s.e2 - 1.0).abs() < 1e-12);
        let s = rho_e_spectrum(&build_rho_e(FRAC_PI_2).unwrap()).unwrap();
        assert!((s.e1 - 0.5).abs() < 1e-12 && (s.e2 - 0.5).abs() < 1e-12);
        let s = rho_e_spectrum(&build_rho_e(FRAC_PI_4).unwrap()).unwrap();
        assert!((s.e1 - 0.25).abs() < 1e-12 && (s.e2 - 0.75).abs() < 1e-12);
        assert!(s.e3.abs() < 1e-12);
    }

    #[test]
    fn holevo_known_points() {
        assert!(holevo_chi(0.0).unwrap().abs() < 1e-15);
        assert!((holevo_chi(FRAC_PI_2).unwrap() - 1.0).abs() < 1e-12);
        let chi = holevo_chi(FRAC_PI_4).unwrap();
        assert!((chi - binary_entropy(0.25).unwrap()).abs() < 1e-12);
        let numeric = rho_e_spectrum(&build_rho_e(FRAC_PI_4).unwrap()).unwrap().entropy();
        assert!((chi - numeric).abs() < 1e-10);
        assert!(holevo_chi(2.0).is_err());
    }

    #[test]
    fn pure_branch_states_carry_no_entropy() {
        for theta in [0.0, 0.3, FRAC_PI_4, 1.2, FRAC_PI_2] {
            let (yn, ny) = photonics::branch_probes(theta);
            assert!(von_neumann_entropy(&projector(&yn)).unwrap().abs() < 1e-12);
            assert!(von_neumann_entropy(&projector(&ny)).unwrap().abs() < 1e-12);
            assert!((holevo_chi_numeric(theta).unwrap() - holevo_chi(theta).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn error_and_visibility_laws() {
        assert_eq!(error_rate_theory(0.0).unwrap(), 0.0);
        assert_eq!(visibility_theory(0.0).unwrap(), 1.0);
        assert!((error_rate_theory(FRAC_PI_2).unwrap() - 0.5).abs() < 1e-15);
        assert!(visibility_theory(FRAC_PI_2).unwrap().abs() < 1e-15);
        assert!((error_rate_theory(0.42).unwrap() - 0.1425).abs() < 5e-4);
        for k in 0..=100 {
            let theta = FRAC_PI_2 * k as f64 / 100.0;
            let v = visibility_theory(theta).unwrap();
            let e = error_rate_theory(theta).unwrap();
            assert!((e - error_rate_from_visibility(v)).abs() < 1e-12);
            assert!((v - visibility_from_error_rate(e)).abs() < 1e-12);
        }
    }

    #[test]
    fn key_rate_known_points() {
        let p = key_rate(0.0).unwrap();
        assert_eq!(p.key_rate, 1.0);
        assert_eq!((p.i_bc, p.chi), (1.0, 0.0));

        // direct evaluation of both closed forms at θ = π/4: e = 1/3, e1 = 1/4
        let p = key_rate(FRAC_PI_4).unwrap();
        let expected = (1.0 - binary_entropy(1.0 / 3.0).unwrap()) - binary_entropy(0.25).unwrap();
        assert!((p.key_rate - expected).abs() < 1e-12);
        assert!((p.i_bc - 0.0817).abs() < 1e-4 && (p.chi - 0.8113).abs() < 1e-4);
        assert!(p.key_rate < 0.0);

        assert!(key_rate(0.42).unwrap().key_rate.abs() < 0.01);
    }

    /// Golden value of θ*, frozen from bisection and confirmed by the grid
    /// scan in `threshold_matches_dense_grid_scan`.
    const THETA_STAR: f64 = 0.418_507_116_2;

    #[test]
    fn threshold_golden_value() {
        let t = security_threshold(1e-10).unwrap();
        assert!((t.theta - THETA_STAR).abs() < 1e-10, "theta* = {:.12}", t.theta);
        assert!((0.41..=0.43).contains(&t.theta));
        assert!((0.140..=0.145).contains(&t.e));
        assert!(security_threshold(0.0).is_err());
    }

    #[test]
    fn threshold_matches_dense_grid_scan() {
        let n = 1_000_000;
        let step = FRAC_PI_2 / n as f64;
        let mut prev = key_rate(0.0).unwrap().key_rate;
        let mut root = None;
        for k in 1..=n {
            let t = k as f64 * step;
            let cur = key_rate(t).unwrap().key_rate;
            if prev > 0.0 && cur <= 0.0 {
                // linear interpolation inside the bracketing cell
                root = Some(t - step * cur / (cur - prev));
                break;
            }
            prev = cur;
        }
        let root = root.unwrap();
        assert!((root - THETA_STAR).abs() < 1e-9, "scan root {root}");
    }

    #[test]
    fn threshold_consistency() {
        let t = security_threshold(1e-10).unwrap().theta;
        assert!(key_rate(t - 0.01).unwrap().key_rate > 0.0);
        assert!(key_rate(t + 0.01).unwrap().key_rate < 0.0);
    }

    #[test]
    fn curves_single_point_and_crossing() {
        let c = sweep_curves(&[0.0]).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].i_bc, c.points[0].chi, c.points[0].key_rate), (1.0, 0.0, 1.0));

        let t = security_threshold(1e-10).unwrap().theta;
        let c = sweep_curves(&[t - 1e-3, t, t + 1e-3]).unwrap();
        assert!(c.points[0].key_rate > 0.0 && c.points[2].key_rate < 0.0);
        assert_eq!(c.crossings().len(), 1);

        assert!(sweep_curves(&[0.3, 0.1]).is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let csv = sweep_curves(&uniform_grid(3)).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CURVE_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,1.00000000000,0,0,1.00000000000,1.00000000000"));
        assert!(lines[3].starts_with("1.57079632679,"));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0, 12), "0");
        assert_eq!(format_significant(1.0, 12), "1.00000000000");
        assert_eq!(format_significant(0.1425, 4), "0.1425");
        assert_eq!(format_significant(-0.72957395851, 3), "-0.730");
        assert_eq!(format_significant(1.5e-9, 3), "1.50e-9");
    }

    proptest! {
        #[test]
        fn rho_e_is_a_rank_two_density_matrix(theta in 0.0f64..=FRAC_PI_2) {
            let m = build_rho_e(theta).unwrap();
            prop_assert!(m.hermiticity_defect() < 1e-12);
            prop_assert!((m.trace().re - 1.0).abs() < 1e-12);
            let s = rho_e_spectrum(&m).unwrap();
            let (e1, e2) = rho_e_eigenvalues_closed_form(theta);
            prop_assert!(s.e3.abs() < 1e-10);
            prop_assert!(s.e1 >= -1e-10 && s.e3 >= -1e-10);
            prop_assert!((s.e1 - e1).abs() < 1e-10 && (s.e2 - e2).abs() < 1e-10);
            prop_assert!((e1 + e2 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn security_point_invariants(theta in 0.0f64..=FRAC_PI_2) {
            let p = key_rate(theta).unwrap();
            prop_assert!((p.e1 + p.e2 - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&p.chi));
            prop_assert!((p.key_rate - (p.i_bc - p.chi)).abs() < 1e-15);
        }

        #[test]
        fn abort_relevant_laws_are_monotone(a in 0.0f64..=FRAC_PI_2, b in 0.0f64..=FRAC_PI_2) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(error_rate_theory(lo).unwrap() <= error_rate_theory(hi).unwrap());
            prop_assert!(visibility_theory(lo).unwrap() >= visibility_theory(hi).unwrap());
        }
    }
}
