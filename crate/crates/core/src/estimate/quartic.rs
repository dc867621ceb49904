//! Closed-form polynomial roots up to degree four.
//!
//! The quartic is solved by Ferrari's method through a resolvent cubic, all in
//! complex arithmetic so no case analysis on the sign of discriminants is
//! needed. Every root is then polished with a few Newton steps on the
//! original polynomial.

use num_complex::Complex64;

const NEWTON_STEPS: usize = 4;
/// Leading coefficients smaller than this (relative to the largest) drop the degree.
const DEGREE_DROP: f64 = 1e-14;

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    // coeffs from highest degree down; returns (p(z), p'(z))
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn polish(coeffs: &[f64], roots: &mut [Complex64]) {
    for r in roots.iter_mut() {
        let (mut val, mut der) = horner(coeffs, *r);
        for _ in 0..NEWTON_STEPS {
            if der.norm() == 0.0 || val.norm() == 0.0 {
                break;
            }
            let candidate = *r - val / der;
            let (cv, cd) = horner(coeffs, candidate);
            if !(cv.norm() < val.norm()) {
                break;
            }
            *r = candidate;
            val = cv;
            der = cd;
        }
    }
}

/// Roots of `a z^2 + b z + c` for complex coefficients, `a != 0`.
fn quadratic_complex(a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 2] {
    let disc = (b * b - 4.0 * a * c).sqrt();
    // pick the sign that avoids cancellation
    let q = if (b.conj() * disc).re >= 0.0 {
        -0.5 * (b + disc)
    } else {
        -0.5 * (b - disc)
    };
    if q.norm() == 0.0 {
        return [Complex64::new(0.0, 0.0); 2];
    }
    [q / a, c / q]
}

/// Roots of the monic cubic `z^3 + a z^2 + b z + c` (Cardano, complex).
fn monic_cubic(a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 3] {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let root = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let u_plus = -q / 2.0 + root;
    let u_minus = -q / 2.0 - root;
    let u3 = if u_plus.norm() >= u_minus.norm() { u_plus } else { u_minus };
    let omega = Complex64::new(-0.5, 3f64.sqrt() / 2.0);
    if u3.norm() == 0.0 {
        // p = q = 0: triple root
        return [-shift; 3];
    }
    let u = u3.powf(1.0 / 3.0);
    let mut out = [Complex64::new(0.0, 0.0); 3];
    let mut w = Complex64::new(1.0, 0.0);
    for slot in &mut out {
        let uk = u * w;
        *slot = uk - p / (3.0 * uk) - shift;
        w *= omega;
    }
    out
}

fn solve_cubic(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<Complex64> {
    let scale = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    if c3.abs() <= DEGREE_DROP * scale {
        return solve_quadratic(c2, c1, c0);
    }
    let to_c = |v: f64| Complex64::new(v / c3, 0.0);
    let mut roots = monic_cubic(to_c(c2), to_c(c1), to_c(c0)).to_vec();
    polish(&[c3, c2, c1, c0], &mut roots);
    roots
}

fn solve_quadratic(c2: f64, c1: f64, c0: f64) -> Vec<Complex64> {
    let scale = c2.abs().max(c1.abs()).max(c0.abs());
    if c2.abs() <= DEGREE_DROP * scale {
        if c1.abs() <= DEGREE_DROP * scale {
            return Vec::new();
        }
        return vec![Complex64::new(-c0 / c1, 0.0)];
    }
    let c = |v: f64| Complex64::new(v, 0.0);
    let mut roots = quadratic_complex(c(c2), c(c1), c(c0)).to_vec();
    polish(&[c2, c1, c0], &mut roots);
    roots
}

/// All complex roots (with multiplicity) of `c4 z^4 + c3 z^3 + c2 z^2 + c1 z + c0`.
///
/// A negligible leading coefficient falls back to the lower-degree solver, so
/// fewer than four roots may be returned. The zero polynomial has no roots.
pub fn solve_quartic(c4: f64, c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<Complex64> {
    let scale = [c4, c3, c2, c1, c0].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    if c4.abs() <= DEGREE_DROP * scale {
        return solve_cubic(c3, c2, c1, c0);
    }
    let (a, b, c, d) = (c3 / c4, c2 / c4, c1 / c4, c0 / c4);
    // depressed quartic y^4 + p y^2 + q y + r with z = y - a/4
    let p = b - 3.0 * a * a / 8.0;
    let q = c - a * b / 2.0 + a * a * a / 8.0;
    let r = d - a * c / 4.0 + a * a * b / 16.0 - 3.0 * a * a * a * a / 256.0;
    let cx = |v: f64| Complex64::new(v, 0.0);

    let q_scale = 1.0 + p.abs().powf(1.5) + r.abs().powf(0.75);
    let ys: Vec<Complex64> = if q.abs() <= 1e-14 * q_scale {
        // biquadratic
        quadratic_complex(cx(1.0), cx(p), cx(r))
            .iter()
            .flat_map(|z| {
                let s = z.sqrt();
                [s, -s]
            })
            .collect()
    } else {
        // resolvent: 8 m^3 + 8 p m^2 + (2 p^2 - 8 r) m - q^2 = 0, any m != 0 works
        let ms = monic_cubic(cx(p), cx(p * p / 4.0 - r), cx(-q * q / 8.0));
        let m = ms
            .iter()
            .copied()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .expect("three roots");
        let s = (2.0 * m).sqrt();
        let half_p_m = cx(p / 2.0) + m;
        let t = cx(q) / (2.0 * s);
        let mut ys = quadratic_complex(cx(1.0), -s, half_p_m + t).to_vec();
        ys.extend(quadratic_complex(cx(1.0), s, half_p_m - t));
        ys
    };
    let mut roots: Vec<Complex64> = ys.into_iter().map(|y| y - a / 4.0).collect();
    polish(&[c4, c3, c2, c1, c0], &mut roots);
    roots
}
