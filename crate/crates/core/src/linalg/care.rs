//! Small dense complex Riccati and pole-assignment solvers.

use faer::{c64, Mat};

use super::{ceigenvalues, cfro, cidentity, csolve, sylvester_small, CMat};
use crate::error::{Error, Result};

/// Stabilizing solution of `aᴴx + xa − x b bᴴ x + q = 0`.
///
/// Starts from the stable invariant subspace of the Hamiltonian matrix and
/// polishes with Newton–Kleinman iterations.
pub fn care(a: &CMat, b: &CMat, q: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let bbh = b * b.adjoint();
    let ah = a.adjoint().to_owned();
    let ham = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => a[(i, j)],
        (true, false) => -bbh[(i, j - n)],
        (false, true) => -q[(i - n, j)],
        (false, false) => -ah[(i - n, j - n)],
    });
    let evd = ham
        .eigen()
        .map_err(|e| Error::Design(format!("Hamiltonian eigensolve: {e:?}")))?;
    let mut stable: Vec<usize> = (0..2 * n).filter(|&i| evd.S()[i].re < 0.0).collect();
    if stable.len() != n {
        return Err(Error::Design(format!(
            "Hamiltonian has {} stable eigenvalues, expected {n}",
            stable.len()
        )));
    }
    stable.sort_by(|&x, &y| evd.S()[x].re.partial_cmp(&evd.S()[y].re).unwrap());
    let u1 = Mat::from_fn(n, n, |i, j| evd.U()[(i, stable[j])]);
    let u2 = Mat::from_fn(n, n, |i, j| evd.U()[(n + i, stable[j])]);
    // x = u2 u1⁻¹, via u1ᵀ xᵀ = u2ᵀ
    let u1t = u1.transpose().to_owned();
    let u2t = u2.transpose().to_owned();
    let mut x = csolve(&u1t, &u2t).transpose().to_owned();
    hermitize(&mut x);
    if !x.as_ref().is_all_finite() {
        return Err(Error::Design("Hamiltonian subspace is singular".into()));
    }

    for _ in 0..20 {
        let k = b.adjoint() * &x;
        let acl = a - b * &k;
        let rhs = -(q + k.adjoint() * &k);
        let aclh = acl.adjoint().to_owned();
        let mut next = sylvester_small(&aclh, &acl, &rhs);
        hermitize(&mut next);
        let step = cfro(&(&next - &x));
        x = next;
        if step <= 1e-14 * cfro(&x).max(1.0) {
            break;
        }
    }
    let res = care_residual(a, b, q, &x);
    if !(res <= 1e-8 * cfro(&x).max(1.0)) {
        return Err(Error::Design(format!("Riccati residual {res:e}")));
    }
    Ok(x)
}

pub fn care_residual(a: &CMat, b: &CMat, q: &CMat, x: &CMat) -> f64 {
    let r = a.adjoint() * x + x * a - x * b * b.adjoint() * x + q;
    cfro(&r)
}

fn hermitize(x: &mut CMat) {
    let n = x.nrows();
    for i in 0..n {
        for j in i..n {
            let v = (x[(i, j)] + x[(j, i)].conj()) * 0.5;
            x[(i, j)] = v;
            x[(j, i)] = v.conj();
        }
    }
}

/// Gain `k` with `a − b k` having a stabilizing spectrum shifted by `shift`:
/// `k = bᴴ x` with `x` the Riccati solution for `(a + shift I, b)` and unit
/// weights.
pub fn shifted_lqr(a: &CMat, b: &CMat, shift: f64) -> Result<CMat> {
    let n = a.nrows();
    let ashift = Mat::from_fn(n, n, |i, j| a[(i, j)] + if i == j { c64::new(shift, 0.0) } else { c64::new(0.0, 0.0) });
    let x = care(&ashift, b, &cidentity(n))?;
    Ok(b.adjoint() * &x)
}

/// Gain `k` such that `a − b k` has the eigenvalues `poles`, found from the
/// Sylvester equation `a x − x Λ = b g` and `k = g x⁻¹`. Conjugate poles
/// share a real seed column of `g`, so a conjugate-symmetric system gets a
/// conjugate-symmetric gain.
pub fn place(a: &CMat, b: &CMat, poles: &[c64]) -> Result<CMat> {
    let n = a.nrows();
    let m = b.ncols();
    if poles.len() != n {
        return Err(Error::Design("pole count does not match state dimension".into()));
    }
    let lam = Mat::from_fn(n, n, |i, j| if i == j { -poles[i] } else { c64::new(0.0, 0.0) });
    let partner: Vec<usize> = (0..n)
        .map(|j| {
            let c = poles[j].conj();
            (0..n).min_by(|&a, &b| (poles[a] - c).norm().total_cmp(&(poles[b] - c).norm())).unwrap_or(j)
        })
        .collect();
    let mut best: Option<(f64, CMat)> = None;
    for trial in 0..8 {
        let g = Mat::from_fn(m, n, |i, j| {
            let s = j.min(partner[j]);
            let t = ((i * 7 + s * 13 + trial * 29) % 17) as f64 / 17.0;
            c64::new(1.0 + t, 0.0)
        });
        let bg = b * &g;
        let x = sylvester_small(a, &lam, &bg);
        let sv = super::csingular_values(&x)?;
        let cond = match (sv.first(), sv.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        };
        if !cond.is_finite() || cond > 1e12 {
            continue;
        }
        // k = g x⁻¹  ⇔  xᵀ kᵀ = gᵀ
        let k = csolve(&x.transpose().to_owned(), &g.transpose().to_owned())
            .transpose()
            .to_owned();
        if best.as_ref().is_none_or(|(c, _)| cond < *c) {
            best = Some((cond, k));
        }
    }
    let (_, k) = best.ok_or_else(|| Error::Design("pole assignment: singular Sylvester solution".into()))?;
    let got = ceigenvalues(&(a - b * &k))?;
    if super::set_distance(&got, poles) > 1e-6 * poles.iter().map(|p| p.norm()).fold(1.0, f64::max) {
        return Err(Error::Design("pole assignment missed the target spectrum".into()));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::abscissa;

    #[test]
    fn scalar_riccati_closed_form() {
        // a x + x a − b² x² + 1 = 0  ⇒  x = (a + √(a² + b²)) / b²
        let (a0, b0) = (0.7, 1.3);
        let a = Mat::from_fn(1, 1, |_, _| c64::new(a0, 0.0));
        let b = Mat::from_fn(1, 1, |_, _| c64::new(b0, 0.0));
        let x = care(&a, &b, &cidentity(1)).unwrap();
        let want = (a0 + (a0 * a0 + b0 * b0).sqrt()) / (b0 * b0);
        assert!((x[(0, 0)].re - want).abs() < 1e-12);
    }

    #[test]
    fn shifted_lqr_meets_rate() {
        let a = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                c64::new(0.2 * i as f64, if i == 1 { 0.8 } else { 0.0 })
            } else if j == i + 1 {
                c64::new(0.5, 0.1)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let b = Mat::from_fn(3, 2, |i, j| c64::new(1.0 + (i + j) as f64 * 0.3, 0.0));
        for gamma in [0.5, 1.0, 3.0] {
            let k = shifted_lqr(&a, &b, gamma).unwrap();
            let eig = ceigenvalues(&(&a - &b * &k)).unwrap();
            assert!(abscissa(&eig) <= -gamma + 1e-9);
        }
    }

    #[test]
    fn place_assigns_poles() {
        let a = Mat::from_fn(2, 2, |i, j| c64::new(if i == j { 0.3 + i as f64 } else { 0.2 }, 0.0));
        let b = Mat::from_fn(2, 1, |i, _| c64::new(1.0, i as f64 * 0.5));
        let poles = [c64::new(-1.0, 0.0), c64::new(-1.5, 0.0)];
        let k = place(&a, &b, &poles).unwrap();
        let eig = ceigenvalues(&(&a - &b * &k)).unwrap();
        assert!(crate::linalg::set_distance(&eig, &poles) < 1e-8);
    }
}
