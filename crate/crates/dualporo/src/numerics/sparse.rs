//! Minimal CSR matrix plus the two Krylov solvers the toolkit needs:
//! Jacobi-preconditioned CG for the SPD pressure/cell systems and BiCGStab
//! for the nonsymmetric saturation Jacobians. Everything is sequential and
//! deterministic so repeated runs are bit-identical.

use crate::error::{Error, Result};

/// Coordinate-format builder; duplicate entries are summed on compression.
#[derive(Debug, Default)]
pub struct CooBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n: usize) -> Self {
        CooBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(mut self) -> Csr {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut counts = vec![0usize; self.n];
        for &(r, _, _) in &self.entries {
            counts[r] += 1;
        }
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut idx = 0usize;
        for r in 0..self.n {
            let mut last_col = usize::MAX;
            for _ in 0..counts[r] {
                let (_, c, v) = self.entries[idx];
                idx += 1;
                if c == last_col {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last_col = c;
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        Csr {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[k] == r {
                    d[r] = self.vals[k];
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients. `rel_tol` is on the
/// unpreconditioned residual norm relative to the right-hand side.
pub fn solve_cg(a: &Csr, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.n;
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if norm(&r) / b_norm <= rel_tol {
            return Ok(norm(&r) / b_norm);
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::solver(
                "CG: matrix not positive definite on the active space".to_string(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm(&r) / b_norm;
    if rel <= rel_tol {
        Ok(rel)
    } else {
        Err(Error::solver(format!(
            "CG did not converge: relative residual {rel:.3e} after {max_iter} iterations"
        )))
    }
}

/// Jacobi-preconditioned BiCGStab for nonsymmetric systems.
pub fn solve_bicgstab(
    a: &Csr,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n = a.n;
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        if norm(&r) / b_norm <= rel_tol {
            return Ok(norm(&r) / b_norm);
        }
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::solver("BiCGStab breakdown (rho = 0)".to_string()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            phat[i] = p[i] * inv_diag[i];
        }
        a.matvec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if norm(&s) / b_norm <= rel_tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(norm(&s) / b_norm);
        }
        for i in 0..n {
            shat[i] = s[i] * inv_diag[i];
        }
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            return Err(Error::solver("BiCGStab breakdown (t = 0)".to_string()));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega.abs() < 1e-300 {
            return Err(Error::solver("BiCGStab breakdown (omega = 0)".to_string()));
        }
    }
    let rel = norm(&r) / b_norm;
    if rel <= rel_tol {
        Ok(rel)
    } else {
        Err(Error::solver(format!(
            "BiCGStab did not converge: relative residual {rel:.3e} after {max_iter} iterations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut coo = CooBuilder::new(n);
        for i in 0..n {
            coo.add(i, i, 2.0);
            if i > 0 {
                coo.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                coo.add(i, i + 1, -1.0);
            }
        }
        coo.build()
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let a = laplacian_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; n];
        solve_cg(&a, &b, &mut x, 1e-12, 10 * n).unwrap();
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        let resid: f64 = ax
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-10);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 40;
        let mut coo = CooBuilder::new(n);
        for i in 0..n {
            coo.add(i, i, 3.0);
            if i > 0 {
                coo.add(i, i - 1, -1.5);
            }
            if i + 1 < n {
                coo.add(i, i + 1, -0.5);
            }
        }
        let a = coo.build();
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        solve_bicgstab(&a, &b, &mut x, 1e-13, 20 * n).unwrap();
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicate_coo_entries_are_summed() {
        let mut coo = CooBuilder::new(2);
        coo.add(0, 0, 1.0);
        coo.add(0, 0, 2.5);
        coo.add(1, 1, 1.0);
        let a = coo.build();
        assert_eq!(a.diagonal(), vec![3.5, 1.0]);
    }
}
