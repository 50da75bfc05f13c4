//! Dense multiprecision linear algebra: complex LU, Hermitian Cholesky with
//! diagonal pre-scaling, and weighted real least squares via Householder QR.

use rug::{Complex, Float};

use crate::mp::{abs2, cabs};
use crate::{Error, Result};

/// Row-major complex matrix.
#[derive(Clone, Debug)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize, prec: u32) -> Self {
        CMat { rows, cols, data: vec![Complex::new(prec); rows * cols] }
    }

    pub fn identity(n: usize, prec: u32) -> Self {
        let mut m = Self::zeros(n, n, prec);
        for i in 0..n {
            m.data[i * n + i] = Complex::with_val(prec, 1);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let data: Vec<Complex> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), r * c);
        CMat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &Complex {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex {
        &mut self.data[i * self.cols + j]
    }

    pub fn prec(&self) -> u32 {
        self.data.first().map_or(64, |z| z.prec().0)
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows);
        let prec = self.prec();
        let mut out = CMat::zeros(self.rows, other.cols, prec);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Complex::new(prec);
                for k in 0..self.cols {
                    acc += Complex::with_val(prec, self.at(i, k) * other.at(k, j));
                }
                *out.at_mut(i, j) = acc;
            }
        }
        out
    }

    pub fn max_abs(&self) -> Float {
        let prec = self.prec();
        self.data.iter().fold(Float::new(prec), |m, z| {
            let a = cabs(z);
            if a > m {
                a
            } else {
                m
            }
        })
    }

    /// Largest |a_ij - conj(a_ji)| relative to the largest entry.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs().to_f64().max(f64::MIN_POSITIVE);
        let mut worst = 0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = Complex::with_val(self.prec(), self.at(i, j) - self.at(j, i).clone().conj());
                worst = worst.max(cabs(&d).to_f64() / scale);
            }
        }
        worst
    }
}

/// LU factorisation with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    pub lu: CMat,
    pub perm: Vec<usize>,
    pub sign: i32,
}

pub fn lu(a: &CMat) -> Result<Lu> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let prec = a.prec();
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1;
    for k in 0..n {
        let mut best = k;
        let mut best_abs = abs2(m.at(k, k));
        for i in k + 1..n {
            let v = abs2(m.at(i, k));
            if v > best_abs {
                best = i;
                best_abs = v;
            }
        }
        if best_abs.is_zero() {
            return Err(Error::Numerical(format!("singular matrix at column {k}")));
        }
        if best != k {
            for j in 0..n {
                m.data.swap(k * n + j, best * n + j);
            }
            perm.swap(k, best);
            sign = -sign;
        }
        let pivot = m.at(k, k).clone();
        for i in k + 1..n {
            let f = Complex::with_val(prec, m.at(i, k) / &pivot);
            for j in k + 1..n {
                let t = Complex::with_val(prec, &f * m.at(k, j));
                *m.at_mut(i, j) -= t;
            }
            *m.at_mut(i, k) = f;
        }
    }
    Ok(Lu { lu: m, perm, sign })
}

impl Lu {
    pub fn det(&self) -> Complex {
        let n = self.lu.rows;
        let prec = self.lu.prec();
        let mut d = Complex::with_val(prec, self.sign);
        for i in 0..n {
            d *= self.lu.at(i, i);
        }
        d
    }

    /// log |det| computed as a sum of logs, immune to over/underflow.
    pub fn log_abs_det(&self) -> Float {
        let n = self.lu.rows;
        let prec = self.lu.prec();
        let mut s = Float::new(prec);
        for i in 0..n {
            s += cabs(self.lu.at(i, i)).ln();
        }
        s
    }

    /// log10 of max|u_ii| / min|u_ii|, a cheap conditioning proxy.
    pub fn pivot_spread_log10(&self) -> f64 {
        let n = self.lu.rows;
        let logs: Vec<f64> = (0..n).map(|i| cabs(self.lu.at(i, i)).log10().to_f64()).collect();
        let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = logs.iter().cloned().fold(f64::INFINITY, f64::min);
        mx - mn
    }

    /// Solve A X = B.
    pub fn solve(&self, b: &CMat) -> CMat {
        let n = self.lu.rows;
        let prec = self.lu.prec();
        let mut x = CMat::zeros(n, b.cols, prec);
        for c in 0..b.cols {
            let mut y: Vec<Complex> = (0..n).map(|i| b.at(self.perm[i], c).clone()).collect();
            for i in 0..n {
                for k in 0..i {
                    let t = Complex::with_val(prec, self.lu.at(i, k) * &y[k]);
                    y[i] -= t;
                }
            }
            for i in (0..n).rev() {
                for k in i + 1..n {
                    let t = Complex::with_val(prec, self.lu.at(i, k) * &y[k]);
                    y[i] -= t;
                }
                y[i] /= self.lu.at(i, i);
            }
            for (i, v) in y.into_iter().enumerate() {
                *x.at_mut(i, c) = v;
            }
        }
        x
    }
}

/// Determinant by the Leibniz permutation sum; intended for n ≤ 6.
pub fn det_leibniz(a: &CMat) -> Complex {
    let n = a.rows;
    let prec = a.prec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = Complex::new(prec);
    permute_all(&mut perm, 0, &mut |p| {
        let mut term = Complex::with_val(prec, perm_sign(p));
        for (i, &pi) in p.iter().enumerate() {
            term *= a.at(pi, i);
        }
        total += term;
    });
    total
}

fn permute_all(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute_all(p, k + 1, f);
        p.swap(k, i);
    }
}

pub fn perm_sign(p: &[usize]) -> i32 {
    let mut s = 1;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

/// Result of a pre-scaled Hermitian Cholesky log-determinant.
#[derive(Clone, Debug)]
pub struct CholLogDet {
    pub logdet: Float,
    /// Σ log h_ii, the part removed by diagonal pre-scaling.
    pub log_diag: Float,
    /// log10 of the spread of squared Cholesky pivots of the scaled matrix.
    pub loss_digits: f64,
}

/// log det of a Hermitian positive-definite matrix. The matrix is first
/// scaled to unit diagonal (`D H D` with `D = diag(h_ii^{-1/2})`), then
/// factored; `log det H = Σ log h_ii + log det(D H D)`.
pub fn cholesky_logdet(h: &CMat) -> Result<CholLogDet> {
    assert_eq!(h.rows, h.cols);
    let n = h.rows;
    let prec = h.prec();
    let mut d = Vec::with_capacity(n);
    let mut log_diag = Float::new(prec);
    for i in 0..n {
        let hii = h.at(i, i).real().clone();
        if hii <= 0 {
            return Err(Error::Numerical(format!("non-positive diagonal entry {i}")));
        }
        log_diag += Float::with_val(prec, hii.ln_ref());
        d.push(Float::with_val(prec, hii.recip_sqrt_ref()));
    }
    let mut s = CMat::zeros(n, n, prec);
    for i in 0..n {
        for j in 0..n {
            *s.at_mut(i, j) = Complex::with_val(prec, h.at(i, j) * &d[i]) * &d[j];
        }
    }
    let mut l = CMat::zeros(n, n, prec);
    let mut logdet_s = Float::new(prec);
    let mut piv_min = f64::INFINITY;
    let mut piv_max = f64::NEG_INFINITY;
    for j in 0..n {
        let mut diag = s.at(j, j).real().clone();
        for k in 0..j {
            diag -= abs2(l.at(j, k));
        }
        if diag <= 0 {
            return Err(Error::Numerical(format!(
                "Cholesky breakdown at pivot {j}: matrix not numerically positive definite"
            )));
        }
        let lg = Float::with_val(prec, diag.log10_ref()).to_f64();
        piv_min = piv_min.min(lg);
        piv_max = piv_max.max(lg);
        logdet_s += Float::with_val(prec, diag.ln_ref());
        let ljj = diag.sqrt();
        *l.at_mut(j, j) = Complex::with_val(prec, &ljj);
        for i in j + 1..n {
            let mut v = s.at(i, j).clone();
            for k in 0..j {
                let t = Complex::with_val(prec, l.at(i, k) * l.at(j, k).clone().conj());
                v -= t;
            }
            *l.at_mut(i, j) = v / &ljj;
        }
    }
    Ok(CholLogDet { logdet: Float::with_val(prec, &log_diag + &logdet_s), log_diag, loss_digits: piv_max - piv_min })
}

/// Dense real matrix, row-major.
#[derive(Clone, Debug)]
pub struct RMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Float>,
}

impl RMat {
    pub fn zeros(rows: usize, cols: usize, prec: u32) -> Self {
        RMat { rows, cols, data: vec![Float::new(prec); rows * cols] }
    }
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &Float {
        &self.data[i * self.cols + j]
    }
    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Float {
        &mut self.data[i * self.cols + j]
    }
}

/// Weighted least-squares solution with diagnostics.
#[derive(Clone, Debug)]
pub struct LsSolution {
    pub coef: Vec<Float>,
    /// sqrt of the diagonal of (AᵀWA)^{-1}: sensitivity per unit input error.
    pub sensitivity: Vec<Float>,
    /// Weighted residual 2-norm.
    pub residual: Float,
    /// Condition number of the column-equilibrated design.
    pub condition: f64,
}

/// Minimise Σ w_i (A x - b)_i² by Householder QR on column-equilibrated
/// `sqrt(W) A`.
pub fn weighted_least_squares(a: &RMat, b: &[Float], w: &[Float]) -> Result<LsSolution> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(Error::Numerical(format!("underdetermined system {m}x{n}")));
    }
    let prec = b[0].prec();
    let sw: Vec<Float> = w.iter().map(|x| Float::with_val(prec, x.sqrt_ref())).collect();
    let mut q = RMat::zeros(m, n, prec);
    let mut rhs: Vec<Float> = (0..m).map(|i| Float::with_val(prec, &b[i] * &sw[i])).collect();
    for i in 0..m {
        for j in 0..n {
            *q.at_mut(i, j) = Float::with_val(prec, a.at(i, j) * &sw[i]);
        }
    }
    // column equilibration
    let mut colscale = Vec::with_capacity(n);
    for j in 0..n {
        let mut s = Float::new(prec);
        for i in 0..m {
            s += Float::with_val(prec, q.at(i, j).square_ref());
        }
        let s = s.sqrt();
        if s.is_zero() {
            return Err(Error::Numerical(format!("design column {j} is identically zero")));
        }
        for i in 0..m {
            *q.at_mut(i, j) /= &s;
        }
        colscale.push(s);
    }
    let rhs_orig = rhs.clone();
    let q_orig = q.clone();
    // Householder
    for k in 0..n {
        let mut norm = Float::new(prec);
        for i in k..m {
            norm += Float::with_val(prec, q.at(i, k).square_ref());
        }
        let norm = norm.sqrt();
        if norm.is_zero() {
            return Err(Error::Numerical("rank-deficient design matrix".into()));
        }
        let alpha = if q.at(k, k).is_sign_negative() { norm.clone() } else { -norm.clone() };
        let mut v: Vec<Float> = (k..m).map(|i| q.at(i, k).clone()).collect();
        v[0] -= &alpha;
        let mut vnorm2 = Float::new(prec);
        for x in &v {
            vnorm2 += Float::with_val(prec, x.square_ref());
        }
        if vnorm2.is_zero() {
            continue;
        }
        for j in k..n {
            let mut dot = Float::new(prec);
            for (ii, vi) in v.iter().enumerate() {
                dot += Float::with_val(prec, vi * q.at(k + ii, j));
            }
            let f = Float::with_val(prec, &dot * 2u32) / &vnorm2;
            for (ii, vi) in v.iter().enumerate() {
                *q.at_mut(k + ii, j) -= Float::with_val(prec, vi * &f);
            }
        }
        let mut dot = Float::new(prec);
        for (ii, vi) in v.iter().enumerate() {
            dot += Float::with_val(prec, vi * &rhs[k + ii]);
        }
        let f = Float::with_val(prec, &dot * 2u32) / &vnorm2;
        for (ii, vi) in v.iter().enumerate() {
            rhs[k + ii] -= Float::with_val(prec, vi * &f);
        }
    }
    // back substitution
    let mut y = vec![Float::new(prec); n];
    for i in (0..n).rev() {
        let mut s = rhs[i].clone();
        for j in i + 1..n {
            s -= Float::with_val(prec, q.at(i, j) * &y[j]);
        }
        if q.at(i, i).is_zero() {
            return Err(Error::Numerical("rank-deficient design matrix".into()));
        }
        y[i] = s / q.at(i, i);
    }
    // R^{-1} for covariance and conditioning
    let mut rinv = RMat::zeros(n, n, prec);
    for col in 0..n {
        for i in (0..=col).rev() {
            let mut s = if i == col { Float::with_val(prec, 1) } else { Float::new(prec) };
            for j in i + 1..=col {
                s -= Float::with_val(prec, q.at(i, j) * rinv.at(j, col));
            }
            *rinv.at_mut(i, col) = s / q.at(i, i);
        }
    }
    let mut rf = Float::new(prec);
    let mut rif = Float::new(prec);
    for i in 0..n {
        for j in i..n {
            rf += Float::with_val(prec, q.at(i, j).square_ref());
            rif += Float::with_val(prec, rinv.at(i, j).square_ref());
        }
    }
    let condition = Float::with_val(prec, rf.sqrt() * rif.sqrt()).to_f64();
    let coef: Vec<Float> = (0..n).map(|j| Float::with_val(prec, &y[j] / &colscale[j])).collect();
    let sensitivity: Vec<Float> = (0..n)
        .map(|i| {
            let mut s = Float::new(prec);
            for j in i..n {
                s += Float::with_val(prec, rinv.at(i, j).square_ref());
            }
            s.sqrt() / &colscale[i]
        })
        .collect();
    let mut res = Float::new(prec);
    for i in 0..m {
        let mut r = rhs_orig[i].clone();
        for j in 0..n {
            r -= Float::with_val(prec, q_orig.at(i, j) * &y[j]);
        }
        res += r.square();
    }
    Ok(LsSolution { coef, sensitivity, residual: res.sqrt(), condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp::cx;

    #[test]
    fn lu_matches_leibniz() {
        let prec = 128;
        let rows: Vec<Vec<Complex>> = (0..5)
            .map(|i| (0..5).map(|j| cx(prec, ((i * 7 + j * 3) % 11) as f64 - 4.0, ((i + 2 * j) % 5) as f64)).collect())
            .collect();
        let a = CMat::from_rows(rows);
        let d1 = lu(&a).unwrap().det();
        let d2 = det_leibniz(&a);
        let diff = Complex::with_val(prec, &d1 - &d2);
        assert!(cabs(&diff).to_f64() < 1e-25 * cabs(&d2).to_f64().max(1.0));
    }

    #[test]
    fn cholesky_identity_is_zero() {
        let c = cholesky_logdet(&CMat::identity(4, 100)).unwrap();
        assert!(c.logdet.is_zero());
    }

    #[test]
    fn ls_recovers_line() {
        let prec = 128;
        let mut a = RMat::zeros(6, 2, prec);
        let mut b = Vec::new();
        for i in 0..6 {
            *a.at_mut(i, 0) = Float::with_val(prec, 1);
            *a.at_mut(i, 1) = Float::with_val(prec, i as u32);
            b.push(Float::with_val(prec, 3 + 2 * i as u32));
        }
        let w = vec![Float::with_val(prec, 1); 6];
        let s = weighted_least_squares(&a, &b, &w).unwrap();
        assert!((s.coef[0].to_f64() - 3.0).abs() < 1e-30);
        assert!((s.coef[1].to_f64() - 2.0).abs() < 1e-30);
        assert!(s.residual.to_f64() < 1e-30);
    }
}
