//! Banded LU with partial pivoting.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `r` stores columns `r − kl ..= r + kl + ku`; the extra `kl` columns
/// absorb fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let off = c as isize - r as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width).then(|| r * self.width + off as usize)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c >= self.n {
            return 0.0;
        }
        self.slot(r, c).map_or(0.0, |i| self.data[i])
    }

    /// Set an entry inside the declared band.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let inside = c < self.n && c + self.kl >= r && c <= r + self.ku;
        assert!(inside, "entry ({r},{c}) outside the band");
        let i = self.slot(r, c).expect("inside band");
        self.data[i] = v;
    }

    fn cols(&self, r: usize) -> std::ops::Range<usize> {
        r.saturating_sub(self.kl)..(r + self.kl + self.ku + 1).min(self.n)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.cols(r).map(|c| self.get(r, c) * x[c]).sum()).collect()
    }

    /// Max-norm of each row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.cols(r).map(|c| self.get(r, c).abs()).fold(0.0, f64::max))
            .collect()
    }

    pub fn scale_row(&mut self, r: usize, s: f64) {
        let w = self.width;
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v *= s;
        }
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|r| self.cols(r).map(|c| self.get(r, c).abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// In-place factorization `P A = L U`.
#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    pivots: Vec<usize>,
    /// `max |u_ii| / min |u_ii|`, a cheap conditioning indicator.
    pub pivot_ratio: f64,
}

fn swap_rows(m: &mut BandMatrix, a: usize, b: usize, from: usize) {
    let to = (a.max(b) + m.kl + m.ku + 1).min(m.n);
    for c in from..to {
        let (va, vb) = (m.get(a, c), m.get(b, c));
        let (ia, ib) = (m.slot(a, c), m.slot(b, c));
        match (ia, ib) {
            (Some(ia), Some(ib)) => m.data.swap(ia, ib),
            (Some(ia), None) => {
                debug_assert_eq!(vb, 0.0);
                m.data[ia] = vb;
            }
            (None, Some(ib)) => {
                debug_assert_eq!(va, 0.0);
                m.data[ib] = va;
            }
            (None, None) => {}
        }
    }
}

impl BandLu {
    pub fn factor(mut a: BandMatrix) -> Result<Self> {
        let n = a.n;
        let mut pivots = Vec::with_capacity(n);
        let (mut pmax, mut pmin) = (0.0f64, f64::INFINITY);
        for c in 0..n {
            let last = (c + a.kl).min(n - 1);
            let p = (c..=last)
                .max_by(|&i, &j| a.get(i, c).abs().total_cmp(&a.get(j, c).abs()))
                .expect("nonempty range");
            if p != c {
                swap_rows(&mut a, p, c, c);
            }
            pivots.push(p);
            let d = a.get(c, c);
            pmax = pmax.max(d.abs());
            pmin = pmin.min(d.abs());
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Solver { reason: format!("zero pivot in column {c}"), condition: f64::INFINITY });
            }
            let right = (c + a.kl + a.ku + 1).min(n);
            for r in c + 1..=last {
                let f = a.get(r, c) / d;
                if f == 0.0 {
                    continue;
                }
                let i = a.slot(r, c).expect("in band");
                a.data[i] = f;
                for cc in c + 1..right {
                    let u = a.get(c, cc);
                    if u != 0.0 {
                        let j = a.slot(r, cc).expect("fill stays within the widened band");
                        a.data[j] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu: a, pivots, pivot_ratio: pmax / pmin })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.n;
        let mut x = b.to_vec();
        for c in 0..n {
            x.swap(c, self.pivots[c]);
            let last = (c + a.kl).min(n - 1);
            for r in c + 1..=last {
                x[r] -= a.get(r, c) * x[c];
            }
        }
        for c in (0..n).rev() {
            let right = (c + a.kl + a.ku + 1).min(n);
            let s: f64 = (c + 1..right).map(|cc| a.get(c, cc) * x[cc]).sum();
            x[c] = (x[c] - s) / a.get(c, c);
        }
        x
    }
}

/// Relative residual `‖Ax − b‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)`.
pub fn relative_residual(a: &BandMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = ax.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let denom = a.norm_inf() * xn + bn;
    if denom == 0.0 {
        0.0
    } else {
        r / denom
    }
}

/// Row-equilibrate, factor, solve with one refinement sweep.
pub fn solve_banded(mut a: BandMatrix, mut b: Vec<f64>) -> Result<(Vec<f64>, f64, f64)> {
    for (r, norm) in a.row_norms().into_iter().enumerate() {
        if norm == 0.0 {
            return Err(Error::Solver { reason: format!("row {r} is identically zero"), condition: f64::INFINITY });
        }
        a.scale_row(r, 1.0 / norm);
        b[r] /= norm;
    }
    let lu = BandLu::factor(a.clone())?;
    let mut x = lu.solve(&b);
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    for (xi, d) in x.iter_mut().zip(lu.solve(&r)) {
        *xi += d;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver { reason: "non-finite solution".into(), condition: lu.pivot_ratio });
    }
    let res = relative_residual(&a, &x, &b);
    Ok((x, res, lu.pivot_ratio))
}
