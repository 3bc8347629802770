//! A full cycle `prepare → evolve → marginal` is linear in `P_m` and only
//! couples neighbouring bins, so it collapses to a tridiagonal stochastic
//! map. Long periodic schedules are further composed into a dense map and
//! advanced by repeated squaring.

use super::propagator::Propagator;

/// Column-stochastic tridiagonal map `P'_i = lo_i P_{i−1} + di_i P_i + hi_i P_{i+1}`.
#[derive(Debug, Clone)]
pub struct CycleMap {
    lo: Vec<f64>,
    di: Vec<f64>,
    hi: Vec<f64>,
}

impl CycleMap {
    /// `up_fraction[i]` is the share of `P_i` prepared in `|↑_m⟩`.
    pub fn new(prop: &Propagator, up_fraction: &[f64]) -> Self {
        let n = up_fraction.len();
        assert_eq!(n, prop.grid.len());
        let f = up_fraction;
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for i in 0..n {
            // p↑(i) sits in block i (or is a singleton at the top edge)
            di[i] += if i + 1 < n {
                let k = &prop.blocks[i];
                hi[i] = k.om * k.w * (1.0 - f[i + 1]);
                f[i] * (1.0 - k.om * k.wbar)
            } else {
                f[i]
            };
            // p↓(i) sits in block i−1 (or is a singleton at the bottom edge)
            di[i] += if i > 0 {
                let k = &prop.blocks[i - 1];
                lo[i] = k.om * k.wbar * f[i - 1];
                (1.0 - f[i]) * (1.0 - k.om * k.w)
            } else {
                1.0 - f[i]
            };
        }
        Self { lo, di, hi }
    }

    pub fn len(&self) -> usize {
        self.di.len()
    }

    pub fn is_empty(&self) -> bool {
        self.di.is_empty()
    }

    /// `out = T p`; returns `Σ out`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) -> f64 {
        let n = self.len();
        assert!(p.len() == n && out.len() == n);
        if n == 1 {
            out[0] = self.di[0] * p[0];
            return out[0];
        }
        out[0] = self.di[0] * p[0] + self.hi[0] * p[1];
        out[n - 1] = self.lo[n - 1] * p[n - 2] + self.di[n - 1] * p[n - 1];
        let coeffs = self.lo[1..n - 1].iter().zip(&self.di[1..n - 1]).zip(&self.hi[1..n - 1]);
        let inputs = p[..n - 2].iter().zip(&p[1..n - 1]).zip(&p[2..]);
        for (o, (((l, d), h), ((a, b), c))) in out[1..n - 1].iter_mut().zip(coeffs.zip(inputs)) {
            *o = l * a + d * b + h * c;
        }
        lane_sum(out)
    }

    /// `X ← T X` on a dense row-major matrix.
    pub fn left_multiply(&self, x: &mut DenseMap) {
        let n = self.len();
        assert_eq!(x.n, n);
        let mut prev = x.row(0).to_vec();
        let mut cur = vec![0.0; n];
        for i in 0..n {
            cur.copy_from_slice(x.row(i));
            let (lo, di, hi) = (self.lo[i], self.di[i], self.hi[i]);
            let next = if i + 1 < n { Some(x.row(i + 1).to_vec()) } else { None };
            let row = x.row_mut(i);
            for j in 0..n {
                let mut v = di * cur[j];
                if i > 0 {
                    v += lo * prev[j];
                }
                if let Some(nx) = &next {
                    v += hi * nx[j];
                }
                row[j] = v;
            }
            std::mem::swap(&mut prev, &mut cur);
        }
    }
}

/// Sum with eight independent accumulators (vectorizes; order is fixed).
fn lane_sum(xs: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = xs.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
        }
    }
    acc.iter().sum::<f64>() + rest.iter().sum::<f64>()
}

/// Dense row-major `n × n` map.
#[derive(Debug, Clone)]
pub struct DenseMap {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMap {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    /// `self · other`.
    pub fn mul(&self, other: &DenseMap) -> DenseMap {
        let n = self.n;
        assert_eq!(n, other.n);
        let mut out = vec![0.0; n * n];
        // SAFETY: all three buffers are n×n row-major with the given strides.
        unsafe {
            matrixmultiply::dgemm(
                n,
                n,
                n,
                1.0,
                self.data.as_ptr(),
                n as isize,
                1,
                other.data.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        DenseMap { n, data: out }
    }

    pub fn square(&self) -> DenseMap {
        self.mul(self)
    }

    /// Rescale every column to unit sum. Cycle maps conserve probability, so
    /// this only removes rounding drift accumulated by repeated squaring.
    pub fn normalize_columns(&mut self) {
        let n = self.n;
        let mut sums = vec![0.0; n];
        let mut comp = vec![0.0; n];
        for i in 0..n {
            for (j, &x) in self.row(i).iter().enumerate() {
                // Neumaier accumulation per column
                let t = sums[j] + x;
                comp[j] += if sums[j].abs() >= x.abs() { (sums[j] - t) + x } else { (x - t) + sums[j] };
                sums[j] = t;
            }
        }
        let scale: Vec<f64> = sums.iter().zip(&comp).map(|(s, c)| 1.0 / (s + c)).collect();
        for i in 0..n {
            self.row_mut(i).iter_mut().zip(&scale).for_each(|(x, k)| *x *= k);
        }
    }

    /// `self · v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| crate::numeric::neumaier_sum(self.row(i).iter().zip(v).map(|(a, b)| a * b))).collect()
    }
}
