use num_complex::Complex64;
use std::ops::{Index, IndexMut};

/// Pivots smaller than this fraction of the largest row norm are treated as zero.
pub const SINGULAR_RELATIVE_PIVOT: f64 = 1e-14;

/// Dense row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.data.iter()
    }

    fn max_row_norm(&self) -> f64 {
        self.data.chunks(self.n.max(1)).map(|row| row.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.n + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.n + c]
    }
}

/// Gaussian elimination with partial pivoting. Returns `None` when a pivot
/// falls below [`SINGULAR_RELATIVE_PIVOT`] times the largest row norm.
pub fn lu_solve(mut a: ComplexMatrix, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = a.n;
    assert_eq!(b.len(), n, "rhs length must match matrix size");
    let threshold = SINGULAR_RELATIVE_PIVOT * a.max_row_norm();
    if n == 0 {
        return Some(b);
    }
    if !(threshold > 0.0) {
        return None;
    }

    for k in 0..n {
        let (p, pmag) =
            (k..n).map(|r| (r, a[(r, k)].norm())).fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmag >= threshold) {
            return None;
        }
        if p != k {
            for c in 0..n {
                a.data.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let pivot = a[(k, k)];
        for r in (k + 1)..n {
            let factor = a[(r, k)] / pivot;
            if factor.re == 0.0 && factor.im == 0.0 {
                continue;
            }
            a[(r, k)] = factor;
            for c in (k + 1)..n {
                let akc = a[(k, c)];
                a[(r, c)] -= factor * akc;
            }
            let bk = b[k];
            b[r] -= factor * bk;
        }
    }

    for k in (0..n).rev() {
        let mut acc = b[k];
        for c in (k + 1)..n {
            acc -= a[(k, c)] * b[c];
        }
        b[k] = acc / a[(k, k)];
    }
    if b.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Some(b)
    } else {
        None
    }
}
