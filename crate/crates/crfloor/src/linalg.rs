//! Fraction-free exact elimination over the integers.
//!
//! Every routine first runs in `i64`, retries in `i128` on overflow and
//! finally falls back to `BigInt`, so results are always exact.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Integer ring with overflow-aware operations.
pub trait Exact: Clone + PartialEq + std::fmt::Debug {
    fn x_zero() -> Self;
    fn x_one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_i128(v: i128) -> Option<Self>;
    fn x_mul(&self, o: &Self) -> Option<Self>;
    fn x_add(&self, o: &Self) -> Option<Self>;
    fn x_sub(&self, o: &Self) -> Option<Self>;
    /// Exact division; `None` on overflow or a nonzero remainder.
    fn x_div(&self, o: &Self) -> Option<Self>;
    fn x_neg(&self) -> Option<Self>;
    fn x_is_zero(&self) -> bool;
    fn x_signum(&self) -> i32;
    fn x_big(&self) -> BigInt;
}

macro_rules! exact_prim {
    ($t:ty) => {
        impl Exact for $t {
            fn x_zero() -> Self {
                0
            }
            fn x_one() -> Self {
                1
            }
            fn from_i64(v: i64) -> Self {
                v as $t
            }
            fn from_i128(v: i128) -> Option<Self> {
                <$t>::try_from(v).ok()
            }
            fn x_mul(&self, o: &Self) -> Option<Self> {
                self.checked_mul(*o)
            }
            fn x_add(&self, o: &Self) -> Option<Self> {
                self.checked_add(*o)
            }
            fn x_sub(&self, o: &Self) -> Option<Self> {
                self.checked_sub(*o)
            }
            fn x_div(&self, o: &Self) -> Option<Self> {
                if *o == 0 || self.checked_rem(*o)? != 0 {
                    return None;
                }
                self.checked_div(*o)
            }
            fn x_neg(&self) -> Option<Self> {
                self.checked_neg()
            }
            fn x_is_zero(&self) -> bool {
                *self == 0
            }
            fn x_signum(&self) -> i32 {
                <$t>::signum(*self) as i32
            }
            fn x_big(&self) -> BigInt {
                BigInt::from(*self)
            }
        }
    };
}

exact_prim!(i64);
exact_prim!(i128);

impl Exact for BigInt {
    fn x_zero() -> Self {
        Zero::zero()
    }
    fn x_one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn from_i128(v: i128) -> Option<Self> {
        Some(BigInt::from(v))
    }
    fn x_mul(&self, o: &Self) -> Option<Self> {
        Some(self * o)
    }
    fn x_add(&self, o: &Self) -> Option<Self> {
        Some(self + o)
    }
    fn x_sub(&self, o: &Self) -> Option<Self> {
        Some(self - o)
    }
    fn x_div(&self, o: &Self) -> Option<Self> {
        if Zero::is_zero(o) {
            return None;
        }
        let (q, r) = num_integer::Integer::div_rem(self, o);
        Zero::is_zero(&r).then_some(q)
    }
    fn x_neg(&self) -> Option<Self> {
        Some(-self)
    }
    fn x_is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn x_signum(&self) -> i32 {
        if self.is_positive() {
            1
        } else if self.is_negative() {
            -1
        } else {
            0
        }
    }
    fn x_big(&self) -> BigInt {
        self.clone()
    }
}

/// Bareiss elimination on `a` (n rows, at least n columns). Returns the
/// signed determinant of the leading n x n block and leaves `a` upper
/// triangular. `None` signals arithmetic overflow.
fn bareiss<T: Exact>(a: &mut [Vec<T>], n: usize) -> Option<T> {
    let mut sign_neg = false;
    let mut prev = T::x_one();
    for k in 0..n {
        if a[k][k].x_is_zero() {
            let swap = (k + 1..n).find(|&r| !a[r][k].x_is_zero());
            match swap {
                Some(r) => {
                    a.swap(k, r);
                    sign_neg = !sign_neg;
                }
                None => return Some(T::x_zero()),
            }
        }
        let cols = a[k].len();
        for i in k + 1..n {
            for j in k + 1..cols {
                let v = a[i][j].x_mul(&a[k][k])?.x_sub(&a[i][k].x_mul(&a[k][j])?)?;
                a[i][j] = v.x_div(&prev)?;
            }
            a[i][k] = T::x_zero();
        }
        prev = a[k][k].clone();
    }
    let det = a[n - 1][n - 1].clone();
    if sign_neg {
        det.x_neg()
    } else {
        Some(det)
    }
}

fn det_in<T: Exact>(m: &[Vec<i64>]) -> Option<T> {
    let n = m.len();
    if n == 0 {
        return Some(T::x_one());
    }
    let mut a: Vec<Vec<T>> = m
        .iter()
        .map(|r| r.iter().map(|&v| T::from_i64(v)).collect())
        .collect();
    bareiss(&mut a, n)
}

/// Exact determinant of a square integer matrix.
pub fn det(m: &[Vec<i64>]) -> BigInt {
    assert!(m.iter().all(|r| r.len() == m.len()), "det needs a square matrix");
    if let Some(d) = det_in::<i64>(m) {
        return BigInt::from(d);
    }
    if let Some(d) = det_in::<i128>(m) {
        return BigInt::from(d);
    }
    det_in::<BigInt>(m).expect("bigint elimination cannot overflow")
}

/// Cramer numerators of `m x = rhs`: `x = y / det`.
#[derive(Clone, Debug, PartialEq)]
pub struct Solved<T> {
    pub det: T,
    pub y: Vec<T>,
}

/// Solve `m x = rhs` fraction-free inside ring `T`. Returns `Some(None)` for a
/// singular system and `None` on overflow.
pub fn solve_in<T: Exact>(m: &[Vec<i64>], rhs: &[i128]) -> Option<Option<Solved<T>>> {
    let rhs = rhs.iter().map(|&b| T::from_i128(b)).collect::<Option<Vec<T>>>()?;
    solve_with(m, rhs)
}

fn solve_with<T: Exact>(m: &[Vec<i64>], rhs: Vec<T>) -> Option<Option<Solved<T>>> {
    let n = m.len();
    if n == 0 {
        return Some(Some(Solved { det: T::x_one(), y: vec![] }));
    }
    let mut a: Vec<Vec<T>> = Vec::with_capacity(n);
    for (r, b) in m.iter().zip(rhs) {
        let mut row: Vec<T> = r.iter().map(|&v| T::from_i64(v)).collect();
        row.push(b);
        a.push(row);
    }
    let d = bareiss(&mut a, n)?;
    if d.x_is_zero() {
        return Some(None);
    }
    // After elimination a[n-1][n-1] == ±det; the sign was folded into `d`.
    let mut y = vec![T::x_zero(); n];
    for k in (0..n).rev() {
        let mut acc = d.x_mul(&a[k][n])?;
        for j in k + 1..n {
            acc = acc.x_sub(&a[k][j].x_mul(&y[j])?)?;
        }
        y[k] = acc.x_div(&a[k][k])?;
    }
    Some(Some(Solved { det: d, y }))
}

/// Exact solve with automatic widening. `None` if singular.
pub fn solve(m: &[Vec<i64>], rhs: &[i128]) -> Option<Solved<BigInt>> {
    if let Some(r) = solve_in::<i64>(m, rhs) {
        return r.map(widen);
    }
    if let Some(r) = solve_in::<i128>(m, rhs) {
        return r.map(widen);
    }
    solve_in::<BigInt>(m, rhs).expect("bigint elimination cannot overflow")
}

/// As [`solve`] for right-hand sides that may not fit in `i128`.
pub fn solve_wide(m: &[Vec<i64>], rhs: &[BigInt]) -> Option<Solved<BigInt>> {
    if let Some(small) = rhs.iter().map(ToPrimitive::to_i128).collect::<Option<Vec<i128>>>() {
        return solve(m, &small);
    }
    solve_with::<BigInt>(m, rhs.to_vec()).expect("bigint elimination cannot overflow")
}

fn widen<T: Exact>(s: Solved<T>) -> Solved<BigInt> {
    Solved {
        det: s.det.x_big(),
        y: s.y.iter().map(Exact::x_big).collect(),
    }
}

/// Rank of an integer matrix.
pub fn rank(m: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<BigInt>> = m
        .iter()
        .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let (f, g) = (a[r][c].clone(), a[i][c].clone());
                for j in 0..cols {
                    a[i][j] = &a[i][j] * &f - &a[r][j] * &g;
                }
            }
        }
        r += 1;
        if r == rows {
            break;
        }
    }
    r
}

/// Integer generator of the kernel of an `r x (r+1)` matrix of full row
/// rank: the signed maximal minors. `None` when the rank is deficient.
pub fn kernel_vector(m: &[Vec<i64>]) -> Option<Vec<BigInt>> {
    let r = m.len();
    let c = r + 1;
    assert!(m.iter().all(|row| row.len() == c));
    let mut k = Vec::with_capacity(c);
    for j in 0..c {
        let minor: Vec<Vec<i64>> = m
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != j)
                    .map(|(_, v)| *v)
                    .collect()
            })
            .collect();
        let d = det(&minor);
        k.push(if j % 2 == 0 { d } else { -d });
    }
    if k.iter().all(Zero::is_zero) {
        None
    } else {
        let g = k.iter().fold(BigInt::zero(), |g, v| num_integer::Integer::gcd(&g, v));
        Some(k.into_iter().map(|v| v / &g).collect())
    }
}

/// Lossless narrowing used by callers that keep small numerators.
pub fn big_to_i128(v: &BigInt) -> Option<i128> {
    v.to_i128()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_det(m: &[Vec<i64>]) -> i128 {
        let n = m.len();
        if n == 0 {
            return 1;
        }
        let mut total = 0i128;
        for j in 0..n {
            let minor: Vec<Vec<i64>> = m[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect())
                .collect();
            let s = if j % 2 == 0 { 1 } else { -1 };
            total += s * m[0][j] as i128 * naive_det(&minor);
        }
        total
    }

    #[test]
    fn det_small() {
        assert_eq!(det(&[vec![2, 1], vec![1, 1]]), BigInt::from(1));
        assert_eq!(det(&[vec![0, 1], vec![1, 0]]), BigInt::from(-1));
        assert_eq!(det(&[vec![1, 2], vec![2, 4]]), BigInt::from(0));
        assert_eq!(det(&[]), BigInt::from(1));
    }

    #[test]
    fn det_overflow_falls_back() {
        let big = 3_000_000_000i64;
        let m = vec![vec![big, 1, 0], vec![0, big, 1], vec![1, 0, big]];
        let expect = BigInt::from(big).pow(3) + BigInt::from(1);
        assert_eq!(det(&m), expect);
    }

    #[test]
    fn solve_matches_cramer() {
        let m = vec![vec![2, 1, 0], vec![1, 3, 1], vec![0, 1, 4]];
        let s = solve(&m, &[1, 2, 3]).unwrap();
        for (row, b) in m.iter().zip([1i64, 2, 3]) {
            let lhs: BigInt = row.iter().zip(&s.y).map(|(a, y)| BigInt::from(*a) * y).sum();
            assert_eq!(lhs, BigInt::from(b) * &s.det);
        }
        assert!(solve(&[vec![1, 1], vec![2, 2]], &[1, 2]).is_none());
    }

    #[test]
    fn kernel_of_wide_matrix() {
        let m = vec![vec![1, 0, -1], vec![0, 1, -1]];
        let k = kernel_vector(&m).unwrap();
        for row in &m {
            let dot: BigInt = row.iter().zip(&k).map(|(a, b)| BigInt::from(*a) * b).sum();
            assert!(dot.is_zero());
        }
        assert_eq!(rank(&m), 2);
        assert_eq!(rank(&[vec![1, 2], vec![2, 4]]), 1);
    }

    proptest::proptest! {
        #[test]
        fn det_agrees_with_expansion(v in proptest::collection::vec(-4i64..5, 25)) {
            let m: Vec<Vec<i64>> = v.chunks(5).map(<[i64]>::to_vec).collect();
            proptest::prop_assert_eq!(det(&m), BigInt::from(naive_det(&m)));
        }

        #[test]
        fn solve_satisfies_system(v in proptest::collection::vec(-3i64..4, 16), b in proptest::collection::vec(-1000i128..1000, 4)) {
            let m: Vec<Vec<i64>> = v.chunks(4).map(<[i64]>::to_vec).collect();
            match solve(&m, &b) {
                None => proptest::prop_assert_eq!(naive_det(&m), 0),
                Some(s) => {
                    proptest::prop_assert_eq!(s.det.clone(), BigInt::from(naive_det(&m)));
                    for (row, bi) in m.iter().zip(&b) {
                        let lhs: BigInt = row.iter().zip(&s.y).map(|(a, y)| BigInt::from(*a) * y).sum();
                        proptest::prop_assert_eq!(lhs, BigInt::from(*bi) * &s.det);
                    }
                }
            }
        }
    }
}
