//! Small dense kernels for 4×4 generators: a scalar abstraction shared by
//! real, complex and jet arithmetic, Leverrier–Faddeev characteristic
//! polynomials, least-squares null vectors, a complex shifted-QR eigenvalue
//! solver and a Padé matrix exponential.

use core::fmt::Debug;
use core::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat4<T> = [[T; 4]; 4];

pub trait Scalar:
    Copy + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn scale(self, k: f64) -> Self;
    fn is_finite(&self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Scalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Second-order truncated Taylor number: value, first and second
/// derivative with respect to a single real variable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Jet { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Jet { v, d1: 0.0, d2: 0.0 }
    }

    /// The independent variable evaluated at `x`.
    pub const fn variable(x: f64) -> Self {
        Jet { v: x, d1: 1.0, d2: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = libm::exp(self.v);
        Jet {
            v: e,
            d1: e * self.d1,
            d2: e * (self.d2 + self.d1 * self.d1),
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.d1, -self.d2)
    }
}

impl Scalar for Jet {
    fn zero() -> Self {
        Jet::constant(0.0)
    }
    fn one() -> Self {
        Jet::constant(1.0)
    }
    fn from_f64(x: f64) -> Self {
        Jet::constant(x)
    }
    fn scale(self, k: f64) -> Self {
        Jet::new(self.v * k, self.d1 * k, self.d2 * k)
    }
    fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

pub fn zeros<T: Scalar, const N: usize>() -> [[T; N]; N] {
    [[T::zero(); N]; N]
}

pub fn identity<T: Scalar, const N: usize>() -> [[T; N]; N] {
    let mut m = zeros::<T, N>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn mat_mul<T: Scalar, const N: usize>(a: &[[T; N]; N], b: &[[T; N]; N]) -> [[T; N]; N] {
    let mut c = zeros::<T, N>();
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            for j in 0..N {
                c[i][j] = c[i][j] + aik * b[k][j];
            }
        }
    }
    c
}

pub fn mat_vec<T: Scalar, const N: usize>(a: &[[T; N]; N], x: &[T; N]) -> [T; N] {
    let mut y = [T::zero(); N];
    for i in 0..N {
        for j in 0..N {
            y[i] = y[i] + a[i][j] * x[j];
        }
    }
    y
}

pub fn trace<T: Scalar, const N: usize>(a: &[[T; N]; N]) -> T {
    let mut t = T::zero();
    for (i, row) in a.iter().enumerate() {
        t = t + row[i];
    }
    t
}

pub fn all_finite<T: Scalar, const N: usize>(a: &[[T; N]; N]) -> bool {
    a.iter().all(|r| r.iter().all(Scalar::is_finite))
}

/// Coefficients A₀…A₄ of det(A − zI) = Σ A_n zⁿ, by Leverrier–Faddeev.
pub fn char_poly<T: Scalar>(a: &Mat4<T>) -> Result<[T; 5]> {
    if !all_finite(a) {
        return Err(Error::Numerical("non-finite generator entry".into()));
    }
    // det(zI − A) = z⁴ + c₃z³ + … + c₀, equal to det(A − zI) in even dimension
    let mut c = [T::zero(); 5];
    c[4] = T::one();
    let mut m = identity::<T, 4>();
    for k in 1..=4 {
        let am = mat_mul(a, &m);
        let ck = trace(&am).scale(-1.0 / k as f64);
        c[4 - k] = ck;
        m = am;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = row[i] + ck;
        }
    }
    Ok(c)
}

/// Normalized null vector of a real 4×4 generator: least-squares solution
/// of L ρ = 0 with the row Σρ = 1 appended, via Householder QR.
///
/// Returns the solution and the ratio min|R_kk|/max|R_kk| used for the rank
/// test.
pub fn null_vector_normalized(l: &Mat4<f64>) -> ([f64; 4], f64) {
    let scale = l
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut a = [[0.0f64; 4]; 5];
    let mut b = [0.0f64; 5];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = l[i][j] / scale;
        }
    }
    a[4] = [1.0; 4];
    b[4] = 1.0;

    for k in 0..4 {
        let mut norm = 0.0;
        for row in a.iter().skip(k) {
            norm += row[k] * row[k];
        }
        let norm = libm::sqrt(norm);
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v = [0.0f64; 5];
        v[k] = a[k][k] - alpha;
        for i in k + 1..5 {
            v[i] = a[i][k];
        }
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for j in k..4 {
            let s: f64 = (k..5).map(|i| v[i] * a[i][j]).sum::<f64>() * 2.0 / vv;
            for i in k..5 {
                a[i][j] -= s * v[i];
            }
        }
        let s: f64 = (k..5).map(|i| v[i] * b[i]).sum::<f64>() * 2.0 / vv;
        for i in k..5 {
            b[i] -= s * v[i];
        }
    }
    let mut x = [0.0f64; 4];
    for i in (0..4).rev() {
        let mut s = b[i];
        for j in i + 1..4 {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    let diag = [a[0][0].abs(), a[1][1].abs(), a[2][2].abs(), a[3][3].abs()];
    let mx = diag.iter().cloned().fold(0.0, f64::max);
    let mn = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    (x, if mx > 0.0 { mn / mx } else { 0.0 })
}

/// Solves A X = B for square complex A by LU with partial pivoting.
pub fn lu_solve<const N: usize>(a: &[[C64; N]; N], b: &[[C64; N]; N]) -> Result<[[C64; N]; N]> {
    let mut a = *a;
    let mut x = *b;
    for k in 0..N {
        let mut p = k;
        let mut best = a[k][k].norm();
        for (i, row) in a.iter().enumerate().skip(k + 1) {
            let v = row[k].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Numerical("singular matrix in LU solve".into()));
        }
        a.swap(k, p);
        x.swap(k, p);
        let piv = a[k][k];
        for i in k + 1..N {
            let f = a[i][k] / piv;
            if f == C64::zero() {
                continue;
            }
            for j in k..N {
                let t = a[k][j];
                a[i][j] -= f * t;
            }
            for j in 0..N {
                let t = x[k][j];
                x[i][j] -= f * t;
            }
        }
    }
    for c in 0..N {
        for i in (0..N).rev() {
            let mut s = x[i][c];
            for j in i + 1..N {
                s -= a[i][j] * x[j][c];
            }
            x[i][c] = s / a[i][i];
        }
    }
    Ok(x)
}

fn norm1<const N: usize>(a: &[[C64; N]; N]) -> f64 {
    (0..N)
        .map(|j| (0..N).map(|i| a[i][j].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Unitary rotation [[c, s], [−s̄, c]] (c real) mapping (x, y) to (r, 0).
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, C64::zero());
    }
    let r = libm::hypot(ax, ay);
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    (ax / r, (x / ax) * y.conj() / r)
}

fn rotate_rows<const N: usize>(h: &mut [[C64; N]; N], p: usize, q: usize, c: f64, s: C64, cols: core::ops::Range<usize>) {
    for j in cols {
        let a = h[p][j];
        let b = h[q][j];
        h[p][j] = a * c + s * b;
        h[q][j] = -s.conj() * a + b * c;
    }
}

fn rotate_cols<const N: usize>(h: &mut [[C64; N]; N], p: usize, q: usize, c: f64, s: C64, rows: core::ops::Range<usize>) {
    for row in h[rows].iter_mut() {
        let a = row[p];
        let b = row[q];
        row[p] = a * c + b * s.conj();
        row[q] = -a * s + b * c;
    }
}

/// All eigenvalues of a complex square matrix: Givens reduction to upper
/// Hessenberg form, then single-shift QR with Wilkinson shifts and
/// deflation.
pub fn eigenvalues<const N: usize>(a: &[[C64; N]; N]) -> [C64; N] {
    let mut h = *a;
    for k in 0..N.saturating_sub(2) {
        for i in k + 2..N {
            let (c, s) = givens(h[k + 1][k], h[i][k]);
            if s == C64::zero() {
                continue;
            }
            rotate_rows(&mut h, k + 1, i, c, s, 0..N);
            rotate_cols(&mut h, k + 1, i, c, s, 0..N);
            h[i][k] = C64::zero();
        }
    }

    let scale = norm1(&h).max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let mut out = [C64::zero(); N];
    let mut hi = N;
    let mut iter = 0usize;
    while hi > 0 {
        let last = hi - 1;
        // find the start of the unreduced block ending at `last`
        let mut lo = last;
        while lo > 0 {
            let sub = h[lo][lo - 1].norm();
            let diag = h[lo][lo].norm() + h[lo - 1][lo - 1].norm();
            let tol = if diag > 0.0 { eps * diag } else { eps * scale };
            if sub <= tol {
                h[lo][lo - 1] = C64::zero();
                break;
            }
            lo -= 1;
        }
        if lo == last {
            out[last] = h[last][last];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > 60 * N {
            // unconverged block: report the current diagonal
            for (i, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                *o = h[i][i];
            }
            hi = lo;
            iter = 0;
            continue;
        }

        let a11 = h[last - 1][last - 1];
        let a12 = h[last - 1][last];
        let a21 = h[last][last - 1];
        let a22 = h[last][last];
        let mut mu = {
            let half = (a11 - a22) * 0.5;
            let disc = (half * half + a12 * a21).sqrt();
            let m1 = a22 - a12 * a21 / (half + disc);
            let m2 = a22 - a12 * a21 / (half - disc);
            let m1 = if m1.is_finite() { m1 } else { a22 };
            let m2 = if m2.is_finite() { m2 } else { a22 };
            if (m1 - a22).norm() < (m2 - a22).norm() {
                m1
            } else {
                m2
            }
        };
        if iter % 11 == 0 {
            mu = a22 + C64::new(0.75 * h[last][last - 1].norm(), 0.0);
        }

        for i in lo..=last {
            h[i][i] -= mu;
        }
        let mut rots = [(1.0f64, C64::zero()); N];
        for k in lo..last {
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            rots[k] = (c, s);
            rotate_rows(&mut h, k, k + 1, c, s, k..hi);
            h[k + 1][k] = C64::zero();
        }
        for k in lo..last {
            let (c, s) = rots[k];
            let end = (k + 2).min(last) + 1;
            rotate_cols(&mut h, k, k + 1, c, s, lo..end);
        }
        for i in lo..=last {
            h[i][i] += mu;
        }
    }
    out
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with the degree-13 diagonal
/// Padé approximant.
pub fn expm<const N: usize>(a: &[[C64; N]; N]) -> Result<[[C64; N]; N]> {
    if !all_finite(a) {
        return Err(Error::Numerical("non-finite matrix in expm".into()));
    }
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        libm::ceil(libm::log2(nrm / THETA13)) as i32
    } else {
        0
    };
    let factor = libm::exp2(-(s as f64));
    let mut x = *a;
    for row in x.iter_mut() {
        for v in row.iter_mut() {
            *v *= factor;
        }
    }
    let b = &PADE13;
    let id = identity::<C64, N>();
    let a2 = mat_mul(&x, &x);
    let a4 = mat_mul(&a2, &a2);
    let a6 = mat_mul(&a4, &a2);
    let lin = |c: [f64; 4], m: [&[[C64; N]; N]; 4]| {
        let mut r = zeros::<C64, N>();
        for (k, mk) in m.iter().enumerate() {
            for i in 0..N {
                for j in 0..N {
                    r[i][j] += mk[i][j] * c[k];
                }
            }
        }
        r
    };
    let u_inner = mat_mul(&a6, &lin([b[13], b[11], b[9], 0.0], [&a6, &a4, &a2, &id]));
    let mut u_sum = lin([b[7], b[5], b[3], b[1]], [&a6, &a4, &a2, &id]);
    let v_inner = mat_mul(&a6, &lin([b[12], b[10], b[8], 0.0], [&a6, &a4, &a2, &id]));
    let mut v = lin([b[6], b[4], b[2], b[0]], [&a6, &a4, &a2, &id]);
    for i in 0..N {
        for j in 0..N {
            u_sum[i][j] += u_inner[i][j];
            v[i][j] += v_inner[i][j];
        }
    }
    let u = mat_mul(&x, &u_sum);
    let mut p = zeros::<C64, N>();
    let mut q = zeros::<C64, N>();
    for i in 0..N {
        for j in 0..N {
            p[i][j] = v[i][j] + u[i][j];
            q[i][j] = v[i][j] - u[i][j];
        }
    }
    let mut r = lu_solve(&q, &p)?;
    for _ in 0..s {
        r = mat_mul(&r, &r);
    }
    if !all_finite(&r) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(r)
}

pub fn to_complex<const N: usize>(a: &[[f64; N]; N]) -> [[C64; N]; N] {
    let mut c = zeros::<C64, N>();
    for i in 0..N {
        for j in 0..N {
            c[i][j] = C64::new(a[i][j], 0.0);
        }
    }
    c
}
