//! Noll-indexed, RMS-normalized Zernike modes over the observed aperture.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::HouseholderQr;
use crate::scalar::Scalar;

const APERTURE_SLACK: f64 = 1e-9;

/// A Zernike mode `Z_n^m`; `m > 0` is the cosine term, `m < 0` the sine term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub n: u32,
    pub m: i32,
    pub noll_j: u32,
}

impl ModeIndex {
    pub fn from_noll(j: u32) -> Result<Self> {
        if j < 1 {
            return Err(Error::param("noll_j", "Noll indices start at 1"));
        }
        // degree n holds indices n(n+1)/2 + 1 ..= (n+1)(n+2)/2
        let mut n = 0u32;
        while (n + 1) * (n + 2) / 2 < j {
            n += 1;
        }
        let k = j - n * (n + 1) / 2 - 1;
        let abs_m = if n % 2 == 0 { 2 * ((k + 1) / 2) } else { 2 * (k / 2) + 1 } as i32;
        let m = if abs_m == 0 || j % 2 == 0 { abs_m } else { -abs_m };
        Ok(Self { n, m, noll_j: j })
    }

    pub fn from_nm(n: u32, m: i32) -> Result<Self> {
        let abs_m = m.unsigned_abs();
        if abs_m > n || (n - abs_m) % 2 != 0 {
            return Err(Error::param("mode", format!("no Zernike mode with n={n}, m={m}")));
        }
        let lo = n * (n + 1) / 2 + 1;
        let hi = (n + 1) * (n + 2) / 2;
        (lo..=hi)
            .map(|j| Self::from_noll(j).expect("valid index"))
            .find(|mode| mode.m == m)
            .ok_or_else(|| Error::param("mode", format!("no Zernike mode with n={n}, m={m}")))
    }

    pub fn is_piston(&self) -> bool {
        self.n == 0
    }

    /// Label of the form `Z2^0`, `Z3^-1`.
    pub fn label(&self) -> String {
        format!("Z{}^{}", self.n, self.m)
    }

    /// RMS normalization over the unit disk.
    pub fn normalization(&self) -> f64 {
        let n1 = f64::from(self.n + 1);
        if self.m == 0 {
            n1.sqrt()
        } else {
            (2.0 * n1).sqrt()
        }
    }

    /// Coefficients of `R_n^|m|`, paired with the power of ρ.
    fn radial_terms(&self) -> Vec<(f64, i32)> {
        let n = self.n as i64;
        let a = i64::from(self.m.unsigned_abs());
        let fact = |k: i64| -> f64 { (1..=k).map(|v| v as f64).product() };
        (0..=(n - a) / 2)
            .map(|s| {
                let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                let c = sign * fact(n - s) / (fact(s) * fact((n + a) / 2 - s) * fact((n - a) / 2 - s));
                (c, (n - 2 * s) as i32)
            })
            .collect()
    }

    /// Value at normalized radius `rho` and angle `theta`.
    pub fn value<T: Scalar>(&self, rho: T, theta: T) -> T {
        let radial = self
            .radial_terms()
            .into_iter()
            .fold(T::zero(), |acc, (c, pow)| acc + T::lit(c) * rho.powi(pow));
        let angular = match self.m {
            0 => T::one(),
            m if m > 0 => (T::lit(f64::from(m)) * theta).cos(),
            m => (T::lit(f64::from(-m)) * theta).sin(),
        };
        T::lit(self.normalization()) * radial * angular
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModeIndex {
    type Err = Error;

    /// Accepts `Z2^0`, `z3^-1`, or a bare Noll index such as `j4`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::param("mode", format!("cannot parse mode `{s}` (expected e.g. Z2^0)"));
        if let Some(j) = t.strip_prefix(['j', 'J']) {
            return Self::from_noll(j.parse().map_err(|_| bad())?);
        }
        let body = t.strip_prefix(['Z', 'z']).ok_or_else(bad)?;
        let (n, m) = body.split_once('^').ok_or_else(bad)?;
        Self::from_nm(n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

/// The first `l` Noll modes after piston.
pub fn noll_modes(l: usize) -> Result<Vec<ModeIndex>> {
    if l < 1 {
        return Err(Error::param("l", "need at least one mode"));
    }
    (2..(l as u32 + 2)).map(ModeIndex::from_noll).collect()
}

fn polar<T: Scalar>(points: &[(T, T)], norm_radius: T) -> Result<Vec<(T, T)>> {
    if !(norm_radius > T::zero()) {
        return Err(Error::param("norm_radius", "must be positive"));
    }
    points
        .iter()
        .enumerate()
        .map(|(index, &(x, y))| {
            let r = x.hypot(y);
            if r > norm_radius * (T::one() + T::lit(APERTURE_SLACK)) {
                return Err(Error::PointOutsideAperture {
                    index,
                    radius: r.as_f64(),
                    norm_radius: norm_radius.as_f64(),
                });
            }
            Ok(((r / norm_radius).min(T::one()), y.atan2(x)))
        })
        .collect()
}

/// `Z[i][k]` = mode `k` at point `i`.
pub fn eval_basis<T: Scalar>(points: &[(T, T)], modes: &[ModeIndex], norm_radius: T) -> Result<Array2<T>> {
    let pol = polar(points, norm_radius)?;
    let mut z = Array2::zeros((points.len(), modes.len()));
    for (i, &(rho, theta)) in pol.iter().enumerate() {
        for (k, mode) in modes.iter().enumerate() {
            z[[i, k]] = mode.value(rho, theta);
        }
    }
    Ok(z)
}

/// Least-squares projector `C1 = R⁻¹ Q₁ᵀ` from a Householder QR of `Z`.
pub fn projection_matrix<T: Scalar>(z: ArrayView2<'_, T>) -> Result<Array2<T>> {
    if z.nrows() < z.ncols() {
        return Err(Error::InsufficientCoverage);
    }
    let qr = HouseholderQr::new(z)?;
    if !qr.is_full_rank() {
        return Err(Error::InsufficientCoverage);
    }
    qr.pseudo_inverse()
}

pub fn synthesize_target<T: Scalar>(mode: ModeIndex, amplitude: T, points: &[(T, T)], norm_radius: T) -> Result<Vec<T>> {
    let pol = polar(points, norm_radius)?;
    Ok(pol.into_iter().map(|(rho, theta)| amplitude * mode.value(rho, theta)).collect())
}

#[derive(Debug, Clone)]
pub struct ZernikeMap<T> {
    pub modes: Vec<ModeIndex>,
    /// r x l
    pub z: Array2<T>,
    /// l x r
    pub c1: Array2<T>,
    pub norm_radius: T,
}

impl<T: Scalar> ZernikeMap<T> {
    pub fn new(points: &[(T, T)], modes: Vec<ModeIndex>, norm_radius: T) -> Result<Self> {
        let z = eval_basis(points, &modes, norm_radius)?;
        let c1 = projection_matrix(z.view())?;
        Ok(Self {
            modes,
            z,
            c1,
            norm_radius,
        })
    }

    /// Map over the first `l` non-piston modes.
    pub fn with_modes(points: &[(T, T)], l: usize, norm_radius: T) -> Result<Self> {
        Self::new(points, noll_modes(l)?, norm_radius)
    }

    pub fn l(&self) -> usize {
        self.modes.len()
    }

    pub fn r(&self) -> usize {
        self.z.nrows()
    }

    /// `q = C1 y`
    pub fn project(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.r());
        self.c1.rows().into_iter().map(|row| row.iter().zip(y).map(|(&a, &b)| a * b).sum()).collect()
    }
}
