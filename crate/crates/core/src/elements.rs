//! Orbital element sets, Cartesian conversion and canonical units.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementsError {
    #[error("eccentricity {0} is outside [0, 1)")]
    Eccentricity(f64),
    #[error("semi-major axis {0} must be positive")]
    SemiMajorAxis(f64),
    #[error("inclination of 180 degrees has no equinoctial representation")]
    Retrograde,
    #[error("semi-parameter {0} must be positive")]
    SemiParameter(f64),
    #[error("degenerate geometry: w = {0}")]
    Degenerate(f64),
}

/// Classical (Keplerian) elements. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalElements {
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    pub ta: f64,
}

/// Modified equinoctial elements. `l` is the unwrapped true longitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquinoctialElements {
    pub p: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub k: f64,
    pub l: f64,
}

impl EquinoctialElements {
    pub fn w(&self) -> f64 {
        1.0 + self.f * self.l.cos() + self.g * self.l.sin()
    }

    pub fn eccentricity(&self) -> f64 {
        self.f.hypot(self.g)
    }

    pub fn inclination(&self) -> f64 {
        2.0 * self.h.hypot(self.k).atan()
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.p, self.f, self.g, self.h, self.k, self.l]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { p: v[0], f: v[1], g: v[2], h: v[3], k: v[4], l: v[5] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub earth_radius: f64,
    pub mu_earth: f64,
    pub g0: f64,
    pub m0: f64,
    pub isp: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            earth_radius: 6.378145e6,
            mu_earth: 3.986004418e14,
            // The source table prints 9.80665e5, which is an exponent slip.
            g0: 9.80665,
            m0: 1000.0,
            isp: 1000.0,
        }
    }
}

/// Canonical units in which the Earth's gravitational parameter is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub du: f64,
    pub vu: f64,
    pub tu: f64,
    pub au: f64,
    pub mu_unit: f64,
    pub fu: f64,
}

pub fn make_scales(c: &PhysicalConstants) -> ScaleSet {
    let du = c.earth_radius;
    let vu = (c.mu_earth / du).sqrt();
    let tu = du / vu;
    let au = vu / tu;
    ScaleSet { du, vu, tu, au, mu_unit: c.m0, fu: c.m0 * au }
}

fn wrap(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn coe_to_mee(coe: &ClassicalElements) -> Result<EquinoctialElements, ElementsError> {
    if !(0.0..1.0).contains(&coe.e) {
        return Err(ElementsError::Eccentricity(coe.e));
    }
    if !(coe.a > 0.0) {
        return Err(ElementsError::SemiMajorAxis(coe.a));
    }
    if (coe.i - PI).abs() < 1e-12 || coe.i > PI {
        return Err(ElementsError::Retrograde);
    }
    let lon_peri = coe.argp + coe.raan;
    let t = (coe.i / 2.0).tan();
    Ok(EquinoctialElements {
        p: coe.a * (1.0 - coe.e * coe.e),
        f: coe.e * lon_peri.cos(),
        g: coe.e * lon_peri.sin(),
        h: t * coe.raan.cos(),
        k: t * coe.raan.sin(),
        l: coe.raan + coe.argp + coe.ta,
    })
}

/// Inverse of [`coe_to_mee`]. Angles are returned in `[0, 2π)`; Ω is 0 for
/// equatorial orbits and ω is 0 for circular ones.
pub fn mee_to_coe(mee: &EquinoctialElements) -> Result<ClassicalElements, ElementsError> {
    if !(mee.p > 0.0) {
        return Err(ElementsError::SemiParameter(mee.p));
    }
    let e = mee.eccentricity();
    if e >= 1.0 {
        return Err(ElementsError::Eccentricity(e));
    }
    let tan_half = mee.h.hypot(mee.k);
    let raan = if tan_half == 0.0 { 0.0 } else { wrap(mee.k.atan2(mee.h)) };
    let lon_peri = if e == 0.0 { raan } else { mee.g.atan2(mee.f) };
    let argp = if e == 0.0 { 0.0 } else { wrap(lon_peri - raan) };
    Ok(ClassicalElements {
        a: mee.p / (1.0 - e * e),
        e,
        i: 2.0 * tan_half.atan(),
        raan,
        argp,
        ta: wrap(mee.l - raan - argp),
    })
}

/// Position and velocity in the inertial frame.
pub fn mee_to_cartesian(mee: &EquinoctialElements, mu: f64) -> Result<([f64; 3], [f64; 3]), ElementsError> {
    if !(mee.p > 0.0) {
        return Err(ElementsError::SemiParameter(mee.p));
    }
    let w = mee.w();
    if !(w > 0.0) {
        return Err(ElementsError::Degenerate(w));
    }
    let EquinoctialElements { p, f, g, h, k, l } = *mee;
    let (sl, cl) = l.sin_cos();
    let alpha2 = h * h - k * k;
    let s2 = 1.0 + h * h + k * k;
    let r = p / w;
    let pos = [
        r / s2 * (cl + alpha2 * cl + 2.0 * h * k * sl),
        r / s2 * (sl - alpha2 * sl + 2.0 * h * k * cl),
        2.0 * r / s2 * (h * sl - k * cl),
    ];
    let c = (mu / p).sqrt() / s2;
    let vel = [
        -c * (sl + alpha2 * sl - 2.0 * h * k * cl + g - 2.0 * f * h * k + alpha2 * g),
        -c * (-cl + alpha2 * cl + 2.0 * h * k * sl - f + 2.0 * g * h * k + alpha2 * f),
        2.0 * c * (h * cl + k * sl + f * h + g * k),
    ];
    Ok((pos, vel))
}

/// Inertial components of the radial, transverse and normal unit vectors.
pub fn rtn_basis(r: &[f64; 3], v: &[f64; 3]) -> [[f64; 3]; 3] {
    let norm = |a: [f64; 3]| {
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        [a[0] / n, a[1] / n, a[2] / n]
    };
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    let ir = norm(*r);
    let in_ = norm(cross(*r, *v));
    let it = cross(in_, ir);
    [ir, it, in_]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scales_from_default_constants() {
        let s = make_scales(&PhysicalConstants::default());
        assert_eq!(s.du, 6.378145e6);
        assert_relative_eq!(s.vu, 7905.3657, max_relative = 1e-6);
        assert_relative_eq!(s.tu, 806.81, max_relative = 1e-4);
        assert_relative_eq!(s.vu * s.vu * s.du / 3.986004418e14, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn unit_constants_give_unit_scales() {
        let c = PhysicalConstants { earth_radius: 1.0, mu_earth: 1.0, g0: 1.0, m0: 1.0, isp: 1.0 };
        let s = make_scales(&c);
        for v in [s.du, s.vu, s.tu, s.au, s.mu_unit, s.fu] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn circular_equatorial_cartesian() {
        let mee = EquinoctialElements { p: 1.0, f: 0.0, g: 0.0, h: 0.0, k: 0.0, l: 0.0 };
        let (r, v) = mee_to_cartesian(&mee, 1.0).unwrap();
        assert_eq!(r, [1.0, 0.0, 0.0]);
        assert_relative_eq!(v[1], 1.0);
        let quarter = EquinoctialElements { l: PI / 2.0, ..mee };
        let (r, v) = mee_to_cartesian(&quarter, 1.0).unwrap();
        assert_relative_eq!(r[1], 1.0);
        assert!(r[0].abs() < 1e-15);
        assert_relative_eq!(v[0], -1.0);
    }

    #[test]
    fn retrograde_rejected() {
        let coe = ClassicalElements { a: 1.0, e: 0.0, i: PI, raan: 0.0, argp: 0.0, ta: 0.0 };
        assert_eq!(coe_to_mee(&coe), Err(ElementsError::Retrograde));
    }
}
