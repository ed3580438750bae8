use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};

use super::{FiberLog, GroupSpec, HomogeneousSpace};
use crate::error::{Error, Result};
use crate::float::rem_euclid;
use crate::lie::{so3_exp, so3_hat, So3};
use crate::vector::AlgebraVector;

const NORTH: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);
const ANTIPODE_TOL: f64 = 1e-8;
const SCAN: usize = 24;

/// Rotation about the z axis.
pub fn rz(s: f64) -> Matrix3<f64> {
    let (sn, c) = (libm::sin(s), libm::cos(s));
    Matrix3::new(c, -sn, 0.0, sn, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about `n × v` by the angle between them, taking the north pole to `v`.
/// Within `1e-8` of the south pole the axis falls back to `e₁`.
pub fn s2_section(v: &Vector3<f64>) -> Matrix3<f64> {
    if (v + NORTH).norm() < ANTIPODE_TOL {
        return Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
    }
    let axis = NORTH.cross(v);
    let s = axis.norm();
    if s < 1e-300 {
        return Matrix3::identity();
    }
    let angle = libm::atan2(s, v[2]);
    so3_exp(&(axis * (angle / s)))
}

/// S² = SO(3)/SO(2) with `π(g) = g n`. Fibers are `R_v Rz(s)`.
#[derive(Clone, Debug)]
pub struct S2 {
    spec: GroupSpec<So3>,
}

impl S2 {
    pub fn new(spec: GroupSpec<So3>) -> Self {
        Self { spec }
    }

    pub fn north() -> Vector3<f64> {
        NORTH
    }

    /// Point at polar angle `theta` and azimuth `phi`.
    pub fn spherical(theta: f64, phi: f64) -> Vector3<f64> {
        Vector3::new(libm::sin(theta) * libm::cos(phi), libm::sin(theta) * libm::sin(phi), libm::cos(theta))
    }

    fn objective(&self, m: &Matrix3<f64>, s: f64) -> f64 {
        match log_alg(&(rz(-s) * m)) {
            Some(w) => self.spec.metric().norm_sq(&w),
            None => f64::INFINITY,
        }
    }

    /// Golden-section search on `[a, b]` followed by Newton polishing.
    fn refine(&self, m: &Matrix3<f64>, a: f64, b: f64) -> (f64, f64) {
        let g = 0.5 * (libm::sqrt(5.0) - 1.0);
        let (mut a, mut b) = (a, b);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.objective(m, c), self.objective(m, d));
        while b - a > 1e-9 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.objective(m, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.objective(m, d);
            }
        }
        let mut s = 0.5 * (a + b);
        let mut f = self.objective(m, s);
        let h = 1e-4;
        for _ in 0..3 {
            let (fp, fm) = (self.objective(m, s + h), self.objective(m, s - h));
            let d2 = (fp - 2.0 * f + fm) / (h * h);
            if !(d2 > 0.0) {
                break;
            }
            let cand = s - (fp - fm) / (2.0 * h) / d2;
            let fcand = self.objective(m, cand);
            // Near the optimum f is flat to rounding; trust small Newton steps.
            if fcand <= f + 1e-12 * (1.0 + f) && libm::fabs(cand - s) < 1e-3 {
                s = cand;
                f = fcand;
            } else {
                break;
            }
        }
        (s, f)
    }
}

fn log_alg(r: &Matrix3<f64>) -> Option<AlgebraVector> {
    crate::lie::so3_log(r).ok().map(|v| AlgebraVector::from_slice(v.as_slice()).expect("3 coordinates"))
}

fn wrap_angle(s: f64) -> f64 {
    let r = rem_euclid(s, TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl HomogeneousSpace for S2 {
    type Group = So3;
    type Base = Vector3<f64>;
    type Fiber = f64;

    fn spec(&self) -> &GroupSpec<So3> {
        &self.spec
    }

    fn name(&self) -> String {
        "s2".into()
    }

    fn base_dim(&self) -> usize {
        2
    }

    fn check_base(&self, v: &Vector3<f64>) -> Result<()> {
        if !v.iter().all(|x| x.is_finite()) || (v.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("S² point must be a unit vector".into()));
        }
        Ok(())
    }

    fn project(&self, g: &Matrix3<f64>) -> Vector3<f64> {
        g * NORTH
    }

    fn fiber_point(&self, v: &Vector3<f64>, s: &f64) -> Result<Matrix3<f64>> {
        self.check_base(v)?;
        Ok(s2_section(v) * rz(*s))
    }

    fn fiber_log(&self, y: &Matrix3<f64>, v: &Vector3<f64>) -> Result<FiberLog<f64>> {
        self.check_base(v)?;
        let m = s2_section(v).transpose() * y;
        let step = TAU / SCAN as f64;
        let scan: Vec<f64> = (0..SCAN).map(|i| self.objective(&m, i as f64 * step)).collect();
        let mut minima: Vec<usize> = (0..SCAN)
            .filter(|&i| {
                scan[i].is_finite() && scan[i] <= scan[(i + SCAN - 1) % SCAN] && scan[i] <= scan[(i + 1) % SCAN]
            })
            .collect();
        if minima.is_empty() {
            return Err(Error::Branch { angle: PI });
        }
        minima.sort_by(|&a, &b| scan[a].total_cmp(&scan[b]));
        let mut best: Vec<(f64, f64)> = vec![];
        for &i in minima.iter().take(2) {
            let c = i as f64 * step;
            let (s, f) = self.refine(&m, c - step, c + step);
            best.push((wrap_angle(s), f));
        }
        let (mut s, f) = best[0];
        let mut tie = false;
        if let Some(&(s2, f2)) = best.get(1) {
            let apart = libm::fabs(s - s2).min(TAU - libm::fabs(s - s2)) > 1e-6;
            if apart && libm::fabs(f - f2) <= 1e-10 * (1.0 + f) {
                tie = true;
                s = s.min(s2);
            } else if f2 < f {
                s = s2;
            }
        }
        let w = log_alg(&(rz(-s) * m)).ok_or(Error::Branch { angle: PI })?;
        Ok(FiberLog { w, coord: s, tie })
    }

    fn fiber_jacobian_det(&self, w: &AlgebraVector) -> Result<f64> {
        Ok(so3_fiber_det(&Vector3::new(w[0], w[1], w[2])))
    }

    fn base_distance(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        libm::atan2(a.cross(b).norm(), a.dot(b))
    }

    fn vertical_basis(&self) -> Vec<AlgebraVector> {
        vec![AlgebraVector::basis(3, 2)]
    }

    fn horizontal_basis(&self) -> Vec<AlgebraVector> {
        vec![AlgebraVector::basis(3, 0), AlgebraVector::basis(3, 1)]
    }

    fn base_coords(&self, v: &Vector3<f64>) -> Vec<f64> {
        v.as_slice().to_vec()
    }

    fn fiber_coords(&self, s: &f64) -> Vec<f64> {
        vec![*s]
    }
}

/// Left-trivialised `dexp` on so(3): `I - (1-cos θ)/θ² Ŵ + (θ - sin θ)/θ³ Ŵ²`.
pub(crate) fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let t2 = w.norm_squared();
    let t = libm::sqrt(t2);
    let (a, b) = if t < 1e-4 {
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        ((1.0 - libm::cos(t)) / t2, (t - libm::sin(t)) / (t2 * t))
    };
    let k = so3_hat(w);
    Matrix3::identity() - k * a + k * k * b
}

/// `det[Ad(exp(-w)) e₃ | dexp_w e₁ | dexp_w e₂]`.
fn so3_fiber_det(w: &Vector3<f64>) -> f64 {
    let ad = so3_exp(&(-w));
    let j = so3_left_jacobian(w);
    let cols: [Vector3<f64>; 3] = [j.column(0).into_owned(), j.column(1).into_owned(), ad.column(2).into_owned()];
    Matrix3::from_columns(&cols).determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{fiber_jacobian_det_generic, so3_spec};

    fn space() -> S2 {
        S2::new(so3_spec())
    }

    #[test]
    fn projection_examples() {
        let s = space();
        assert_eq!(s.project(&Matrix3::identity()), NORTH);
        assert!((s.project(&rz(0.7)) - NORTH).norm() < 1e-15);
        let rx = so3_exp(&Vector3::new(PI / 2.0, 0.0, 0.0));
        assert!((s.project(&rx) - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn section_hits_base_point_including_south_pole() {
        let s = space();
        for v in [NORTH, -NORTH, S2::spherical(1.0, 2.0), S2::spherical(PI - 1e-9, 0.3)] {
            let g = s.fiber_point(&v, &0.4).unwrap();
            assert!((s.project(&g) - v).norm() < 1e-7, "{v:?}");
        }
        assert_eq!(s.fiber_point(&NORTH, &0.0).unwrap(), Matrix3::identity());
    }

    #[test]
    fn nearest_point_matches_closed_form() {
        let s = space();
        let y = so3_exp(&Vector3::new(0.3, -0.5, 1.2));
        let v = S2::spherical(0.8, -0.4);
        let fl = s.fiber_log(&y, &v).unwrap();
        // For the bi-invariant metric the optimal angle solves a 2x2 Procrustes problem.
        let m = y.transpose() * s2_section(&v);
        let closed = wrap_angle(libm::atan2(m[(0, 1)] - m[(1, 0)], m[(0, 0)] + m[(1, 1)]));
        assert!((fl.coord - closed).abs() < 1e-8, "{} vs {closed}", fl.coord);
        assert!(fl.w[2].abs() < 1e-8, "log is horizontal: {:?}", fl.w);
        assert!(!fl.tie);
    }

    #[test]
    fn fiber_det_is_sinc_on_horizontal_vectors() {
        let s = space();
        let w = AlgebraVector::from_slice(&[0.6, -0.9, 0.0]).unwrap();
        let r = w.norm();
        let got = s.fiber_jacobian_det(&w).unwrap();
        assert!((got - libm::sin(r) / r).abs() < 1e-14);
        let generic = fiber_jacobian_det_generic(&s, &AlgebraVector::from_slice(&[0.2, 0.7, 0.3]).unwrap());
        let closed = s.fiber_jacobian_det(&AlgebraVector::from_slice(&[0.2, 0.7, 0.3]).unwrap()).unwrap();
        assert!((generic - closed).abs() < 1e-12);
    }
}
