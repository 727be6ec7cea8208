use nalgebra::{DMatrix, DVector};

use super::bump::bump_theta;
use super::packet::{Cylinder, CylinderPacket};
use super::MEMBERSHIP_SLACK;
use crate::error::{Error, Result};

/// Value, gradient and Hessian of the approximate squared distance at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct AsdfJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Cylinders whose doubled copy `cyl^2_i` contains `z`.
pub fn active_cylinders<'a>(
    packet: &'a CylinderPacket,
    z: &'a DVector<f64>,
) -> impl Iterator<Item = (usize, &'a Cylinder)> + 'a {
    packet
        .cylinders()
        .iter()
        .enumerate()
        .filter(move |(_, c)| c.contains(z, 2.0, MEMBERSHIP_SLACK))
}

fn check_dim(packet: &CylinderPacket, z: &DVector<f64>) -> Result<()> {
    if z.len() != packet.n() {
        return Err(Error::DimensionMismatch {
            expected: packet.n(),
            got: z.len(),
        });
    }
    Ok(())
}

/// `F(z) = sum_i phi_i theta_i / sum_i theta_i` with `phi_i = |Pi_{n-d} o_i^{-1} z|^2`
/// and `theta_i = theta(Pi_d o_i^{-1} z / (2 tau_bar))`, over cylinders containing `z`.
pub fn asdf_eval(packet: &CylinderPacket, z: &DVector<f64>) -> Result<f64> {
    check_dim(packet, z)?;
    let d = packet.d();
    let n = packet.n();
    let two_tb = 2.0 * packet.tau_bar();
    let (mut num, mut den, mut any) = (0.0, 0.0, false);
    for (_, c) in active_cylinders(packet, z) {
        any = true;
        let w = c.to_local(z);
        let t = w.rows(0, d).norm() / two_tb;
        let th = super::bump::profile(t).0;
        num += th * w.rows(d, n - d).norm_squared();
        den += th;
    }
    if !any {
        return Err(Error::OutOfDomain);
    }
    if den <= 0.0 {
        return Err(Error::DegenerateCover);
    }
    Ok(num / den)
}

/// [`asdf_eval`] with exact gradient and Hessian of the quotient.
pub fn asdf_grad_hess(packet: &CylinderPacket, z: &DVector<f64>) -> Result<AsdfJet> {
    check_dim(packet, z)?;
    let d = packet.d();
    let n = packet.n();
    let two_tb = 2.0 * packet.tau_bar();
    let mut a = 0.0;
    let mut b = 0.0;
    let mut ga = DVector::zeros(n);
    let mut gb = DVector::zeros(n);
    let mut ha = DMatrix::zeros(n, n);
    let mut hb = DMatrix::zeros(n, n);
    let mut any = false;
    for (_, c) in active_cylinders(packet, z) {
        any = true;
        let w = c.to_local(z);
        let x = w.rows(0, d).into_owned() / two_tb;
        let bump = bump_theta(&x);
        if bump.value == 0.0 && bump.grad.norm_squared() == 0.0 {
            continue;
        }
        let tan = c.rotation.columns(0, d);
        let nor = c.rotation.columns(d, n - d);
        let y = w.rows(d, n - d);
        let phi = y.norm_squared();
        let gphi = &nor * y * 2.0;
        let hphi = &nor * nor.transpose() * 2.0;
        let gth = &tan * &bump.grad / two_tb;
        let hth = &tan * &bump.hess * tan.transpose() / (two_tb * two_tb);
        a += phi * bump.value;
        b += bump.value;
        ga += &gphi * bump.value + &gth * phi;
        gb += &gth;
        let cross = &gphi * gth.transpose();
        ha += hphi * bump.value + &cross + cross.transpose() + &hth * phi;
        hb += hth;
    }
    if !any {
        return Err(Error::OutOfDomain);
    }
    if b <= 0.0 {
        return Err(Error::DegenerateCover);
    }
    let f = a / b;
    let grad = (&ga - &gb * f) / b;
    let cross = &grad * gb.transpose();
    let hess = (ha - hb * f - &cross - cross.transpose()) / b;
    Ok(AsdfJet {
        value: f,
        grad,
        hess,
    })
}
