use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::asdf::{ideal_packet, ideal_packet_pca, Cylinder, CylinderPacket};
use crate::error::{Error, Result};
use crate::geometry::{neighbors_within, tangent_at, AffineSubspace, PointCloud};
use crate::linalg::{self, Rng};

/// How a candidate packet was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PacketOrigin {
    /// Greedy net of the data with PCA tangents.
    DataDriven,
    /// Admissible perturbation of the data-driven packet.
    Perturbation { index: usize },
    /// Round `d`-sphere with exact tangents.
    Template { center: Vec<f64>, radius: f64 },
}

/// PCA radius of the data-driven packet, in units of `tau_bar`.
pub const DATA_PCA_RADIUS: f64 = 3.0;

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Surface area of the unit `d`-sphere in `R^{d+1}`.
pub fn unit_sphere_area(d: usize) -> f64 {
    (d + 1) as f64 * unit_ball_volume(d + 1)
}

/// Largest cylinder count compatible with volume `V`: the balls of radius
/// `tau_bar / 4` around a `tau_bar / 2`-separated net are disjoint.
pub fn max_cylinders(volume: f64, d: usize, tau_bar: f64) -> f64 {
    volume / (unit_ball_volume(d) * (tau_bar / 4.0).powi(d as i32))
}

/// Packet on the round sphere of `radius` centered at `center` inside the span of
/// the orthonormal `n x (d + 1)` `frame`. Sample spacing is about `tau_bar / 8`.
pub fn sphere_template(
    center: &DVector<f64>,
    frame: &DMatrix<f64>,
    radius: f64,
    tau: f64,
    cbar12: f64,
    rng: &mut Rng,
) -> Result<CylinderPacket> {
    let d = frame.ncols() - 1;
    if d == 0 || frame.nrows() != center.len() {
        return Err(Error::InvalidParameter(
            "template frame must be n x (d + 1) with d >= 1".into(),
        ));
    }
    let step = cbar12 * tau / 8.0;
    let dirs: Vec<DVector<f64>> = if d == 1 {
        let k = ((2.0 * PI * radius / step).ceil() as usize).max(8);
        (0..k)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / k as f64;
                DVector::from_row_slice(&[t.cos(), t.sin()])
            })
            .collect()
    } else {
        let k = ((unit_sphere_area(d) * (radius / step).powi(d as i32)).ceil() as usize)
            .clamp(64, 60_000);
        (0..k)
            .map(|_| DVector::<f64>::from_fn(d + 1, |_, _| StandardNormal.sample(rng)).normalize())
            .collect()
    };
    let mut pts = Vec::with_capacity(dirs.len());
    let mut tangents = Vec::with_capacity(dirs.len());
    for u in dirs {
        let p = center + frame * (&u * radius);
        // Tangent of the sphere at u inside R^{d+1}: orthogonal complement of u.
        let tan = frame
            * linalg::orthonormal_complement(&DMatrix::from_column_slice(d + 1, 1, u.as_slice()));
        tangents.push(AffineSubspace::new(p.clone(), tan)?);
        pts.push(p);
    }
    ideal_packet(&PointCloud::new(pts)?, &tangents, tau, cbar12)
}

/// Principal directions of the cloud about `center`, largest variance first.
fn principal_frame(cloud: &PointCloud, center: &DVector<f64>, k: usize) -> DMatrix<f64> {
    let n = cloud.dim();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for (p, w) in cloud.points().iter().zip(cloud.weights()) {
        let x = p - center;
        cov += &x * x.transpose() * *w;
    }
    let (_, vecs) = linalg::sym_eigen_ascending(&cov);
    DMatrix::from_fn(n, k, |i, j| vecs[(i, n - 1 - j)])
}

/// Parameters of the `i`-th sphere template: `None` when the volume and the unit
/// ball leave no admissible radius.
pub fn template_parameters(
    cloud: &PointCloud,
    d: usize,
    volume: f64,
    tau: f64,
    i: usize,
    rng: &mut Rng,
) -> Option<(DVector<f64>, DMatrix<f64>, f64)> {
    let n = cloud.dim();
    if d + 1 > n {
        return None;
    }
    let mean = cloud.mean();
    let center = if i == 0 {
        mean
    } else {
        let dir = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng)).normalize();
        let r = 0.25 * rng.random::<f64>().powf(1.0 / n as f64);
        mean + dir * r
    };
    let cn = center.norm();
    let r_max = (volume / unit_sphere_area(d))
        .powf(1.0 / d as f64)
        .min(1.0 - cn);
    if r_max < tau {
        return None;
    }
    let mut frame = principal_frame(cloud, &center, d + 1);
    if i > 0 {
        let mut a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        a = &a - a.transpose();
        let norm = linalg::op_norm(&a);
        if norm > 0.0 {
            a *= 0.3 * rng.random::<f64>() / norm;
        }
        frame = linalg::expm_skew(&a) * frame;
    }
    let radius = if i == 0 {
        // Weighted RMS distance to the center inside the principal span.
        let ms: f64 = cloud
            .points()
            .iter()
            .zip(cloud.weights())
            .map(|(p, w)| w * frame.tr_mul(&(p - &center)).norm_squared())
            .sum();
        ms.sqrt().clamp(tau, r_max)
    } else {
        rng.random_range(tau..=r_max)
    };
    Some((center, frame, radius))
}

/// Data-driven packet: cylinders on a greedy `tau_bar / 2` net with PCA tangents,
/// each center replaced by its projection onto the PCA plane through the mean of
/// its neighbors within `radius`. The projection removes the normal noise of the
/// net points, which the putative manifold would otherwise follow.
pub fn data_driven_packet(
    cloud: &PointCloud,
    d: usize,
    tau: f64,
    cbar12: f64,
    radius: f64,
) -> Result<CylinderPacket> {
    let raw = ideal_packet_pca(cloud, d, tau, cbar12, radius)?;
    let cyl = raw
        .cylinders()
        .iter()
        .map(|c| {
            let mut r = radius;
            for _ in 0..5 {
                let idx = neighbors_within(cloud.points(), &c.center, r);
                if idx.len() > d {
                    let mean = idx
                        .iter()
                        .fold(DVector::zeros(cloud.dim()), |acc, &i| acc + cloud.point(i))
                        / idx.len() as f64;
                    if let Ok(t) = tangent_at(cloud.points(), &c.center, r, d) {
                        let b = t.basis();
                        let center = &mean + b * b.tr_mul(&(&c.center - &mean));
                        return Cylinder::new(linalg::rotation_from_tangent(b), center, c.scale, d);
                    }
                }
                r *= 2.0;
            }
            Ok(c.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    CylinderPacket::new_unchecked(cyl, tau, raw.alignment)
}

/// One candidate: its origin and the packet, or the reason it could not be built.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub index: usize,
    pub origin: Option<PacketOrigin>,
    pub packet: std::result::Result<CylinderPacket, String>,
}

/// Candidate packets in a fixed order: the data-driven packet, its perturbations,
/// then sphere templates, truncated to `budget`. Candidate `i` draws its randomness
/// from `split_seed(seed, i)`, so a larger budget searches a superset.
#[allow(clippy::too_many_arguments)]
pub fn candidate_packets(
    cloud: &PointCloud,
    d: usize,
    volume: f64,
    tau: f64,
    cbar12: f64,
    perturbations: usize,
    budget: usize,
    seed: u64,
) -> Vec<Candidate> {
    let tau_bar = cbar12 * tau;
    let base = data_driven_packet(cloud, d, tau, cbar12, DATA_PCA_RADIUS * tau_bar)
        .map_err(|e| e.to_string());
    let mut out = Vec::with_capacity(budget);
    out.push(Candidate {
        index: 0,
        origin: Some(PacketOrigin::DataDriven),
        packet: base.clone(),
    });
    for k in 0..perturbations {
        if out.len() >= budget {
            break;
        }
        let i = out.len();
        let mut rng = linalg::rng(linalg::split_seed(seed, i as u64));
        let packet = match &base {
            Ok(p) => p.perturbed(0.1, 1.0, &mut rng).map_err(|e| e.to_string()),
            Err(e) => Err(format!("base packet unavailable: {e}")),
        };
        out.push(Candidate {
            index: i,
            origin: Some(PacketOrigin::Perturbation { index: k }),
            packet,
        });
    }
    let mut t = 0;
    while out.len() < budget {
        let i = out.len();
        let mut rng = linalg::rng(linalg::split_seed(seed, i as u64));
        let cand = match template_parameters(cloud, d, volume, tau, t, &mut rng) {
            Some((center, frame, radius)) => Candidate {
                index: i,
                origin: Some(PacketOrigin::Template {
                    center: center.iter().copied().collect(),
                    radius,
                }),
                packet: sphere_template(&center, &frame, radius, tau, cbar12, &mut rng)
                    .map_err(|e| e.to_string()),
            },
            None => Candidate {
                index: i,
                origin: None,
                packet: Err("no admissible template radius".into()),
            },
        };
        out.push(cand);
        t += 1;
    }
    out.truncate(budget);
    out
}
