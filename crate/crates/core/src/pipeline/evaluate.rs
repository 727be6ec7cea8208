use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::packets::{max_cylinders, PacketOrigin};
use super::TestConfig;
use crate::asdf::{
    bundle_coordinates, extract_putative_manifold, validate_packet, BundleChart, CylinderPacket,
    PutativeMesh, ValidateOptions,
};
use crate::error::{Error, Result};
use crate::geometry::{reach_of_points, AffineSubspace, PointCloud, ReachEstimate};
use crate::whitney::{global_section, BundlePoint, SectionModel};

/// Squared-distance contribution of one data point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub index: usize,
    /// Distance used in the loss (fiber distance to the output manifold inside the
    /// tube, scaled mesh distance outside), including the component orthogonal to
    /// the reduced subspace.
    pub residual: f64,
    pub in_tube: bool,
    pub weight: f64,
}

/// Summary of one searched packet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacketEvaluation {
    pub index: usize,
    pub origin: Option<PacketOrigin>,
    pub cylinders: usize,
    pub valid: bool,
    pub validation: Option<String>,
    pub error: Option<String>,
    /// `+inf` for packets that were not evaluated.
    #[serde(serialize_with = "super::report::ser_f64")]
    pub loss: f64,
    pub in_tube_loss: f64,
    pub out_tube_loss: f64,
    pub in_tube_count: usize,
    pub out_tube_count: usize,
    pub mesh_size: usize,
    pub active_sections: usize,
    pub max_c2_proxy: f64,
}

impl PacketEvaluation {
    pub(crate) fn rejected(
        index: usize,
        origin: Option<PacketOrigin>,
        cylinders: usize,
        validation: Option<String>,
        error: Option<String>,
    ) -> Self {
        Self {
            index,
            origin,
            cylinders,
            valid: false,
            validation,
            error,
            loss: f64::INFINITY,
            in_tube_loss: 0.0,
            out_tube_loss: 0.0,
            in_tube_count: 0,
            out_tube_count: 0,
            mesh_size: 0,
            active_sections: 0,
            max_c2_proxy: 0.0,
        }
    }
}

/// Everything needed to rebuild and check the output manifold of a packet.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub packet_index: usize,
    pub origin: Option<PacketOrigin>,
    pub packet: CylinderPacket,
    pub sections: SectionModel,
    pub mesh: PutativeMesh,
    pub mesh_reach: ReachEstimate,
    /// `n x k` orthonormal basis of the reduced subspace the packet lives in.
    pub basis: DMatrix<f64>,
}

/// Evaluation of one packet with its certificate and per-point residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedPacket {
    pub summary: PacketEvaluation,
    pub certificate: Certificate,
    pub residuals: Vec<Residual>,
}

/// Federer reach of the mesh with the Hessian-derived tangents of its charts.
pub fn mesh_reach(mesh: &PutativeMesh) -> Result<ReachEstimate> {
    let pts = mesh.base_points();
    let tangents = mesh
        .charts
        .iter()
        .map(|c| AffineSubspace::new(c.base_point.clone(), c.tangent_basis()))
        .collect::<Result<Vec<_>>>()?;
    reach_of_points(&pts, &tangents)
}

/// Validates `packet`, extracts the putative manifold from the data and the
/// centers, fits and patches the local sections, and computes the weighted loss.
/// `cloud` is in the packet's (reduced) coordinates; `orth_residual[i]` is the
/// distance of point `i` to the reduced subspace.
pub fn evaluate_packet(
    index: usize,
    origin: Option<PacketOrigin>,
    packet: &CylinderPacket,
    cloud: &PointCloud,
    orth_residual: &[f64],
    basis: &DMatrix<f64>,
    config: &TestConfig,
) -> std::result::Result<EvaluatedPacket, PacketEvaluation> {
    let reject = |v: Option<String>, e: Option<String>| {
        PacketEvaluation::rejected(index, origin.clone(), packet.len(), v, e)
    };
    if let Err(e) = packet.integrity() {
        return Err(reject(None, Some(e)));
    }
    let limit = config.c * max_cylinders(config.volume, packet.d(), packet.tau_bar());
    if packet.len() as f64 > limit {
        return Err(reject(
            None,
            Some(format!(
                "{} cylinders exceed the volume limit {limit:.1}",
                packet.len()
            )),
        ));
    }
    let report = validate_packet(
        packet,
        ValidateOptions {
            exempt_boundary: config.exempt_boundary,
        },
    );
    if !report.is_valid() {
        return Err(reject(Some(report.summary()), None));
    }
    let validation = Some(report.summary());
    match evaluate_valid(
        index,
        origin.clone(),
        packet,
        cloud,
        orth_residual,
        basis,
        config,
    ) {
        Ok(mut e) => {
            e.summary.validation = validation;
            Ok(e)
        }
        Err(err) => Err(reject(validation, Some(err.to_string()))),
    }
}

fn evaluate_valid(
    index: usize,
    origin: Option<PacketOrigin>,
    packet: &CylinderPacket,
    cloud: &PointCloud,
    orth_residual: &[f64],
    basis: &DMatrix<f64>,
    config: &TestConfig,
) -> Result<EvaluatedPacket> {
    if orth_residual.len() != cloud.len() {
        return Err(Error::DimensionMismatch {
            expected: cloud.len(),
            got: orth_residual.len(),
        });
    }
    let cfg = config.asdf_config();
    let mut seeds = cloud.points().to_vec();
    seeds.extend(packet.centers());
    let mesh = extract_putative_manifold(packet, &PointCloud::new(seeds)?, &cfg)?;
    let tube = 2.0 * packet.tau_bar();
    let decomposed: Vec<Option<(BundleChart, DVector<f64>)>> = cloud
        .points()
        .par_iter()
        .map(|z| {
            bundle_coordinates(packet, z, &cfg)
                .ok()
                .filter(|(_, v)| v.norm() <= tube)
        })
        .collect();
    let data: Vec<BundlePoint> = decomposed
        .iter()
        .zip(cloud.weights())
        .filter_map(|(d, w)| {
            d.as_ref().map(|(c, v)| BundlePoint {
                base: c.base_point.clone(),
                fiber: v.clone(),
                weight: *w,
            })
        })
        .collect();
    let sections = SectionModel::fit(
        packet,
        &data,
        config.eps_bar,
        &config.solver_options(packet.len()),
    )?;
    let residuals: Vec<Residual> = decomposed
        .par_iter()
        .enumerate()
        .map(|(i, dec)| {
            let z = cloud.point(i);
            let inside = dec.as_ref().and_then(|(chart, v)| {
                global_section(packet, &sections, chart)
                    .ok()
                    .map(|s| (v - s).norm())
            });
            let (r, in_tube) = match inside {
                Some(r) => (r, true),
                None => {
                    let (_, dist) = mesh.nearest(z).expect("mesh is nonempty");
                    (config.out_of_tube_factor * dist, false)
                }
            };
            Residual {
                index: i,
                residual: r.hypot(orth_residual[i]),
                in_tube,
                weight: cloud.weights()[i],
            }
        })
        .collect();
    let (mut lin, mut lout, mut nin, mut nout) = (0.0, 0.0, 0, 0);
    for r in &residuals {
        let c = r.weight * r.residual * r.residual;
        if r.in_tube {
            lin += c;
            nin += 1;
        } else {
            lout += c;
            nout += 1;
        }
    }
    let reach = mesh_reach(&mesh)?;
    let summary = PacketEvaluation {
        index,
        origin: origin.clone(),
        cylinders: packet.len(),
        valid: true,
        validation: None,
        error: None,
        loss: lin + lout,
        in_tube_loss: lin,
        out_tube_loss: lout,
        in_tube_count: nin,
        out_tube_count: nout,
        mesh_size: mesh.len(),
        active_sections: sections.active(),
        max_c2_proxy: sections.max_c2_proxy(),
    };
    let certificate = Certificate {
        packet_index: index,
        origin,
        packet: packet.clone(),
        sections,
        mesh,
        mesh_reach: reach,
        basis: basis.clone(),
    };
    Ok(EvaluatedPacket {
        summary,
        certificate,
        residuals,
    })
}
