use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, AffineSubspace, PointCloud};
use crate::linalg::{self, Rng};

/// Rigid motion `o(w) = R w + x` carrying the standard (d, n-d) cylinder of
/// half-width `scale` onto `cyl_i`. The first `d` columns of `R` span the central
/// cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub rotation: DMatrix<f64>,
    pub center: DVector<f64>,
    pub scale: f64,
    pub d: usize,
}

impl Cylinder {
    pub fn new(rotation: DMatrix<f64>, center: DVector<f64>, scale: f64, d: usize) -> Result<Self> {
        let c = Self {
            rotation,
            center,
            scale,
            d,
        };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        let n = self.center.len();
        if self.rotation.nrows() != n || self.rotation.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.rotation.nrows(),
            });
        }
        if self.d > n {
            return Err(Error::InvalidParameter(
                "d exceeds ambient dimension".into(),
            ));
        }
        if !(self.scale > 0.0) {
            return Err(Error::InvalidParameter(
                "cylinder scale must be positive".into(),
            ));
        }
        if linalg::orthogonality_defect(&self.rotation) > 1e-10 {
            return Err(Error::InvalidParameter("rotation is not orthogonal".into()));
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(
                "rotation determinant is not +1".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }

    /// `o^{-1}(z) = R^T (z - x)`.
    pub fn to_local(&self, z: &DVector<f64>) -> DVector<f64> {
        self.rotation.tr_mul(&(z - &self.center))
    }

    pub fn tangent(&self) -> DMatrix<f64> {
        self.rotation.columns(0, self.d).into_owned()
    }

    pub fn normal(&self) -> DMatrix<f64> {
        self.rotation
            .columns(self.d, self.n() - self.d)
            .into_owned()
    }

    /// Split of the local coordinates into (tangential, normal) norms.
    pub fn local_norms(&self, z: &DVector<f64>) -> (f64, f64) {
        let w = self.to_local(z);
        (
            w.rows(0, self.d).norm(),
            w.rows(self.d, self.n() - self.d).norm(),
        )
    }

    /// Membership in the closed cylinder of half-width `factor * scale`.
    pub fn contains(&self, z: &DVector<f64>, factor: f64, slack: f64) -> bool {
        let r = factor * self.scale;
        let r2 = r + slack;
        if (z - &self.center).norm_squared() > 2.0 * r2 * r2 {
            return false;
        }
        let (a, b) = self.local_norms(z);
        a <= r2 && b <= r2
    }
}

/// Constants used by [`validate_packet`]: the bound on `||Id - U||` between
/// neighboring cross-sections and the factor `C` in the normal-offset bound
/// `C tau_bar^2 / tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConstants {
    pub c12: f64,
    pub big_c: f64,
}

impl AlignmentConstants {
    /// Defaults scaled to the packet ratio `cbar12 = tau_bar / tau`: neighbors
    /// within `4 tau_bar` on a manifold of reach `tau` turn by at most about
    /// `4 cbar12` radians and sit at normal offset at most `8 tau_bar^2 / tau`.
    pub fn for_ratio(cbar12: f64) -> Self {
        Self {
            c12: 6.0 * cbar12,
            big_c: 10.0,
        }
    }
}

/// Congruent cylinders sharing `(n, d, tau_bar)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderPacket {
    cylinders: Vec<Cylinder>,
    tau: f64,
    tau_bar: f64,
    d: usize,
    n: usize,
    pub alignment: AlignmentConstants,
}

impl CylinderPacket {
    pub fn new(cylinders: Vec<Cylinder>, tau: f64, alignment: AlignmentConstants) -> Result<Self> {
        let p = Self::new_unchecked(cylinders, tau, alignment)?;
        p.integrity().map_err(Error::InvalidParameter)?;
        Ok(p)
    }

    /// Builds a packet checking only shapes; [`CylinderPacket::integrity`] reports
    /// the remaining invariants. Used when reloading certificates for verification.
    pub fn new_unchecked(
        cylinders: Vec<Cylinder>,
        tau: f64,
        alignment: AlignmentConstants,
    ) -> Result<Self> {
        let first = cylinders
            .first()
            .ok_or(Error::EmptyInput("cylinder packet"))?;
        let (n, d, tau_bar) = (first.n(), first.d, first.scale);
        for c in &cylinders {
            if c.n() != n
                || c.d != d
                || c.scale != tau_bar
                || c.rotation.nrows() != n
                || c.rotation.ncols() != n
            {
                return Err(Error::InvalidParameter(
                    "cylinders do not share (n, d, tau_bar)".into(),
                ));
            }
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        Ok(Self {
            cylinders,
            tau,
            tau_bar,
            d,
            n,
            alignment,
        })
    }

    /// `Err(description)` if some rotation is not proper orthogonal or some center
    /// lies outside the unit ball by more than `tau_bar`.
    pub fn integrity(&self) -> std::result::Result<(), String> {
        for (i, c) in self.cylinders.iter().enumerate() {
            c.check().map_err(|e| format!("cylinder {i}: {e}"))?;
            if c.center.norm() > 1.0 + self.tau_bar + 1e-9 {
                return Err(format!("cylinder {i}: center outside the unit ball"));
            }
        }
        Ok(())
    }

    pub fn cylinders(&self) -> &[Cylinder] {
        &self.cylinders
    }

    pub fn len(&self) -> usize {
        self.cylinders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau_bar(&self) -> f64 {
        self.tau_bar
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn centers(&self) -> Vec<DVector<f64>> {
        self.cylinders.iter().map(|c| c.center.clone()).collect()
    }

    /// Same packet with cylinder `i` replaced.
    pub fn with_cylinder(&self, i: usize, c: Cylinder) -> Result<Self> {
        let mut cyl = self.cylinders.clone();
        cyl[i] = c;
        Self::new_unchecked(cyl, self.tau, self.alignment)
    }

    /// Packet without the listed cylinders.
    pub fn without(&self, remove: &[usize]) -> Result<Self> {
        let cyl = self
            .cylinders
            .iter()
            .enumerate()
            .filter(|(i, _)| !remove.contains(i))
            .map(|(_, c)| c.clone())
            .collect();
        Self::new_unchecked(cyl, self.tau, self.alignment)
    }

    /// Admissible perturbation: every center moves by less than `center_frac * tau_bar`
    /// and every frame is composed with a rotation `U` with
    /// `||Id - U|| < rot_c * tau_bar^2 / tau`.
    pub fn perturbed(&self, center_frac: f64, rot_c: f64, rng: &mut Rng) -> Result<Self> {
        let n = self.n;
        let max_shift = center_frac * self.tau_bar;
        let max_rot = rot_c * self.tau_bar * self.tau_bar / self.tau;
        let cyl = self
            .cylinders
            .iter()
            .map(|c| {
                let dir = linalg::random_frame(n, 1, rng).column(0).into_owned();
                let center = &c.center + dir * (max_shift * rng.random::<f64>());
                let mut a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
                a = &a - a.transpose();
                let norm = linalg::op_norm(&a);
                // ||Id - exp(A)|| = 2 sin(|A|/2) <= |A|.
                let target = 0.99 * max_rot * rng.random::<f64>();
                if norm > 0.0 {
                    a *= target / norm;
                }
                let rotation = linalg::expm_skew(&a) * &c.rotation;
                Cylinder {
                    rotation,
                    center,
                    scale: c.scale,
                    d: c.d,
                }
            })
            .collect();
        Self::new_unchecked(cyl, self.tau, self.alignment)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cylinders: Vec<CylinderJson> = self
            .cylinders
            .iter()
            .map(|c| CylinderJson {
                center: c.center.iter().copied().collect(),
                rotation: (0..self.n)
                    .flat_map(|i| (0..self.n).map(move |j| (i, j)))
                    .map(|(i, j)| c.rotation[(i, j)])
                    .collect(),
            })
            .collect();
        serde_json::to_value(PacketJson {
            tau: self.tau,
            tau_bar: self.tau_bar,
            d: self.d,
            n: self.n,
            alignment: self.alignment,
            cylinders,
        })
        .expect("packet serializes")
    }

    /// Parses the JSON form, checking shapes only.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let p: PacketJson = serde_json::from_value(v.clone())?;
        let cyl = p
            .cylinders
            .into_iter()
            .map(|c| {
                if c.center.len() != p.n || c.rotation.len() != p.n * p.n {
                    return Err(Error::Parse("cylinder has wrong shape".into()));
                }
                Ok(Cylinder {
                    rotation: DMatrix::from_row_slice(p.n, p.n, &c.rotation),
                    center: DVector::from_vec(c.center),
                    scale: p.tau_bar,
                    d: p.d,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new_unchecked(cyl, p.tau, p.alignment)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CylinderJson {
    center: Vec<f64>,
    rotation: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PacketJson {
    tau: f64,
    tau_bar: f64,
    d: usize,
    n: usize,
    alignment: AlignmentConstants,
    cylinders: Vec<CylinderJson>,
}

/// Cylinders centered on a greedy `tau_bar / 2` net of `sample`, each cross-section
/// aligned with the tangent supplied for its center. `tau_bar = cbar12 * tau`.
pub fn ideal_packet(
    sample: &PointCloud,
    tangents: &[AffineSubspace],
    tau: f64,
    cbar12: f64,
) -> Result<CylinderPacket> {
    if tangents.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: tangents.len(),
        });
    }
    let tau_bar = cbar12 * tau;
    let net = geometry::greedy_net(sample, tau_bar / 2.0)?;
    let d = tangents[net[0]].dim();
    let cyl = net
        .iter()
        .map(|&i| {
            if tangents[i].dim() != d {
                return Err(Error::InvalidParameter("tangent dimensions differ".into()));
            }
            Cylinder::new(
                linalg::rotation_from_tangent(tangents[i].basis()),
                sample.point(i).clone(),
                tau_bar,
                d,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    CylinderPacket::new_unchecked(cyl, tau, AlignmentConstants::for_ratio(cbar12))
}

/// [`ideal_packet`] with tangents estimated by local PCA at the net points only.
/// The PCA radius starts at `radius` and doubles (up to four times) when a
/// neighborhood is too small.
pub fn ideal_packet_pca(
    sample: &PointCloud,
    d: usize,
    tau: f64,
    cbar12: f64,
    radius: f64,
) -> Result<CylinderPacket> {
    let tau_bar = cbar12 * tau;
    let net = geometry::greedy_net(sample, tau_bar / 2.0)?;
    let cyl = net
        .iter()
        .map(|&i| {
            let mut r = radius;
            let mut last = Error::DegenerateTangent;
            for _ in 0..5 {
                match geometry::estimate_tangent(sample, i, r, d) {
                    Ok(t) => {
                        return Cylinder::new(
                            linalg::rotation_from_tangent(t.basis()),
                            sample.point(i).clone(),
                            tau_bar,
                            d,
                        )
                    }
                    Err(e) => last = e,
                }
                r *= 2.0;
            }
            Err(last)
        })
        .collect::<Result<Vec<_>>>()?;
    CylinderPacket::new_unchecked(cyl, tau, AlignmentConstants::for_ratio(cbar12))
}

/// Outcome of one packet condition: pass flag, worst margin (negative on failure)
/// and the number of failing cylinders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub passed: bool,
    pub worst_margin: f64,
    pub failures: usize,
}

impl ConditionResult {
    fn new() -> Self {
        Self {
            passed: true,
            worst_margin: f64::INFINITY,
            failures: 0,
        }
    }

    fn record(&mut self, margin: f64) -> bool {
        self.worst_margin = self.worst_margin.min(margin);
        if margin < 0.0 {
            self.passed = false;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    /// Skip the coverage condition at cylinders with some direction `u` in which no
    /// neighbor projection reaches `2 tau_bar` (the edge of a manifold with boundary).
    pub exempt_boundary: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            exempt_boundary: false,
        }
    }
}

/// Per-condition results of [`validate_packet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// (1) neighbors are translates after a proper rotation: largest principal
    /// angle stays below a right angle.
    pub alignment: ConditionResult,
    /// (2) `||Id - U|| <= c12`.
    pub rotation: ConditionResult,
    /// (3) normal offset `<= C tau_bar^2 / tau`.
    pub offset: ConditionResult,
    /// (4) translated bases cover `B_d(0, 3 tau_bar)`.
    pub coverage: ConditionResult,
    pub boundary_cylinders: usize,
    pub max_rotation_defect: f64,
    /// Cylinders that failed at least one condition.
    pub failing: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.alignment.passed && self.rotation.passed && self.offset.passed && self.coverage.passed
    }

    pub fn summary(&self) -> String {
        let f = |c: &ConditionResult| {
            if c.passed {
                "pass".to_string()
            } else {
                format!("FAIL x{} ({:.3e})", c.failures, c.worst_margin)
            }
        };
        format!(
            "alignment {}, rotation {}, offset {}, coverage {}",
            f(&self.alignment),
            f(&self.rotation),
            f(&self.offset),
            f(&self.coverage)
        )
    }
}

fn test_directions(d: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::new();
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut v = DVector::zeros(d);
            v[k] = s;
            dirs.push(v);
        }
    }
    if d >= 2 {
        let mut r = linalg::rng(0x5eed);
        for _ in 0..8 * d {
            dirs.push(linalg::random_frame(d, 1, &mut r).column(0).into_owned());
        }
    }
    dirs
}

/// Checks the four packet conditions for every cylinder against the cylinders
/// `j` whose centers satisfy `|Pi_d o_i^{-1} x_j| < 4 tau_bar` and
/// `|Pi_{n-d} o_i^{-1} x_j| < 4 tau_bar`.
pub fn validate_packet(packet: &CylinderPacket, opts: ValidateOptions) -> ValidationReport {
    let tb = packet.tau_bar;
    let d = packet.d;
    let n = packet.n;
    let offset_bound = packet.alignment.big_c * tb * tb / packet.tau;
    let mut alignment = ConditionResult::new();
    let mut rotation = ConditionResult::new();
    let mut offset = ConditionResult::new();
    let mut coverage = ConditionResult::new();
    let mut boundary = 0;
    let mut max_defect: f64 = 0.0;
    let mut failing = Vec::new();
    let dirs = test_directions(d);
    let step = tb / 20.0;
    let steps = 60i64;
    for (i, ci) in packet.cylinders.iter().enumerate() {
        let ti = ci.tangent();
        let mut fail = [false; 4];
        let mut proj: Vec<DVector<f64>> = vec![DVector::zeros(d)];
        for (j, cj) in packet.cylinders.iter().enumerate() {
            if j == i {
                continue;
            }
            let w = ci.to_local(&cj.center);
            let a = w.rows(0, d).into_owned();
            let b = w.rows(d, n - d).norm();
            if a.norm() >= 4.0 * tb || b >= 4.0 * tb {
                continue;
            }
            let angles = linalg::principal_angles(&ti, &cj.tangent());
            let theta = angles.last().copied().unwrap_or(0.0);
            let defect = 2.0 * (theta / 2.0).sin();
            max_defect = max_defect.max(defect);
            fail[0] |= alignment.record(std::f64::consts::FRAC_PI_2 - 1e-9 - theta);
            fail[1] |= rotation.record(packet.alignment.c12 - defect);
            fail[2] |= offset.record(offset_bound - b);
            proj.push(a);
        }
        let is_boundary = d > 0
            && dirs
                .iter()
                .any(|u| !proj.iter().any(|p| p.dot(u) >= 2.0 * tb - 1e-12));
        if is_boundary {
            boundary += 1;
        }
        if !(opts.exempt_boundary && is_boundary) && d > 0 {
            let flat: Vec<f64> = proj.iter().flat_map(|p| p.iter().copied()).collect();
            let m = proj.len();
            let dist2 = |k: usize, g: &[f64]| -> f64 {
                (0..d).map(|a| (flat[k * d + a] - g[a]).powi(2)).sum()
            };
            let mut worst = f64::INFINITY;
            let mut last = 0usize;
            let mut idx = vec![-steps; d];
            let mut g = vec![0.0; d];
            let r2 = (3.0 * tb + 1e-12).powi(2);
            'grid: loop {
                for a in 0..d {
                    g[a] = idx[a] as f64 * step;
                }
                if g.iter().map(|v| v * v).sum::<f64>() <= r2 {
                    // Only a nearer witness than the current worst can change the result.
                    let enough = (tb + 1e-12 - worst).max(0.0).powi(2);
                    let mut best = dist2(last, &g);
                    if !(best <= enough) {
                        for k in 0..m {
                            let e = dist2(k, &g);
                            if e < best {
                                best = e;
                                last = k;
                                if best <= enough {
                                    break;
                                }
                            }
                        }
                    }
                    worst = worst.min(tb + 1e-12 - best.sqrt());
                }
                for k in 0..d {
                    idx[k] += 1;
                    if idx[k] <= steps {
                        continue 'grid;
                    }
                    idx[k] = -steps;
                }
                break;
            }
            fail[3] |= coverage.record(worst);
        }
        for (k, f) in fail.iter().enumerate() {
            if *f {
                match k {
                    0 => alignment.failures += 1,
                    1 => rotation.failures += 1,
                    2 => offset.failures += 1,
                    _ => coverage.failures += 1,
                }
            }
        }
        if fail.iter().any(|f| *f) {
            failing.push(i);
        }
    }
    ValidationReport {
        alignment,
        rotation,
        offset,
        coverage,
        boundary_cylinders: boundary,
        max_rotation_defect: max_defect,
        failing,
    }
}
