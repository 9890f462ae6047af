//! Synthetic FOD fields with known geometry plus matching seed and inclusion
//! masks. These phantoms are the ground truth behind the tracking tests.
//!
//! Each bundle shape implements [`FiberGeometry`]; shapes are registered by
//! name and selected at runtime (`straight`, `arc`, `crossing`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fod::FodImage;
use crate::geometry::{sh_basis, subdivide_icosahedron, Affine, ShBasis, Vec3};
use crate::roi::{BinaryMask, RoiSet};

/// Parameters of a synthetic phantom volume.
#[derive(Debug, Clone)]
pub struct PhantomSpec {
    /// Registered geometry name: `straight`, `arc`, or `crossing`.
    pub kind: String,
    pub volume_dims: (usize, usize, usize),
    pub voxel_size: f64,
    pub bundle_radius: f64,
    /// Radius of the bent bundle's center circle (arc only).
    pub arc_radius: f64,
    /// Concentration of the axial kernel exp(kappa ((u.f)^2 - 1)).
    pub kappa: f64,
    pub lmax: u32,
    pub peak_amplitude: f64,
}

impl PhantomSpec {
    pub fn straight() -> Self {
        PhantomSpec {
            kind: "straight".into(),
            volume_dims: (20, 40, 20),
            voxel_size: 1.0,
            bundle_radius: 4.0,
            arc_radius: 0.0,
            kappa: 20.0,
            lmax: 8,
            peak_amplitude: 0.5,
        }
    }

    pub fn arc() -> Self {
        PhantomSpec {
            kind: "arc".into(),
            volume_dims: (32, 20, 10),
            voxel_size: 1.0,
            bundle_radius: 2.0,
            arc_radius: 10.0,
            kappa: 20.0,
            lmax: 8,
            peak_amplitude: 0.5,
        }
    }

    pub fn crossing() -> Self {
        PhantomSpec {
            kind: "crossing".into(),
            volume_dims: (40, 40, 10),
            voxel_size: 1.0,
            bundle_radius: 3.0,
            arc_radius: 0.0,
            kappa: 20.0,
            lmax: 8,
            peak_amplitude: 0.5,
        }
    }

    /// World extent of the volume per axis.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.volume_dims.0 as f64 * self.voxel_size,
            self.volume_dims.1 as f64 * self.voxel_size,
            self.volume_dims.2 as f64 * self.voxel_size,
        ]
    }
}

/// A bundle shape: ground-truth fiber directions plus the seed and end-slab
/// regions derived from it.
pub trait FiberGeometry: Send + Sync {
    /// Fiber directions at a world position: zero, one, or two unit vectors.
    fn directions_at(&self, pos: Vec3) -> Vec<Vec3>;
    /// Central cross-section slab of the bundle (seeding region).
    fn in_seed_slab(&self, pos: Vec3) -> bool;
    /// Inclusion slab at the first bundle end.
    fn in_end_slab_a(&self, pos: Vec3) -> bool;
    /// Inclusion slab at the second bundle end.
    fn in_end_slab_b(&self, pos: Vec3) -> bool;
}

type GeometryBuilder = fn(&PhantomSpec) -> Result<Box<dyn FiberGeometry>>;

/// Registered geometry kinds, looked up by name.
pub fn registry() -> &'static [(&'static str, GeometryBuilder)] {
    &[
        ("straight", StraightBundle::build),
        ("arc", ArcBundle::build),
        ("crossing", CrossingBundles::build),
    ]
}

pub fn kind_names() -> Vec<&'static str> {
    registry().iter().map(|(name, _)| *name).collect()
}

/// Build the geometry named by `spec.kind`, validating that it fits the
/// volume.
pub fn geometry_for(spec: &PhantomSpec) -> Result<Box<dyn FiberGeometry>> {
    registry()
        .iter()
        .find(|(name, _)| *name == spec.kind)
        .map(|(_, build)| build(spec))
        .unwrap_or_else(|| {
            Err(Error::parameter(format!(
                "unknown phantom kind '{}' (known: {})",
                spec.kind,
                kind_names().join(", ")
            )))
        })
}

/// Ground-truth fiber directions at a position for the spec's geometry.
pub fn fiber_directions_at(spec: &PhantomSpec, pos: Vec3) -> Result<Vec<Vec3>> {
    Ok(geometry_for(spec)?.directions_at(pos))
}

/// Tube along +y through the volume center.
struct StraightBundle {
    center_x: f64,
    center_z: f64,
    center_y: f64,
    extent_y: f64,
    radius: f64,
    voxel: f64,
}

impl StraightBundle {
    fn build(spec: &PhantomSpec) -> Result<Box<dyn FiberGeometry>> {
        let [ex, ey, ez] = spec.extent();
        let need = spec.bundle_radius + spec.voxel_size;
        if ex / 2.0 < need || ez / 2.0 < need {
            return Err(Error::parameter(format!(
                "straight phantom: cross-section needs half-extent >= {need} mm, \
                 volume is {ex} x {ez} mm"
            )));
        }
        if spec.volume_dims.1 < 7 {
            return Err(Error::parameter(
                "straight phantom: need at least 7 voxels along the bundle",
            ));
        }
        Ok(Box::new(StraightBundle {
            center_x: ex / 2.0,
            center_z: ez / 2.0,
            center_y: ey / 2.0,
            extent_y: ey,
            radius: spec.bundle_radius,
            voxel: spec.voxel_size,
        }))
    }

    fn in_tube(&self, pos: Vec3) -> bool {
        let dx = pos.x - self.center_x;
        let dz = pos.z - self.center_z;
        (dx * dx + dz * dz).sqrt() <= self.radius
    }
}

impl FiberGeometry for StraightBundle {
    fn directions_at(&self, pos: Vec3) -> Vec<Vec3> {
        if self.in_tube(pos) {
            vec![Vec3::new(0.0, 1.0, 0.0)]
        } else {
            Vec::new()
        }
    }

    fn in_seed_slab(&self, pos: Vec3) -> bool {
        self.in_tube(pos) && (pos.y - self.center_y).abs() <= 0.5 * self.voxel
    }

    fn in_end_slab_a(&self, pos: Vec3) -> bool {
        self.in_tube(pos) && pos.y >= self.voxel && pos.y <= 2.0 * self.voxel
    }

    fn in_end_slab_b(&self, pos: Vec3) -> bool {
        self.in_tube(pos)
            && pos.y >= self.extent_y - 2.0 * self.voxel
            && pos.y <= self.extent_y - self.voxel
    }
}

/// Half-circle bundle bent in the xy-plane.
struct ArcBundle {
    center: Vec3,
    arc_radius: f64,
    bundle_radius: f64,
    /// Angular half-width of seed/end windows (one voxel of arc length).
    window: f64,
}

impl ArcBundle {
    fn build(spec: &PhantomSpec) -> Result<Box<dyn FiberGeometry>> {
        if spec.arc_radius <= spec.bundle_radius {
            return Err(Error::parameter(format!(
                "arc phantom: arc_radius ({}) must exceed bundle_radius ({})",
                spec.arc_radius, spec.bundle_radius
            )));
        }
        let [ex, ey, ez] = spec.extent();
        let (r, br, v) = (spec.arc_radius, spec.bundle_radius, spec.voxel_size);
        let center_y = br + 2.0 * v;
        if ex < 2.0 * (r + br + v) || ey < center_y + r + br + v || ez / 2.0 < br + v {
            return Err(Error::parameter(format!(
                "arc phantom: geometry (arc_radius {r}, bundle_radius {br}) does not \
                 fit volume extent {ex} x {ey} x {ez} mm"
            )));
        }
        Ok(Box::new(ArcBundle {
            center: Vec3::new(ex / 2.0, center_y, ez / 2.0),
            arc_radius: r,
            bundle_radius: br,
            window: v / r,
        }))
    }

    /// Angle of `pos` around the circle center, and distance to the arc.
    fn polar(&self, pos: Vec3) -> (f64, f64) {
        let dx = pos.x - self.center.x;
        let dy = pos.y - self.center.y;
        let rho = (dx * dx + dy * dy).sqrt();
        let phi = dy.atan2(dx);
        let dz = pos.z - self.center.z;
        let dist = ((rho - self.arc_radius).powi(2) + dz * dz).sqrt();
        (phi, dist)
    }

    fn in_tube(&self, pos: Vec3) -> (bool, f64) {
        let (phi, dist) = self.polar(pos);
        (
            (0.0..=std::f64::consts::PI).contains(&phi) && dist <= self.bundle_radius,
            phi,
        )
    }
}

impl FiberGeometry for ArcBundle {
    fn directions_at(&self, pos: Vec3) -> Vec<Vec3> {
        let (inside, phi) = self.in_tube(pos);
        if inside {
            vec![Vec3::new(-phi.sin(), phi.cos(), 0.0)]
        } else {
            Vec::new()
        }
    }

    fn in_seed_slab(&self, pos: Vec3) -> bool {
        let (inside, phi) = self.in_tube(pos);
        inside && (phi - std::f64::consts::FRAC_PI_2).abs() <= 0.5 * self.window
    }

    fn in_end_slab_a(&self, pos: Vec3) -> bool {
        let (inside, phi) = self.in_tube(pos);
        inside && phi <= self.window
    }

    fn in_end_slab_b(&self, pos: Vec3) -> bool {
        let (inside, phi) = self.in_tube(pos);
        inside && phi >= std::f64::consts::PI - self.window
    }
}

/// Two straight tubes crossing at the volume center: one along +y, one
/// along +x. Seeding and inclusion follow the +y tube.
struct CrossingBundles {
    center: Vec3,
    extent_y: f64,
    radius: f64,
    voxel: f64,
}

impl CrossingBundles {
    fn build(spec: &PhantomSpec) -> Result<Box<dyn FiberGeometry>> {
        let [ex, ey, ez] = spec.extent();
        let need = spec.bundle_radius + spec.voxel_size;
        if ex / 2.0 < need || ey / 2.0 < need || ez / 2.0 < need {
            return Err(Error::parameter(format!(
                "crossing phantom: tubes need half-extent >= {need} mm everywhere"
            )));
        }
        Ok(Box::new(CrossingBundles {
            center: Vec3::new(ex / 2.0, ey / 2.0, ez / 2.0),
            extent_y: ey,
            radius: spec.bundle_radius,
            voxel: spec.voxel_size,
        }))
    }

    fn in_tube_y(&self, pos: Vec3) -> bool {
        let dx = pos.x - self.center.x;
        let dz = pos.z - self.center.z;
        (dx * dx + dz * dz).sqrt() <= self.radius
    }

    fn in_tube_x(&self, pos: Vec3) -> bool {
        let dy = pos.y - self.center.y;
        let dz = pos.z - self.center.z;
        (dy * dy + dz * dz).sqrt() <= self.radius
    }
}

impl FiberGeometry for CrossingBundles {
    fn directions_at(&self, pos: Vec3) -> Vec<Vec3> {
        let mut dirs = Vec::new();
        if self.in_tube_x(pos) {
            dirs.push(Vec3::new(1.0, 0.0, 0.0));
        }
        if self.in_tube_y(pos) {
            dirs.push(Vec3::new(0.0, 1.0, 0.0));
        }
        dirs
    }

    fn in_seed_slab(&self, pos: Vec3) -> bool {
        self.in_tube_y(pos) && (pos.y - self.center.y).abs() <= 0.5 * self.voxel
    }

    fn in_end_slab_a(&self, pos: Vec3) -> bool {
        self.in_tube_y(pos) && pos.y >= self.voxel && pos.y <= 2.0 * self.voxel
    }

    fn in_end_slab_b(&self, pos: Vec3) -> bool {
        self.in_tube_y(pos)
            && pos.y >= self.extent_y - 2.0 * self.voxel
            && pos.y <= self.extent_y - self.voxel
    }
}

/// Axially symmetric kernel amplitude for a set of fiber directions.
fn kernel_amplitude(dirs: &[Vec3], spec: &PhantomSpec, u: Vec3) -> f64 {
    spec.peak_amplitude
        * dirs
            .iter()
            .map(|f| (spec.kappa * (u.dot(*f).powi(2) - 1.0)).exp())
            .sum::<f64>()
}

/// Least-squares projection of the kernel amplitude onto the SH basis,
/// sampled at the sphere vertices.
pub fn project_kernel_to_sh(
    dirs: &[Vec3],
    spec: &PhantomSpec,
    sphere: &crate::geometry::DiscretizedSphere,
    basis: &ShBasis,
) -> Vec<f64> {
    if dirs.is_empty() {
        return vec![0.0; basis.n_columns()];
    }
    let samples: Vec<f64> = sphere
        .vertices
        .iter()
        .map(|&u| kernel_amplitude(dirs, spec, u))
        .collect();
    ShProjector::new(basis).project(&samples)
}

/// Precomputed normal-equation factorization for repeated projections.
struct ShProjector<'a> {
    basis: &'a ShBasis,
    chol: Vec<f64>,
    n: usize,
}

impl<'a> ShProjector<'a> {
    fn new(basis: &'a ShBasis) -> Self {
        let n = basis.n_columns();
        let rows = basis.n_rows();
        let mut gram = vec![0.0; n * n];
        for v in 0..rows {
            let row = basis.row(v);
            for i in 0..n {
                for j in 0..=i {
                    gram[i * n + j] += row[i] * row[j];
                }
            }
        }
        let chol = cholesky_lower(&gram, n).expect("SH normal matrix is positive definite");
        ShProjector { basis, chol, n }
    }

    fn project(&self, samples: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut rhs = vec![0.0; n];
        for (v, &s) in samples.iter().enumerate() {
            if s != 0.0 {
                for (r, b) in rhs.iter_mut().zip(self.basis.row(v)) {
                    *r += b * s;
                }
            }
        }
        // Solve L y = rhs, then L^T x = y.
        for i in 0..n {
            let mut acc = rhs[i];
            for j in 0..i {
                acc -= self.chol[i * n + j] * rhs[j];
            }
            rhs[i] = acc / self.chol[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for j in i + 1..n {
                acc -= self.chol[j * n + i] * rhs[j];
            }
            rhs[i] = acc / self.chol[i * n + i];
        }
        rhs
    }
}

fn cholesky_lower(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l[i * n + j] = acc.sqrt();
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Generate the phantom FOD volume and its ROI set (seed slab plus 'and'
/// inclusion slabs at both bundle ends).
pub fn generate(spec: &PhantomSpec) -> Result<(FodImage, RoiSet)> {
    let geometry = geometry_for(spec)?;
    let sphere = subdivide_icosahedron(4)?;
    let basis = sh_basis(&sphere, spec.lmax)?;
    let projector = ShProjector::new(&basis);
    let (nx, ny, nz) = spec.volume_dims;
    let nc = basis.n_columns();
    let affine = Affine::scaled_identity([spec.voxel_size; 3]);

    let mut coefficients = vec![0.0; nx * ny * nz * nc];
    coefficients
        .par_chunks_mut(ny * nz * nc)
        .enumerate()
        .for_each(|(x, slab)| {
            for y in 0..ny {
                for z in 0..nz {
                    let pos = affine.apply(Vec3::new(x as f64, y as f64, z as f64));
                    let dirs = geometry.directions_at(pos);
                    if dirs.is_empty() {
                        continue;
                    }
                    let samples: Vec<f64> = sphere
                        .vertices
                        .iter()
                        .map(|&u| kernel_amplitude(&dirs, spec, u))
                        .collect();
                    let coeffs = projector.project(&samples);
                    let lo = (y * nz + z) * nc;
                    slab[lo..lo + nc].copy_from_slice(&coeffs);
                }
            }
        });

    let img = FodImage::new((nx, ny, nz, nc), affine.clone(), coefficients)?;

    let mask_from = |pred: &dyn Fn(Vec3) -> bool, name: &str| -> Result<BinaryMask> {
        let mut voxels = vec![false; nx * ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let pos = affine.apply(Vec3::new(x as f64, y as f64, z as f64));
                    voxels[(x * ny + y) * nz + z] = pred(pos);
                }
            }
        }
        let mask = BinaryMask::new((nx, ny, nz), affine.clone(), voxels)?;
        if mask.count_nonzero() == 0 {
            return Err(Error::parameter(format!(
                "phantom {name} region is empty: dims too small for the geometry"
            )));
        }
        Ok(mask)
    };

    let seed = mask_from(&|p| geometry.in_seed_slab(p), "seed")?;
    let end_a = mask_from(&|p| geometry.in_end_slab_a(p), "end slab A")?;
    let end_b = mask_from(&|p| geometry.in_end_slab_b(p), "end slab B")?;

    let mut rois = RoiSet::new(seed);
    rois.include_and = vec![end_a, end_b];
    Ok((img, rois))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fod::{amplitude_table, eval_fod};

    #[test]
    fn straight_directions() {
        let spec = PhantomSpec::straight();
        let [ex, ey, ez] = spec.extent();
        let on_axis = Vec3::new(ex / 2.0, ey / 2.0, ez / 2.0);
        assert_eq!(
            fiber_directions_at(&spec, on_axis).unwrap(),
            vec![Vec3::new(0.0, 1.0, 0.0)]
        );
        let outside = Vec3::new(1.0, ey / 2.0, 1.0);
        assert!(fiber_directions_at(&spec, outside).unwrap().is_empty());
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let mut spec = PhantomSpec::straight();
        spec.kind = "helix".into();
        assert!(geometry_for(&spec).is_err());
    }

    #[test]
    fn arc_tangent_is_orthogonal_to_radial() {
        let spec = PhantomSpec::arc();
        let geometry = geometry_for(&spec).unwrap();
        let [ex, _, ez] = spec.extent();
        let center = Vec3::new(ex / 2.0, spec.bundle_radius + 2.0 * spec.voxel_size, ez / 2.0);
        for phi in [0.2f64, 0.9, 1.57, 2.4, 2.9] {
            let pos = center + Vec3::new(phi.cos(), phi.sin(), 0.0) * spec.arc_radius;
            let dirs = geometry.directions_at(pos);
            assert_eq!(dirs.len(), 1, "phi={phi}");
            let radial = (pos - center).normalized();
            assert!(dirs[0].dot(radial).abs() < 1e-9);
            assert!((dirs[0].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn arc_radius_must_exceed_bundle_radius() {
        let mut spec = PhantomSpec::arc();
        spec.arc_radius = spec.bundle_radius - 0.5;
        assert!(geometry_for(&spec).is_err());
    }

    #[test]
    fn geometry_must_fit_volume() {
        let mut spec = PhantomSpec::arc();
        spec.volume_dims = (12, 8, 4);
        assert!(geometry_for(&spec).is_err());
        let mut spec = PhantomSpec::straight();
        spec.volume_dims = (6, 40, 6);
        assert!(geometry_for(&spec).is_err());
    }

    #[test]
    fn projection_of_no_fibers_is_zero() {
        let spec = PhantomSpec::straight();
        let sphere = subdivide_icosahedron(3).unwrap();
        let basis = sh_basis(&sphere, spec.lmax).unwrap();
        let coeffs = project_kernel_to_sh(&[], &spec, &sphere, &basis);
        assert!(coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn projection_peaks_along_fiber() {
        let spec = PhantomSpec::straight();
        let sphere = subdivide_icosahedron(4).unwrap();
        let basis = sh_basis(&sphere, 8).unwrap();
        let fiber = Vec3::new(0.0, 1.0, 0.0);
        let coeffs = project_kernel_to_sh(&[fiber], &spec, &sphere, &basis);
        let along = basis.amplitude(sphere.nearest_vertex(fiber), &coeffs);
        let ortho1 = basis.amplitude(sphere.nearest_vertex(Vec3::new(1.0, 0.0, 0.0)), &coeffs);
        let ortho2 = basis.amplitude(sphere.nearest_vertex(Vec3::new(0.0, 0.0, 1.0)), &coeffs);
        assert!(along >= ortho1 && along >= ortho2);
        // Peak within 10% of the requested amplitude at kappa=20, lmax=8.
        assert!(
            (along - spec.peak_amplitude).abs() / spec.peak_amplitude < 0.10,
            "peak {along}"
        );
    }

    #[test]
    fn projection_residual_below_five_percent_of_peak() {
        for kappa in [10.0, 20.0, 30.0] {
            let mut spec = PhantomSpec::straight();
            spec.kappa = kappa;
            let sphere = subdivide_icosahedron(4).unwrap();
            let basis = sh_basis(&sphere, 8).unwrap();
            let fiber = Vec3::new(0.0, 1.0, 0.0).normalized();
            let coeffs = project_kernel_to_sh(&[fiber], &spec, &sphere, &basis);
            let mut max_err = 0.0f64;
            let mut max_sample = 0.0f64;
            for (v, &u) in sphere.vertices.iter().enumerate() {
                let sample = kernel_amplitude(&[fiber], &spec, u);
                let recon = basis.amplitude(v, &coeffs);
                max_err = max_err.max((recon - sample).abs());
                max_sample = max_sample.max(sample.abs());
            }
            assert!(
                max_err / max_sample < 0.05,
                "kappa {kappa}: residual {max_err} vs peak {max_sample}"
            );
        }
    }

    #[test]
    fn generated_straight_field_tracks_threshold_geometry() {
        let spec = PhantomSpec::straight();
        let (img, _) = generate(&spec).unwrap();
        let sphere = subdivide_icosahedron(4).unwrap();
        let basis = sh_basis(&sphere, spec.lmax).unwrap();
        let [ex, ey, ez] = spec.extent();
        let axis = Vec3::new(ex / 2.0, ey / 2.0, ez / 2.0);
        let along = eval_fod(&img, &sphere, &basis, axis, Vec3::new(0.0, 1.0, 0.0));
        let ortho = eval_fod(&img, &sphere, &basis, axis, Vec3::new(1.0, 0.0, 0.0));
        assert!(along > 0.1, "on-axis amplitude {along}");
        assert!(ortho < 0.1, "orthogonal amplitude {ortho}");
        // Voxels outside the tube carry all-zero coefficients.
        let outside = img.coeffs_at_voxel(0, 20, 0);
        assert!(outside.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn generated_field_peak_direction_matches_fiber() {
        let spec = PhantomSpec::straight();
        let (img, _) = generate(&spec).unwrap();
        let sphere = subdivide_icosahedron(4).unwrap();
        let basis = sh_basis(&sphere, spec.lmax).unwrap();
        let [ex, ey, ez] = spec.extent();
        // Max inter-vertex spacing bounds the direction error of the argmax.
        let mut max_edge = 0.0f64;
        for v in 0..sphere.len() {
            for &nb in sphere.neighbors(v) {
                let d = sphere.vertices[v]
                    .dot(sphere.vertices[nb as usize])
                    .clamp(-1.0, 1.0)
                    .acos();
                max_edge = max_edge.max(d);
            }
        }
        for pos in [
            Vec3::new(ex / 2.0, ey / 2.0, ez / 2.0),
            Vec3::new(ex / 2.0 + 1.0, 10.0, ez / 2.0),
            Vec3::new(ex / 2.0 - 1.5, 30.0, ez / 2.0 + 1.0),
        ] {
            let table = amplitude_table(&img, &sphere, &basis, pos);
            let argmax = (0..table.len())
                .max_by(|&i, &j| table[i].total_cmp(&table[j]))
                .unwrap();
            let angle_to_fiber = sphere.vertices[argmax]
                .dot(Vec3::new(0.0, 1.0, 0.0))
                .abs()
                .clamp(-1.0, 1.0)
                .acos();
            assert!(
                angle_to_fiber <= max_edge,
                "peak {angle_to_fiber} rad off the fiber"
            );
        }
    }

    #[test]
    fn crossing_field_has_two_local_maxima() {
        let spec = PhantomSpec::crossing();
        let (img, _) = generate(&spec).unwrap();
        let sphere = subdivide_icosahedron(4).unwrap();
        let basis = sh_basis(&sphere, spec.lmax).unwrap();
        let [ex, ey, ez] = spec.extent();
        let overlap = Vec3::new(ex / 2.0, ey / 2.0, ez / 2.0);
        let dirs = fiber_directions_at(&spec, overlap).unwrap();
        assert_eq!(dirs.len(), 2);
        let table = amplitude_table(&img, &sphere, &basis, overlap);
        let mut max_edge = 0.0f64;
        for v in 0..sphere.len() {
            for &nb in sphere.neighbors(v) {
                let d = sphere.vertices[v]
                    .dot(sphere.vertices[nb as usize])
                    .clamp(-1.0, 1.0)
                    .acos();
                max_edge = max_edge.max(d);
            }
        }
        for family in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)] {
            // Local maximum restricted to the hemisphere cone around the
            // family direction (the two lobes are 90 degrees apart).
            let argmax = (0..sphere.len())
                .filter(|&v| sphere.vertices[v].dot(family).abs() > 0.7)
                .max_by(|&i, &j| table[i].total_cmp(&table[j]))
                .unwrap();
            let angle = sphere.vertices[argmax]
                .dot(family)
                .abs()
                .clamp(-1.0, 1.0)
                .acos();
            assert!(angle <= max_edge, "lobe {angle} rad off {family:?}");
            assert!(table[argmax] > 0.1);
        }
    }

    #[test]
    fn generated_masks_are_nonempty_and_disjoint_ends() {
        let spec = PhantomSpec::straight();
        let (_, rois) = generate(&spec).unwrap();
        assert!(rois.seed.count_nonzero() > 0);
        assert_eq!(rois.include_and.len(), 2);
        for mask in &rois.include_and {
            assert!(mask.count_nonzero() > 0);
        }
        // End slabs do not overlap each other or the seed slab.
        let a = &rois.include_and[0];
        let b = &rois.include_and[1];
        for (i, (&va, &vb)) in a.voxels().iter().zip(b.voxels()).enumerate() {
            assert!(!(va && vb), "end slabs overlap at voxel {i}");
            assert!(
                !(va && rois.seed.voxels()[i]) && !(vb && rois.seed.voxels()[i]),
                "end slab touches seed slab at voxel {i}"
            );
        }
    }
}
