//! Image/mask synthesis: two curved, tapered tubes on a noisy background.
//!
//! Each muscle analogue is a canal surface around a cubic centerline through
//! four control points, with a linearly tapering radius (narrow at the
//! inferior end, where the landmark sits). Rasterization tests voxel centers
//! against the scaled distance field `q = dist(p, centerline) / taper(t*)`
//! and picks the radius threshold that hits the requested volume's voxel
//! count exactly, so rasterized volumes match the planted ground truth to
//! within half a voxel.

use super::{derive_seed, PhantomError, SubjectRecord};
use crate::voxgrid::{Dims, Landmark, LandmarkPair, Mask3D, Spacing, Volume3D};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

/// Grid and tube-shape parameters for subject synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomGeometry {
    pub dims: Dims,
    pub spacing: Spacing,
    /// additive Gaussian background noise SD (image units)
    pub noise_sd: f32,
    /// tube interior intensity above the zero background
    pub contrast: f32,
    /// radius ratio at the inferior end relative to the superior end
    pub taper: f64,
    /// tube length as a fraction of the grid's physical z extent
    pub length_frac: f64,
    /// inferior end z position as a fraction of the grid's z extent
    pub start_z_frac: f64,
    /// tube center offset from the grid midplane, fraction of x extent
    pub lateral_offset_frac: f64,
    /// S-curve amplitude of the centerline (mm)
    pub bend_mm: f64,
    /// per-subject control-point jitter (mm)
    pub jitter_mm: f64,
    /// mirror the right tube exactly instead of sampling the left one
    pub symmetric: bool,
}

impl PhantomGeometry {
    /// Grid for desk-scale runs: 64x64x80 voxels at 4x4x6 mm, sized so a
    /// whole muscle analogue fits a 32x32x64 crop about its landmark.
    pub fn desk_scale() -> Self {
        Self {
            dims: Dims::new(64, 64, 80).unwrap(),
            spacing: Spacing::new(4.0, 4.0, 6.0).unwrap(),
            noise_sd: 0.15,
            contrast: 1.0,
            taper: 0.55,
            length_frac: 0.62,
            start_z_frac: 0.15,
            lateral_offset_frac: 0.22,
            bend_mm: 12.0,
            jitter_mm: 3.0,
            symmetric: false,
        }
    }

    /// Grid for full-scale runs: 160x160x224 voxels at 2x2x3 mm, matching
    /// the 96x96x192 crop.
    pub fn paper_scale() -> Self {
        Self {
            dims: Dims::new(160, 160, 224).unwrap(),
            spacing: Spacing::new(2.0, 2.0, 3.0).unwrap(),
            noise_sd: 0.15,
            contrast: 1.0,
            taper: 0.55,
            length_frac: 0.6,
            start_z_frac: 0.15,
            lateral_offset_frac: 0.22,
            bend_mm: 12.0,
            jitter_mm: 3.0,
            symmetric: false,
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        if !(self.taper > 0.0 && self.taper <= 1.0) {
            return Err(PhantomError::InvalidArgument(format!(
                "taper must be in (0, 1], got {}",
                self.taper
            )));
        }
        if !(self.length_frac > 0.0 && self.start_z_frac >= 0.0
            && self.start_z_frac + self.length_frac < 1.0)
        {
            return Err(PhantomError::InvalidArgument(
                "tube must fit inside the grid along z".into(),
            ));
        }
        if self.noise_sd < 0.0 || self.contrast <= 0.0 {
            return Err(PhantomError::InvalidArgument(
                "noise must be non-negative and contrast positive".into(),
            ));
        }
        Ok(())
    }
}

/// Cubic centerline through four control points (Lagrange interpolation at
/// t = 0, 1/3, 2/3, 1).
#[derive(Debug, Clone, Copy)]
struct Centerline {
    points: [[f64; 3]; 4],
}

impl Centerline {
    fn eval(&self, t: f64) -> [f64; 3] {
        // Lagrange basis for nodes 0, 1/3, 2/3, 1
        let l0 = -4.5 * (t - 1.0 / 3.0) * (t - 2.0 / 3.0) * (t - 1.0);
        let l1 = 13.5 * t * (t - 2.0 / 3.0) * (t - 1.0);
        let l2 = -13.5 * t * (t - 1.0 / 3.0) * (t - 1.0);
        let l3 = 4.5 * t * (t - 1.0 / 3.0) * (t - 2.0 / 3.0);
        let mut out = [0.0; 3];
        for a in 0..3 {
            out[a] = l0 * self.points[0][a]
                + l1 * self.points[1][a]
                + l2 * self.points[2][a]
                + l3 * self.points[3][a];
        }
        out
    }

    fn mirrored_x(&self, x_extent: f64) -> Self {
        let mut points = self.points;
        for p in &mut points {
            p[0] = x_extent - p[0];
        }
        Self { points }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Radius profile along the tube, relative to the superior-end radius.
fn taper_profile(taper: f64, t: f64) -> f64 {
    taper + (1.0 - taper) * t
}

const CURVE_SAMPLES: usize = 129;

struct TubeField {
    /// candidate voxels as (scaled distance q, linear index)
    candidates: Vec<(f64, usize)>,
    /// closest-point parameter per candidate (same order)
    curve_len_mm: f64,
}

/// Scaled distance field of one tube over its bounding box.
fn tube_field(
    curve: &Centerline,
    taper: f64,
    r_cap_mm: f64,
    dims: Dims,
    spacing: Spacing,
) -> TubeField {
    let samples: Vec<[f64; 3]> = (0..CURVE_SAMPLES)
        .map(|i| curve.eval(i as f64 / (CURVE_SAMPLES - 1) as f64))
        .collect();
    let mut curve_len = 0.0;
    for w in samples.windows(2) {
        curve_len += dist2(w[0], w[1]).sqrt();
    }

    // bounding box in voxel indices
    let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
    for s in &samples {
        for a in 0..3 {
            lo[a] = lo[a].min(s[a]);
            hi[a] = hi[a].max(s[a]);
        }
    }
    let sp = [spacing.dx, spacing.dy, spacing.dz];
    let nd = [dims.nx, dims.ny, dims.nz];
    let mut ilo = [0usize; 3];
    let mut ihi = [0usize; 3];
    for a in 0..3 {
        ilo[a] = (((lo[a] - r_cap_mm) / sp[a]).floor().max(0.0)) as usize;
        ihi[a] = ((((hi[a] + r_cap_mm) / sp[a]).ceil()) as usize).min(nd[a] - 1);
    }

    let mut candidates = Vec::new();
    let r_cap2 = r_cap_mm * r_cap_mm;
    for k in ilo[2]..=ihi[2] {
        for j in ilo[1]..=ihi[1] {
            for i in ilo[0]..=ihi[0] {
                let p = [i as f64 * sp[0], j as f64 * sp[1], k as f64 * sp[2]];
                // nearest curve sample
                let mut best = 0usize;
                let mut best_d2 = f64::INFINITY;
                for (si, s) in samples.iter().enumerate() {
                    let d2 = dist2(p, *s);
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = si;
                    }
                }
                if best_d2 > r_cap2 * 1.44 {
                    continue;
                }
                // ternary refinement of t around the best sample
                let step = 1.0 / (CURVE_SAMPLES - 1) as f64;
                let mut a = (best as f64 - 1.0).max(0.0) * step;
                let mut b = ((best + 1) as f64).min((CURVE_SAMPLES - 1) as f64) * step;
                for _ in 0..28 {
                    let m1 = a + (b - a) / 3.0;
                    let m2 = b - (b - a) / 3.0;
                    if dist2(p, curve.eval(m1)) < dist2(p, curve.eval(m2)) {
                        b = m2;
                    } else {
                        a = m1;
                    }
                }
                let t_star = 0.5 * (a + b);
                let d = dist2(p, curve.eval(t_star)).sqrt().min(best_d2.sqrt());
                let q = d / taper_profile(taper, t_star);
                if q <= r_cap_mm {
                    candidates.push((q, dims.index(i, j, k)));
                }
            }
        }
    }
    TubeField {
        candidates,
        curve_len_mm: curve_len,
    }
}

/// Pick the radius threshold whose voxel count matches the target volume.
fn rasterize_to_volume(
    field: &mut TubeField,
    target_ml: f64,
    voxel_mm3: f64,
    r_cap_mm: f64,
) -> Result<(Vec<usize>, f64), PhantomError> {
    let n_target = (target_ml * 1000.0 / voxel_mm3).round() as usize;
    if n_target == 0 {
        return Err(PhantomError::Geometry(format!(
            "target volume {target_ml} ml is below one voxel"
        )));
    }
    if n_target > field.candidates.len() {
        return Err(PhantomError::Geometry(format!(
            "requested volume {target_ml} ml unachievable inside the grid \
             ({} candidate voxels for {} required)",
            field.candidates.len(),
            n_target
        )));
    }
    field
        .candidates
        .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let r_chosen = field.candidates[n_target - 1].0;
    // a radius at the cap means the candidate set clipped the tube surface
    if r_chosen > r_cap_mm * 0.98 {
        return Err(PhantomError::Geometry(format!(
            "requested volume {target_ml} ml needs radius {r_chosen:.1} mm, \
             beyond the supported bound"
        )));
    }
    let indices = field.candidates[..n_target]
        .iter()
        .map(|&(_, idx)| idx)
        .collect();
    Ok((indices, r_chosen))
}

/// Render one subject: a noisy two-tube image, its label mask (1 = right,
/// 2 = left), and the landmarks at each tube's inferior end. Deterministic
/// given `seed`.
pub fn synthesize_subject(
    subject: &SubjectRecord,
    geometry: &PhantomGeometry,
    seed: u64,
) -> Result<(Volume3D, Mask3D, LandmarkPair), PhantomError> {
    geometry.validate()?;
    let dims = geometry.dims;
    let sp = geometry.spacing;
    let extent = [
        (dims.nx - 1) as f64 * sp.dx,
        (dims.ny - 1) as f64 * sp.dy,
        (dims.nz - 1) as f64 * sp.dz,
    ];
    let z_total = dims.nz as f64 * sp.dz;
    let length = geometry.length_frac * z_total;
    let z0 = geometry.start_z_frac * z_total;
    let x_mid = extent[0] / 2.0;
    let y_mid = extent[1] / 2.0;
    let offset = geometry.lateral_offset_frac * dims.nx as f64 * sp.dx;

    let mut shape_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 2));
    let mut jitter = |rng: &mut ChaCha8Rng| -> f64 {
        if geometry.jitter_mm > 0.0 {
            rng.random_range(-geometry.jitter_mm..geometry.jitter_mm)
        } else {
            0.0
        }
    };

    // S-curved centerline for the right tube (smaller x)
    let bend = geometry.bend_mm;
    let make_curve = |x_c: f64, rng: &mut ChaCha8Rng, jit: &mut dyn FnMut(&mut ChaCha8Rng) -> f64| {
        let zs = [z0, z0 + length / 3.0, z0 + 2.0 * length / 3.0, z0 + length];
        let xo = [0.0, bend, -bend, 0.0];
        let yo = [0.0, -0.6 * bend, 0.6 * bend, 0.0];
        let mut points = [[0.0; 3]; 4];
        for i in 0..4 {
            points[i] = [
                x_c + xo[i] + jit(rng),
                y_mid + yo[i] + jit(rng),
                zs[i] + if i == 0 || i == 3 { 0.0 } else { jit(rng) },
            ];
        }
        Centerline { points }
    };

    let right_curve = make_curve(x_mid - offset, &mut shape_rng, &mut jitter);
    let left_curve = if geometry.symmetric {
        right_curve.mirrored_x(extent[0])
    } else {
        make_curve(x_mid + offset, &mut shape_rng, &mut jitter)
    };

    // shape factor of the tapered tube: V = pi * r_top^2 * L * f(taper)
    let tf = geometry.taper;
    let shape_factor = (1.0 + tf + tf * tf) / 3.0;
    let r_cap = |target_ml: f64, len_mm: f64| -> f64 {
        let r_est = (target_ml * 1000.0 / (std::f64::consts::PI * len_mm * shape_factor)).sqrt();
        1.6 * r_est + 12.0
    };

    let voxel_mm3 = sp.voxel_mm3();
    let mut mask = Mask3D::empty(dims, sp);

    let right_cap = r_cap(subject.true_right_ml, length);
    let mut right_field = tube_field(&right_curve, tf, right_cap, dims, sp);
    let (right_idx, _) =
        rasterize_to_volume(&mut right_field, subject.true_right_ml, voxel_mm3, right_cap)?;

    let left_cap = r_cap(subject.true_left_ml, length);
    let (left_idx, _) = if geometry.symmetric {
        // mirror the right field exactly so symmetric phantoms are
        // bit-identical under flip
        let mut mirrored = TubeField {
            candidates: right_field
                .candidates
                .iter()
                .map(|&(q, idx)| {
                    let x = idx % dims.nx;
                    let rest = idx / dims.nx;
                    (q, (dims.nx - 1 - x) + dims.nx * rest)
                })
                .collect(),
            curve_len_mm: right_field.curve_len_mm,
        };
        rasterize_to_volume(&mut mirrored, subject.true_left_ml, voxel_mm3, right_cap)?
    } else {
        let mut field = tube_field(&left_curve, tf, left_cap, dims, sp);
        rasterize_to_volume(&mut field, subject.true_left_ml, voxel_mm3, left_cap)?
    };

    {
        let labels = mask.labels_mut();
        for &idx in &right_idx {
            labels[idx] = 1;
        }
        for &idx in &left_idx {
            if labels[idx] != 0 {
                return Err(PhantomError::Geometry(
                    "tube volumes overlap; reduce volumes or widen the lateral offset".into(),
                ));
            }
            labels[idx] = 2;
        }
    }

    // landmarks at the inferior centerline endpoints
    let to_landmark = |p: [f64; 3]| -> Result<Landmark, PhantomError> {
        let x = (p[0] / sp.dx).round();
        let y = (p[1] / sp.dy).round();
        let z = (p[2] / sp.dz).round();
        if x < 0.0
            || y < 0.0
            || z < 0.0
            || x >= dims.nx as f64
            || y >= dims.ny as f64
            || z >= dims.nz as f64
        {
            return Err(PhantomError::Geometry(format!(
                "landmark {p:?} outside the grid"
            )));
        }
        Ok(Landmark {
            x: x as usize,
            y: y as usize,
            z: z as usize,
        })
    };
    let right_lm = to_landmark(right_curve.points[0])?;
    let left_lm = if geometry.symmetric {
        // exact mirror of the right landmark
        Landmark {
            x: dims.nx - 1 - right_lm.x,
            y: right_lm.y,
            z: right_lm.z,
        }
    } else {
        to_landmark(left_curve.points[0])?
    };
    let landmarks = LandmarkPair::new(right_lm, left_lm, dims)
        .map_err(|e| PhantomError::Geometry(e.to_string()))?;

    // image: contrast inside the tubes, seeded Gaussian noise everywhere
    let mut image = Volume3D::filled(dims, sp, 0.0);
    {
        let voxels = image.voxels_mut();
        for (v, &l) in voxels.iter_mut().zip(mask.labels()) {
            if l != 0 {
                *v = geometry.contrast;
            }
        }
        if geometry.noise_sd > 0.0 {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 3));
            let noise = Normal::new(0.0f32, geometry.noise_sd).unwrap();
            for v in voxels.iter_mut() {
                *v += noise.sample(&mut noise_rng);
            }
        }
    }

    Ok((image, mask, landmarks))
}

#[cfg(test)]
mod tests {
    use super::super::{sample_cohort, CohortSpec};
    use super::*;
    use crate::voxgrid::mask_volume_ml;

    fn test_subject(left_ml: f64, right_ml: f64) -> SubjectRecord {
        SubjectRecord {
            id: "t00000".into(),
            sex: super::super::Sex::Male,
            age: 60,
            height_cm: 176.0,
            weight_kg: 84.0,
            bmi: 27.1,
            handedness: super::super::Handedness::Right,
            true_left_ml: left_ml,
            true_right_ml: right_ml,
        }
    }

    #[test]
    fn rasterized_volumes_match_targets() {
        let geo = PhantomGeometry::desk_scale();
        let subject = test_subject(403.6, 410.9);
        let (_, mask, _) = synthesize_subject(&subject, &geo, 99).unwrap();
        let r = mask_volume_ml(&mask, 1).unwrap();
        let l = mask_volume_ml(&mask, 2).unwrap();
        assert!(
            (r - subject.true_right_ml).abs() / subject.true_right_ml < 0.02,
            "right {r} vs {}",
            subject.true_right_ml
        );
        assert!(
            (l - subject.true_left_ml).abs() / subject.true_left_ml < 0.02,
            "left {l} vs {}",
            subject.true_left_ml
        );
    }

    #[test]
    fn labels_only_from_expected_set() {
        let geo = PhantomGeometry::desk_scale();
        let (_, mask, _) = synthesize_subject(&test_subject(270.0, 280.0), &geo, 3).unwrap();
        assert!(mask.labels().iter().all(|&l| l <= 2));
        assert!(mask.labels().iter().any(|&l| l == 1));
        assert!(mask.labels().iter().any(|&l| l == 2));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let geo = PhantomGeometry::desk_scale();
        let s = test_subject(300.0, 310.0);
        let (i1, m1, lm1) = synthesize_subject(&s, &geo, 17).unwrap();
        let (i2, m2, lm2) = synthesize_subject(&s, &geo, 17).unwrap();
        assert_eq!(i1, i2);
        assert_eq!(m1, m2);
        assert_eq!(lm1, lm2);
        let (i3, _, _) = synthesize_subject(&s, &geo, 18).unwrap();
        assert_ne!(i1, i3);
    }

    #[test]
    fn symmetric_mode_mirrors_exactly() {
        let mut geo = PhantomGeometry::desk_scale();
        geo.symmetric = true;
        geo.noise_sd = 0.0;
        let s = test_subject(350.0, 350.0);
        let (image, mask, lm) = synthesize_subject(&s, &geo, 5).unwrap();
        let flipped = mask.flip_x();
        // label identities swap under mirror: right(1) <-> left(2)
        for (&a, &b) in mask.labels().iter().zip(flipped.labels()) {
            let swapped = match b {
                1 => 2,
                2 => 1,
                other => other,
            };
            assert_eq!(a, swapped);
        }
        assert_eq!(image, image.flip_x());
        assert_eq!(lm.left.x, geo.dims.nx - 1 - lm.right.x);
        assert_eq!(lm.left.y, lm.right.y);
        assert_eq!(lm.left.z, lm.right.z);
    }

    #[test]
    fn oversized_volume_is_geometry_error() {
        let geo = PhantomGeometry::desk_scale();
        let s = test_subject(300.0, 50_000.0);
        assert!(matches!(
            synthesize_subject(&s, &geo, 1),
            Err(PhantomError::Geometry(_))
        ));
    }

    #[test]
    fn landmarks_sit_at_tube_inferior_ends() {
        let geo = PhantomGeometry::desk_scale();
        let (_, mask, lm) = synthesize_subject(&test_subject(280.0, 290.0), &geo, 23).unwrap();
        // the landmark z should be at (or just below) the lowest labeled z
        let mut min_z = [usize::MAX; 3];
        for z in 0..geo.dims.nz {
            for y in 0..geo.dims.ny {
                for x in 0..geo.dims.nx {
                    let l = mask.get(x, y, z) as usize;
                    if l > 0 {
                        min_z[l] = min_z[l].min(z);
                    }
                }
            }
        }
        assert!(lm.right.z.abs_diff(min_z[1]) <= 2, "right landmark z");
        assert!(lm.left.z.abs_diff(min_z[2]) <= 2, "left landmark z");
        assert!(lm.right.x < lm.left.x);
    }

    #[test]
    fn cohort_subjects_synthesize_within_tolerance() {
        let geo = PhantomGeometry::desk_scale();
        let cohort = sample_cohort(&CohortSpec::new(6, 31)).unwrap();
        for (i, s) in cohort.iter().enumerate() {
            let (_, mask, _) = synthesize_subject(s, &geo, 1000 + i as u64).unwrap();
            let r = mask_volume_ml(&mask, 1).unwrap();
            let l = mask_volume_ml(&mask, 2).unwrap();
            assert!((r - s.true_right_ml).abs() / s.true_right_ml < 0.02);
            assert!((l - s.true_left_ml).abs() / s.true_left_ml < 0.02);
        }
    }
}
