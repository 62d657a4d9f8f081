//! Dexterity index over a voxelized workspace.
//!
//! For every voxel center the map scores the fraction of sampled end
//! effector orientations the IK solver can realize there, in [0, 1] with 0
//! meaning the point is unreachable outright. Orientation samples come from
//! a Halton-indexed uniform quaternion sequence so the set is identical at
//! every voxel and across runs.

use std::io::Write;
use std::path::Path;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::ik::{solve_ik_chain, IkSettings};
use crate::kinematics::{limms_chain, BaseEnd, JointVector, Pose, SerialChain};
use crate::model::ModuleParams;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("invalid grid spec: {0}")]
    InvalidGridSpec(String),
    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Axis-aligned voxel grid description. The base latch sits at the world
/// origin; voxel `(0,0,0)` is centered at `origin + voxel_size/2` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: (usize, usize, usize),
}

impl GridSpec {
    /// Cube of side `extent` centered on the base.
    pub fn centered_cube(extent: f64, voxel_size: f64) -> Self {
        let n = (extent / voxel_size).round() as usize;
        GridSpec {
            origin: Vector3::new(-extent / 2.0, -extent / 2.0, -extent / 2.0),
            voxel_size,
            dims: (n, n, n),
        }
    }

    pub fn validate(&self) -> Result<(), WorkspaceError> {
        if !(self.voxel_size > 0.0) {
            return Err(WorkspaceError::InvalidGridSpec(format!(
                "voxel_size {} must be > 0",
                self.voxel_size
            )));
        }
        let (nx, ny, nz) = self.dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(WorkspaceError::InvalidGridSpec(format!(
                "dims {:?} must all be nonzero",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                (ix as f64 + 0.5) * self.voxel_size,
                (iy as f64 + 0.5) * self.voxel_size,
                (iz as f64 + 0.5) * self.voxel_size,
            )
    }
}

/// Per-voxel fraction of reachable orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct DexterityGrid {
    pub spec: GridSpec,
    /// Row-major over (ix, iy, iz) with iz fastest.
    pub values: Vec<f64>,
    pub orientation_sample_count: usize,
    pub seed: u64,
}

impl DexterityGrid {
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.spec.dims.1 + iy) * self.spec.dims.2 + iz
    }

    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.index(ix, iy, iz)]
    }

    /// Iterate (ix, iy, iz, center, value).
    pub fn iter_voxels(&self) -> impl Iterator<Item = (usize, usize, usize, Vector3<f64>, f64)> + '_ {
        let (nx, ny, nz) = self.spec.dims;
        (0..nx).flat_map(move |ix| {
            (0..ny).flat_map(move |iy| {
                (0..nz).map(move |iz| {
                    (
                        ix,
                        iy,
                        iz,
                        self.spec.center(ix, iy, iz),
                        self.value(ix, iy, iz),
                    )
                })
            })
        })
    }
}

fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Deterministic low-discrepancy rotations: Halton points in the unit cube
/// mapped through the uniform-quaternion construction.
pub fn orientation_samples(n: usize) -> Vec<Rotation3<f64>> {
    (0..n)
        .map(|k| {
            let u1 = halton(k + 1, 2);
            let u2 = halton(k + 1, 3);
            let u3 = halton(k + 1, 5);
            let a = (1.0 - u1).sqrt();
            let b = u1.sqrt();
            let t1 = 2.0 * std::f64::consts::PI * u2;
            let t2 = 2.0 * std::f64::consts::PI * u3;
            let q = nalgebra::Quaternion::new(
                b * t2.cos(),
                a * t1.sin(),
                a * t1.cos(),
                b * t2.sin(),
            );
            UnitQuaternion::from_quaternion(q).to_rotation_matrix()
        })
        .collect()
}

/// Lighter solver settings for map generation. Every orientation solve is
/// warm-started from the voxel's position-feasible gate solution, so random
/// restarts are disabled: they dominate runtime (a far-off restart descends
/// slowly and burns the whole iteration budget) while adding little recall.
pub fn map_ik_settings() -> IkSettings {
    IkSettings {
        max_iters: 60,
        restarts: 0,
        ..Default::default()
    }
}

fn voxel_seed(seed: u64, ix: usize, iy: usize, iz: usize) -> u64 {
    seed ^ (ix as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((iy as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add((iz as u64).wrapping_mul(0x94D0_49BB_1331_11EB))
}

/// Dexterity map for an arbitrary chain with explicit limits and a known
/// reach bound. Voxels are evaluated independently (rayon) with per-voxel
/// seeds, so the result is identical to sequential evaluation.
pub fn dexterity_map_chain(
    chain: &SerialChain,
    limits: &[(f64, f64); 6],
    reach: f64,
    spec: &GridSpec,
    n_orientations: usize,
    ik_settings: &IkSettings,
    seed: u64,
) -> Result<DexterityGrid, WorkspaceError> {
    spec.validate()?;
    if n_orientations == 0 {
        return Err(WorkspaceError::InvalidGridSpec(
            "n_orientations must be >= 1".into(),
        ));
    }
    let rotations = orientation_samples(n_orientations);
    let voxel_diag = spec.voxel_size * 3f64.sqrt();
    let (nx, ny, nz) = spec.dims;
    let indices: Vec<(usize, usize, usize)> = (0..nx)
        .flat_map(|ix| (0..ny).flat_map(move |iy| (0..nz).map(move |iz| (ix, iy, iz))))
        .collect();
    let values: Vec<f64> = indices
        .par_iter()
        .map(|&(ix, iy, iz)| {
            let center = spec.center(ix, iy, iz);
            if center.norm() > reach + voxel_diag {
                return 0.0;
            }
            let mut settings = ik_settings.clone();
            settings.seed = voxel_seed(seed, ix, iy, iz);
            // Positional pregate: if the voxel center is not reachable at
            // all, no orientation can succeed; one position-only solve is
            // far cheaper than n_orientations failing full solves.
            let mut gate = settings.clone();
            gate.rot_weight = 0.0;
            gate.restarts = gate.restarts.max(4);
            let gate_result = solve_ik_chain(chain, limits, &Pose::new(Rotation3::identity(), center), &gate, None)
                .expect("validated settings");
            if !gate_result.converged {
                return 0.0;
            }
            let mut reached = 0usize;
            let mut warm: Option<JointVector> = Some(gate_result.q);
            for rot in &rotations {
                let target = Pose::new(*rot, center);
                let result =
                    solve_ik_chain(chain, limits, &target, &settings, warm.as_ref())
                        .expect("validated settings");
                if result.converged {
                    reached += 1;
                    warm = Some(result.q);
                }
            }
            reached as f64 / n_orientations as f64
        })
        .collect();
    Ok(DexterityGrid {
        spec: *spec,
        values,
        orientation_sample_count: n_orientations,
        seed,
    })
}

/// Dexterity map for a module anchored at `base`.
pub fn dexterity_map(
    params: &ModuleParams,
    base: BaseEnd,
    spec: &GridSpec,
    n_orientations: usize,
    ik_settings: &IkSettings,
    seed: u64,
) -> Result<DexterityGrid, WorkspaceError> {
    let chain = limms_chain(params, base);
    let reach = chain.max_reach(&params.joint_limits, 9);
    dexterity_map_chain(
        &chain,
        &params.joint_limits,
        reach,
        spec,
        n_orientations,
        ik_settings,
        seed,
    )
}

/// Radius of the center-axis cylinder used for region statistics, m.
pub const CENTER_AXIS_RADIUS: f64 = 0.1;
/// Distance from the base beyond which a voxel counts as outer shell, m.
pub const OUTER_SHELL_RADIUS: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    CenterAxis,
    OuterShell,
    Bulk,
}

pub fn classify(center: &Vector3<f64>) -> Region {
    let radial = (center.x * center.x + center.y * center.y).sqrt();
    if radial <= CENTER_AXIS_RADIUS {
        Region::CenterAxis
    } else if center.norm() >= OUTER_SHELL_RADIUS {
        Region::OuterShell
    } else {
        Region::Bulk
    }
}

/// Per-region means and the voxelwise difference of two grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GridComparison {
    pub center_axis_mean: (f64, f64),
    pub outer_shell_mean: (f64, f64),
    pub bulk_mean: (f64, f64),
    pub difference: Vec<f64>,
}

pub fn compare_grids(a: &DexterityGrid, b: &DexterityGrid) -> Result<GridComparison, WorkspaceError> {
    if a.spec != b.spec {
        return Err(WorkspaceError::GeometryMismatch(format!(
            "{:?} vs {:?}",
            a.spec, b.spec
        )));
    }
    let mut sums = [[0.0; 2]; 3];
    let mut counts = [0usize; 3];
    for (ix, iy, iz, center, va) in a.iter_voxels() {
        let vb = b.value(ix, iy, iz);
        let r = match classify(&center) {
            Region::CenterAxis => 0,
            Region::OuterShell => 1,
            Region::Bulk => 2,
        };
        sums[r][0] += va;
        sums[r][1] += vb;
        counts[r] += 1;
    }
    let mean = |r: usize| {
        let n = counts[r].max(1) as f64;
        (sums[r][0] / n, sums[r][1] / n)
    };
    let difference = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| x - y)
        .collect();
    Ok(GridComparison {
        center_axis_mean: mean(0),
        outer_shell_mean: mean(1),
        bulk_mean: mean(2),
        difference,
    })
}

/// Mean dexterity over voxels on the center axis with z in `[z_lo, z_hi]`,
/// plus the fraction of them with nonzero dexterity.
pub fn center_axis_stats(grid: &DexterityGrid, z_lo: f64, z_hi: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut nonzero = 0usize;
    let mut count = 0usize;
    for (_, _, _, center, v) in grid.iter_voxels() {
        if classify(&center) == Region::CenterAxis && center.z >= z_lo && center.z <= z_hi {
            sum += v;
            count += 1;
            if v > 0.0 {
                nonzero += 1;
            }
        }
    }
    if count == 0 {
        return (0.0, 0.0);
    }
    (sum / count as f64, nonzero as f64 / count as f64)
}

/// Write the grid as CSV (`x_m, y_m, z_m, dexterity`) plus a `.meta.toml`
/// sidecar recording the grid spec, sample count, seed, and preset name.
pub fn export_grid_csv(
    grid: &DexterityGrid,
    preset_name: &str,
    path: &Path,
) -> Result<(), WorkspaceError> {
    let io_err = |source| WorkspaceError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let write = |out: &mut dyn Write, s: String| -> Result<(), WorkspaceError> {
        out.write_all(s.as_bytes()).map_err(|source| WorkspaceError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write(&mut out, "x_m,y_m,z_m,dexterity\n".to_string())?;
    for (_, _, _, center, v) in grid.iter_voxels() {
        write(
            &mut out,
            format!("{:.6},{:.6},{:.6},{:.9}\n", center.x, center.y, center.z, v),
        )?;
    }
    drop(out);

    let meta_path = path.with_extension("meta.toml");
    let meta = format!(
        "preset = {preset_name:?}\n\
         orientation_samples = {}\n\
         seed = {}\n\n\
         [grid]\n\
         origin_m = [{:.6}, {:.6}, {:.6}]\n\
         voxel_size_m = {:.6}\n\
         dims = [{}, {}, {}]\n",
        grid.orientation_sample_count,
        grid.seed,
        grid.spec.origin.x,
        grid.spec.origin.y,
        grid.spec.origin.z,
        grid.spec.voxel_size,
        grid.spec.dims.0,
        grid.spec.dims.1,
        grid.spec.dims.2,
    );
    std::fs::write(&meta_path, meta).map_err(|source| WorkspaceError::Io {
        path: meta_path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::nominal_params;

    fn small_spec() -> GridSpec {
        GridSpec {
            origin: Vector3::new(-0.3, -0.3, 0.0),
            voxel_size: 0.1,
            dims: (6, 6, 6),
        }
    }

    #[test]
    fn orientation_samples_are_rotations_and_stable() {
        let a = orientation_samples(16);
        let b = orientation_samples(16);
        assert_eq!(a.len(), 16);
        for (ra, rb) in a.iter().zip(b.iter()) {
            assert_eq!(ra.matrix(), rb.matrix());
            assert!((ra.matrix().determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn values_bounded_and_zero_beyond_reach() {
        let p = nominal_params();
        let spec = GridSpec {
            origin: Vector3::new(0.7, -0.1, -0.1),
            voxel_size: 0.1,
            dims: (4, 2, 2),
        };
        let grid =
            dexterity_map(&p, BaseEnd::EndA, &spec, 4, &map_ik_settings(), 1).unwrap();
        for (_, _, _, center, v) in grid.iter_voxels() {
            assert!((0.0..=1.0).contains(&v));
            if center.norm() > 0.75 + spec.voxel_size * 3f64.sqrt() {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn zero_at_base_origin() {
        let p = nominal_params();
        // Exhaustive coarse joint-grid check: the free end never comes near
        // the anchored base frame.
        let chain = limms_chain(&p, BaseEnd::EndA);
        let mut min_dist = f64::MAX;
        let steps = 5;
        let mut q = [0.0; 6];
        let (lo, hi) = p.joint_limits[0];
        let grid: Vec<f64> = (0..steps)
            .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
            .collect();
        // Joints 1 and 6 do not affect the end position; sweep 2..5.
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    for &d in &grid {
                        q[1] = a;
                        q[2] = b;
                        q[3] = c;
                        q[4] = d;
                        min_dist = min_dist.min(chain.fk(&q).translation.norm());
                    }
                }
            }
        }
        assert!(min_dist > 0.05, "chain folds to {min_dist} m of the base");

        let spec = GridSpec {
            origin: Vector3::new(-0.05, -0.05, -0.05),
            voxel_size: 0.1,
            dims: (1, 1, 1),
        };
        let grid = dexterity_map(&p, BaseEnd::EndA, &spec, 8, &map_ik_settings(), 3).unwrap();
        assert_eq!(grid.values[0], 0.0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = nominal_params();
        let spec = small_spec();
        let a = dexterity_map(&p, BaseEnd::EndA, &spec, 4, &map_ik_settings(), 7).unwrap();
        let b = dexterity_map(&p, BaseEnd::EndA, &spec, 4, &map_ik_settings(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn self_comparison_is_zero() {
        let p = nominal_params();
        let spec = small_spec();
        let g = dexterity_map(&p, BaseEnd::EndA, &spec, 2, &map_ik_settings(), 5).unwrap();
        let cmp = compare_grids(&g, &g).unwrap();
        assert!(cmp.difference.iter().all(|&d| d == 0.0));
        assert_eq!(cmp.center_axis_mean.0, cmp.center_axis_mean.1);
    }

    #[test]
    fn mismatched_grids_error() {
        let p = nominal_params();
        let a = dexterity_map(&p, BaseEnd::EndA, &small_spec(), 1, &map_ik_settings(), 0).unwrap();
        let mut other = small_spec();
        other.dims = (5, 6, 6);
        let b = dexterity_map(&p, BaseEnd::EndA, &other, 1, &map_ik_settings(), 0).unwrap();
        assert!(matches!(
            compare_grids(&a, &b),
            Err(WorkspaceError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn single_orientation_gives_binary_values() {
        let p = nominal_params();
        let g = dexterity_map(&p, BaseEnd::EndA, &small_spec(), 1, &map_ik_settings(), 2).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn csv_export_has_expected_shape() {
        let p = nominal_params();
        let spec = GridSpec {
            origin: Vector3::new(-0.1, -0.1, 0.1),
            voxel_size: 0.1,
            dims: (2, 2, 2),
        };
        let g = dexterity_map(&p, BaseEnd::EndA, &spec, 2, &map_ik_settings(), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        export_grid_csv(&g, "limms", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x_m,y_m,z_m,dexterity");
        assert_eq!(lines.count(), 8);
        let meta = std::fs::read_to_string(dir.path().join("grid.meta.toml")).unwrap();
        assert!(meta.contains("preset = \"limms\""));
        assert!(meta.contains("orientation_samples = 2"));
    }

    #[test]
    fn invalid_specs_rejected() {
        let p = nominal_params();
        let bad = GridSpec {
            origin: Vector3::zeros(),
            voxel_size: 0.0,
            dims: (2, 2, 2),
        };
        assert!(dexterity_map(&p, BaseEnd::EndA, &bad, 2, &map_ik_settings(), 0).is_err());
        assert!(
            dexterity_map(&p, BaseEnd::EndA, &small_spec(), 0, &map_ik_settings(), 0).is_err()
        );
    }
}
