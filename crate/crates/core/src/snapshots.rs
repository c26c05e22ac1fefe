//! Time-window partition and per-window snapshot matrices.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::container::{verify_checksum, ContainerReader, TrajectoryManifest};
use crate::error::{config, Error, Result};
use crate::fom::FomTrajectory;
use crate::grid::PhaseGrid;

pub const DEFAULT_WINDOWS: usize = 100;

/// Window boundaries `0 = t_0 < t_1 < … < t_{N_w} = t_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPartition {
    pub boundaries: Vec<f64>,
}

pub fn partition_uniform(t_final: f64, n_windows: usize) -> Result<WindowPartition> {
    if n_windows == 0 {
        return Err(config("need at least one time window"));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(config(format!("final time must be positive, got {t_final}")));
    }
    let mut boundaries: Vec<f64> = (0..=n_windows)
        .map(|j| j as f64 * t_final / n_windows as f64)
        .collect();
    boundaries[n_windows] = t_final;
    Ok(WindowPartition { boundaries })
}

impl WindowPartition {
    pub fn n_windows(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn start(&self, window: usize) -> f64 {
        self.boundaries[window]
    }

    pub fn end(&self, window: usize) -> f64 {
        self.boundaries[window + 1]
    }

    /// Window owning time `t` under half-open membership `[t_{m}, t_{m+1})`;
    /// `t_f` itself belongs to the last window. `tol` absorbs round-off in
    /// sampled times.
    pub fn window_of(&self, t: f64, tol: f64) -> Option<usize> {
        let n = self.n_windows();
        if t < -tol || t > self.t_final() + tol {
            return None;
        }
        let m = self.boundaries[1..n].partition_point(|&b| b <= t + tol);
        Some(m.min(n - 1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundaries.len() < 2 || self.boundaries[0] != 0.0 {
            return Err(config("partition must start at t = 0 and have one window"));
        }
        if self.boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(config("partition boundaries must increase strictly"));
        }
        Ok(())
    }
}

/// Snapshot columns of one window: every run contributes the stored steps
/// whose times fall in the window. Columns are ordered run-major, then time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGroup {
    pub window_index: usize,
    pub member_time_indices: Vec<usize>,
    pub n_runs: usize,
}

impl SnapshotGroup {
    pub fn n_columns(&self) -> usize {
        self.member_time_indices.len() * self.n_runs
    }

    /// `(run, time index)` of every column.
    pub fn columns(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_runs).flat_map(move |r| self.member_time_indices.iter().map(move |&n| (r, n)))
    }

    /// Reads this window's `U_f` (N_f × columns) and `U_φ` (nx × columns).
    pub fn assemble<S: SnapshotSource + ?Sized>(&self, source: &mut S) -> Result<SnapshotMatrices> {
        let grid = source.grid().clone();
        let cols = self.n_columns();
        let mut u_f = DMatrix::zeros(grid.len(), cols);
        let mut u_phi = DMatrix::zeros(grid.nx, cols);
        for (c, (run, n)) in self.columns().enumerate() {
            let (f, phi) = source.read(run, n)?;
            u_f.column_mut(c).copy_from_slice(&f);
            u_phi.column_mut(c).copy_from_slice(&phi);
        }
        Ok(SnapshotMatrices {
            window_index: self.window_index,
            u_f,
            u_phi,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SnapshotMatrices {
    pub window_index: usize,
    pub u_f: DMatrix<f64>,
    pub u_phi: DMatrix<f64>,
}

/// Anything that can hand out stored snapshots by run and time index.
pub trait SnapshotSource {
    fn grid(&self) -> &PhaseGrid;
    fn n_runs(&self) -> usize;
    fn times(&self, run: usize) -> &[f64];
    fn dt(&self) -> f64;
    fn read(&mut self, run: usize, index: usize) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Assigns the shared stored-time axis to windows.
pub fn group_snapshots<S: SnapshotSource + ?Sized>(
    source: &S,
    partition: &WindowPartition,
) -> Result<Vec<SnapshotGroup>> {
    partition.validate()?;
    let n_runs = source.n_runs();
    if n_runs == 0 {
        return Err(config("no trajectories to group"));
    }
    let times = source.times(0);
    for r in 1..n_runs {
        let other = source.times(r);
        if other.len() != times.len() || other.iter().zip(times).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(config(format!("trajectory {r} has a different time axis from trajectory 0")));
        }
    }
    let tol = 1e-6 * source.dt();
    let mut members = vec![Vec::new(); partition.n_windows()];
    for (n, &t) in times.iter().enumerate() {
        let m = partition
            .window_of(t, tol)
            .ok_or_else(|| config(format!("snapshot time {t} lies outside [0, {}]", partition.t_final())))?;
        members[m].push(n);
    }
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(window_index, member_time_indices)| SnapshotGroup {
            window_index,
            member_time_indices,
            n_runs,
        })
        .collect())
}

/// In-memory trajectories as a snapshot source.
pub struct InMemorySnapshots<'a> {
    grid: PhaseGrid,
    dt: f64,
    runs: &'a [FomTrajectory],
}

impl<'a> InMemorySnapshots<'a> {
    pub fn new(grid: &PhaseGrid, dt: f64, runs: &'a [FomTrajectory]) -> Self {
        Self {
            grid: grid.clone(),
            dt,
            runs,
        }
    }
}

impl SnapshotSource for InMemorySnapshots<'_> {
    fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    fn n_runs(&self) -> usize {
        self.runs.len()
    }

    fn times(&self, run: usize) -> &[f64] {
        &self.runs[run].times
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn read(&mut self, run: usize, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let r = &self.runs[run];
        Ok((r.snapshots_f[index].values.clone(), r.snapshots_phi[index].values.clone()))
    }
}

/// Trajectories streamed from `VROM` containers described by manifests.
pub struct ContainerSnapshots {
    grid: PhaseGrid,
    dt: f64,
    manifests: Vec<TrajectoryManifest>,
    readers: Vec<ContainerReader>,
}

impl ContainerSnapshots {
    /// Opens every manifest, verifies checksums and checks the runs share a
    /// grid and time step.
    pub fn open(manifest_paths: &[PathBuf]) -> Result<Self> {
        if manifest_paths.is_empty() {
            return Err(config("no trajectories to group"));
        }
        let mut manifests = Vec::new();
        let mut readers = Vec::new();
        for p in manifest_paths {
            let m = TrajectoryManifest::load(p)?;
            let container = m.container_path(p);
            verify_checksum(&container, &m.sha256)?;
            readers.push(ContainerReader::open(&container)?);
            manifests.push(m);
        }
        let grid = manifests[0].grid.clone();
        let dt = manifests[0].dt;
        for m in &manifests[1..] {
            if m.grid != grid || m.dt != dt || m.stride != manifests[0].stride {
                return Err(config("trajectories disagree on grid, dt or stride"));
            }
        }
        Ok(Self {
            grid,
            dt,
            manifests,
            readers,
        })
    }

    pub fn manifests(&self) -> &[TrajectoryManifest] {
        &self.manifests
    }

    pub fn container_paths(&self) -> Vec<&Path> {
        self.readers.iter().map(|r| r.path()).collect()
    }
}

impl SnapshotSource for ContainerSnapshots {
    fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    fn n_runs(&self) -> usize {
        self.readers.len()
    }

    fn times(&self, run: usize) -> &[f64] {
        &self.manifests[run].times
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn read(&mut self, run: usize, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let rec = self.readers[run].read_record(index)?;
        let n = self.grid.len();
        let nx = self.grid.nx;
        if rec.len() != n + nx + 2 {
            return Err(Error::Dimension("trajectory record has an unexpected layout".into()));
        }
        Ok((rec[1..1 + n].to_vec(), rec[1 + n..1 + n + nx].to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Axis {
        grid: PhaseGrid,
        times: Vec<Vec<f64>>,
    }

    impl SnapshotSource for Axis {
        fn grid(&self) -> &PhaseGrid {
            &self.grid
        }
        fn n_runs(&self) -> usize {
            self.times.len()
        }
        fn times(&self, run: usize) -> &[f64] {
            &self.times[run]
        }
        fn dt(&self) -> f64 {
            0.0025
        }
        fn read(&mut self, run: usize, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
            let v = (run * 1000 + index) as f64;
            Ok((vec![v; self.grid.len()], vec![-v; self.grid.nx]))
        }
    }

    fn axis(runs: usize, nt: usize, dt: f64) -> Axis {
        Axis {
            grid: PhaseGrid::new(8, 8, 1.0).unwrap(),
            times: vec![(0..=nt).map(|n| n as f64 * dt).collect(); runs],
        }
    }

    #[test]
    fn uniform_partitions() {
        let p = partition_uniform(10.0, 100).unwrap();
        assert_eq!(p.boundaries.len(), 101);
        assert!((p.boundaries[1] - 0.1).abs() < 1e-15);
        assert_eq!(p.boundaries[100], 10.0);
        assert_eq!(partition_uniform(10.0, 1).unwrap().boundaries, vec![0.0, 10.0]);
        assert_eq!(
            partition_uniform(1.0, 4).unwrap().boundaries,
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert!(partition_uniform(1.0, 0).is_err());
        assert!(partition_uniform(0.0, 3).is_err());
    }

    #[test]
    fn benchmark_grouping_counts() {
        let src = axis(4, 4000, 0.0025);
        let p = partition_uniform(10.0, 100).unwrap();
        let groups = group_snapshots(&src, &p).unwrap();
        assert_eq!(groups.len(), 100);
        for g in &groups[..99] {
            assert_eq!(g.n_columns(), 160);
        }
        assert_eq!(groups[99].n_columns(), 164);
        assert_eq!(groups[0].member_time_indices, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn final_snapshot_joins_last_window() {
        let src = axis(1, 4, 1.0);
        let p = partition_uniform(4.0, 2).unwrap();
        let mut src = Axis { ..src };
        src.times[0] = (0..=4).map(|n| n as f64).collect();
        let g = group_snapshots(&src, &p).unwrap();
        assert_eq!(g[0].member_time_indices, vec![0, 1]);
        assert_eq!(g[1].member_time_indices, vec![2, 3, 4]);
    }

    #[test]
    fn groups_cover_disjointly_and_columns_are_run_major() {
        let mut src = axis(3, 37, 0.0025);
        let p = partition_uniform(37.0 * 0.0025, 6).unwrap();
        let groups = group_snapshots(&src, &p).unwrap();
        let mut all: Vec<usize> = groups.iter().flat_map(|g| g.member_time_indices.clone()).collect();
        all.sort();
        assert_eq!(all, (0..=37).collect::<Vec<_>>());
        let m = groups[2].assemble(&mut src).unwrap();
        let k = groups[2].member_time_indices.len();
        assert_eq!(m.u_f.ncols(), 3 * k);
        assert_eq!(m.u_f[(0, 0)], groups[2].member_time_indices[0] as f64);
        assert_eq!(m.u_f[(0, k)], 1000.0 + groups[2].member_time_indices[0] as f64);
        assert_eq!(m.u_phi[(0, 0)], -(groups[2].member_time_indices[0] as f64));
        assert_eq!(groups, group_snapshots(&src, &p).unwrap());
    }

    #[test]
    fn rejects_empty_and_mismatched_inputs() {
        let p = partition_uniform(1.0, 2).unwrap();
        let empty = Axis {
            grid: PhaseGrid::new(8, 8, 1.0).unwrap(),
            times: vec![],
        };
        assert!(group_snapshots(&empty, &p).is_err());
        let mut two = axis(2, 4, 0.25);
        two.times[1][2] += 0.1;
        assert!(group_snapshots(&two, &p).is_err());
    }
}
