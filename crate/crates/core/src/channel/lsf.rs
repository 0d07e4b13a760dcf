use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{path_loss, PathLossParams, ShadowingParams};
use crate::error::{Error, Result};
use crate::geometry::{NetworkLayout, TrajectoryState};

/// Ground-truth large-scale fading for one user against every AP.
///
/// Shadowing is `√ι·κ₁,b + √(1−ι)·κ₂`: `κ₁` is a static, spatially correlated
/// AP-side field and `κ₂` a user-side AR(1) process whose one-step correlation
/// is `2^(−v·Δ/d_decorr)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsfProcess {
    pub kappa1: Vec<f64>,
    pub kappa2: f64,
    pub step_corr: f64,
    pub lsf: Vec<f64>,
    pub path_loss: Vec<f64>,
    shadowing: ShadowingParams,
    path_loss_params: PathLossParams,
}

impl LsfProcess {
    pub fn init<R: Rng + ?Sized>(
        layout: &NetworkLayout,
        sh: &ShadowingParams,
        pl: &PathLossParams,
        traj: &TrajectoryState,
        rng: &mut R,
    ) -> Result<Self> {
        sh.validate()?;
        pl.validate()?;
        let kappa1 = correlated_ap_field(layout, sh.d_decorr, rng)?;
        let kappa2: f64 = rng.sample(StandardNormal);
        let mut proc = LsfProcess {
            kappa1,
            kappa2,
            step_corr: sh.step_correlation(traj.step_length()),
            lsf: Vec::new(),
            path_loss: Vec::new(),
            shadowing: *sh,
            path_loss_params: *pl,
        };
        proc.refresh(layout, traj);
        Ok(proc)
    }

    /// Advances the user-side shadowing by one cycle and recomputes path loss at
    /// the trajectory's (already advanced) position.
    pub fn step<R: Rng + ?Sized>(&self, layout: &NetworkLayout, traj: &TrajectoryState, rng: &mut R) -> Self {
        let w: f64 = rng.sample(StandardNormal);
        let c = self.step_corr;
        let mut next = self.clone();
        next.kappa2 = c * self.kappa2 + (1.0 - c * c).max(0.0).sqrt() * w;
        next.refresh(layout, traj);
        next
    }

    /// Combined standardized shadowing for AP `b`.
    pub fn kappa_bar(&self, b: usize) -> f64 {
        let iota = self.shadowing.iota;
        iota.sqrt() * self.kappa1[b] + (1.0 - iota).sqrt() * self.kappa2
    }

    fn refresh(&mut self, layout: &NetworkLayout, traj: &TrajectoryState) {
        let sigma = self.shadowing.sigma_sh_db;
        self.path_loss = layout
            .distances_from(traj.position)
            .into_iter()
            .map(|d| path_loss(d, &self.path_loss_params))
            .collect();
        self.lsf = (0..self.path_loss.len())
            .map(|b| self.path_loss[b] * 10f64.powf(sigma * self.kappa_bar(b) / 10.0))
            .collect();
    }

    pub fn shadowing(&self) -> &ShadowingParams {
        &self.shadowing
    }
}

/// Jointly Gaussian AP field with covariance `2^(−d_bb'/d_decorr)`.
fn correlated_ap_field<R: Rng + ?Sized>(layout: &NetworkLayout, d_decorr: f64, rng: &mut R) -> Result<Vec<f64>> {
    let aps = layout.ap_positions();
    let n = aps.len();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let d = (aps[i].x - aps[j].x).hypot(aps[i].y - aps[j].y);
        2f64.powf(-d / d_decorr)
    });
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let factor = symmetric_factor(cov)?;
    Ok((factor * z).iter().copied().collect())
}

/// Returns `L` with `L·Lᵀ = C`: Cholesky when `C` is positive definite,
/// otherwise the eigen square root with negative eigenvalues clamped.
fn symmetric_factor(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let n = cov.nrows();
    let eig = SymmetricEigen::new(cov);
    let min = eig.eigenvalues.min();
    if min < -1e-8 * n as f64 {
        return Err(Error::Numerical(format!(
            "shadowing covariance is not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(aps: Vec<Point2>) -> (NetworkLayout, TrajectoryState) {
        let layout = NetworkLayout::new(1000.0, aps, 15.0, 1.5, 200.0).unwrap();
        let traj = TrajectoryState::new(layout.center(), Point2::new(1.0, 0.0), 10.0, 1.0).unwrap();
        (layout, traj)
    }

    #[test]
    fn no_shadowing_gives_path_loss() {
        let (layout, traj) = setup(vec![Point2::new(100.0, 100.0), Point2::new(600.0, 450.0)]);
        let sh = ShadowingParams::new(0.0, 100.0, 0.5).unwrap();
        let pl = PathLossParams::default();
        let p = LsfProcess::init(&layout, &sh, &pl, &traj, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for b in 0..2 {
            let d = layout.distance_2d(traj.position, b).unwrap();
            assert_eq!(p.lsf[b], path_loss(d, &pl));
        }
    }

    #[test]
    fn coincident_aps_share_field() {
        let (layout, traj) = setup(vec![
            Point2::new(300.0, 300.0),
            Point2::new(300.0, 300.0),
            Point2::new(700.0, 100.0),
        ]);
        let p = LsfProcess::init(
            &layout,
            &ShadowingParams::default(),
            &PathLossParams::default(),
            &traj,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert!((p.kappa1[0] - p.kappa1[1]).abs() < 1e-6);
    }

    #[test]
    fn iota_one_removes_user_term() {
        let (layout, traj) = setup(vec![Point2::new(480.0, 520.0), Point2::new(10.0, 900.0)]);
        let sh = ShadowingParams::new(6.0, 100.0, 1.0).unwrap();
        let pl = PathLossParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p0 = LsfProcess::init(&layout, &sh, &pl, &traj, &mut rng).unwrap();
        let t1 = traj.advance(&layout);
        let p1 = p0.step(&layout, &t1, &mut rng);
        for b in 0..2 {
            let ratio = p1.lsf[b] / p0.lsf[b];
            let pl_ratio = p1.path_loss[b] / p0.path_loss[b];
            assert!((ratio - pl_ratio).abs() < 1e-12 * pl_ratio);
        }
    }

    #[test]
    fn static_user_keeps_lsf() {
        let (layout, _) = setup(vec![Point2::new(480.0, 520.0)]);
        let traj = TrajectoryState::new(layout.center(), Point2::new(0.0, 1.0), 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p0 = LsfProcess::init(
            &layout,
            &ShadowingParams::default(),
            &PathLossParams::default(),
            &traj,
            &mut rng,
        )
        .unwrap();
        assert_eq!(p0.step_corr, 1.0);
        let t1 = traj.advance(&layout);
        let p1 = p0.step(&layout, &t1, &mut rng);
        assert_eq!(p1.kappa2, p0.kappa2);
        assert_eq!(p1.lsf, p0.lsf);
    }

    #[test]
    fn kappa2_autocorrelation_matches_step_correlation() {
        let (layout, traj) = setup(vec![Point2::new(480.0, 520.0)]);
        let sh = ShadowingParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut p = LsfProcess::init(&layout, &sh, &PathLossParams::default(), &traj, &mut rng).unwrap();
        let n = 1_000_000;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for _ in 0..n {
            let prev = p.kappa2;
            let w: f64 = rng.sample(StandardNormal);
            p.kappa2 = p.step_corr * prev + (1.0 - p.step_corr * p.step_corr).sqrt() * w;
            sxy += prev * p.kappa2;
            sxx += prev * prev;
        }
        let est = sxy / sxx;
        assert!((est - 2f64.powf(-0.1)).abs() < 3e-3, "{est}");
    }
}
