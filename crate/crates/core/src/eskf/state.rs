use nalgebra::{SMatrix, SVector, SymmetricEigen};

use crate::geometry::{Mat3, Pose, Quat, Vec3};

pub type Vec15 = SVector<f64, 15>;
pub type Cov15 = SMatrix<f64, 15, 15>;

/// Offsets of the error-state blocks.
pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const ATT: usize = 6;
pub const BA: usize = 9;
pub const BW: usize = 12;

/// Nominal state: position, velocity, body-to-inertial orientation and IMU
/// biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub p: Vec3,
    pub v: Vec3,
    pub q: Quat,
    pub b_a: Vec3,
    pub b_w: Vec3,
    pub t: f64,
}

impl NavState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.p, self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(self.v.iter())
            .chain(self.b_a.iter())
            .chain(self.b_w.iter())
            .chain(self.q.coords.iter())
            .all(|c| c.is_finite())
    }
}

/// Error state `(dp, dv, dtheta, db_a, db_w)` and its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState {
    pub dx: Vec15,
    pub p: Cov15,
}

impl ErrorState {
    pub fn new(p: Cov15) -> Self {
        Self {
            dx: Vec15::zeros(),
            p,
        }
    }

    pub fn block(&self, offset: usize) -> Vec3 {
        self.dx.fixed_rows::<3>(offset).into_owned()
    }

    pub fn cov_block(&self, offset: usize) -> Mat3 {
        self.p.fixed_view::<3, 3>(offset, offset).into_owned()
    }

    pub fn diag(&self) -> [f64; 15] {
        let mut out = [0.0; 15];
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.p[(k, k)];
        }
        out
    }
}

pub fn symmetrize(p: &mut Cov15) {
    let t = p.transpose();
    *p = (*p + t) * 0.5;
}

/// Symmetrize, then clip negative eigenvalues to zero.
pub fn enforce_psd(p: &mut Cov15) {
    symmetrize(p);
    let eig = SymmetricEigen::new(*p);
    if eig.eigenvalues.min() < 0.0 {
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        *p = eig.eigenvectors * Cov15::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        symmetrize(p);
    }
}
