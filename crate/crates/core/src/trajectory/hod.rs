use std::f64::consts::{FRAC_PI_4, TAU};

use super::Trajectory;

pub const HOD_BINS: usize = 8;

/// Histogram of oriented displacements: displacement magnitude accumulated by
/// direction, hard-assigned to eight 45° sectors starting at +x.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HodDescriptor {
    pub bins: [f64; HOD_BINS],
}

impl HodDescriptor {
    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn distance(&self, other: &HodDescriptor) -> f64 {
        self.bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Polyline length over the covered frames.
pub fn trajectory_length(traj: &Trajectory) -> f64 {
    traj.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

pub(crate) fn orientation_bin(dx: f64, dy: f64) -> usize {
    let mut theta = dy.atan2(dx);
    if theta < 0.0 {
        theta += TAU;
    }
    // theta may round up to exactly 2π for tiny negative angles
    ((theta / FRAC_PI_4).floor() as usize) % HOD_BINS
}

pub fn hod_descriptor(traj: &Trajectory) -> HodDescriptor {
    let mut desc = HodDescriptor::default();
    for w in traj.points.windows(2) {
        let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        let mag = dx.hypot(dy);
        if mag > 0.0 {
            desc.bins[orientation_bin(dx, dy)] += mag;
        }
    }
    desc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Point2D;

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_points(0, pts.iter().map(|&(x, y)| Point2D::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn lengths() {
        assert_eq!(trajectory_length(&traj(&[(4.0, 4.0), (4.0, 4.0), (4.0, 4.0)])), 0.0);
        assert_eq!(trajectory_length(&traj(&[(0.0, 0.0), (3.0, 4.0)])), 5.0);
        assert_eq!(trajectory_length(&traj(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])), 2.0);
        assert_eq!(trajectory_length(&traj(&[(9.0, 1.0)])), 0.0);
    }

    #[test]
    fn hod_bins() {
        assert_eq!(hod_descriptor(&traj(&[(1.0, 1.0), (1.0, 1.0)])).bins, [0.0; 8]);
        assert_eq!(
            hod_descriptor(&traj(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])).bins,
            [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            hod_descriptor(&traj(&[(0.0, 0.0), (0.0, 2.0)])).bins,
            [0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn boundaries_go_up() {
        assert_eq!(orientation_bin(1.0, 1.0), 1);
        assert_eq!(orientation_bin(-1.0, 0.0), 4);
        assert_eq!(orientation_bin(0.0, -1.0), 6);
        assert_eq!(orientation_bin(1.0, -1e-300), 0);
    }
}
