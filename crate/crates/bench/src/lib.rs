//! Instance generators shared by the benchmarks.

use hetnet_core::association::{build_bilp, AssociationProblem};
use hetnet_core::kernel::sdp::SdpProblem;
use hetnet_core::orchestrator::kmeans_layout;
use hetnet_core::{ChannelParams, Scenario, ScenarioSpec};
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lifted(g: &Matrix3<f64>, q: &Vector3<f64>, c: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    m.view_mut((0, 0), (3, 3)).copy_from(g);
    m.view_mut((0, 3), (3, 1)).copy_from(q);
    m.view_mut((3, 0), (1, 3)).copy_from(&q.transpose());
    m[(3, 3)] = c;
    m
}

/// Lifted convex QCQP in three variables with `balls` ball constraints.
pub fn sdp_instance(seed: u64, balls: usize) -> SdpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let g = a * a.transpose() + Matrix3::identity() * 0.05;
    let q = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
    let mut p = SdpProblem::new(lifted(&g, &q, 0.0));
    let anchor = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    for _ in 0..balls {
        let off = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let r = off.norm() + rng.random_range(0.05..0.5);
        let c = anchor + off;
        p.add_le(lifted(&Matrix3::identity(), &-c, c.norm_squared()), r * r);
    }
    p
}

/// Scenario drawn from `spec` with the given seed.
pub fn scenario(spec: &ScenarioSpec, seed: u64) -> Scenario {
    spec.generate(&mut ChaCha8Rng::seed_from_u64(seed)).expect("scenario").with_seed(seed)
}

/// Association problem for the k-means placement of a default scenario.
pub fn bilp_instance(n_users: usize, seed: u64) -> AssociationProblem {
    let spec = ScenarioSpec { n_users, ..ScenarioSpec::default() };
    let params = ChannelParams::default();
    let s = scenario(&spec, seed);
    let (positions, _) = kmeans_layout(&s, &params, seed);
    build_bilp(&s, &positions, &params).expect("bilp")
}
