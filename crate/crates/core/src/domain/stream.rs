//! Auxiliary random numbers that turn a particle filter into a deterministic
//! function of `(theta, U, V)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the auxiliary block: `steps x particles x dim` standard normals
/// for propagation plus `steps + 1` resampling normals, repeated once per
/// group. Each group drives its own independent particle filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamLayout {
    pub steps: usize,
    pub particles: usize,
    /// Normals consumed by one particle in one step.
    pub dim: usize,
    #[serde(default = "one")]
    pub groups: usize,
}

fn one() -> usize {
    1
}

impl StreamLayout {
    pub fn new(steps: usize, particles: usize, dim: usize) -> Self {
        StreamLayout { steps, particles, dim, groups: 1 }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// A layout with no entries, for likelihoods that need no randomness.
    pub fn empty() -> Self {
        StreamLayout { steps: 0, particles: 0, dim: 0, groups: 1 }
    }

    fn group_u_len(&self) -> usize {
        self.steps * self.particles * self.dim
    }

    fn group_v_len(&self) -> usize {
        if self.steps == 0 {
            0
        } else {
            self.steps + 1
        }
    }

    pub fn u_len(&self) -> usize {
        self.groups * self.group_u_len()
    }

    /// One resampling variate per step plus one for drawing the returned
    /// ancestral trajectory, per group.
    pub fn v_len(&self) -> usize {
        self.groups * self.group_v_len()
    }

    /// Offset of the first normal of particle `k` at step `t` in the first group.
    pub fn offset(&self, t: usize, k: usize) -> usize {
        (t * self.particles + k) * self.dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomStream {
    layout: StreamLayout,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl RandomStream {
    pub fn sample<R: Rng + ?Sized>(layout: StreamLayout, rng: &mut R) -> Self {
        let u = (0..layout.u_len()).map(|_| rng.sample(StandardNormal)).collect();
        let v = (0..layout.v_len()).map(|_| rng.sample(StandardNormal)).collect();
        RandomStream { layout, u, v }
    }

    pub fn empty() -> Self {
        RandomStream { layout: StreamLayout::empty(), u: Vec::new(), v: Vec::new() }
    }

    pub fn from_parts(layout: StreamLayout, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != layout.u_len() || v.len() != layout.v_len() {
            return Err(Error::Layout(format!(
                "expected {} U and {} V entries, got {} and {}",
                layout.u_len(),
                layout.v_len(),
                u.len(),
                v.len()
            )));
        }
        Ok(RandomStream { layout, u, v })
    }

    pub fn layout(&self) -> StreamLayout {
        self.layout
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Propagation normals of particle `k` at step `t`.
    pub fn noise(&self, t: usize, k: usize) -> &[f64] {
        let o = self.layout.offset(t, k);
        &self.u[o..o + self.layout.dim]
    }

    /// Resampling uniform for step `t`, obtained by pushing `V_t` through the
    /// standard normal CDF.
    pub fn resampling_uniform(&self, t: usize) -> f64 {
        normal_to_uniform(self.v[t])
    }

    /// Uniform used to pick the ancestral trajectory at the end of a run.
    pub fn trajectory_uniform(&self) -> f64 {
        normal_to_uniform(self.v[self.layout.steps])
    }

    /// Copy of group `g` as a single-group stream.
    pub fn group(&self, g: usize) -> Result<RandomStream> {
        let l = self.layout;
        if g >= l.groups {
            return Err(Error::Layout(format!("stream has {} groups, asked for group {g}", l.groups)));
        }
        let (nu, nv) = (l.group_u_len(), l.group_v_len());
        Ok(RandomStream {
            layout: StreamLayout { groups: 1, ..l },
            u: self.u[g * nu..(g + 1) * nu].to_vec(),
            v: self.v[g * nv..(g + 1) * nv].to_vec(),
        })
    }

    /// Fails unless the stream covers `required`.
    pub fn check_covers(&self, required: StreamLayout) -> Result<()> {
        let l = self.layout;
        if l.dim != required.dim
            || l.particles != required.particles
            || l.groups != required.groups
            || l.steps < required.steps
        {
            return Err(Error::Layout(format!("stream {l:?} does not cover the required layout {required:?}")));
        }
        Ok(())
    }

    /// Crank-Nicolson refresh `tau * U + sqrt(1 - tau^2) * xi`, applied to U and V
    /// alike. Leaves the standard-normal marginal of every entry intact.
    pub fn crank_nicolson<R: Rng + ?Sized>(&self, tau: f64, rng: &mut R) -> Self {
        let s = (1.0 - tau * tau).sqrt();
        let mut mix = |x: &f64| {
            let xi: f64 = rng.sample(StandardNormal);
            tau * x + s * xi
        };
        let u = self.u.iter().map(&mut mix).collect();
        let v = self.v.iter().map(&mut mix).collect();
        RandomStream { layout: self.layout, u, v }
    }
}

/// Standard normal CDF, clamped into `[0, 1)`.
pub fn normal_to_uniform(z: f64) -> f64 {
    let p = 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
    p.min(1.0 - f64::EPSILON / 2.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_indexing() {
        let l = StreamLayout::new(3, 4, 2);
        assert_eq!(l.u_len(), 24);
        assert_eq!(l.v_len(), 4);
        assert_eq!(l.offset(0, 0), 0);
        assert_eq!(l.offset(1, 0), 8);
        assert_eq!(l.offset(2, 3), 22);
    }

    #[test]
    fn same_seed_same_stream() {
        let l = StreamLayout::new(5, 10, 3);
        let a = RandomStream::sample(l, &mut ChaCha8Rng::seed_from_u64(7));
        let b = RandomStream::sample(l, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn tau_zero_is_fresh_and_tau_near_one_is_close() {
        let l = StreamLayout::new(10, 10, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = RandomStream::sample(l, &mut rng);
        let b = a.crank_nicolson(0.9999, &mut rng);
        let max_diff = a.u().iter().zip(b.u()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(max_diff < 0.1);
        let c = a.crank_nicolson(0.0, &mut rng);
        let corr: f64 = a.u().iter().zip(c.u()).map(|(x, y)| x * y).sum::<f64>() / 100.0;
        assert!(corr.abs() < 0.4);
    }

    #[test]
    fn uniform_mapping() {
        assert!((normal_to_uniform(0.0) - 0.5).abs() < 1e-15);
        assert!(normal_to_uniform(40.0) < 1.0);
        assert_eq!(normal_to_uniform(-40.0), 0.0);
        let p = normal_to_uniform(1.959963984540054);
        assert!((p - 0.975).abs() < 1e-10, "{p}");
    }

    #[test]
    fn groups_split_cleanly() {
        let l = StreamLayout::new(3, 2, 2).with_groups(3);
        assert_eq!(l.u_len(), 36);
        assert_eq!(l.v_len(), 12);
        let s = RandomStream::sample(l, &mut ChaCha8Rng::seed_from_u64(3));
        let g = s.group(2).unwrap();
        assert_eq!(g.layout(), StreamLayout::new(3, 2, 2));
        assert_eq!(g.u(), &s.u()[24..]);
        assert_eq!(g.v(), &s.v()[8..]);
        assert!(s.group(3).is_err());
        assert!(s.check_covers(StreamLayout::new(3, 2, 2)).is_err());
        let old: StreamLayout = serde_json::from_str(r#"{"steps":3,"particles":2,"dim":2}"#).unwrap();
        assert_eq!(old.groups, 1);
    }

    #[test]
    fn coverage_check() {
        let s = RandomStream::sample(StreamLayout::new(3, 2, 1), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(s.check_covers(StreamLayout::new(3, 2, 1)).is_ok());
        assert!(matches!(s.check_covers(StreamLayout::new(4, 2, 1)), Err(Error::Layout(_))));
        assert!(RandomStream::from_parts(StreamLayout::new(1, 1, 1), vec![0.0], vec![]).is_err());
    }
}
