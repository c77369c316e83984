//! Network instances: user placement, traffic demand, content requests and
//! ABS cache contents.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Normalisation constant of the Voronoi-area CoV (Poisson process -> 1).
const POISSON_VORONOI_COV: f64 = 0.529;

pub const DEFAULT_COV_GRID: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub position: Point2,
    /// Requested rate (bit/s).
    pub rate_demand: f64,
    pub delay_sensitive: bool,
    /// 1-based popularity rank of the requested content.
    pub requested_content: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointProcessConfig {
    Uniform,
    Matern {
        /// Parents per m^2.
        parent_intensity: f64,
        /// Radius of the daughter disc (m).
        cluster_radius: f64,
        mean_daughters_per_cluster: f64,
    },
}

impl PointProcessConfig {
    pub fn matern(
        parent_intensity: f64,
        cluster_radius: f64,
        mean_daughters_per_cluster: f64,
    ) -> Result<Self> {
        let cfg = PointProcessConfig::Matern {
            parent_intensity,
            cluster_radius,
            mean_daughters_per_cluster,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let PointProcessConfig::Matern {
            parent_intensity,
            cluster_radius,
            mean_daughters_per_cluster,
        } = *self
        {
            for (name, v) in [
                ("scenario.point_process.parent_intensity", parent_intensity),
                ("scenario.point_process.cluster_radius", cluster_radius),
                ("scenario.point_process.mean_daughters_per_cluster", mean_daughters_per_cluster),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(name, format!("must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Draws `n_target` user positions inside `[0, region_side]^2`.
pub fn generate_users<R: Rng + ?Sized>(
    config: &PointProcessConfig,
    n_target: usize,
    region_side: f64,
    rng: &mut R,
) -> Result<Vec<Point2>> {
    config.validate()?;
    if !(region_side > 0.0 && region_side.is_finite()) {
        return Err(Error::invalid(format!("region side must be positive, got {region_side}")));
    }
    if n_target == 0 {
        return Ok(Vec::new());
    }
    match *config {
        PointProcessConfig::Uniform => Ok((0..n_target)
            .map(|_| Point2::new(rng.random_range(0.0..region_side), rng.random_range(0.0..region_side)))
            .collect()),
        PointProcessConfig::Matern {
            parent_intensity,
            cluster_radius,
            mean_daughters_per_cluster,
        } => {
            let n_parents = ((parent_intensity * region_side * region_side).round() as usize).max(1);
            let parents: Vec<Point2> = (0..n_parents)
                .map(|_| Point2::new(rng.random_range(0.0..region_side), rng.random_range(0.0..region_side)))
                .collect();
            let poisson = Poisson::new(mean_daughters_per_cluster)
                .map_err(|e| Error::invalid(format!("daughter count distribution: {e}")))?;
            let mut daughters = Vec::with_capacity(n_target);
            while daughters.len() < n_target {
                for parent in &parents {
                    let count = poisson.sample(rng) as usize;
                    for _ in 0..count {
                        daughters.push(draw_in_disc(parent, cluster_radius, region_side, rng));
                    }
                }
            }
            let keep = sample(rng, daughters.len(), n_target);
            let mut idx = keep.into_vec();
            idx.sort_unstable();
            Ok(idx.into_iter().map(|i| daughters[i]).collect())
        }
    }
}

fn draw_in_disc<R: Rng + ?Sized>(center: &Point2, radius: f64, side: f64, rng: &mut R) -> Point2 {
    loop {
        let r = radius * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let p = Point2::new(center.x + r * phi.cos(), center.y + r * phi.sin());
        if (0.0..=side).contains(&p.x) && (0.0..=side).contains(&p.y) {
            return p;
        }
    }
}

/// Normalised coefficient of variation of the users' Voronoi cell areas,
/// clipped to the square region. Cells are measured on a
/// [`DEFAULT_COV_GRID`]-by-[`DEFAULT_COV_GRID`] sampling grid.
pub fn compute_cov(positions: &[Point2], region_side: f64) -> Result<f64> {
    cov_in_square(positions, Point2::new(0.0, 0.0), region_side, DEFAULT_COV_GRID)
}

/// [`compute_cov`] over the square `[origin, origin + side]^2` with an
/// explicit grid resolution.
pub fn cov_in_square(positions: &[Point2], origin: Point2, side: f64, grid: usize) -> Result<f64> {
    if positions.len() < 3 {
        return Err(Error::invalid(format!(
            "CoV needs at least 3 points, got {}",
            positions.len()
        )));
    }
    if grid == 0 || !(side > 0.0) {
        return Err(Error::invalid("CoV grid and region side must be positive"));
    }
    let mut sorted: Vec<(f64, f64)> = positions.iter().map(|p| (p.x, p.y)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("CoV input contains duplicate points"));
    }

    let index = BucketIndex::new(positions, origin, side);
    let step = side / grid as f64;
    let mut counts = vec![0usize; positions.len()];
    for gy in 0..grid {
        let y = origin.y + (gy as f64 + 0.5) * step;
        for gx in 0..grid {
            let x = origin.x + (gx as f64 + 0.5) * step;
            counts[index.nearest(Point2::new(x, y))] += 1;
        }
    }
    let cell = step * step;
    let areas: Vec<f64> = counts.iter().map(|&c| c as f64 * cell).collect();
    let n = areas.len() as f64;
    let mean = areas.iter().sum::<f64>() / n;
    let var = areas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean / POISSON_VORONOI_COV)
}

/// Uniform bucket grid for nearest-point queries; ties go to the lower index.
struct BucketIndex<'a> {
    points: &'a [Point2],
    origin: Point2,
    cell: f64,
    dim: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> BucketIndex<'a> {
    fn new(points: &'a [Point2], origin: Point2, side: f64) -> Self {
        let dim = ((points.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = side / dim as f64;
        let mut buckets = vec![Vec::new(); dim * dim];
        let mut this = Self {
            points,
            origin,
            cell,
            dim,
            buckets: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (bx, by) = this.bucket_of(*p);
            buckets[by * dim + bx].push(i);
        }
        this.buckets = buckets;
        this
    }

    fn bucket_of(&self, p: Point2) -> (usize, usize) {
        let clamp = |v: f64| ((v / self.cell).floor().max(0.0) as usize).min(self.dim - 1);
        (clamp(p.x - self.origin.x), clamp(p.y - self.origin.y))
    }

    fn nearest(&self, q: Point2) -> usize {
        let (bx, by) = self.bucket_of(q);
        let mut best = (f64::INFINITY, usize::MAX);
        let mut ring = 0usize;
        loop {
            let lo_x = bx.saturating_sub(ring);
            let hi_x = (bx + ring).min(self.dim - 1);
            let lo_y = by.saturating_sub(ring);
            let hi_y = (by + ring).min(self.dim - 1);
            for cy in lo_y..=hi_y {
                for cx in lo_x..=hi_x {
                    let on_ring = cx.abs_diff(bx) == ring || cy.abs_diff(by) == ring;
                    if !on_ring {
                        continue;
                    }
                    for &i in &self.buckets[cy * self.dim + cx] {
                        let d = self.points[i].dist_sq(&q);
                        if d < best.0 || (d == best.0 && i < best.1) {
                            best = (d, i);
                        }
                    }
                }
            }
            // Every unvisited bucket is at least `ring * cell` away.
            let reach = ring as f64 * self.cell;
            let exhausted = lo_x == 0 && lo_y == 0 && hi_x == self.dim - 1 && hi_y == self.dim - 1;
            if (best.1 != usize::MAX && reach * reach > best.0) || exhausted {
                return best.1;
            }
            ring += 1;
        }
    }
}

/// Zipf popularity: entry `n` (1-based rank) proportional to `n^-alpha`.
pub fn zipf_pmf(catalog_size: usize, alpha: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=catalog_size).map(|n| (n as f64).powf(-alpha)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Decides which contents every ABS keeps in its cache.
pub trait CachePlacement {
    /// Returns the `abs_count x catalog_size` cache matrix.
    fn place(&self, popularity: &[f64], capacity: usize, abs_count: usize) -> Vec<Vec<bool>>;
}

/// Every ABS caches the `capacity` most popular contents.
#[derive(Debug, Clone, Copy, Default)]
pub struct TopPopularity;

impl CachePlacement for TopPopularity {
    fn place(&self, popularity: &[f64], capacity: usize, abs_count: usize) -> Vec<Vec<bool>> {
        let mut order: Vec<usize> = (0..popularity.len()).collect();
        // stable: equal popularity keeps the lower rank first
        order.sort_by(|&a, &b| popularity[b].partial_cmp(&popularity[a]).expect("finite pmf"));
        let mut row = vec![false; popularity.len()];
        for &k in order.iter().take(capacity) {
            row[k] = true;
        }
        vec![row; abs_count]
    }
}

/// Request, cache and cache-association matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    /// 1-based content id requested by each user (one-hot rows of `U`).
    pub requests: Vec<usize>,
    /// `E`: `J x K`.
    pub cache: Vec<Vec<bool>>,
    /// `F`: `I x (J+1)`; column 0 is the MBS.
    pub association: Vec<Vec<bool>>,
}

impl CacheState {
    /// `U` as an `I x K` boolean matrix.
    pub fn request_matrix(&self, catalog_size: usize) -> Vec<Vec<bool>> {
        self.requests
            .iter()
            .map(|&k| (1..=catalog_size).map(|c| c == k).collect())
            .collect()
    }
}

/// `F = U E^T`, with the MBS column forced true.
pub fn cache_association(requests: &[usize], cache: &[Vec<bool>]) -> Vec<Vec<bool>> {
    requests
        .iter()
        .map(|&k| {
            std::iter::once(true)
                .chain(cache.iter().map(|row| row[k - 1]))
                .collect()
        })
        .collect()
}

/// Samples every user's request from the Zipf law and fills the caches.
pub fn build_requests_and_cache<R: Rng + ?Sized>(
    n_users: usize,
    catalog_size: usize,
    alpha: f64,
    cache_capacity: usize,
    abs_count: usize,
    placement: &dyn CachePlacement,
    rng: &mut R,
) -> Result<CacheState> {
    if catalog_size == 0 {
        return Err(Error::invalid("catalog must hold at least one content"));
    }
    if cache_capacity > catalog_size {
        return Err(Error::invalid(format!(
            "cache capacity {cache_capacity} exceeds catalog size {catalog_size}"
        )));
    }
    let pmf = zipf_pmf(catalog_size, alpha);
    let requests: Vec<usize> = (0..n_users).map(|_| sample_index(&pmf, rng) + 1).collect();
    let cache = placement.place(&pmf, cache_capacity, abs_count);
    let association = cache_association(&requests, &cache);
    Ok(CacheState {
        requests,
        cache,
        association,
    })
}

fn sample_index<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// Immutable description of one network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub region_side: f64,
    pub mbs_position: Point2,
    pub users: Vec<User>,
    pub abs_count: usize,
    pub catalog_size: usize,
    pub cache_capacity: usize,
    pub zipf_alpha: f64,
    /// Seed the scenario was generated from, if any.
    pub seed: Option<u64>,
    cache: Vec<Vec<bool>>,
    association: Vec<Vec<bool>>,
}

impl Scenario {
    /// Builds a scenario whose caches follow top-popularity placement.
    pub fn new(
        region_side: f64,
        mbs_position: Point2,
        users: Vec<User>,
        abs_count: usize,
        catalog_size: usize,
        cache_capacity: usize,
        zipf_alpha: f64,
    ) -> Result<Self> {
        let pmf = zipf_pmf(catalog_size.max(1), zipf_alpha);
        let cache = TopPopularity.place(&pmf, cache_capacity.min(catalog_size), abs_count);
        Self::with_cache(
            region_side,
            mbs_position,
            users,
            abs_count,
            catalog_size,
            cache_capacity,
            zipf_alpha,
            cache,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_cache(
        region_side: f64,
        mbs_position: Point2,
        users: Vec<User>,
        abs_count: usize,
        catalog_size: usize,
        cache_capacity: usize,
        zipf_alpha: f64,
        cache: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if !(region_side > 0.0 && region_side.is_finite()) {
            return Err(Error::config("region_side", format!("must be positive, got {region_side}")));
        }
        if catalog_size == 0 {
            return Err(Error::config("catalog_size", "must be at least 1"));
        }
        if cache_capacity > catalog_size {
            return Err(Error::config(
                "cache_capacity",
                format!("{cache_capacity} exceeds catalog size {catalog_size}"),
            ));
        }
        if !(zipf_alpha >= 0.0 && zipf_alpha.is_finite()) {
            return Err(Error::config("zipf_alpha", format!("must be non-negative, got {zipf_alpha}")));
        }
        if cache.len() != abs_count {
            return Err(Error::invalid(format!(
                "cache matrix has {} rows for {abs_count} ABSs",
                cache.len()
            )));
        }
        for (j, row) in cache.iter().enumerate() {
            if row.len() != catalog_size || row.iter().filter(|&&b| b).count() != cache_capacity {
                return Err(Error::invalid(format!(
                    "cache row {j} must have {catalog_size} entries with {cache_capacity} set"
                )));
            }
        }
        let inside = |v: f64| (0.0..=region_side).contains(&v);
        for (i, u) in users.iter().enumerate() {
            if !(inside(u.position.x) && inside(u.position.y)) {
                return Err(Error::invalid(format!("user {i} lies outside the region")));
            }
            if !(u.rate_demand > 0.0 && u.rate_demand.is_finite()) {
                return Err(Error::invalid(format!("user {i} has non-positive rate demand")));
            }
            if u.requested_content == 0 || u.requested_content > catalog_size {
                return Err(Error::invalid(format!(
                    "user {i} requests content {} outside 1..={catalog_size}",
                    u.requested_content
                )));
            }
        }
        let requests: Vec<usize> = users.iter().map(|u| u.requested_content).collect();
        let association = cache_association(&requests, &cache);
        Ok(Self {
            region_side,
            mbs_position,
            users,
            abs_count,
            catalog_size,
            cache_capacity,
            zipf_alpha,
            seed: None,
            cache,
            association,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    /// `f_ij`; `j = 0` is the MBS.
    pub fn cached(&self, user: usize, bs: usize) -> bool {
        self.association[user][bs]
    }

    pub fn cache_matrix(&self) -> &[Vec<bool>] {
        &self.cache
    }

    pub fn cache_association(&self) -> &[Vec<bool>] {
        &self.association
    }

    pub fn request_matrix(&self) -> Vec<Vec<bool>> {
        self.users
            .iter()
            .map(|u| (1..=self.catalog_size).map(|c| c == u.requested_content).collect())
            .collect()
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.users.iter().map(|u| u.position).collect()
    }

    /// Copy with a different ABS count (cache rows follow the first one).
    pub fn with_abs_count(&self, abs_count: usize) -> Result<Self> {
        let row = self
            .cache
            .first()
            .cloned()
            .unwrap_or_else(|| {
                let pmf = zipf_pmf(self.catalog_size, self.zipf_alpha);
                TopPopularity.place(&pmf, self.cache_capacity, 1).remove(0)
            });
        let mut s = Self::with_cache(
            self.region_side,
            self.mbs_position,
            self.users.clone(),
            abs_count,
            self.catalog_size,
            self.cache_capacity,
            self.zipf_alpha,
            vec![row; abs_count],
        )?;
        s.seed = self.seed;
        Ok(s)
    }
}

/// Recipe for drawing random scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_users: usize,
    pub region_side: f64,
    /// Defaults to the region centre.
    pub mbs_position: Option<Point2>,
    pub abs_count: usize,
    pub catalog_size: usize,
    pub cache_capacity: usize,
    pub zipf_alpha: f64,
    pub delay_sensitive_fraction: f64,
    /// Rate demands are drawn uniformly from this set (bit/s).
    pub rate_set_bps: Vec<f64>,
    pub point_process: PointProcessConfig,
    /// When set, Matérn draws are rejected until the measured CoV is within
    /// `cov_tolerance` of this target.
    pub cov_target: Option<f64>,
    pub cov_tolerance: f64,
    pub cov_grid: usize,
    pub max_cov_attempts: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_users: 70,
            region_side: 1000.0,
            mbs_position: None,
            abs_count: 3,
            catalog_size: 10,
            cache_capacity: 2,
            zipf_alpha: 0.8,
            delay_sensitive_fraction: 0.1,
            rate_set_bps: vec![5e6, 7e6, 10e6],
            point_process: PointProcessConfig::Uniform,
            cov_target: None,
            cov_tolerance: 0.15,
            cov_grid: 200,
            max_cov_attempts: 500,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.region_side > 0.0 && self.region_side.is_finite()) {
            return Err(Error::config("scenario.region_side", "must be positive"));
        }
        if self.catalog_size == 0 {
            return Err(Error::config("scenario.catalog_size", "must be at least 1"));
        }
        if self.cache_capacity > self.catalog_size {
            return Err(Error::config("scenario.cache_capacity", "exceeds catalog_size"));
        }
        if !(self.zipf_alpha >= 0.0 && self.zipf_alpha.is_finite()) {
            return Err(Error::config("scenario.zipf_alpha", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.delay_sensitive_fraction) {
            return Err(Error::config("scenario.delay_sensitive_fraction", "must lie in [0, 1]"));
        }
        if self.rate_set_bps.is_empty() || self.rate_set_bps.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("scenario.rate_set_bps", "needs at least one positive rate"));
        }
        if let Some(p) = self.mbs_position {
            let inside = |v: f64| (0.0..=self.region_side).contains(&v);
            if !(inside(p.x) && inside(p.y)) {
                return Err(Error::config("scenario.mbs_position", "must lie inside the region"));
            }
        }
        self.point_process.validate()?;
        if let Some(t) = self.cov_target {
            if !(t > 0.0) {
                return Err(Error::config("scenario.cov_target", "must be positive"));
            }
            if !(self.cov_tolerance > 0.0) {
                return Err(Error::config("scenario.cov_tolerance", "must be positive"));
            }
            if self.n_users < 3 {
                return Err(Error::config("scenario.n_users", "CoV targeting needs at least 3 users"));
            }
            if self.cov_grid == 0 {
                return Err(Error::config("scenario.cov_grid", "must be positive"));
            }
        }
        Ok(())
    }

    /// Draws a scenario. With a CoV target, Matérn draws are repeated until
    /// the measured CoV lands inside the tolerance band.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Scenario> {
        self.validate()?;
        let positions = match self.cov_target {
            None => generate_users(&self.point_process, self.n_users, self.region_side, rng)?,
            Some(target) => {
                let mut found = None;
                for _ in 0..self.max_cov_attempts.max(1) {
                    let pts = generate_users(&self.point_process, self.n_users, self.region_side, rng)?;
                    let cov = cov_in_square(&pts, Point2::new(0.0, 0.0), self.region_side, self.cov_grid);
                    if let Ok(c) = cov {
                        if (c - target).abs() <= self.cov_tolerance {
                            found = Some(pts);
                            break;
                        }
                    }
                }
                found.ok_or_else(|| {
                    Error::config(
                        "scenario.cov_target",
                        format!(
                            "no draw reached CoV {target} +/- {} in {} attempts",
                            self.cov_tolerance, self.max_cov_attempts
                        ),
                    )
                })?
            }
        };
        let n = positions.len();
        let state = build_requests_and_cache(
            n,
            self.catalog_size,
            self.zipf_alpha,
            self.cache_capacity,
            self.abs_count,
            &TopPopularity,
            rng,
        )?;
        let n_sensitive = (self.delay_sensitive_fraction * n as f64).round() as usize;
        let mut sensitive = vec![false; n];
        if n > 0 {
            for i in sample(rng, n, n_sensitive.min(n)).into_iter() {
                sensitive[i] = true;
            }
        }
        let users = positions
            .into_iter()
            .zip(state.requests)
            .zip(sensitive)
            .map(|((position, content), delay_sensitive)| User {
                position,
                rate_demand: self.rate_set_bps[rng.random_range(0..self.rate_set_bps.len())],
                delay_sensitive,
                requested_content: content,
            })
            .collect();
        let mbs = self
            .mbs_position
            .unwrap_or(Point2::new(self.region_side / 2.0, self.region_side / 2.0));
        Scenario::with_cache(
            self.region_side,
            mbs,
            users,
            self.abs_count,
            self.catalog_size,
            self.cache_capacity,
            self.zipf_alpha,
            state.cache,
        )
    }
}

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// One line of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioRecord {
    Header {
        version: u32,
        region_side: f64,
        mbs_x: f64,
        mbs_y: f64,
        abs_count: usize,
        catalog_size: usize,
        cache_capacity: usize,
        zipf_alpha: f64,
        cache_strategy: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    User {
        x: f64,
        y: f64,
        eta_bps: f64,
        tau: bool,
        content_id: usize,
    },
}

/// Writes the scenario as JSON lines: one header, then one record per user.
pub fn write_scenario<W: Write>(scenario: &Scenario, mut out: W) -> Result<()> {
    let header = ScenarioRecord::Header {
        version: SCENARIO_FORMAT_VERSION,
        region_side: scenario.region_side,
        mbs_x: scenario.mbs_position.x,
        mbs_y: scenario.mbs_position.y,
        abs_count: scenario.abs_count,
        catalog_size: scenario.catalog_size,
        cache_capacity: scenario.cache_capacity,
        zipf_alpha: scenario.zipf_alpha,
        cache_strategy: "top_popularity".into(),
        seed: scenario.seed,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for u in &scenario.users {
        let rec = ScenarioRecord::User {
            x: u.position.x,
            y: u.position.y,
            eta_bps: u.rate_demand,
            tau: u.delay_sensitive,
            content_id: u.requested_content,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scenario<R: BufRead>(input: R) -> Result<Scenario> {
    let mut header = None;
    let mut users = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScenarioRecord = serde_json::from_str(&line).map_err(|e| Error::ScenarioFormat {
            line: lineno,
            reason: e.to_string(),
        })?;
        match rec {
            h @ ScenarioRecord::Header { .. } => {
                if header.is_some() {
                    return Err(Error::ScenarioFormat {
                        line: lineno,
                        reason: "second header record".into(),
                    });
                }
                header = Some(h);
            }
            ScenarioRecord::User {
                x,
                y,
                eta_bps,
                tau,
                content_id,
            } => {
                if header.is_none() {
                    return Err(Error::ScenarioFormat {
                        line: lineno,
                        reason: "user record before header".into(),
                    });
                }
                users.push(User {
                    position: Point2::new(x, y),
                    rate_demand: eta_bps,
                    delay_sensitive: tau,
                    requested_content: content_id,
                });
            }
        }
    }
    let Some(ScenarioRecord::Header {
        version,
        region_side,
        mbs_x,
        mbs_y,
        abs_count,
        catalog_size,
        cache_capacity,
        zipf_alpha,
        cache_strategy,
        seed,
    }) = header
    else {
        return Err(Error::ScenarioFormat {
            line: 0,
            reason: "missing header record".into(),
        });
    };
    if version != SCENARIO_FORMAT_VERSION {
        return Err(Error::ScenarioFormat {
            line: 1,
            reason: format!("unsupported version {version}"),
        });
    }
    if cache_strategy != "top_popularity" {
        return Err(Error::ScenarioFormat {
            line: 1,
            reason: format!("unknown cache strategy `{cache_strategy}`"),
        });
    }
    let mut s = Scenario::new(
        region_side,
        Point2::new(mbs_x, mbs_y),
        users,
        abs_count,
        catalog_size,
        cache_capacity,
        zipf_alpha,
    )?;
    s.seed = seed;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn empty_generation() {
        let pts = generate_users(&PointProcessConfig::Uniform, 0, 1000.0, &mut rng(1)).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn uniform_mean_near_center() {
        let pts = generate_users(&PointProcessConfig::Uniform, 10_000, 1000.0, &mut rng(2)).unwrap();
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
        // std of the mean is 1000/sqrt(12 * 1e4) ~ 2.9 m
        assert!((mx - 500.0).abs() < 25.0 && (my - 500.0).abs() < 25.0);
    }

    #[test]
    fn matern_points_stay_in_clusters() {
        let side = 1000.0;
        let cfg = PointProcessConfig::matern(3.0 / (side * side), 50.0, 20.0).unwrap();
        let mut r = rng(3);
        // replay the parent draw with the same stream
        let mut replay = r.clone();
        let parents: Vec<Point2> = (0..3)
            .map(|_| Point2::new(replay.random_range(0.0..side), replay.random_range(0.0..side)))
            .collect();
        let pts = generate_users(&cfg, 100, side, &mut r).unwrap();
        assert_eq!(pts.len(), 100);
        for p in &pts {
            assert!((0.0..=side).contains(&p.x) && (0.0..=side).contains(&p.y));
            assert!(parents.iter().any(|q| q.dist(p) <= 50.0 + 1e-9));
        }
    }

    #[test]
    fn matern_rejects_bad_config() {
        assert!(PointProcessConfig::matern(0.0, 50.0, 5.0).is_err());
        assert!(PointProcessConfig::matern(1e-5, -1.0, 5.0).is_err());
    }

    #[test]
    fn cov_quadrants_is_zero() {
        let pts = [
            Point2::new(250.0, 250.0),
            Point2::new(750.0, 250.0),
            Point2::new(250.0, 750.0),
            Point2::new(750.0, 750.0),
        ];
        assert_eq!(compute_cov(&pts, 1000.0).unwrap(), 0.0);
    }

    #[test]
    fn cov_input_errors() {
        let two = [Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)];
        assert!(matches!(compute_cov(&two, 10.0), Err(Error::InvalidInput(_))));
        let dup = [Point2::new(1.0, 1.0), Point2::new(2.0, 2.0), Point2::new(1.0, 1.0)];
        assert!(matches!(compute_cov(&dup, 10.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bucket_index_matches_brute_force() {
        let pts = generate_users(&PointProcessConfig::Uniform, 57, 100.0, &mut rng(9)).unwrap();
        let idx = BucketIndex::new(&pts, Point2::new(0.0, 0.0), 100.0);
        let mut r = rng(10);
        for _ in 0..2000 {
            let q = Point2::new(r.random_range(0.0..100.0), r.random_range(0.0..100.0));
            let brute = (0..pts.len())
                .min_by(|&a, &b| pts[a].dist_sq(&q).partial_cmp(&pts[b].dist_sq(&q)).unwrap())
                .unwrap();
            assert_eq!(idx.nearest(q), brute);
        }
    }

    #[test]
    fn zipf_reference_values() {
        let u = zipf_pmf(3, 0.0);
        for p in u {
            assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(zipf_pmf(1, 1.7), vec![1.0]);
        // 1 / sum_{n=1..10} n^-0.8 = 0.2804957430
        let z = zipf_pmf(10, 0.8);
        assert_relative_eq!(z[0], 0.280_495_743_014_390_2, epsilon = 1e-12);
        assert_relative_eq!(z.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cache_extremes() {
        let full = build_requests_and_cache(50, 10, 0.8, 10, 3, &TopPopularity, &mut rng(4)).unwrap();
        assert!(full.association.iter().all(|r| r.iter().all(|&b| b)));
        let none = build_requests_and_cache(50, 10, 0.8, 0, 3, &TopPopularity, &mut rng(4)).unwrap();
        assert!(none.association.iter().all(|r| r[0] && r[1..].iter().all(|&b| !b)));
        assert!(build_requests_and_cache(5, 3, 0.8, 4, 1, &TopPopularity, &mut rng(4)).is_err());
    }

    #[test]
    fn cache_hit_rate_matches_zipf_mass() {
        // analytic (1 + 2^-0.8) / sum n^-0.8 = 0.4415982423
        let analytic = 0.441_598_242_306_540_7;
        let z = zipf_pmf(10, 0.8);
        assert_relative_eq!(z[0] + z[1], analytic, epsilon = 1e-12);
        let state = build_requests_and_cache(100_000, 10, 0.8, 2, 1, &TopPopularity, &mut rng(5)).unwrap();
        let hits = state.association.iter().filter(|r| r[1]).count() as f64 / 1e5;
        // binomial std ~ 0.0016
        assert!((hits - analytic).abs() < 0.008, "hit rate {hits}");
    }

    #[test]
    fn generated_scenario_invariants() {
        let spec = ScenarioSpec {
            n_users: 40,
            ..ScenarioSpec::default()
        };
        let s = spec.generate(&mut rng(6)).unwrap();
        assert_eq!(s.user_count(), 40);
        assert_eq!(s.users.iter().filter(|u| u.delay_sensitive).count(), 4);
        let u = s.request_matrix();
        for row in &u {
            assert_eq!(row.iter().filter(|&&b| b).count(), 1);
        }
        for row in s.cache_matrix() {
            assert_eq!(row.iter().filter(|&&b| b).count(), s.cache_capacity);
        }
        for (i, row) in s.cache_association().iter().enumerate() {
            assert!(row[0]);
            for j in 0..s.abs_count {
                let expected = (0..s.catalog_size).any(|k| u[i][k] && s.cache_matrix()[j][k]);
                assert_eq!(row[j + 1], expected);
            }
        }
        assert_eq!(s.mbs_position, Point2::new(500.0, 500.0));
    }

    #[test]
    fn scenario_file_round_trip() {
        let s = ScenarioSpec::default().generate(&mut rng(7)).unwrap().with_seed(7);
        let mut buf = Vec::new();
        write_scenario(&s, &mut buf).unwrap();
        let back = read_scenario(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn scenario_file_rejects_unknown_fields() {
        let text = "{\"record\":\"header\",\"version\":1,\"region_side\":10,\"mbs_x\":5,\"mbs_y\":5,\
                    \"abs_count\":1,\"catalog_size\":2,\"cache_capacity\":1,\"zipf_alpha\":0.8,\
                    \"cache_strategy\":\"top_popularity\",\"bogus\":1}\n";
        assert!(matches!(read_scenario(text.as_bytes()), Err(Error::ScenarioFormat { line: 1, .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn positions_inside_region(seed in 0u64..1000, n in 0usize..200, matern in proptest::bool::ANY) {
                let cfg = if matern {
                    PointProcessConfig::matern(4e-6, 80.0, 10.0).unwrap()
                } else {
                    PointProcessConfig::Uniform
                };
                let pts = generate_users(&cfg, n, 1000.0, &mut rng(seed)).unwrap();
                prop_assert_eq!(pts.len(), n);
                for p in pts {
                    prop_assert!((0.0..=1000.0).contains(&p.x) && (0.0..=1000.0).contains(&p.y));
                }
            }

            #[test]
            fn cov_translation_and_scale_invariant(seed in 0u64..1000, shift in -500.0..500.0f64, scale in 0.1..10.0f64) {
                let pts = generate_users(&PointProcessConfig::Uniform, 30, 100.0, &mut rng(seed)).unwrap();
                let base = cov_in_square(&pts, Point2::new(0.0, 0.0), 100.0, 120).unwrap();
                let moved: Vec<Point2> = pts.iter().map(|p| Point2::new(p.x + shift, p.y - shift)).collect();
                let t = cov_in_square(&moved, Point2::new(shift, -shift), 100.0, 120).unwrap();
                prop_assert!((t - base).abs() < 1e-9);
                let scaled: Vec<Point2> = pts.iter().map(|p| Point2::new(p.x * scale, p.y * scale)).collect();
                let s = cov_in_square(&scaled, Point2::new(0.0, 0.0), 100.0 * scale, 120).unwrap();
                prop_assert!((s - base).abs() < 1e-9);
            }

            #[test]
            fn zipf_non_increasing(k in 1usize..50, alpha in 0.0..3.0f64) {
                let z = zipf_pmf(k, alpha);
                prop_assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for w in z.windows(2) {
                    prop_assert!(w[1] <= w[0]);
                }
            }
        }
    }
}
