//! Dataset generation under the ten simulation scenarios: activity-center
//! placement, Bernoulli detections with half-normal distance decay, and
//! zero-augmentation of the capture matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::geometry::{DetectorGrid, Habitat, Point};
use crate::surfaces::{
    categorical_surface, continuous_surface, exponential_covariance, BaselineSurface,
    FieldSampler, SurfaceKind,
};
use crate::util::child_seed;

/// One row of the scenario catalog.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: u32,
    pub eta: f64,
    pub phi: f64,
    pub kind: SurfaceKind,
    pub n_true: usize,
    pub m: usize,
    pub sigma: f64,
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub buffer: f64,
}

impl Scenario {
    pub fn grid(&self) -> Result<DetectorGrid> {
        DetectorGrid::build(self.nx, self.ny, self.spacing, Point::ORIGIN)
    }

    pub fn habitat(&self) -> Result<Habitat> {
        Habitat::build(&self.grid()?, self.buffer)
    }

    /// Rescales the scenario to a smaller grid and population while keeping
    /// the home-range overlap index k = sigma * sqrt(N / area) fixed.
    pub fn with_scale(mut self, nx: usize, ny: usize, n_true: usize, m: usize) -> Scenario {
        self.nx = nx;
        self.ny = ny;
        self.n_true = n_true;
        self.m = m;
        self
    }
}

/// The ten scenarios: 1-6 continuous over (eta, phi) in
/// {0.1, 0.3, 0.6} x {1, 0.05}; 7-10 categorical over {0.1, 0.3} x {1, 0.05}.
pub fn scenario_catalog() -> Vec<Scenario> {
    let base = |id: u32, eta: f64, phi: f64, kind: SurfaceKind| Scenario {
        id,
        eta,
        phi,
        kind,
        n_true: 300,
        m: 500,
        sigma: 1.5,
        nx: 32,
        ny: 32,
        spacing: 1.0,
        buffer: 5.0,
    };
    vec![
        base(1, 0.1, 1.0, SurfaceKind::Continuous),
        base(2, 0.1, 0.05, SurfaceKind::Continuous),
        base(3, 0.3, 1.0, SurfaceKind::Continuous),
        base(4, 0.3, 0.05, SurfaceKind::Continuous),
        base(5, 0.6, 1.0, SurfaceKind::Continuous),
        base(6, 0.6, 0.05, SurfaceKind::Continuous),
        base(7, 0.1, 1.0, SurfaceKind::Categorical),
        base(8, 0.1, 0.05, SurfaceKind::Categorical),
        base(9, 0.3, 1.0, SurfaceKind::Categorical),
        base(10, 0.3, 0.05, SurfaceKind::Categorical),
    ]
}

pub fn scenario_by_id(id: u32) -> Result<Scenario> {
    scenario_catalog()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::Parameter(format!("unknown scenario {id}; valid ids are 1-10")))
}

/// Generating truth retained with each simulated dataset.
#[derive(Debug, Clone)]
pub struct Truth {
    /// Activity centers of the `n_true` real individuals, in canonical row
    /// order (rows beyond `n_true` are pure augmentation and have no AC).
    pub acs: Vec<Point>,
    pub w: Vec<f64>,
    pub p0: Vec<f64>,
    pub n_true: usize,
    pub sigma: f64,
    pub eta: f64,
    pub phi: f64,
}

/// Zero-augmented binary capture matrix with the generating truth.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// Flat M x J binary matrix, row-major.
    y: Vec<u8>,
    pub m: usize,
    pub n_detectors: usize,
    pub n_detected: usize,
    pub truth: Option<Truth>,
    pub scenario: Scenario,
    pub seed: u64,
}

impl SimulatedDataset {
    pub fn y(&self, i: usize, j: usize) -> u8 {
        self.y[i * self.n_detectors + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.y[i * self.n_detectors..(i + 1) * self.n_detectors]
    }

    /// Detector indices where individual i was detected.
    pub fn detections_of(&self, i: usize) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn total_detections(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn from_parts(
        y: Vec<u8>,
        m: usize,
        n_detectors: usize,
        n_detected: usize,
        truth: Option<Truth>,
        scenario: Scenario,
        seed: u64,
    ) -> Self {
        assert_eq!(y.len(), m * n_detectors);
        SimulatedDataset {
            y,
            m,
            n_detectors,
            n_detected,
            truth,
            scenario,
            seed,
        }
    }
}

/// N independent uniform draws over the habitat rectangle.
pub fn simulate_activity_centers<R: Rng>(n: usize, habitat: &Habitat, rng: &mut R) -> Vec<Point> {
    (0..n)
        .map(|_| {
            Point::new(
                rng.gen_range(habitat.xmin..=habitat.xmax),
                rng.gen_range(habitat.ymin..=habitat.ymax),
            )
        })
        .collect()
}

/// Binary capture matrix: y_ij ~ Bernoulli(p0_j * exp(-d_ij^2 / (2 sigma^2))),
/// one sampling occasion. Rows follow `acs` order.
pub fn simulate_capture_history<R: Rng>(
    acs: &[Point],
    surface: &BaselineSurface,
    sigma: f64,
    grid: &DetectorGrid,
    rng: &mut R,
) -> Vec<u8> {
    let j = grid.n_detectors();
    let two_sigma_sq = 2.0 * sigma * sigma;
    let mut y = vec![0u8; acs.len() * j];
    for (i, ac) in acs.iter().enumerate() {
        for (jj, det) in grid.coords().iter().enumerate() {
            let d = ac.distance(det);
            let p = surface.p0[jj] * (-d * d / two_sigma_sq).exp();
            if p > 0.0 && rng.gen::<f64>() < p {
                y[i * j + jj] = 1;
            }
        }
    }
    y
}

/// Caches the geometry and field factorization of one scenario so that many
/// replicates can be drawn without re-factorizing the covariance.
pub struct ScenarioSimulator {
    scenario: Scenario,
    grid: DetectorGrid,
    habitat: Habitat,
    field: FieldSampler,
}

impl ScenarioSimulator {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let grid = scenario.grid()?;
        let habitat = scenario.habitat()?;
        let cov = exponential_covariance(&grid.pairwise_distances(), scenario.phi)?;
        let field = cov.factorize()?;
        Ok(ScenarioSimulator {
            scenario,
            grid,
            habitat,
            field,
        })
    }

    pub fn grid(&self) -> &DetectorGrid {
        &self.grid
    }

    pub fn habitat(&self) -> &Habitat {
        &self.habitat
    }

    /// End-to-end draw for one replicate. Deterministic in `seed`.
    pub fn simulate(&self, seed: u64) -> Result<SimulatedDataset> {
        let s = &self.scenario;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let w = self.field.sample(&mut rng);
        let surface = match s.kind {
            SurfaceKind::Continuous => continuous_surface(&w, s.eta)?,
            SurfaceKind::Categorical => categorical_surface(&w, s.eta)?,
        };
        let acs = simulate_activity_centers(s.n_true, &self.habitat, &mut rng);
        let raw = simulate_capture_history(&acs, &surface, s.sigma, &self.grid, &mut rng);
        Ok(assemble(s.clone(), &self.grid, acs, surface, raw, seed))
    }
}

/// One-shot convenience wrapper around [`ScenarioSimulator`].
pub fn simulate_scenario(scenario: &Scenario, seed: u64) -> Result<SimulatedDataset> {
    ScenarioSimulator::new(scenario.clone())?.simulate(seed)
}

/// Child seed for a (base seed, scenario, replicate) triple.
pub fn replicate_seed(base_seed: u64, scenario_id: u32, replicate: u64) -> u64 {
    child_seed(base_seed, scenario_id as u64, replicate)
}

/// Canonical row order: detected individuals first (sorted by first-detection
/// detector index, ties by original index), then undetected truth
/// individuals, then all-zero augmentation rows up to M.
fn assemble(
    scenario: Scenario,
    grid: &DetectorGrid,
    acs: Vec<Point>,
    surface: BaselineSurface,
    raw: Vec<u8>,
    seed: u64,
) -> SimulatedDataset {
    let j = grid.n_detectors();
    let n_true = acs.len();
    let first_detection = |i: usize| raw[i * j..(i + 1) * j].iter().position(|&v| v == 1);
    let mut detected: Vec<(usize, usize)> = (0..n_true)
        .filter_map(|i| first_detection(i).map(|f| (i, f)))
        .collect();
    detected.sort_by_key(|&(i, f)| (f, i));
    let undetected: Vec<usize> = (0..n_true).filter(|&i| first_detection(i).is_none()).collect();

    let n_detected = detected.len();
    let m = scenario.m;
    let mut y = vec![0u8; m * j];
    let mut ordered_acs = Vec::with_capacity(n_true);
    for (row, &(i, _)) in detected.iter().enumerate() {
        y[row * j..(row + 1) * j].copy_from_slice(&raw[i * j..(i + 1) * j]);
        ordered_acs.push(acs[i]);
    }
    for &i in &undetected {
        ordered_acs.push(acs[i]);
    }

    let truth = Truth {
        acs: ordered_acs,
        w: surface.w,
        p0: surface.p0,
        n_true,
        sigma: scenario.sigma,
        eta: scenario.eta,
        phi: scenario.phi,
    };
    SimulatedDataset {
        y,
        m,
        n_detectors: j,
        n_detected,
        truth: Some(truth),
        scenario,
        seed,
    }
}
