//! Seeded lane-grid driving world.
//!
//! The road is `lanes` wide and `length` cells long. The vehicle starts in the
//! middle lane at cell 0 and the goal is the last cell. Obstacles are static
//! cells drawn per seed; every sensor reading is normalized into `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{Modality, SensorDims, SensorFrame};

pub const MAX_SPEED: u8 = 2;
/// Simulated tick length.
pub const TICK_US: u64 = 100_000;

pub const LIDAR_RAYS: usize = 8;
pub const RADAR_VALUES: usize = 4;
pub const CAMERA_CELLS: usize = 8;
pub const GPS_VALUES: usize = 3;
pub const WEATHER_VALUES: usize = 2;

/// Frame sizes emitted by [`WorldState::render_frames`].
pub fn sensor_dims() -> SensorDims {
    SensorDims {
        lidar: LIDAR_RAYS,
        radar: RADAR_VALUES,
        camera: CAMERA_CELLS,
        gps: GPS_VALUES,
        weather: WEATHER_VALUES,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SteerLeft,
    SteerRight,
    KeepLane,
    Accelerate,
    Brake,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::SteerLeft,
        Action::SteerRight,
        Action::KeepLane,
        Action::Accelerate,
        Action::Brake,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub progress: f64,
    pub collision: f64,
    pub goal: f64,
    pub step_cost: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            progress: 1.0,
            collision: -20.0,
            goal: 50.0,
            step_cost: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub lanes: usize,
    /// Road length in cells; the goal is the last cell.
    pub length: usize,
    pub obstacle_density: f64,
    /// Per-episode weather factor is drawn uniformly from this range.
    pub weather_range: [f64; 2],
    /// Base sensor noise std, scaled by the weather factor.
    pub noise_std: f64,
    /// Lidar/radar range in cells.
    pub sensor_range: usize,
    pub initial_speed: u8,
    /// Obstacle-free cells at the start of the road.
    pub clear_start: usize,
    pub rewards: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lanes: 3,
            length: 120,
            obstacle_density: 0.1,
            weather_range: [0.0, 0.5],
            noise_std: 0.05,
            sensor_range: 10,
            initial_speed: 1,
            clear_start: 5,
            rewards: RewardConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidConfig { field, reason });
        if self.lanes < 3 {
            return bad("lanes", format!("{} (need >= 3)", self.lanes));
        }
        if self.length < 20 {
            return bad("length", format!("{} (need >= 20)", self.length));
        }
        if !(0.0..=0.3).contains(&self.obstacle_density) {
            return bad("obstacle_density", format!("{} (need within [0, 0.3])", self.obstacle_density));
        }
        let [lo, hi] = self.weather_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("weather_range", format!("[{lo}, {hi}] (need 0 <= lo <= hi <= 1)"));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return bad("noise_std", format!("{} (need finite, >= 0)", self.noise_std));
        }
        if self.sensor_range == 0 {
            return bad("sensor_range", "must be positive".into());
        }
        if self.initial_speed > MAX_SPEED {
            return bad("initial_speed", format!("{} (max {MAX_SPEED})", self.initial_speed));
        }
        if self.clear_start >= self.length {
            return bad("clear_start", "must be shorter than the road".into());
        }
        let r = &self.rewards;
        if [r.progress, r.collision, r.goal, r.step_cost]
            .iter()
            .any(|x| !x.is_finite())
        {
            return bad("rewards", "reward constants must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub frames: Vec<SensorFrame>,
    pub reward: f64,
    pub done: bool,
    pub collision: bool,
    pub goal_reached: bool,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    config: EnvConfig,
    /// Row-major `[cell * lanes + lane]`.
    obstacles: Vec<bool>,
    lane: usize,
    position: usize,
    speed: u8,
    weather_factor: f64,
    rng_seed: u64,
    rng: ChaCha8Rng,
    steps: u64,
    done: bool,
}

impl WorldState {
    /// Fresh world for `seed` plus its initial observation.
    pub fn reset(config: &EnvConfig, seed: u64) -> Result<(Self, StepResult)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [lo, hi] = config.weather_range;
        let weather_factor = lo + (hi - lo) * rng.gen::<f64>();

        let lanes = config.lanes;
        let mut obstacles = vec![false; lanes * config.length];
        if config.obstacle_density > 0.0 {
            for cell in config.clear_start..config.length - 1 {
                let row = &mut obstacles[cell * lanes..(cell + 1) * lanes];
                for slot in row.iter_mut() {
                    *slot = rng.gen::<f64>() < config.obstacle_density;
                }
                if row.iter().all(|&o| o) {
                    row[rng.gen_range(0..lanes)] = false;
                }
            }
        }

        let mut world = Self {
            config: config.clone(),
            obstacles,
            lane: lanes / 2,
            position: 0,
            speed: config.initial_speed,
            weather_factor,
            rng_seed: seed,
            rng,
            steps: 0,
            done: false,
        };
        let frames = world.render_frames();
        Ok((
            world,
            StepResult {
                frames,
                reward: 0.0,
                done: false,
                collision: false,
                goal_reached: false,
            },
        ))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn lane(&self) -> usize {
        self.lane
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn speed(&self) -> u8 {
        self.speed
    }

    pub fn weather_factor(&self) -> f64 {
        self.weather_factor
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn goal_distance(&self) -> usize {
        self.goal_cell() - self.position
    }

    fn goal_cell(&self) -> usize {
        self.config.length - 1
    }

    pub fn is_obstacle(&self, lane: usize, cell: usize) -> bool {
        lane < self.config.lanes
            && cell < self.config.length
            && self.obstacles[cell * self.config.lanes + lane]
    }

    /// Place or clear an obstacle; for hand-built scenarios.
    pub fn set_obstacle(&mut self, lane: usize, cell: usize, occupied: bool) {
        let lanes = self.config.lanes;
        self.obstacles[cell * lanes + lane] = occupied;
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| o).count()
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let lanes = self.config.lanes;
        let old_lane = self.lane;
        match action {
            Action::SteerLeft => self.lane = self.lane.saturating_sub(1),
            Action::SteerRight => self.lane = (self.lane + 1).min(lanes - 1),
            Action::KeepLane => {}
            Action::Accelerate => self.speed = (self.speed + 1).min(MAX_SPEED),
            Action::Brake => self.speed = self.speed.saturating_sub(1),
        }

        let mut collision = self.lane != old_lane && self.is_obstacle(self.lane, self.position);
        let mut goal_reached = false;
        let mut advanced = 0usize;
        if !collision {
            for _ in 0..self.speed {
                self.position += 1;
                advanced += 1;
                if self.position >= self.goal_cell() {
                    goal_reached = true;
                    break;
                }
                if self.is_obstacle(self.lane, self.position) {
                    collision = true;
                    break;
                }
            }
        }

        let r = &self.config.rewards;
        let mut reward = r.progress * advanced as f64 - r.step_cost;
        if collision {
            reward += r.collision;
        }
        if goal_reached {
            reward += r.goal;
        }
        self.steps += 1;
        self.done = collision || goal_reached;
        let frames = self.render_frames();
        Ok(StepResult {
            frames,
            reward,
            done: self.done,
            collision,
            goal_reached,
        })
    }

    /// Cells to the first obstacle along a ray, normalized by sensor range;
    /// 1.0 when nothing is hit in range or the ray leaves the road.
    fn ray(&self, lane_step: isize, cell_step: isize, lane_offset: isize) -> f64 {
        let range = self.config.sensor_range;
        for k in 1..=range as isize {
            let lane = self.lane as isize + lane_offset + lane_step * k;
            let cell = self.position as isize + cell_step * k;
            if lane < 0 || lane >= self.config.lanes as isize {
                return 1.0;
            }
            if cell < 0 || cell >= self.config.length as isize {
                return 1.0;
            }
            if self.is_obstacle(lane as usize, cell as usize) {
                return k as f64 / range as f64;
            }
        }
        1.0
    }

    /// Noise-free sensor readings, in modality order.
    pub fn render_clean(&self) -> [Vec<f64>; 5] {
        let range = self.config.sensor_range;
        let lidar = vec![
            self.ray(0, 1, 0),
            self.ray(-1, 1, 0),
            self.ray(1, 1, 0),
            self.ray(0, 1, -1),
            self.ray(0, 1, 1),
            self.ray(-1, 2, 0),
            self.ray(1, 2, 0),
            self.ray(0, -1, 0),
        ];

        let closing = self.speed as f64 / MAX_SPEED as f64;
        let mut hits: Vec<(usize, usize)> = Vec::new();
        for k in 1..=range {
            for lane in self.lane.saturating_sub(1)..=(self.lane + 1).min(self.config.lanes - 1) {
                if self.is_obstacle(lane, self.position + k) {
                    hits.push((k, lane));
                }
            }
        }
        let mut radar = Vec::with_capacity(RADAR_VALUES);
        for i in 0..RADAR_VALUES / 2 {
            match hits.get(i) {
                Some(&(k, _)) => radar.extend([k as f64 / range as f64, closing]),
                None => radar.extend([1.0, 0.0]),
            }
        }

        let camera = (1..=CAMERA_CELLS)
            .map(|k| f64::from(u8::from(self.is_obstacle(self.lane, self.position + k))))
            .collect();

        let gps = vec![
            self.lane as f64 / (self.config.lanes - 1) as f64,
            self.position as f64 / self.goal_cell() as f64,
            self.speed as f64 / MAX_SPEED as f64,
        ];

        let weather = vec![self.weather_factor, 0.0];
        [lidar, radar, camera, gps, weather]
    }

    /// Sensor frames with weather-scaled Gaussian noise, clamped to `[0, 1]`.
    /// Consumes the world's RNG stream.
    pub fn render_frames(&mut self) -> Vec<SensorFrame> {
        let mut readings = self.render_clean();
        let sigma = self.config.noise_std * self.weather_factor;
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("finite positive std");
            let mut abs_sum = 0.0;
            let mut count = 0usize;
            for values in readings.iter_mut().take(4) {
                for v in values.iter_mut() {
                    let n: f64 = normal.sample(&mut self.rng);
                    abs_sum += n.abs();
                    count += 1;
                    *v = (*v + n).clamp(0.0, 1.0);
                }
            }
            // Realized noise level relative to three base deviations.
            readings[4][1] = (abs_sum / count as f64 / (3.0 * self.config.noise_std)).clamp(0.0, 1.0);
        }
        let timestamp = self.steps * TICK_US;
        Modality::ALL
            .into_iter()
            .zip(readings)
            .map(|(m, values)| SensorFrame::new(m, values, timestamp).expect("readings clamped"))
            .collect()
    }
}
