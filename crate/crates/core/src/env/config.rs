use serde::{Deserialize, Serialize};

use super::EnvError;

/// Geometry, rates and dynamics coefficients of the planar robot world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Physics substeps per second.
    pub sim_hz: u32,
    /// Policy decisions per second; must divide `sim_hz`.
    pub control_hz: u32,
    /// Depth camera frame rate.
    pub camera_hz: f64,
    pub arena_x: [f64; 2],
    pub arena_y: [f64; 2],
    /// Inclusive range of obstacles per episode.
    pub obstacle_count: [usize; 2],
    pub obstacle_half_extent: [f64; 2],
    /// Obstacle speed range in m/s; `[0, 0]` keeps obstacles static.
    pub obstacle_speed: [f64; 2],
    /// Obstacle centers are drawn with x inside this band.
    pub obstacle_region_x: [f64; 2],
    /// Free space kept around the start pose, beyond the robot radius.
    pub start_clearance: f64,
    pub target_velocity: f64,
    /// Forward speed commanded by action +1.
    pub max_forward_speed: f64,
    /// Yaw rate commanded by action +1.
    pub max_yaw_rate: f64,
    pub robot_radius: f64,
    /// Horizon in control steps.
    pub max_episode_steps: usize,
    pub depth_height: usize,
    pub depth_width: usize,
    /// Horizontal (and vertical) camera field of view in degrees.
    pub camera_fov_deg: f64,
    pub mass: f64,
    pub inertia: f64,
    /// Viscous drag on forward speed and yaw rate, scaled by lateral friction.
    pub drag: f64,
    /// Decay rate of sideways slip, scaled by lateral friction.
    pub lateral_damping: f64,
    /// Drive force per unit of the normalized actuator command.
    pub force_scale: f64,
    /// Bound on the norm of the normalized actuator command.
    pub actuator_limit: f64,
    pub head_on_cone_deg: f64,
    pub head_on_speed: f64,
    pub max_spin_rate: f64,
    /// Terminate when speed exceeds this multiple of the target velocity.
    pub speed_limit_factor: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            sim_hz: 400,
            control_hz: 25,
            camera_hz: 30.0,
            arena_x: [-2.0, 14.0],
            arena_y: [-3.0, 3.0],
            obstacle_count: [8, 14],
            obstacle_half_extent: [0.15, 0.5],
            obstacle_speed: [0.0, 0.0],
            obstacle_region_x: [1.0, 13.0],
            start_clearance: 1.0,
            target_velocity: 0.35,
            max_forward_speed: 0.6,
            max_yaw_rate: 1.5,
            robot_radius: 0.2,
            max_episode_steps: 500,
            depth_height: 32,
            depth_width: 32,
            camera_fov_deg: 90.0,
            mass: 1.0,
            inertia: 0.1,
            drag: 1.0,
            lateral_damping: 20.0,
            force_scale: 40.0,
            actuator_limit: 2.0,
            head_on_cone_deg: 45.0,
            head_on_speed: 0.1,
            max_spin_rate: 6.0,
            speed_limit_factor: 3.0,
        }
    }
}

impl WorldConfig {
    /// An arena without obstacles.
    pub fn empty() -> Self {
        Self {
            obstacle_count: [0, 0],
            ..Self::default()
        }
    }

    pub fn substeps_per_control(&self) -> u32 {
        self.sim_hz / self.control_hz
    }

    pub fn sim_dt(&self) -> f64 {
        1.0 / self.sim_hz as f64
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz as f64
    }

    /// Net forward displacement of a robot holding the target speed for a
    /// full episode.
    pub fn target_distance(&self) -> f64 {
        self.target_velocity * self.max_episode_steps as f64 / self.control_hz as f64
    }

    /// Upper bound on the displacement of one episode: top speed from the
    /// first tick to the last.
    pub fn straight_line_max_distance(&self) -> f64 {
        self.max_forward_speed * self.max_episode_steps as f64 / self.control_hz as f64
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |msg: &str| Err(EnvError::InvalidConfig(msg.to_string()));
        if self.sim_hz == 0 || self.control_hz == 0 || !self.sim_hz.is_multiple_of(self.control_hz) {
            return fail("sim_hz must be a positive multiple of control_hz");
        }
        if !(self.camera_hz > 0.0) {
            return fail("camera_hz must be positive");
        }
        if self.camera_hz < self.control_hz as f64 {
            return fail("camera_hz must be at least control_hz so every control step sees a new frame");
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.arena_x) || !ordered(self.arena_y) || !ordered(self.obstacle_region_x) {
            return fail("arena and obstacle region bounds must be ordered");
        }
        if !(self.arena_x[0] < 0.0 && 0.0 < self.arena_x[1] && self.arena_y[0] < 0.0 && 0.0 < self.arena_y[1]) {
            return fail("the start pose must lie inside the arena");
        }
        if self.obstacle_count[0] > self.obstacle_count[1] {
            return fail("obstacle_count range is reversed");
        }
        if !ordered(self.obstacle_half_extent) || self.obstacle_half_extent[0] <= 0.0 {
            return fail("obstacle half extents must be positive and ordered");
        }
        if !ordered(self.obstacle_speed) || self.obstacle_speed[0] < 0.0 {
            return fail("obstacle speed range must be non-negative and ordered");
        }
        if self.depth_height == 0 || self.depth_width == 0 {
            return fail("depth image must be non-empty");
        }
        if !(self.camera_fov_deg > 0.0 && self.camera_fov_deg < 180.0) {
            return fail("camera field of view must be in (0, 180) degrees");
        }
        let positive = [
            self.target_velocity,
            self.max_forward_speed,
            self.max_yaw_rate,
            self.robot_radius,
            self.mass,
            self.inertia,
            self.force_scale,
            self.actuator_limit,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return fail("speeds, radius, mass, inertia and actuator scales must be positive");
        }
        if self.drag < 0.0 || self.lateral_damping < 0.0 || self.start_clearance < 0.0 {
            return fail("damping and clearance must be non-negative");
        }
        if self.max_episode_steps == 0 {
            return fail("max_episode_steps must be positive");
        }
        Ok(())
    }
}
