//! Planar robot physics: PD-driven unicycle, box obstacles, contact.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, WorldConfig};
use crate::randomization::EpisodeRandomization;

/// Length of the proprioceptive snapshot.
pub const PROPRIO_DIM: usize = 8;

const MAX_OBSTACLE_ATTEMPTS: usize = 10_000;
const CONTACT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Wrapped to (-pi, pi].
    pub heading: f64,
    /// Body-frame forward velocity.
    pub vx: f64,
    /// Body-frame sideways velocity (slip).
    pub vy: f64,
    pub yaw_rate: f64,
    /// Normalized actuator command of the last substep (forward, yaw).
    pub command: [f64; 2],
    pub last_action: [f64; 2],
}

impl RobotState {
    pub fn at_origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            vx: 0.0,
            vy: 0.0,
            yaw_rate: 0.0,
            command: [0.0; 2],
            last_action: [0.0; 2],
        }
    }

    /// World-frame velocity.
    pub fn velocity(&self) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [c * self.vx - s * self.vy, s * self.vx + c * self.vy]
    }

    fn set_velocity(&mut self, v: [f64; 2]) {
        let (s, c) = self.heading.sin_cos();
        self.vx = c * v[0] + s * v[1];
        self.vy = -s * v[0] + c * v[1];
    }

    /// `(vx, vy, yaw, yaw rate, last action, sin yaw, cos yaw)`.
    pub fn proprio(&self) -> Vec<f64> {
        let (s, c) = self.heading.sin_cos();
        vec![
            self.vx,
            self.vy,
            self.heading,
            self.yaw_rate,
            self.last_action[0],
            self.last_action[1],
            s,
            c,
        ]
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.heading, self.vx, self.vy, self.yaw_rate]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
    pub velocity: [f64; 2],
}

impl Obstacle {
    pub fn fixed(center: [f64; 2], half_extents: [f64; 2]) -> Self {
        Self {
            center,
            half_extents,
            velocity: [0.0; 2],
        }
    }

    pub fn min(&self) -> [f64; 2] {
        [self.center[0] - self.half_extents[0], self.center[1] - self.half_extents[1]]
    }

    pub fn max(&self) -> [f64; 2] {
        [self.center[0] + self.half_extents[0], self.center[1] + self.half_extents[1]]
    }

    /// Distance from `p` to the box (0 inside).
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = (p[0] - self.center[0]).abs() - self.half_extents[0];
        let dy = (p[1] - self.center[1]).abs() - self.half_extents[1];
        dx.max(0.0).hypot(dy.max(0.0))
    }

    fn advance(&mut self, dt: f64, arena_x: [f64; 2], arena_y: [f64; 2]) {
        for (axis, bounds) in [(0, arena_x), (1, arena_y)] {
            self.center[axis] += dt * self.velocity[axis];
            let lo = bounds[0] + self.half_extents[axis];
            let hi = bounds[1] - self.half_extents[axis];
            if self.center[axis] < lo {
                self.center[axis] = lo;
                self.velocity[axis] = self.velocity[axis].abs();
            } else if self.center[axis] > hi {
                self.center[axis] = hi;
                self.velocity[axis] = -self.velocity[axis].abs();
            }
        }
    }
}

/// Outcome of a contact query.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Contact {
    pub contact: bool,
    pub head_on: bool,
    /// Unit normal from the obstacle towards the robot, and the penetration
    /// depth, for the deepest contact.
    pub normal: [f64; 2],
    pub penetration: f64,
    pub obstacle: Option<usize>,
}

/// Closest-feature contact between a disc and a box.
fn disc_box_contact(p: [f64; 2], radius: f64, b: &Obstacle) -> Option<([f64; 2], f64)> {
    let q = [
        p[0].clamp(b.min()[0], b.max()[0]),
        p[1].clamp(b.min()[1], b.max()[1]),
    ];
    let d = [p[0] - q[0], p[1] - q[1]];
    let dist = d[0].hypot(d[1]);
    if dist > 0.0 {
        if dist < radius + CONTACT_MARGIN {
            return Some(([d[0] / dist, d[1] / dist], radius - dist));
        }
        return None;
    }
    // Center inside the box: exit through the nearest face.
    let faces = [
        (p[0] - b.min()[0], [-1.0, 0.0]),
        (b.max()[0] - p[0], [1.0, 0.0]),
        (p[1] - b.min()[1], [0.0, -1.0]),
        (b.max()[1] - p[1], [0.0, 1.0]),
    ];
    let (depth, normal) = faces
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("four faces");
    Some((normal, radius + depth))
}

/// Full physical state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub robot: RobotState,
    pub obstacles: Vec<Obstacle>,
    pub randomization: EpisodeRandomization,
    substeps: u64,
    config: WorldConfig,
}

impl World {
    /// Robot at the origin heading +x; obstacles sampled away from it.
    pub fn reset<R: Rng + ?Sized>(
        config: &WorldConfig,
        randomization: EpisodeRandomization,
        rng: &mut R,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        let [lo, hi] = config.obstacle_count;
        let count = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let mut obstacles = Vec::with_capacity(count);
        let mut attempts = 0;
        while obstacles.len() < count {
            attempts += 1;
            if attempts > MAX_OBSTACLE_ATTEMPTS {
                return Err(EnvError::ObstacleSampling { placed: obstacles.len(), requested: count });
            }
            let sample = |rng: &mut R, r: [f64; 2]| {
                if r[0] == r[1] {
                    r[0]
                } else {
                    rng.random_range(r[0]..=r[1])
                }
            };
            let half = [
                sample(rng, config.obstacle_half_extent),
                sample(rng, config.obstacle_half_extent),
            ];
            let ylo = config.arena_y[0] + half[1];
            let yhi = config.arena_y[1] - half[1];
            if ylo > yhi {
                continue;
            }
            let center = [sample(rng, config.obstacle_region_x), sample(rng, [ylo, yhi])];
            let speed = sample(rng, config.obstacle_speed);
            let velocity = if speed > 0.0 {
                let dir = rng.random_range(0.0..TAU);
                [speed * dir.cos(), speed * dir.sin()]
            } else {
                [0.0; 2]
            };
            let ob = Obstacle {
                center,
                half_extents: half,
                velocity,
            };
            if ob.distance_to([0.0, 0.0]) < config.robot_radius + config.start_clearance {
                continue;
            }
            obstacles.push(ob);
        }
        Ok(Self {
            robot: RobotState::at_origin(),
            obstacles,
            randomization,
            substeps: 0,
            config: config.clone(),
        })
    }

    /// A world with explicitly placed obstacles.
    pub fn with_obstacles(config: &WorldConfig, randomization: EpisodeRandomization, obstacles: Vec<Obstacle>) -> Self {
        Self {
            robot: RobotState::at_origin(),
            obstacles,
            randomization,
            substeps: 0,
            config: config.clone(),
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn substeps(&self) -> u64 {
        self.substeps
    }

    /// Seconds since reset, derived from the substep counter.
    pub fn time(&self) -> f64 {
        self.substeps as f64 / self.config.sim_hz as f64
    }

    pub fn inside_arena(&self) -> bool {
        let r = &self.robot;
        let c = &self.config;
        c.arena_x[0] <= r.x && r.x <= c.arena_x[1] && c.arena_y[0] <= r.y && r.y <= c.arena_y[1]
    }

    /// Deepest robot-obstacle contact, with the head-on classification.
    pub fn check_collision(&self) -> Contact {
        let p = [self.robot.x, self.robot.y];
        let mut best = Contact::default();
        for (i, ob) in self.obstacles.iter().enumerate() {
            if let Some((normal, penetration)) = disc_box_contact(p, self.config.robot_radius, ob) {
                if !best.contact || penetration > best.penetration {
                    best = Contact {
                        contact: true,
                        head_on: false,
                        normal,
                        penetration,
                        obstacle: Some(i),
                    };
                }
            }
        }
        if let Some(i) = best.obstacle {
            let (s, c) = self.robot.heading.sin_cos();
            // Direction to the obstacle is -normal.
            let facing = -(best.normal[0] * c + best.normal[1] * s);
            let v = self.robot.velocity();
            let ov = self.obstacles[i].velocity;
            let closing = -((v[0] - ov[0]) * best.normal[0] + (v[1] - ov[1]) * best.normal[1]);
            best.head_on = facing >= self.config.head_on_cone_deg.to_radians().cos()
                && closing > self.config.head_on_speed;
        }
        best
    }

    /// Advances one physics tick holding `action`. Returns the contact
    /// observed before penetration was resolved.
    pub fn substep(&mut self, action: [f64; 2]) -> Result<Contact, EnvError> {
        if !action.iter().all(|a| a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let cfg = &self.config;
        let rnd = &self.randomization;
        let dt = cfg.sim_dt();
        let action = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let targets = [action[0] * cfg.max_forward_speed, action[1] * cfg.max_yaw_rate];
        let rates = [self.robot.vx, self.robot.yaw_rate];
        let inertias = [cfg.mass * rnd.mass_scale, cfg.inertia * rnd.inertia_scale];
        let strength = rnd.motor_strength_scale;
        let drag = cfg.drag * rnd.lateral_friction;

        // PD on the rate with derivative feedback on the measured
        // acceleration, solved implicitly: (M + s Kd) a = s Kp e - losses.
        let mut force = [0.0; 2];
        for c in 0..2 {
            let loss = drag * rates[c] + coulomb(rnd.motor_friction, rates[c]);
            let raw = strength * rnd.kp * (targets[c] - rates[c]);
            let accel = (raw - loss) / (inertias[c] + strength * rnd.kd);
            force[c] = raw - strength * rnd.kd * accel;
        }
        let mut command = [force[0] / cfg.force_scale, force[1] / cfg.force_scale];
        let norm = command[0].hypot(command[1]);
        if norm > cfg.actuator_limit {
            let scale = cfg.actuator_limit / norm;
            command = [command[0] * scale, command[1] * scale];
            force = [command[0] * cfg.force_scale, command[1] * cfg.force_scale];
        }
        let mut accel = [0.0; 2];
        for c in 0..2 {
            let loss = drag * rates[c] + coulomb(rnd.motor_friction, rates[c]);
            accel[c] = (force[c] - loss) / inertias[c];
        }
        let slip_decay = cfg.lateral_damping * rnd.lateral_friction / inertias[0];

        // Explicit Euler: positions advance with the old velocities.
        let v = self.robot.velocity();
        self.robot.x += dt * v[0];
        self.robot.y += dt * v[1];
        self.robot.heading = wrap_angle(self.robot.heading + dt * self.robot.yaw_rate);
        self.robot.vx += dt * accel[0];
        self.robot.yaw_rate += dt * accel[1];
        self.robot.vy -= dt * slip_decay * self.robot.vy;
        self.robot.command = command;
        self.robot.last_action = action;

        let (ax, ay) = (cfg.arena_x, cfg.arena_y);
        for ob in &mut self.obstacles {
            ob.advance(dt, ax, ay);
        }

        let contact = self.check_collision();
        if contact.contact {
            self.resolve_penetration();
        }
        self.substeps += 1;
        if !self.robot.is_finite() {
            return Err(EnvError::NonFiniteState);
        }
        Ok(contact)
    }

    /// Pushes the robot out of every obstacle and removes the velocity
    /// component pointing into it, so the robot slides along faces.
    fn resolve_penetration(&mut self) {
        let radius = self.config.robot_radius;
        for _ in 0..4 {
            let mut moved = false;
            for ob in &self.obstacles {
                let p = [self.robot.x, self.robot.y];
                if let Some((n, depth)) = disc_box_contact(p, radius, ob) {
                    if depth > 0.0 {
                        self.robot.x += n[0] * depth;
                        self.robot.y += n[1] * depth;
                        moved = true;
                    }
                    let mut v = self.robot.velocity();
                    let rel = (v[0] - ob.velocity[0]) * n[0] + (v[1] - ob.velocity[1]) * n[1];
                    if rel < 0.0 {
                        v[0] -= rel * n[0];
                        v[1] -= rel * n[1];
                        self.robot.set_velocity(v);
                    }
                }
            }
            if !moved {
                break;
            }
        }
    }
}

/// Constant friction opposing motion; zero at rest.
fn coulomb(friction: f64, rate: f64) -> f64 {
    if rate == 0.0 {
        0.0
    } else {
        friction * rate.signum()
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % TAU;
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn still_world() -> World {
        World::with_obstacles(&WorldConfig::empty(), EpisodeRandomization::nominal(), Vec::new())
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_action_from_rest_stays_put() {
        let mut w = still_world();
        for _ in 0..400 {
            w.substep([0.0, 0.0]).unwrap();
        }
        assert_eq!((w.robot.x, w.robot.y, w.robot.heading), (0.0, 0.0, 0.0));
    }

    #[test]
    fn matching_action_gives_zero_command() {
        let mut cfg = WorldConfig::empty();
        cfg.drag = 0.0;
        let mut w = World::with_obstacles(&cfg, EpisodeRandomization::nominal(), Vec::new());
        w.robot.vx = 0.3;
        w.substep([0.3 / cfg.max_forward_speed, 0.0]).unwrap();
        assert!(w.robot.command[0].abs() < 1e-12);
        assert!((w.robot.vx - 0.3).abs() < 1e-12);
    }

    #[test]
    fn non_finite_action_is_rejected() {
        let mut w = still_world();
        assert!(matches!(w.substep([f64::NAN, 0.0]), Err(EnvError::NonFiniteAction)));
    }

    #[test]
    fn contact_classification() {
        let cfg = WorldConfig::empty();
        let far = World::with_obstacles(
            &cfg,
            EpisodeRandomization::nominal(),
            vec![Obstacle::fixed([5.0, 0.0], [0.5, 0.5])],
        );
        let c = far.check_collision();
        assert!(!c.contact && !c.head_on);

        let inside = World::with_obstacles(
            &cfg,
            EpisodeRandomization::nominal(),
            vec![Obstacle::fixed([0.0, 0.0], [0.5, 0.5])],
        );
        assert!(inside.check_collision().contact);

        let mut front = World::with_obstacles(
            &cfg,
            EpisodeRandomization::nominal(),
            vec![Obstacle::fixed([0.65, 0.0], [0.5, 0.5])],
        );
        front.robot.vx = 0.3;
        let c = front.check_collision();
        assert!(c.contact && c.head_on);
        front.robot.vx = 0.05;
        assert!(!front.check_collision().head_on);
    }

    #[test]
    fn blocked_robot_slides_along_face() {
        let cfg = WorldConfig::empty();
        let mut w = World::with_obstacles(
            &cfg,
            EpisodeRandomization::nominal(),
            vec![Obstacle::fixed([1.0, 0.0], [0.5, 2.0])],
        );
        w.robot.heading = 0.3;
        for _ in 0..2000 {
            w.substep([1.0, 0.0]).unwrap();
            w.robot.heading = 0.3;
            w.robot.yaw_rate = 0.0;
        }
        assert!(w.robot.x <= 0.5 - cfg.robot_radius + 1e-6);
        assert!(w.robot.y > 0.5);
    }

    #[test]
    fn obstacles_reflect_at_walls() {
        let mut cfg = WorldConfig::empty();
        cfg.arena_x = [-1.0, 1.0];
        let mut ob = Obstacle {
            center: [0.8, 0.0],
            half_extents: [0.1, 0.1],
            velocity: [1.0, 0.0],
        };
        for _ in 0..200 {
            ob.advance(0.0025, cfg.arena_x, cfg.arena_y);
            assert!(ob.max()[0] <= 1.0 + 1e-12);
        }
        assert!(ob.velocity[0] < 0.0);
    }

    #[test]
    fn empty_world_reset() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = World::reset(&WorldConfig::empty(), EpisodeRandomization::nominal(), &mut rng).unwrap();
        assert!(w.obstacles.is_empty());
        assert_eq!(w.robot, RobotState::at_origin());
    }

    #[test]
    fn impossible_layout_fails() {
        let mut cfg = WorldConfig::default();
        cfg.obstacle_region_x = [0.0, 0.0];
        cfg.arena_y = [-0.5, 0.5];
        cfg.obstacle_count = [3, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = World::reset(&cfg, EpisodeRandomization::nominal(), &mut rng).unwrap_err();
        assert!(matches!(err, EnvError::ObstacleSampling { .. }));
    }
}
