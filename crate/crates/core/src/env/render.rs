//! Column raycasting depth camera.
//!
//! One ray per image column is cast in the plane. Every row of a column
//! repeats that range, stretched by `1 / cos(elevation)` so that off-axis
//! rows read as the slant range to the same vertical surface.

use super::world::{Obstacle, World};
use crate::image::{DepthImage, DEPTH_MAX, DEPTH_MIN};

/// Entry distance of a ray into a box, or `None` if it misses. A ray that
/// starts inside the box hits at distance 0.
pub fn ray_box_distance(origin: [f64; 2], dir: [f64; 2], ob: &Obstacle) -> Option<f64> {
    let (lo, hi) = (ob.min(), ob.max());
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..2 {
        if dir[axis] == 0.0 {
            if origin[axis] < lo[axis] || origin[axis] > hi[axis] {
                return None;
            }
        } else {
            let inv = 1.0 / dir[axis];
            let mut t0 = (lo[axis] - origin[axis]) * inv;
            let mut t1 = (hi[axis] - origin[axis]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
        }
    }
    if t_near > t_far || t_far < 0.0 {
        None
    } else {
        Some(t_near.max(0.0))
    }
}

/// Horizontal range seen by each image column, left to right.
pub fn column_ranges(world: &World) -> Vec<f64> {
    let cfg = world.config();
    let fov = cfg.camera_fov_deg.to_radians();
    let width = cfg.depth_width;
    let origin = [world.robot.x, world.robot.y];
    (0..width)
        .map(|c| {
            let offset = fov / 2.0 - (c as f64 + 0.5) * fov / width as f64;
            let angle = world.robot.heading + offset;
            let dir = [angle.cos(), angle.sin()];
            world
                .obstacles
                .iter()
                .filter_map(|ob| ray_box_distance(origin, dir, ob))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn render_depth(world: &World) -> DepthImage {
    let cfg = world.config();
    let (h, w) = (cfg.depth_height, cfg.depth_width);
    let vfov = cfg.camera_fov_deg.to_radians();
    let stretch: Vec<f64> = (0..h)
        .map(|r| {
            let elevation = vfov / 2.0 - (r as f64 + 0.5) * vfov / h as f64;
            1.0 / elevation.cos()
        })
        .collect();
    let ranges = column_ranges(world);
    let mut data = Vec::with_capacity(h * w);
    for s in &stretch {
        for d in &ranges {
            let v = (d * s).clamp(DEPTH_MIN as f64, DEPTH_MAX as f64);
            data.push(v as f32);
        }
    }
    DepthImage::from_vec(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::WorldConfig;
    use crate::randomization::EpisodeRandomization;

    fn world_with(obstacles: Vec<Obstacle>) -> World {
        World::with_obstacles(&WorldConfig::empty(), EpisodeRandomization::nominal(), obstacles)
    }

    #[test]
    fn empty_view_is_max_depth() {
        let img = render_depth(&world_with(Vec::new()));
        assert_eq!(img.shape(), (32, 32));
        assert!(img.as_slice().iter().all(|&v| v == DEPTH_MAX));
    }

    #[test]
    fn close_box_clamps_to_min_depth() {
        let img = render_depth(&world_with(vec![Obstacle::fixed([0.2, 0.0], [0.1, 3.0])]));
        assert_eq!(img.get(16, 16), DEPTH_MIN);
        assert_eq!(img.get(0, 0), DEPTH_MIN);
    }

    #[test]
    fn ray_misses_box_behind() {
        let ob = Obstacle::fixed([-3.0, 0.0], [0.5, 0.5]);
        assert_eq!(ray_box_distance([0.0, 0.0], [1.0, 0.0], &ob), None);
        assert_eq!(ray_box_distance([0.0, 0.0], [-1.0, 0.0], &ob), Some(2.5));
    }

    #[test]
    fn ray_from_inside_hits_immediately() {
        let ob = Obstacle::fixed([0.0, 0.0], [0.5, 0.5]);
        assert_eq!(ray_box_distance([0.0, 0.0], [0.6, 0.8], &ob), Some(0.0));
    }

    #[test]
    fn axis_parallel_ray_outside_slab_misses() {
        let ob = Obstacle::fixed([3.0, 2.0], [0.5, 0.5]);
        assert_eq!(ray_box_distance([0.0, 0.0], [1.0, 0.0], &ob), None);
    }
}
