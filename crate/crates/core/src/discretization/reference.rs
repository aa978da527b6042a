//! Topology of the reference square `[0,1]^2`.
//!
//! Faces are numbered counter-clockwise: 0 bottom, 1 right, 2 top, 3 left. Each face is
//! parameterized by `t in [0,1]` in the counter-clockwise sense, so for a positively
//! oriented element the outward normal is the tangent rotated clockwise.

use crate::scalar::{Point2, Real};

pub const NUM_FACES: usize = 4;

/// Reference coordinate of face `face` at parameter `t`.
pub fn face_point<T: Real>(face: usize, t: T) -> Point2<T> {
    let (z, o) = (T::zero(), T::one());
    match face {
        0 => [t, z],
        1 => [o, t],
        2 => [o - t, o],
        3 => [z, o - t],
        _ => panic!("invalid local face {face}"),
    }
}

/// `d xi / d t` along face `face`.
pub fn face_direction<T: Real>(face: usize) -> Point2<T> {
    let (z, o) = (T::zero(), T::one());
    match face {
        0 => [o, z],
        1 => [z, o],
        2 => [-o, z],
        3 => [z, -o],
        _ => panic!("invalid local face {face}"),
    }
}

/// Unit reference vector pointing from face `face` into the square.
pub fn face_inward<T: Real>(face: usize) -> Point2<T> {
    let (z, o) = (T::zero(), T::one());
    match face {
        0 => [z, o],
        1 => [-o, z],
        2 => [z, -o],
        3 => [o, z],
        _ => panic!("invalid local face {face}"),
    }
}

/// Local indices of the tensor nodes (order `p`) lying on `face`, ordered by increasing `t`.
pub fn face_nodes(order: usize, face: usize) -> Vec<usize> {
    let n = order + 1;
    (0..n)
        .map(|k| match face {
            0 => k,
            1 => order + n * k,
            2 => (order - k) + n * order,
            3 => n * (order - k),
            _ => panic!("invalid local face {face}"),
        })
        .collect()
}

/// The two corner node indices `(start, end)` of `face` for tensor order `p`.
pub fn face_corners(order: usize, face: usize) -> (usize, usize) {
    let nodes = face_nodes(order, face);
    (nodes[0], nodes[order])
}

/// Corner node indices in counter-clockwise order starting at `(0,0)`.
pub fn corner_nodes(order: usize) -> [usize; 4] {
    let n = order + 1;
    [0, order, order + n * order, n * order]
}
