/// Focal length of the virtual pinhole camera in image-plane units.
pub const FOCAL_LENGTH: f64 = 1.0;
/// Offset reported when the target is at or behind the image plane.
pub const BEHIND_OFFSET: f64 = 10.0;

/// Projection of a target into the virtual image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageProjection {
    /// Horizontal and vertical offset from the image center.
    pub offset: [f64; 2],
    pub behind: bool,
}

impl ImageProjection {
    pub fn norm(&self) -> f64 {
        libm::hypot(self.offset[0], self.offset[1])
    }
}

/// Camera basis `(forward, right, up)` for the given yaw and pitch. At zero
/// yaw and pitch the camera looks along +x with +z up.
pub fn camera_basis(yaw: f64, pitch: f64) -> [[f64; 3]; 3] {
    let (sy, cy) = (libm::sin(yaw), libm::cos(yaw));
    let (sp, cp) = (libm::sin(pitch), libm::cos(pitch));
    let forward = [cp * cy, cp * sy, sp];
    let right = [sy, -cy, 0.0];
    // up = right × forward
    let up = [
        right[1] * forward[2] - right[2] * forward[1],
        right[2] * forward[0] - right[0] * forward[2],
        right[0] * forward[1] - right[1] * forward[0],
    ];
    [forward, right, up]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Pinhole projection of `target` (relative to the camera center) for a
/// camera oriented by `[yaw, pitch]`.
pub fn project_to_image(orientation: [f64; 2], target: [f64; 3]) -> ImageProjection {
    let [forward, right, up] = camera_basis(orientation[0], orientation[1]);
    let depth = dot(&target, &forward);
    if depth <= 1e-9 {
        return ImageProjection {
            offset: [BEHIND_OFFSET, BEHIND_OFFSET],
            behind: true,
        };
    }
    ImageProjection {
        offset: [
            FOCAL_LENGTH * dot(&target, &right) / depth,
            FOCAL_LENGTH * dot(&target, &up) / depth,
        ],
        behind: false,
    }
}
