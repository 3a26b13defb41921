//! Joint heat maps (JHMs) and part affinity fields (PAFs) over the Body-14
//! skeleton, rendered from 2D poses.
//!
//! A JHM stacks one confidence map per keypoint type; a PAF stacks one 2D
//! vector field per limb. Both are defined on the full `H x W` image grid.

use crate::error::{Error, Result};

/// Number of body keypoints in the Body-14 model.
pub const KEYPOINT_COUNT: usize = 14;
/// Number of limbs; the Body-14 limb set forms a spanning tree, so 13.
pub const LIMB_COUNT: usize = 13;

/// Gaussian peaks are rendered inside a window of this many sigmas; values
/// beyond it (< exp(-8) ~ 3.4e-4) are treated as zero.
const JHM_SUPPORT_SIGMAS: f64 = 4.0;

/// Keypoint indices of the Body-14 model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Keypoint {
    Head = 0,
    Neck = 1,
    RightShoulder = 2,
    RightElbow = 3,
    RightWrist = 4,
    LeftShoulder = 5,
    LeftElbow = 6,
    LeftWrist = 7,
    RightHip = 8,
    RightKnee = 9,
    RightAnkle = 10,
    LeftHip = 11,
    LeftKnee = 12,
    LeftAnkle = 13,
}

impl Keypoint {
    pub const ALL: [Keypoint; KEYPOINT_COUNT] = [
        Keypoint::Head,
        Keypoint::Neck,
        Keypoint::RightShoulder,
        Keypoint::RightElbow,
        Keypoint::RightWrist,
        Keypoint::LeftShoulder,
        Keypoint::LeftElbow,
        Keypoint::LeftWrist,
        Keypoint::RightHip,
        Keypoint::RightKnee,
        Keypoint::RightAnkle,
        Keypoint::LeftHip,
        Keypoint::LeftKnee,
        Keypoint::LeftAnkle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Keypoint::Head => "head",
            Keypoint::Neck => "neck",
            Keypoint::RightShoulder => "r_shoulder",
            Keypoint::RightElbow => "r_elbow",
            Keypoint::RightWrist => "r_wrist",
            Keypoint::LeftShoulder => "l_shoulder",
            Keypoint::LeftElbow => "l_elbow",
            Keypoint::LeftWrist => "l_wrist",
            Keypoint::RightHip => "r_hip",
            Keypoint::RightKnee => "r_knee",
            Keypoint::RightAnkle => "r_ankle",
            Keypoint::LeftHip => "l_hip",
            Keypoint::LeftKnee => "l_knee",
            Keypoint::LeftAnkle => "l_ankle",
        }
    }
}

/// The limb list of the Body-14 model: 13 keypoint-index pairs forming a
/// spanning tree rooted at the neck.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Body14Topology {
    limbs: [(usize, usize); LIMB_COUNT],
}

impl Body14Topology {
    pub fn standard() -> Self {
        use Keypoint::*;
        let limbs = [
            (Neck as usize, Head as usize),
            (Neck as usize, RightShoulder as usize),
            (RightShoulder as usize, RightElbow as usize),
            (RightElbow as usize, RightWrist as usize),
            (Neck as usize, LeftShoulder as usize),
            (LeftShoulder as usize, LeftElbow as usize),
            (LeftElbow as usize, LeftWrist as usize),
            (Neck as usize, RightHip as usize),
            (RightHip as usize, RightKnee as usize),
            (RightKnee as usize, RightAnkle as usize),
            (Neck as usize, LeftHip as usize),
            (LeftHip as usize, LeftKnee as usize),
            (LeftKnee as usize, LeftAnkle as usize),
        ];
        Body14Topology { limbs }
    }

    pub fn limbs(&self) -> &[(usize, usize); LIMB_COUNT] {
        &self.limbs
    }

    /// True when the limb set is a spanning tree over all 14 keypoints.
    pub fn is_spanning_tree(&self) -> bool {
        let mut parent: Vec<usize> = (0..KEYPOINT_COUNT).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut merges = 0;
        for &(a, b) in &self.limbs {
            if a >= KEYPOINT_COUNT || b >= KEYPOINT_COUNT {
                return false;
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return false; // cycle
            }
            parent[ra] = rb;
            merges += 1;
        }
        merges == KEYPOINT_COUNT - 1
    }
}

/// Geometry of the rendered feature maps.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureGeometry {
    pub height: usize,
    pub width: usize,
    /// Gaussian sigma of JHM peaks, in pixels.
    pub jhm_sigma: f64,
    /// Half-width of the PAF limb band, in pixels.
    pub paf_halfwidth: f64,
}

impl Default for FeatureGeometry {
    fn default() -> Self {
        FeatureGeometry { height: 64, width: 128, jhm_sigma: 2.0, paf_halfwidth: 2.0 }
    }
}

impl FeatureGeometry {
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }
}

/// A 2D pose: 14 image-plane keypoints with visibility flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub person_id: u32,
    /// Keypoint positions as (x, y) pixel coordinates.
    pub points: [[f64; 2]; KEYPOINT_COUNT],
    pub visible: [bool; KEYPOINT_COUNT],
}

impl Pose2D {
    pub fn hidden(person_id: u32) -> Self {
        Pose2D { person_id, points: [[0.0; 2]; KEYPOINT_COUNT], visible: [false; KEYPOINT_COUNT] }
    }

    pub fn any_visible(&self) -> bool {
        self.visible.iter().any(|&v| v)
    }

    /// Diagonal of the bounding box around the visible keypoints.
    pub fn bbox_diagonal(&self) -> Option<f64> {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        let mut seen = false;
        for (p, &v) in self.points.iter().zip(&self.visible) {
            if v {
                seen = true;
                for d in 0..2 {
                    min[d] = min[d].min(p[d]);
                    max[d] = max[d].max(p[d]);
                }
            }
        }
        if seen {
            Some(((max[0] - min[0]).powi(2) + (max[1] - min[1]).powi(2)).sqrt())
        } else {
            None
        }
    }
}

/// Joint heat maps: one confidence plane per keypoint type, stored
/// channel-major as `[J][H][W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jhm {
    pub height: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl Jhm {
    pub fn zeros(fg: &FeatureGeometry) -> Self {
        Jhm {
            height: fg.height,
            width: fg.width,
            data: vec![0.0; KEYPOINT_COUNT * fg.height * fg.width],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != KEYPOINT_COUNT * height * width {
            return Err(Error::Contract(format!(
                "jhm payload of {} values does not match {}x{}x{}",
                data.len(),
                KEYPOINT_COUNT,
                height,
                width
            )));
        }
        Ok(Jhm { height, width, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[j * n..(j + 1) * n]
    }

    pub fn at(&self, j: usize, y: usize, x: usize) -> f64 {
        self.data[(j * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, j: usize, y: usize, x: usize, value: f64) {
        self.data[(j * self.height + y) * self.width + x] = value;
    }
}

/// Part affinity fields: one 2D vector field per limb, stored channel-major
/// as `[C][2][H][W]` (x component plane, then y component plane).
#[derive(Debug, Clone, PartialEq)]
pub struct Paf {
    pub height: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl Paf {
    pub fn zeros(fg: &FeatureGeometry) -> Self {
        Paf {
            height: fg.height,
            width: fg.width,
            data: vec![0.0; LIMB_COUNT * 2 * fg.height * fg.width],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != LIMB_COUNT * 2 * height * width {
            return Err(Error::Contract(format!(
                "paf payload of {} values does not match {}x2x{}x{}",
                data.len(),
                LIMB_COUNT,
                height,
                width
            )));
        }
        Ok(Paf { height, width, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The 2-vector at pixel (y, x) for limb `c`.
    pub fn vector(&self, c: usize, y: usize, x: usize) -> [f64; 2] {
        let n = self.height * self.width;
        let base = c * 2 * n + y * self.width + x;
        [self.data[base], self.data[base + n]]
    }

    pub fn set_vector(&mut self, c: usize, y: usize, x: usize, v: [f64; 2]) {
        let n = self.height * self.width;
        let base = c * 2 * n + y * self.width + x;
        self.data[base] = v[0];
        self.data[base + n] = v[1];
    }
}

/// Renders joint heat maps from 2D poses.
///
/// Each visible keypoint contributes a unit-height Gaussian of sigma
/// `fg.jhm_sigma`; overlapping persons are combined with a pixelwise max.
pub fn render_jhm(poses: &[Pose2D], fg: &FeatureGeometry) -> Jhm {
    let mut jhm = Jhm::zeros(fg);
    let radius = (JHM_SUPPORT_SIGMAS * fg.jhm_sigma).ceil();
    let inv_two_sigma_sq = 1.0 / (2.0 * fg.jhm_sigma * fg.jhm_sigma);
    for pose in poses {
        for j in 0..KEYPOINT_COUNT {
            if !pose.visible[j] {
                continue;
            }
            let [x, y] = pose.points[j];
            let x0 = ((x - radius).floor().max(0.0)) as usize;
            let x1 = ((x + radius).ceil().min(fg.width as f64 - 1.0)) as usize;
            let y0 = ((y - radius).floor().max(0.0)) as usize;
            let y1 = ((y + radius).ceil().min(fg.height as f64 - 1.0)) as usize;
            if x0 > x1 || y0 > y1 || x1 >= fg.width || y1 >= fg.height {
                continue;
            }
            for r in y0..=y1 {
                let dy = r as f64 - y;
                for c in x0..=x1 {
                    let dx = c as f64 - x;
                    let d2 = dx * dx + dy * dy;
                    if d2 > radius * radius {
                        continue;
                    }
                    let v = (-d2 * inv_two_sigma_sq).exp();
                    let cur = jhm.at(j, r, c);
                    if v > cur {
                        jhm.set(j, r, c, v);
                    }
                }
            }
        }
    }
    jhm
}

/// Renders part affinity fields from 2D poses.
///
/// Pixels within `fg.paf_halfwidth` of a limb segment carry the limb's unit
/// direction; pixels covered by several persons carry the average of the
/// contributing vectors. Limbs with an invisible endpoint or (near-)zero
/// length contribute nothing.
pub fn render_paf(poses: &[Pose2D], fg: &FeatureGeometry, topology: &Body14Topology) -> Paf {
    let mut paf = Paf::zeros(fg);
    let mut counts = vec![0u32; LIMB_COUNT * fg.height * fg.width];
    let hw = fg.paf_halfwidth;
    for pose in poses {
        for (c, &(j1, j2)) in topology.limbs().iter().enumerate() {
            if !pose.visible[j1] || !pose.visible[j2] {
                continue;
            }
            let [x1, y1] = pose.points[j1];
            let [x2, y2] = pose.points[j2];
            let (dx, dy) = (x2 - x1, y2 - y1);
            let len = (dx * dx + dy * dy).sqrt();
            if len < 1e-9 {
                continue;
            }
            let (ux, uy) = (dx / len, dy / len);
            let xmin = ((x1.min(x2) - hw).floor().max(0.0)) as usize;
            let xmax = ((x1.max(x2) + hw).ceil().min(fg.width as f64 - 1.0)) as usize;
            let ymin = ((y1.min(y2) - hw).floor().max(0.0)) as usize;
            let ymax = ((y1.max(y2) + hw).ceil().min(fg.height as f64 - 1.0)) as usize;
            if xmin > xmax || ymin > ymax || xmax >= fg.width || ymax >= fg.height {
                continue;
            }
            for r in ymin..=ymax {
                for col in xmin..=xmax {
                    let (px, py) = (col as f64 - x1, r as f64 - y1);
                    let along = px * ux + py * uy;
                    if along < 0.0 || along > len {
                        continue;
                    }
                    let across = (px * uy - py * ux).abs();
                    if across > hw {
                        continue;
                    }
                    let prev = paf.vector(c, r, col);
                    paf.set_vector(c, r, col, [prev[0] + ux, prev[1] + uy]);
                    counts[(c * fg.height + r) * fg.width + col] += 1;
                }
            }
        }
    }
    // Average where several limbs of the same type overlap.
    let n = fg.height * fg.width;
    for c in 0..LIMB_COUNT {
        for i in 0..n {
            let count = counts[c * n + i];
            if count > 1 {
                let inv = 1.0 / count as f64;
                paf.data[c * 2 * n + i] *= inv;
                paf.data[c * 2 * n + n + i] *= inv;
            }
        }
    }
    paf
}
