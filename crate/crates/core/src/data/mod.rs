//! Motion types, rigid transforms, point-cloud sampling and the procedural
//! human-object interaction generator.

mod pointcloud;
mod synth;
mod transform;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::{Error, Result};

pub use pointcloud::make_pointcloud;
pub use synth::{
    canonical_object_motion, generate_synthetic_dataset, hand_object_distances, recompute_contact_mask, Hand, Noun,
    Template, TemplateSet, Verb, CONTACT_THRESHOLD, NOUNS,
};
pub use transform::{rotate, transform_points};

/// Joint indices of the synthetic skeleton.
pub mod joint {
    pub const ROOT: usize = 0;
    pub const HEAD: usize = 1;
    pub const LEFT_SHOULDER: usize = 2;
    pub const RIGHT_SHOULDER: usize = 3;
    pub const LEFT_HAND: usize = 4;
    pub const RIGHT_HAND: usize = 5;
    pub const LEFT_FOOT: usize = 6;
    pub const RIGHT_FOOT: usize = 7;
    pub const COUNT: usize = 8;
}

/// Object pose width: translation (3) + axis-angle rotation (3).
pub const OBJECT_DIM: usize = 6;
pub const DEFAULT_FPS: f32 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointLayout {
    pub joints: usize,
    pub left_hand: usize,
    pub right_hand: usize,
}

impl JointLayout {
    pub const fn synthetic() -> Self {
        Self {
            joints: joint::COUNT,
            left_hand: joint::LEFT_HAND,
            right_hand: joint::RIGHT_HAND,
        }
    }

    pub const fn dim(&self) -> usize {
        3 * self.joints
    }
}

/// Human motion `L × 3J` of absolute joint positions.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanMotion {
    pub frames: Tensor<f32>,
    pub fps: f32,
    pub layout: JointLayout,
}

impl HumanMotion {
    pub fn new(frames: Tensor<f32>, layout: JointLayout) -> Result<Self> {
        if frames.dims().len() != 2 || frames.cols() != layout.dim() || frames.rows() < 2 {
            return Err(Error::Shape {
                op: "human motion",
                left: frames.dims().to_vec(),
                right: alloc::vec![2, layout.dim()],
            });
        }
        if layout.left_hand >= layout.joints || layout.right_hand >= layout.joints {
            return Err(Error::Config("hand joint index outside the skeleton".into()));
        }
        if !frames.is_finite() {
            return Err(Error::Domain("non-finite human motion".into()));
        }
        Ok(Self {
            frames,
            fps: DEFAULT_FPS,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn joint(&self, frame: usize, j: usize) -> [f32; 3] {
        let r = &self.frames.row(frame)[3 * j..3 * j + 3];
        [r[0], r[1], r[2]]
    }

    /// `[left, right]` hand positions for every frame.
    pub fn hands(&self) -> Vec<[[f32; 3]; 2]> {
        (0..self.len())
            .map(|f| [self.joint(f, self.layout.left_hand), self.joint(f, self.layout.right_hand)])
            .collect()
    }

    /// All joints, frame-major.
    pub fn joints(&self) -> Vec<Vec<[f32; 3]>> {
        (0..self.len())
            .map(|f| (0..self.layout.joints).map(|j| self.joint(f, j)).collect())
            .collect()
    }
}

/// Object poses `L × 6`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectMotion {
    pub frames: Tensor<f32>,
}

impl ObjectMotion {
    pub fn new(frames: Tensor<f32>) -> Result<Self> {
        if frames.dims().len() != 2 || frames.cols() != OBJECT_DIM {
            return Err(Error::Shape {
                op: "object motion",
                left: frames.dims().to_vec(),
                right: alloc::vec![frames.rows(), OBJECT_DIM],
            });
        }
        for f in 0..frames.rows() {
            let r = &frames.row(f)[3..];
            let n = libm::sqrtf(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
            if !(n < 2.0 * core::f32::consts::PI) {
                return Err(Error::Domain("object rotation vector norm must be below 2π".into()));
            }
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn pose(&self, frame: usize) -> [f32; 6] {
        let r = self.frames.row(frame);
        [r[0], r[1], r[2], r[3], r[4], r[5]]
    }

    pub fn poses(&self) -> Vec<[f32; 6]> {
        (0..self.len()).map(|f| self.pose(f)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeTag {
    Box,
    Sphere,
    Cylinder,
}

/// Object surface samples in the object's local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    /// Primitive the points were sampled from; unknown for loaded clouds.
    pub shape: Option<ShapeTag>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k] as f64;
            }
        }
        let n = self.points.len().max(1) as f64;
        c.map(|v| v / n)
    }

    /// `N × 3` tensor view of the points.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_fn([self.points.len(), 3], |i| self.points[i / 3][i % 3])
    }
}

/// One synthetic interaction with ground-truth contact flags.
#[derive(Clone, Debug, PartialEq)]
pub struct HoiSample {
    pub id: String,
    pub caption: String,
    pub human: HumanMotion,
    pub object: ObjectMotion,
    pub points: PointCloud,
    pub contact_mask: Vec<bool>,
    /// Generating template; `None` when the caption matches none.
    pub template: Option<Template>,
}

impl HoiSample {
    pub fn len(&self) -> usize {
        self.human.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human.is_empty()
    }
}
