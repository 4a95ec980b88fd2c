//! Procedural interactions whose caption determines the motion.
//!
//! A caption names a verb, an object noun and (for hand verbs) a hand. The
//! object's trajectory is a smoothstep spline fixed by the verb plus a small
//! per-sample jitter; during contact phases the designated hand is pinned
//! 1 cm outside a surface point of the posed object.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::pointcloud::make_pointcloud;
use super::transform::{rotate, transform_points};
use super::{joint, HoiSample, HumanMotion, JointLayout, ObjectMotion, PointCloud, ShapeTag, OBJECT_DIM};
use crate::numerics::{rng, Tensor};
use crate::{Error, Result};

/// Hand-to-surface distance below which a frame counts as contact.
pub const CONTACT_THRESHOLD: f64 = 0.05;

const TABLE_Z: f64 = 0.75;
const HAND_OFFSET: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Lift,
    PutDown,
    Push,
    Turn,
    Kick,
    Wave,
}

impl Verb {
    pub const ALL: [Verb; 6] = [Verb::Lift, Verb::PutDown, Verb::Push, Verb::Turn, Verb::Kick, Verb::Wave];

    /// Whether the interaction involves hand contact.
    pub fn has_contact(self) -> bool {
        matches!(self, Verb::Lift | Verb::PutDown | Verb::Push | Verb::Turn)
    }

    pub fn uses_hand(self) -> bool {
        self != Verb::Kick
    }

    fn words(self) -> &'static [&'static str] {
        match self {
            Verb::Lift => &["lift"],
            Verb::PutDown => &["put", "down"],
            Verb::Push => &["push"],
            Verb::Turn => &["turn"],
            Verb::Kick => &["kick"],
            Verb::Wave => &["wave", "at"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    fn word(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }

    fn joint(self) -> usize {
        match self {
            Hand::Left => joint::LEFT_HAND,
            Hand::Right => joint::RIGHT_HAND,
        }
    }

    fn side(self) -> f64 {
        match self {
            Hand::Left => 1.0,
            Hand::Right => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Noun {
    pub word: &'static str,
    pub shape: ShapeTag,
    /// Half extents (radius in x/y for round shapes).
    pub extent: [f64; 3],
}

pub const NOUNS: [Noun; 6] = [
    Noun { word: "box", shape: ShapeTag::Box, extent: [0.12, 0.12, 0.10] },
    Noun { word: "crate", shape: ShapeTag::Box, extent: [0.16, 0.14, 0.12] },
    Noun { word: "ball", shape: ShapeTag::Sphere, extent: [0.10, 0.10, 0.10] },
    Noun { word: "globe", shape: ShapeTag::Sphere, extent: [0.14, 0.14, 0.14] },
    Noun { word: "bottle", shape: ShapeTag::Cylinder, extent: [0.05, 0.05, 0.13] },
    Noun { word: "barrel", shape: ShapeTag::Cylinder, extent: [0.12, 0.12, 0.16] },
];

/// One caption template instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub verb: Verb,
    /// Index into [`NOUNS`].
    pub noun: usize,
    pub hand: Option<Hand>,
}

impl Template {
    pub fn noun(&self) -> &'static Noun {
        &NOUNS[self.noun]
    }

    pub fn caption(&self) -> String {
        let mut words: Vec<&str> = self.verb.words().to_vec();
        words.push("the");
        words.push(self.noun().word);
        if let Some(h) = self.hand {
            words.extend(["with", "the", h.word(), "hand"]);
        }
        words.join(" ")
    }

    /// Inverse of [`Template::caption`]; tolerant of case and punctuation.
    pub fn parse(caption: &str) -> Option<Template> {
        let norm: String = caption
            .chars()
            .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
            .collect();
        let words: Vec<&str> = norm.split_whitespace().collect();
        Self::all().into_iter().find(|t| {
            let cap = t.caption();
            cap.split(' ').eq(words.iter().copied())
        })
    }

    /// Every valid template: hand verbs × nouns × hands, plus kick × nouns.
    pub fn all() -> Vec<Template> {
        let mut out = Vec::new();
        for verb in Verb::ALL {
            for noun in 0..NOUNS.len() {
                if verb.uses_hand() {
                    for hand in [Hand::Left, Hand::Right] {
                        out.push(Template { verb, noun, hand: Some(hand) });
                    }
                } else {
                    out.push(Template { verb, noun, hand: None });
                }
            }
        }
        out
    }
}

/// The templates a generator draws from (uniformly).
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    pub templates: Vec<Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::all()
    }
}

impl TemplateSet {
    pub fn all() -> Self {
        Self { templates: Template::all() }
    }

    pub fn only(templates: Vec<Template>) -> Self {
        Self { templates }
    }

    /// Every word any caption can contain, sorted.
    pub fn caption_words() -> Vec<String> {
        let mut w: Vec<String> = Template::all()
            .iter()
            .flat_map(|t| t.caption().split(' ').map(String::from).collect::<Vec<_>>())
            .collect();
        w.sort();
        w.dedup();
        w
    }
}

/// Per-sample variation not explained by the caption.
#[derive(Clone, Copy, Debug, Default)]
struct Jitter {
    body: [f64; 2],
    object: [f64; 2],
    amplitude: f64,
}

impl Jitter {
    fn none() -> Self {
        Self { amplitude: 1.0, ..Default::default() }
    }

    fn draw(r: &mut rng::Rng) -> Self {
        Self {
            body: [rng::uniform_in(r, -0.02, 0.02), rng::uniform_in(r, -0.02, 0.02)],
            object: [rng::uniform_in(r, -0.03, 0.03), rng::uniform_in(r, -0.03, 0.03)],
            amplitude: rng::uniform_in(r, 0.9, 1.1),
        }
    }
}

fn smoothstep(u: f64, a: f64, b: f64) -> f64 {
    let t = ((u - a) / (b - a)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn lerp(a: [f64; 3], b: [f64; 3], w: f64) -> [f64; 3] {
    [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1]), a[2] + w * (b[2] - a[2])]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(a, b);
    libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
}

/// Object pose at normalized time `u ∈ [0, 1]`.
fn object_pose(t: &Template, j: &Jitter, u: f64) -> [f64; 6] {
    let e = t.noun().extent;
    let a = j.amplitude;
    let table = [0.45 + j.object[0], j.object[1], TABLE_Z + e[2]];
    let (c, yaw) = match t.verb {
        Verb::Lift => (add(table, [0.0, 0.0, 0.30 * a * smoothstep(u, 0.35, 0.8)]), 0.0),
        Verb::PutDown => (add(table, [0.0, 0.0, 0.30 * a * (1.0 - smoothstep(u, 0.2, 0.65))]), 0.0),
        Verb::Push => (add(table, [0.30 * a * smoothstep(u, 0.35, 0.85), 0.0, 0.0]), 0.0),
        Verb::Turn => (table, core::f64::consts::FRAC_PI_2 * a * smoothstep(u, 0.35, 0.85)),
        Verb::Kick => {
            let floor = [0.5 + j.object[0], -0.12 + j.object[1], e[2]];
            (add(floor, [0.8 * a * smoothstep(u, 0.4, 0.9), 0.0, 0.0]), 0.0)
        }
        Verb::Wave => (table, 0.0),
    };
    [c[0], c[1], c[2], 0.0, 0.0, yaw]
}

fn pose_point(pose: &[f64; 6], p: [f64; 3]) -> [f64; 3] {
    add(rotate([pose[3], pose[4], pose[5]], p), [pose[0], pose[1], pose[2]])
}

/// Canonical (jitter-free) object motion implied by a template.
pub fn canonical_object_motion(t: &Template, frames: usize) -> ObjectMotion {
    let j = Jitter::none();
    let data = (0..frames)
        .flat_map(|f| object_pose(t, &j, norm_time(f, frames)).map(|v| v as f32))
        .collect();
    ObjectMotion {
        frames: Tensor::new([frames, OBJECT_DIM], data).expect("object dims"),
    }
}

fn norm_time(f: usize, frames: usize) -> f64 {
    f as f64 / (frames - 1).max(1) as f64
}

/// Per frame, `[left, right]` minimum distance from each hand joint to the
/// posed object points.
pub fn hand_object_distances(human: &HumanMotion, object: &ObjectMotion, points: &PointCloud) -> Vec<[f64; 2]> {
    (0..human.len().min(object.len()))
        .map(|f| {
            let posed = transform_points(&points.points, &object.pose(f));
            let hands = [human.joint(f, human.layout.left_hand), human.joint(f, human.layout.right_hand)];
            hands.map(|h| {
                posed
                    .iter()
                    .map(|p| dist([h[0] as f64, h[1] as f64, h[2] as f64], [p[0] as f64, p[1] as f64, p[2] as f64]))
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect()
}

/// Contact flags recomputed from geometry at `threshold`.
pub fn recompute_contact_mask(human: &HumanMotion, object: &ObjectMotion, points: &PointCloud, threshold: f64) -> Vec<bool> {
    hand_object_distances(human, object, points)
        .iter()
        .map(|d| d[0].min(d[1]) < threshold)
        .collect()
}

fn generate_one(id: usize, t: &Template, frames: usize, n_points: usize, seed: u64) -> Result<HoiSample> {
    let mut r = rng::stream(seed, id as u64);
    let j = Jitter::draw(&mut r);
    let noun = t.noun();
    let points = make_pointcloud(noun.shape, n_points, seed ^ (id as u64).wrapping_mul(0xA24B_AED4_963E_E407), noun.extent);
    let local: Vec<[f64; 3]> = points.points.iter().map(|p| p.map(|v| v as f64)).collect();

    let poses: Vec<[f64; 6]> = (0..frames).map(|f| object_pose(t, &j, norm_time(f, frames))).collect();

    let root0 = [j.body[0], j.body[1], 0.95];
    let hand_rest = |root: [f64; 3], side: f64| add(root, [0.05, side * 0.25, -0.05]);

    // Surface point the designated hand holds, chosen on the initial pose.
    let grip = t.hand.filter(|_| t.verb.has_contact()).map(|h| {
        let rest = hand_rest(root0, h.side());
        *local
            .iter()
            .min_by(|a, b| {
                dist(pose_point(&poses[0], **a), rest)
                    .partial_cmp(&dist(pose_point(&poses[0], **b), rest))
                    .unwrap()
            })
            .expect("non-empty cloud")
    });

    let mut data = Vec::with_capacity(frames * 3 * joint::COUNT);
    for (f, pose) in poses.iter().enumerate() {
        let u = norm_time(f, frames);
        let reach = match t.verb {
            Verb::Lift | Verb::Push | Verb::Turn => smoothstep(u, 0.08, 0.3),
            Verb::PutDown => 1.0 - smoothstep(u, 0.75, 0.95),
            Verb::Wave => smoothstep(u, 0.1, 0.35) * (1.0 - smoothstep(u, 0.8, 0.95)),
            Verb::Kick => smoothstep(u, 0.15, 0.4) * (1.0 - smoothstep(u, 0.45, 0.7)),
        };
        let lean = if t.verb.has_contact() { 0.06 * reach } else { 0.0 };
        let root = add(root0, [lean, 0.0, 0.0]);
        let mut joints = [[0.0f64; 3]; joint::COUNT];
        joints[joint::ROOT] = root;
        joints[joint::HEAD] = add(root, [0.0, 0.0, 0.6]);
        joints[joint::LEFT_SHOULDER] = add(root, [0.0, 0.2, 0.45]);
        joints[joint::RIGHT_SHOULDER] = add(root, [0.0, -0.2, 0.45]);
        joints[joint::LEFT_HAND] = hand_rest(root, 1.0);
        joints[joint::RIGHT_HAND] = hand_rest(root, -1.0);
        joints[joint::LEFT_FOOT] = [root0[0], root0[1] + 0.12, 0.05];
        joints[joint::RIGHT_FOOT] = [root0[0], root0[1] - 0.12, 0.05];

        match (t.verb, t.hand) {
            (Verb::Kick, _) => {
                let e = noun.extent;
                let c0 = poses[0];
                let strike = [c0[0] - e[0] - 0.02, c0[1], (e[2] * 0.8).max(0.05)];
                let rest = joints[joint::RIGHT_FOOT];
                joints[joint::RIGHT_FOOT] = lerp(rest, strike, reach);
            }
            (Verb::Wave, Some(h)) => {
                let shoulder = joints[if h == Hand::Left { joint::LEFT_SHOULDER } else { joint::RIGHT_SHOULDER }];
                let sway = 0.1 * libm::sin(6.0 * core::f64::consts::PI * u);
                let up = add(shoulder, [0.2, h.side() * 0.05 + sway, 0.35]);
                let rest = joints[h.joint()];
                joints[h.joint()] = lerp(rest, up, reach);
            }
            (_, Some(h)) => {
                let g = grip.expect("grip for contact verb");
                let world = pose_point(pose, g);
                let out = sub(world, [pose[0], pose[1], pose[2]]);
                let n = libm::sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).max(1e-9);
                let target = add(world, out.map(|v| HAND_OFFSET * v / n));
                let rest = joints[h.joint()];
                joints[h.joint()] = lerp(rest, target, reach);
            }
            (_, None) => {}
        }
        data.extend(joints.iter().flat_map(|p| p.map(|v| v as f32)));
    }

    let layout = JointLayout::synthetic();
    let human = HumanMotion::new(Tensor::new([frames, layout.dim()], data)?, layout)?;
    let object = ObjectMotion::new(Tensor::new(
        [frames, OBJECT_DIM],
        poses.iter().flat_map(|p| p.map(|v| v as f32)).collect(),
    )?)?;
    let contact_mask = recompute_contact_mask(&human, &object, &points, CONTACT_THRESHOLD);
    Ok(HoiSample {
        id: format!("hoi_{id:05}"),
        caption: t.caption(),
        human,
        object,
        points,
        contact_mask,
        template: Some(*t),
    })
}

/// `n` samples of `frames` frames each; a pure function of its arguments.
pub fn generate_synthetic_dataset(
    seed: u64,
    n: usize,
    frames: usize,
    n_points: usize,
    templates: &TemplateSet,
) -> Result<Vec<HoiSample>> {
    if n == 0 || frames < 8 || templates.templates.is_empty() {
        return Err(Error::Config(format!(
            "need n >= 1, frames >= 8 and a non-empty template set (n={n}, frames={frames})"
        )));
    }
    let mut pick = rng::stream(seed, u64::MAX);
    (0..n)
        .map(|i| {
            let t = templates.templates[rng::below(&mut pick, templates.templates.len())];
            generate_one(i, &t, frames, n_points, seed)
        })
        .collect()
}
