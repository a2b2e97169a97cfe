//! Motion sequences (object track plus two agents) and their JSON format.

mod toy;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::{ArticulatedBody, BodyJson, Pose};
use crate::error::{Error, Result};
use crate::so3::{self, Mat3, Vec3};

pub use toy::{generate_toy_scene, ToyKind, ToyScene};

pub const SCHEMA_VERSION: &str = "core-retarget/1";
pub const DEFAULT_FPS: f64 = 15.0;
/// Acceleration terms need a previous and a next frame.
pub const MIN_OPT_FRAMES: usize = 3;

/// Per-frame rigid object pose (axis-angle rotation, translation).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectTrack {
    pub rotations: Vec<Vec3>,
    pub translations: Vec<Vec3>,
}

impl ObjectTrack {
    pub fn new(rotations: Vec<Vec3>, translations: Vec<Vec3>) -> Result<Self> {
        let t = ObjectTrack { rotations, translations };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotations.len() != self.translations.len() {
            return Err(Error::LengthMismatch(format!(
                "{} rotations vs {} translations",
                self.rotations.len(),
                self.translations.len()
            )));
        }
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !self.rotations.iter().chain(&self.translations).all(finite) {
            return Err(Error::Invalid("non-finite object pose".into()));
        }
        Ok(())
    }

    pub fn rotation(&self, frame: usize) -> Mat3 {
        so3::exp(&self.rotations[frame])
    }

    /// Object-frame point to world.
    pub fn to_world(&self, frame: usize, p: &Vec3) -> Vec3 {
        self.rotation(frame) * p + self.translations[frame]
    }

    /// World point to object frame.
    pub fn to_local(&self, frame: usize, p: &Vec3) -> Vec3 {
        self.rotation(frame).transpose() * (p - self.translations[frame])
    }

    /// Frame-major `[r (3) | t (3)]` parameter vector.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 * self.len());
        for (r, t) in self.rotations.iter().zip(&self.translations) {
            out.extend_from_slice(r.as_slice());
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    pub fn from_params(x: &[f64]) -> Self {
        let (rotations, translations) = x
            .chunks_exact(6)
            .map(|c| (Vec3::new(c[0], c[1], c[2]), Vec3::new(c[3], c[4], c[5])))
            .unzip();
        ObjectTrack { rotations, translations }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file: TrackFile = crate::io::read_json(path)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch { expected: SCHEMA_VERSION.into(), found: file.schema_version });
        }
        let track = ObjectTrack {
            rotations: file.frames.iter().map(|f| f.rotation).collect(),
            translations: file.frames.iter().map(|f| f.translation).collect(),
        };
        track.validate()?;
        Ok(track)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let frames = self.rotations.iter().zip(&self.translations).map(|(&rotation, &translation)| ObjectPose { rotation, translation });
        crate::io::write_json(path, &TrackFile { schema_version: SCHEMA_VERSION.into(), frames: frames.collect() })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackFile {
    schema_version: String,
    frames: Vec<ObjectPose>,
}

/// Collaboration mode of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Move1,
    Move2,
    Pass,
    Join,
    Leave,
}

/// A two-agent object manipulation clip.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    pub object_id: String,
    pub label: Label,
    pub object: ObjectTrack,
    pub agents: [Vec<Pose>; 2],
    pub bodies: [ArticulatedBody; 2],
}

impl MotionSequence {
    pub fn len(&self) -> usize {
        self.object.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.object.validate()?;
        let n = self.len();
        if n < 2 {
            return Err(Error::TrackTooShort { len: n, min: 2 });
        }
        if !(self.fps > 0.0) {
            return Err(Error::Invalid(format!("fps {} must be positive", self.fps)));
        }
        for (k, a) in self.agents.iter().enumerate() {
            if a.len() != n {
                return Err(Error::LengthMismatch(format!("agent {} has {} frames, object has {n}", k + 1, a.len())));
            }
        }
        for b in &self.bodies {
            b.validate()?;
        }
        Ok(())
    }

    /// Same sequence with new agent poses.
    pub fn with_agents(&self, agents: [Vec<Pose>; 2]) -> Self {
        MotionSequence { agents, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        let file = MotionFile {
            schema_version: SCHEMA_VERSION.into(),
            fps: self.fps,
            object_id: self.object_id.clone(),
            label: self.label,
            bodies: [self.bodies[0].to_json(), self.bodies[1].to_json()],
            frames: (0..self.len())
                .map(|i| FrameRecord {
                    object: ObjectPose { rotation: self.object.rotations[i], translation: self.object.translations[i] },
                    agents: [self.agents[0][i], self.agents[1][i]],
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("motion serializes")
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let loc = |e: &serde_json::Error| format!("{source}:{}:{}", e.line(), e.column());
        let header: Header = serde_json::from_str(text).map_err(|e| Error::parse(loc(&e), e.to_string()))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch { expected: SCHEMA_VERSION.into(), found: header.schema_version });
        }
        let file: MotionFile = serde_json::from_str(text).map_err(|e| Error::parse(loc(&e), e.to_string()))?;
        let seq = MotionSequence {
            fps: file.fps,
            object_id: file.object_id,
            label: file.label,
            object: ObjectTrack {
                rotations: file.frames.iter().map(|f| f.object.rotation).collect(),
                translations: file.frames.iter().map(|f| f.object.translation).collect(),
            },
            agents: [0, 1].map(|k| file.frames.iter().map(|f| f.agents[k]).collect()),
            bodies: [ArticulatedBody::from_json(&file.bodies[0])?, ArticulatedBody::from_json(&file.bodies[1])?],
        };
        seq.validate()?;
        Ok(seq)
    }
}

pub fn read_motion(path: impl AsRef<Path>) -> Result<MotionSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MotionSequence::from_json(&text, &path.display().to_string())
}

pub fn write_motion(seq: &MotionSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, seq.to_json()).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct Header {
    schema_version: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionFile {
    schema_version: String,
    fps: f64,
    object_id: String,
    label: Label,
    bodies: [BodyJson; 2],
    frames: Vec<FrameRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    object: ObjectPose,
    agents: [Pose; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectPose {
    rotation: Vec3,
    translation: Vec3,
}
