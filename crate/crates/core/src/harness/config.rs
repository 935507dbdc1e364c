//! Line-based `key: value` files. Blank lines and `#` comments are ignored;
//! every key may appear once, and every key must be consumed.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::experiment::TrainConfig;
use super::synth::{CameraMotion, OcclusionWindow, SuiteConfig, SynthConfig, TargetMotion};
use crate::assess::{AssessConfig, AssessTrainConfig};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::tracker::TrackerConfig;
use crate::trajnet::{TrajTrainConfig, TrajectoryNetConfig};

#[derive(Debug, Clone)]
pub struct KeyValues {
    path: PathBuf,
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
            let (k, v) = line.split_once(':').ok_or_else(|| err(format!("expected `key: value`, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if entries.iter().any(|e| e.0 == k) {
                return Err(err(format!("duplicate key `{k}`")));
            }
            entries.push((k.to_string(), v.to_string(), i + 1));
        }
        Ok(Self { path: path.to_path_buf(), entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(pos) = self.entries.iter().position(|e| e.0 == key) else {
            return Ok(None);
        };
        let (k, v, line) = self.entries.remove(pos);
        v.parse::<T>()
            .map(Some)
            .map_err(|e| Error::Parse { path: self.path.clone(), line, msg: format!("`{k}`: {e}") })
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Errors on the first key nobody asked for.
    pub fn finish(self) -> Result<()> {
        match self.entries.first() {
            Some((k, _, line)) => {
                Err(Error::Parse { path: self.path, line: *line, msg: format!("unknown key `{k}`") })
            }
            None => Ok(()),
        }
    }
}

/// A boolean accepting `on`/`off` as well as `true`/`false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switch(pub bool);

impl FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "on" | "true" | "yes" | "1" => Ok(Switch(true)),
            "off" | "false" | "no" | "0" => Ok(Switch(false)),
            other => Err(format!("expected on/off, found `{other}`")),
        }
    }
}

/// Two numbers separated by a comma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair(pub f64, pub f64);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, found `{s}`"))?;
        let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        Ok(Pair(p(a)?, p(b)?))
    }
}

/// Scene keys shared by every suite: `length`, `width`, `height`,
/// `target_size`, `speed` (min,max), `pan` (min,max), `shake`,
/// `occlusion_len`, `occlusions`, `noise`.
pub fn suite_scene(kv: &mut KeyValues, base: SuiteConfig) -> Result<SuiteConfig> {
    let speed = kv.take_or("speed", Pair(base.speed.0, base.speed.1))?;
    let pan = kv.take_or("pan", Pair(base.pan.0, base.pan.1))?;
    Ok(SuiteConfig {
        length: kv.take_or("length", base.length)?,
        width: kv.take_or("width", base.width)?,
        height: kv.take_or("height", base.height)?,
        target_size: kv.take_or("target_size", base.target_size)?,
        speed: (speed.0, speed.1),
        pan: (pan.0, pan.1),
        shake: kv.take_or("shake", base.shake)?,
        occlusion_len: kv.take_or("occlusion_len", base.occlusion_len)?,
        occlusions: kv.take_or("occlusions", base.occlusions)?,
        noise: kv.take_or("noise", base.noise)?,
        ..base
    })
}

/// A benchmark suite: scene keys plus `count` and `seed`.
pub fn suite_config(kv: &mut KeyValues) -> Result<SuiteConfig> {
    let base = suite_scene(kv, SuiteConfig::default())?;
    Ok(SuiteConfig { count: kv.take_or("count", base.count)?, seed: kv.take_or("seed", base.seed)?, ..base })
}

/// One scripted sequence. Motion is `constant`, `sinusoid` or `piecewise`
/// (velocity switching to `velocity2` at frame `turn_at`); occlusion windows
/// are written `start+len`, comma separated.
pub fn synth_config(kv: &mut KeyValues) -> Result<SynthConfig> {
    let d = SynthConfig::default();
    let start = kv.take_or("start", Pair(d.start.x, d.start.y))?;
    let v = kv.take_or("velocity", Pair(0.0, 0.0))?;
    let velocity = Point2::new(v.0, v.1);
    let motion = match kv.take::<String>("motion")?.as_deref() {
        None | Some("constant") => TargetMotion::ConstantVelocity { velocity },
        Some("sinusoid") => TargetMotion::Sinusoid {
            velocity,
            amplitude: kv.take_or("amplitude", 2.0)?,
            period: kv.take_or("period", 20.0)?,
        },
        Some("piecewise") => {
            let v2 = kv.take_or("velocity2", Pair(0.0, 0.0))?;
            let turn = kv.take_or("turn_at", d.length / 2)?;
            TargetMotion::Piecewise { segments: vec![(0, velocity), (turn, Point2::new(v2.0, v2.1))] }
        }
        Some(other) => return Err(Error::InvalidParameter(format!("unknown motion `{other}`"))),
    };
    let pan = kv.take_or("camera_pan", Pair(0.0, 0.0))?;
    let camera = CameraMotion {
        pan: Point2::new(pan.0, pan.1),
        shake: kv.take_or("camera_shake", 0.0)?,
        rotation: kv.take_or("camera_rotation", 0.0)?,
        zoom: kv.take_or("camera_zoom", 1.0)?,
    };
    let occlusions = match kv.take::<String>("occlusions")? {
        None => Vec::new(),
        Some(list) => list
            .split(',')
            .filter(|w| !w.trim().is_empty())
            .map(|w| {
                let (a, b) = w
                    .trim()
                    .split_once('+')
                    .ok_or_else(|| Error::InvalidParameter(format!("occlusion `{w}` is not `start+len`")))?;
                let n = |t: &str| t.trim().parse::<usize>().map_err(|e| Error::InvalidParameter(format!("occlusion `{w}`: {e}")));
                Ok(OcclusionWindow { start: n(a)?, len: n(b)? })
            })
            .collect::<Result<_>>()?,
    };
    Ok(SynthConfig {
        width: kv.take_or("width", d.width)?,
        height: kv.take_or("height", d.height)?,
        length: kv.take_or("length", d.length)?,
        target_size: kv.take_or("target_size", d.target_size)?,
        start: Point2::new(start.0, start.1),
        motion,
        camera,
        occlusions,
        noise: kv.take_or("noise", d.noise)?,
        seed: kv.take_or("seed", d.seed)?,
    })
}

/// Training settings. Scene keys apply to both synthetic splits;
/// `train_count`/`train_seed`/`val_count`/`val_seed` size and seed them,
/// and `train_dir`/`val_dir` replace them with sequence directories.
pub fn train_config(kv: &mut KeyValues) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let scene = suite_scene(kv, d.train.clone())?;
    let train = SuiteConfig { count: kv.take_or("train_count", d.train.count)?, seed: kv.take_or("train_seed", d.train.seed)?, ..scene.clone() };
    let validation =
        SuiteConfig { count: kv.take_or("val_count", d.validation.count)?, seed: kv.take_or("val_seed", d.validation.seed)?, ..scene };
    let map = kv.take_or("map_size", d.net.map_rows)?;
    let net = TrajectoryNetConfig {
        past_len: kv.take_or("past_len", d.net.past_len)?,
        future_len: kv.take_or("future_len", d.net.future_len)?,
        map_rows: map,
        map_cols: map,
        hidden: kv.take_or("hidden", d.net.hidden)?,
        stream_channels: kv.take_or("stream_channels", d.net.stream_channels)?,
        ..d.net
    };
    Ok(TrainConfig {
        seed: kv.take_or("seed", d.seed)?,
        train,
        validation,
        assess: AssessConfig { history_len: net.past_len, hidden: kv.take_or("assess_hidden", d.assess.hidden)?, ..d.assess },
        net,
        traj: TrajTrainConfig {
            epochs: kv.take_or("traj_epochs", d.traj.epochs)?,
            lr: kv.take_or("traj_lr", d.traj.lr)?,
            augment: kv.take_or("augment", Switch(d.traj.augment))?.0,
            ..d.traj
        },
        assess_train: AssessTrainConfig {
            epochs: kv.take_or("assess_epochs", d.assess_train.epochs)?,
            lr: kv.take_or("assess_lr", d.assess_train.lr)?,
            ..d.assess_train
        },
        window_stride: kv.take_or("window_stride", d.window_stride)?,
        tau_percentile: kv.take_or("tau_percentile", d.tau_percentile)?,
        hard_negative_weight: kv.take_or("hard_negative_weight", d.hard_negative_weight)?,
        tracker: TrackerConfig { search_factor: kv.take_or("search_factor", d.tracker.search_factor)?, ..d.tracker },
        train_dir: kv.take::<String>("train_dir")?.map(PathBuf::from),
        validation_dir: kv.take::<String>("val_dir")?.map(PathBuf::from),
    })
}
